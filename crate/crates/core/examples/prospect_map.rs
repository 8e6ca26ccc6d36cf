//! Prints the synthetic district's demand density, order prospect and the
//! opportunity cost of ending a trip in each cell.
//!
//!     cargo run --example prospect_map

use senseauction::WorldSpec;

fn main() -> senseauction::Result<()> {
    let spec = WorldSpec::synthetic_district(10, 12);
    let (world, prospect) = spec.build()?;
    println!("p* = {:.4}", prospect.p_star());

    let grid = |title: &str, value: &dyn Fn(usize) -> f64| {
        println!("\n{title}");
        for r in (0..world.rows()).rev() {
            let row: Vec<String> = (0..world.cols()).map(|c| format!("{:6.2}", value(r * world.cols() + c))).collect();
            println!("{}", row.join(""));
        }
    };
    grid("demand density (%)", &|g| 100.0 * world.densities()[g]);
    grid("order prospect", &|g| prospect.prospect(g));
    grid("opportunity cost (CNY)", &|g| prospect.cell_cost(g));
    Ok(())
}
