//! A four-hour run of one mechanism, printing per-interval KPIs and the
//! first epoch's settlement.
//!
//!     cargo run --release --example simulate_day -- ds 40 2

use senseauction::pricing::write_settlement_csv;
use senseauction::simengine::{run_scenario_with_log, ScenarioConfig};
use senseauction::Mechanism;

fn main() -> senseauction::Result<()> {
    let mut args = std::env::args().skip(1);
    let mechanism: Mechanism = args.next().unwrap_or_else(|| "ds".into()).parse()?;
    let fleet_size = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let scenario = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = ScenarioConfig { fleet_size, scenario, ..Default::default() };

    let (report, log) = run_scenario_with_log(&cfg, mechanism)?;
    report.write_csv(std::io::stdout(), true)?;

    if let Some(first) = log.iter().find(|o| o.matched > 0) {
        println!("\nepoch {}: {} requests, {} matched", first.epoch, first.generated, first.matched);
        write_settlement_csv(std::io::stdout(), first.epoch, &first.settlement, true)?;
    }
    Ok(())
}
