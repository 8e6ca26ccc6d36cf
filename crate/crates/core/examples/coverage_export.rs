//! Writes per-cell visit counts of a DS and a VCG run side by side, ready
//! for plotting as sensing heat maps.
//!
//!     cargo run --release --example coverage_export > coverage.csv

use senseauction::simengine::{ScenarioConfig, Simulation};
use senseauction::Mechanism;

fn main() -> senseauction::Result<()> {
    let cfg = ScenarioConfig { fleet_size: 40, scenario: 1, ..Default::default() };
    let mut counts = Vec::new();
    for mech in [Mechanism::Vcg, Mechanism::Ds] {
        let mut sim = Simulation::new(cfg.clone(), mech)?;
        while !sim.is_finished() {
            sim.step_epoch()?;
        }
        counts.push(sim.coverage);
    }

    let cols = cfg.world.cols;
    let mut out = csv::Writer::from_writer(std::io::stdout());
    out.write_record(["interval", "cell", "row", "col", "vcg", "ds"])?;
    for t in 0..cfg.intervals {
        for (g, (v, d)) in counts[0].interval_counts(t).iter().zip(counts[1].interval_counts(t)).enumerate() {
            let rec = [t, g, g / cols, g % cols, *v as usize, *d as usize];
            out.write_record(rec.map(|x| x.to_string()))?;
        }
    }
    out.flush()?;
    Ok(())
}
