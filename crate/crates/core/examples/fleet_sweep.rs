//! Compares VCG and DS across demand scenarios and fleet sizes.
//!
//! Prints 5-seed means of the main KPIs for every cell.
//!
//!     cargo run --release --example fleet_sweep

use rayon::prelude::*;
use senseauction::simengine::{run_scenario, KpiReport, ScenarioConfig};
use senseauction::Mechanism;

fn main() -> senseauction::Result<()> {
    let seeds: Vec<u64> = (1..=5).collect();
    println!(
        "{:<4} {:>3} {:>5} {:>8} {:>8} {:>8} {:>8} {:>9}",
        "mech", "sc", "fleet", "match", "wait", "phi", "cover", "revenue"
    );
    for scenario in 1..=3 {
        for fleet in [20, 40, 60] {
            for mech in [Mechanism::Vcg, Mechanism::Ds] {
                let reports: Vec<KpiReport> = seeds
                    .par_iter()
                    .map(|&seed| {
                        let cfg = ScenarioConfig { fleet_size: fleet, scenario, seed, ..Default::default() };
                        run_scenario(&cfg, mech)
                    })
                    .collect::<senseauction::Result<_>>()?;
                let mean = |f: fn(&KpiReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
                println!(
                    "{:<4} {:>3} {:>5} {:>8.4} {:>8.3} {:>8.4} {:>8.4} {:>9.2}",
                    mech,
                    scenario,
                    fleet,
                    mean(|r| r.aggregate.matching_rate),
                    mean(|r| r.aggregate.avg_wait_min),
                    mean(|r| r.aggregate.sensing_utility),
                    mean(|r| r.aggregate.coverage_rate),
                    mean(|r| r.aggregate.revenue),
                );
            }
        }
    }
    Ok(())
}
