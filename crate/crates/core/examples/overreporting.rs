//! How bid inflation moves DS utilities and platform revenue.
//!
//! For each scenario and fleet size, a growing share of drivers and riders
//! inflate their rates by up to 0.5. Prints 10-seed means.
//!
//!     cargo run --release --example overreporting

use rayon::prelude::*;
use senseauction::simengine::{run_scenario, KpiReport, OverreportConfig, ScenarioConfig};
use senseauction::Mechanism;

fn main() -> senseauction::Result<()> {
    let seeds: Vec<u64> = (1..=10).collect();
    println!("{:>3} {:>5} {:>6} {:>9} {:>9} {:>9}", "sc", "fleet", "over", "u_driver", "u_rider", "revenue");
    for scenario in 1..=3 {
        for fleet in [20, 40, 60] {
            for fraction in [0.0, 0.2, 0.4, 0.6] {
                let reports: Vec<KpiReport> = seeds
                    .par_iter()
                    .map(|&seed| {
                        let cfg = ScenarioConfig {
                            fleet_size: fleet,
                            scenario,
                            seed,
                            overreport: OverreportConfig { fraction, ..Default::default() },
                            ..Default::default()
                        };
                        run_scenario(&cfg, Mechanism::Ds)
                    })
                    .collect::<senseauction::Result<_>>()?;
                let mean = |f: fn(&KpiReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
                println!(
                    "{:>3} {:>5} {:>6.1} {:>9.4} {:>9.4} {:>9.3}",
                    scenario,
                    fleet,
                    fraction,
                    mean(|r| r.aggregate.avg_u_driver),
                    mean(|r| r.aggregate.avg_u_rider),
                    mean(|r| r.aggregate.revenue),
                );
            }
        }
    }
    Ok(())
}
