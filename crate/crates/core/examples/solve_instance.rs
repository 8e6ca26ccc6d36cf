//! Solves a matching instance under both objectives and checks the answer
//! against exhaustive enumeration when it is small enough.
//!
//!     cargo run --release --example solve_instance -- problem.json
//!     cargo run --release --example solve_instance -- --random 7 7

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use senseauction::assignment::{solve, MatchingProblem, Objective};
use senseauction::check::random_instance;
use senseauction::{oracle, Rates};

fn main() -> senseauction::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let problem = match args.first().map(String::as_str) {
        Some("--random") | None => {
            let n = |i: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(6);
            random_instance(&mut ChaCha8Rng::seed_from_u64(42), n(1), n(2), &Rates::default())?
        }
        Some(path) => MatchingProblem::from_json(&std::fs::read_to_string(path)?)?,
    };
    println!("{} drivers, {} riders, {} candidate edges", problem.drivers.len(), problem.riders.len(), problem.edges.len());

    for (name, program) in [
        ("welfare", problem.with_objective(Objective::Welfare)),
        ("sensing, floor", problem.with_objective(Objective::Sensing).with_floor(true)),
        ("sensing, no floor", problem.with_objective(Objective::Sensing).with_floor(false)),
    ] {
        let start = Instant::now();
        let s = solve(&program);
        let took = start.elapsed();
        let pairs: Vec<String> = s.pairs(&program).map(|e| format!("d{}-r{}", e.driver, e.rider)).collect();
        print!(
            "{name:<18} objective {:>10.6}  welfare {:>9.4}  [{}]  {took:.1?}",
            s.objective_value,
            s.welfare_total,
            pairs.join(" ")
        );
        match oracle::brute_force(&program) {
            Some(o) => println!("  enumeration {:.6} over {} matchings", o.objective_value, o.matchings_enumerated),
            None => println!(),
        }
    }
    Ok(())
}
