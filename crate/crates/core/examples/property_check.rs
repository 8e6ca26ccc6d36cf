//! Randomized property check of both mechanisms against exhaustive enumeration.
//!
//! Usage: `cargo run --release --example property_check -- [trials] [max_side]`

use std::time::Instant;

use senseauction::check::{run_checks, CheckOptions};

fn main() -> senseauction::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let side = args.next().and_then(|s| s.parse().ok()).unwrap_or(6);
    let opts = CheckOptions { trials, max_drivers: side, max_riders: side, ..CheckOptions::default() };

    let start = Instant::now();
    let report = run_checks(&opts)?;
    print!("{}", report.summary());
    println!("{trials} trials up to {side}x{side} in {:.2?}", start.elapsed());
    if let Some(f) = report.failures.first() {
        println!("first failure ({}): {}", f.property.name(), f.detail);
        println!("{}", serde_json::to_string(&f.problem)?);
    }
    Ok(())
}
