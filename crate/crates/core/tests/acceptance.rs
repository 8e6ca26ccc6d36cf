//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use senseauction::assignment::{CandidateEdge, MatchingProblem, Objective};
use senseauction::check::{run_checks, CheckOptions, CheckReport, Property};
use senseauction::market::{driver_valuation, rider_valuation};
use senseauction::simengine::{run_scenario, KpiReport, OverreportConfig, ScenarioConfig};
use senseauction::{settle_epoch, Mechanism, Rates};

struct Verdict {
    ok: bool,
    detail: String,
}

fn verdict(ok: bool, detail: impl Into<String>) -> Verdict {
    Verdict { ok, detail: detail.into() }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn worked_example() -> Verdict {
    let start = Instant::now();
    let rates = Rates::default();
    let (h, f) = ([7.2, 4.8], [7.56, 0.0]);
    let p_d: Vec<f64> = (0..2).map(|r| driver_valuation(&rates, h[r], 1.5, 0.4, 0.4, f[r]).unwrap()).collect();
    let p_r: Vec<f64> = (0..2).map(|r| rider_valuation(&rates, h[r], 1.5, 0.4, 0.4).unwrap()).collect();
    let values_ok = close(p_d[0], 18.36)
        && close(p_d[1], 7.2)
        && close(p_r[0], 19.8)
        && close(p_r[1], 13.2)
        && close(p_r[0] - p_d[0], 1.44)
        && close(p_r[1] - p_d[1], 6.0);

    let zeta = [2.0, 0.5];
    let edges = (0..2)
        .map(|r| CandidateEdge::new(0, r as u32, 0.4, p_d[r], p_r[r], zeta[r]).with_trip_len(h[r]))
        .collect();
    let problem = MatchingProblem::new(vec![0], vec![0, 1], edges, Objective::Sensing, true);
    let pick = |m| settle_epoch(m, &problem, &rates, true).unwrap().priced.iter().map(|p| p.rider).collect::<Vec<_>>();
    let (vcg, ds) = (pick(Mechanism::Vcg), pick(Mechanism::Ds));
    let elapsed = start.elapsed();
    verdict(
        values_ok && vcg == [1] && ds == [0] && elapsed < Duration::from_secs(1),
        format!("P_d={p_d:?} P_r={p_r:?}; VCG serves r{:?}, DS serves r{:?} ({elapsed:.1?})", vcg, ds),
    )
}

fn tally_line(report: &CheckReport, props: &[Property]) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for &p in props {
        let t = report.tally(p);
        ok &= t.failed == 0 && t.passed > 0;
        parts.push(format!("{} {}/{} (skipped {})", p.name(), t.passed, t.passed + t.failed, t.skipped));
    }
    (ok, parts.join(", "))
}

fn property_criteria(verdicts: &mut Vec<(u32, &'static str, Verdict)>) {
    let opts = CheckOptions { trials: 1000, max_drivers: 8, max_riders: 8, ..CheckOptions::default() };
    let start = Instant::now();
    let report = run_checks(&opts).expect("property harness runs");
    let elapsed = start.elapsed();

    let ae = [Property::AeWelfare, Property::AeSensingFloor, Property::AeSensingNoFloor];
    let (ok, line) = tally_line(&report, &ae);
    // The harness time also covers the settlement checks; enumeration is a part of it.
    let ok = ok && report.tally(Property::AeWelfare).passed >= 1000 && elapsed < Duration::from_secs(60);
    verdicts.push((2, "AE matches exhaustive enumeration", verdict(ok, format!("{line}; harness {elapsed:.1?}"))));

    let (ok, line) = tally_line(
        &report,
        &[Property::BudgetBalance, Property::WeakBudgetBalance, Property::VcgDeficit, Property::Feasibility],
    );
    verdicts.push((3, "BB / WBB / VCG deficit", verdict(ok, line)));

    let (ok, line) = tally_line(&report, &[Property::IndividualRationality]);
    verdicts.push((4, "IR", verdict(ok, line)));

    let (ok, line) = tally_line(&report, &[Property::GroupIc]);
    verdicts.push((5, "G-IC", verdict(ok, line)));

    let (ok, mut line) =
        tally_line(&report, &[Property::DriverLemma, Property::RiderLemma, Property::UnmatchedLemma]);
    if let Some(f) =
        report.failures.iter().find(|f| matches!(f.property, Property::DriverLemma | Property::RiderLemma))
    {
        line.push_str(&format!("; e.g. {}", f.detail));
    }
    verdicts.push((6, "reporting lemmas", verdict(ok, line)));
}

type Cell = (usize, usize, Mechanism);

fn means(reports: &[KpiReport]) -> [f64; 6] {
    let n = reports.len() as f64;
    let m = |f: fn(&KpiReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    [
        m(|r| r.aggregate.sensing_utility),
        m(|r| r.aggregate.coverage_rate),
        m(|r| r.aggregate.avg_wait_min),
        m(|r| r.aggregate.matching_rate),
        m(|r| r.aggregate.avg_u_driver),
        m(|r| r.aggregate.avg_u_rider),
    ]
}

fn fleet_trends() -> Verdict {
    let start = Instant::now();
    let fleets = [20, 40, 60];
    let mut cells: BTreeMap<Cell, [f64; 6]> = BTreeMap::new();
    for scenario in 1..=3 {
        for fleet in fleets {
            for mech in [Mechanism::Vcg, Mechanism::Ds] {
                let reports: Vec<KpiReport> = (1..=5)
                    .map(|seed| {
                        let cfg = ScenarioConfig { fleet_size: fleet, scenario, seed, ..Default::default() };
                        run_scenario(&cfg, mech).expect("scenario runs")
                    })
                    .collect();
                cells.insert((scenario, fleet, mech), means(&reports));
            }
        }
    }
    let elapsed = start.elapsed();

    let mut problems = Vec::new();
    for scenario in 1..=3 {
        for fleet in fleets {
            let v = cells[&(scenario, fleet, Mechanism::Vcg)];
            let d = cells[&(scenario, fleet, Mechanism::Ds)];
            if d[0] <= v[0] {
                problems.push(format!("(a) sc{scenario} f{fleet}: DS sensing {:.4} vs VCG {:.4}", d[0], v[0]));
            }
            if d[1] < v[1] {
                problems.push(format!("(b) sc{scenario} f{fleet}: DS coverage {:.4} vs VCG {:.4}", d[1], v[1]));
            }
            if v[2] > d[2] + 0.5 {
                problems.push(format!("(c) sc{scenario} f{fleet}: VCG wait {:.3} vs DS {:.3}", v[2], d[2]));
            }
        }
        for mech in [Mechanism::Vcg, Mechanism::Ds] {
            let lo = cells[&(scenario, 20, mech)];
            let hi = cells[&(scenario, 60, mech)];
            if hi[3] <= lo[3] {
                problems.push(format!("(d) sc{scenario} {mech}: matching {:.4} -> {:.4}", lo[3], hi[3]));
            }
            if hi[1] <= lo[1] {
                problems.push(format!("(d) sc{scenario} {mech}: coverage {:.4} -> {:.4}", lo[1], hi[1]));
            }
        }
    }
    let ok = problems.is_empty() && elapsed < Duration::from_secs(300);
    let detail = if problems.is_empty() {
        format!("18 cells x 5 seeds in {elapsed:.1?}")
    } else {
        format!("{} in {elapsed:.1?}", problems.join("; "))
    };
    verdict(ok, detail)
}

fn overreporting_trends() -> Verdict {
    const BAND: f64 = 0.02;
    let fractions = [0.0, 0.2, 0.4, 0.6];
    let mut problems = Vec::new();
    let mut cells = 0;
    for scenario in 1..=3 {
        for fleet in [20, 40, 60] {
            let series: Vec<[f64; 3]> = fractions
                .iter()
                .map(|&fraction| {
                    let reports: Vec<KpiReport> = (1..=10)
                        .map(|seed| {
                            let cfg = ScenarioConfig {
                                fleet_size: fleet,
                                scenario,
                                seed,
                                overreport: OverreportConfig { fraction, ..Default::default() },
                                ..Default::default()
                            };
                            run_scenario(&cfg, Mechanism::Ds).expect("scenario runs")
                        })
                        .collect();
                    let m = means(&reports);
                    let revenue = reports.iter().map(|r| r.aggregate.revenue).sum::<f64>() / reports.len() as f64;
                    [m[4], m[5], revenue]
                })
                .collect();
            cells += 1;
            for k in 1..series.len() {
                let (prev, next) = (series[k - 1], series[k]);
                let names = ["driver utility rose", "rider utility fell", "revenue fell"];
                // +1: must not fall; -1: must not rise.
                for (i, dir) in [1.0, -1.0, -1.0].iter().enumerate() {
                    if dir * (next[i] - prev[i]) < -BAND * prev[i].abs() {
                        problems.push(format!(
                            "sc{scenario} f{fleet} {}->{}: expected {}, got {:.4} -> {:.4}",
                            fractions[k - 1],
                            fractions[k],
                            names[i],
                            prev[i],
                            next[i]
                        ));
                    }
                }
            }
        }
    }
    let detail = if problems.is_empty() {
        format!("{cells} cells x 4 fractions x 10 seeds within the 2% band")
    } else {
        format!("{} violations: {}", problems.len(), problems.join("; "))
    };
    verdict(problems.is_empty(), detail)
}

fn determinism() -> Verdict {
    let cfg = ScenarioConfig { fleet_size: 30, scenario: 2, seed: 11, ..Default::default() };
    let csv = |mech| {
        let mut buf = Vec::new();
        run_scenario(&cfg, mech).unwrap().write_csv(&mut buf, true).unwrap();
        buf
    };
    let ok = [Mechanism::Vcg, Mechanism::Ds].into_iter().all(|m| csv(m) == csv(m));
    verdict(ok, "two runs per mechanism compared byte for byte")
}

fn main() {
    let mut verdicts: Vec<(u32, &'static str, Verdict)> = Vec::new();
    verdicts.push((1, "worked two-rider example", worked_example()));
    property_criteria(&mut verdicts);
    verdicts.push((7, "fleet-size trends", fleet_trends()));
    verdicts.push((8, "over-reporting trends", overreporting_trends()));
    verdicts.push((9, "determinism", determinism()));
    verdicts.sort_by_key(|v| v.0);

    let mut failed = 0;
    for (n, name, v) in &verdicts {
        println!("criterion {n} {}: {name}: {}", if v.ok { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.ok);
    }
    println!("{} of {} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
