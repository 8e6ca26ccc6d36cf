//! Command-line front end: `run`, `compare` and `check`.
//!
//! Exit codes: 0 success, 1 property failure, 2 usage or configuration
//! error, 3 I/O failure.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::check::{run_checks, CheckOptions};
use crate::error::{Error, Result};
use crate::oracle::ORACLE_LIMIT;
use crate::pricing::Mechanism;
use crate::simengine::{run_scenario_with_log, EpochOutcome, KpiReport, ScenarioConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PROPERTY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Overrides the config file's seed when `--seeds` is not given.
pub const SEED_ENV: &str = "SENSEAUCTION_SEED";

/// Columns of `fig3.csv`, one row per run.
pub const FIG3_HEADER: [&str; 11] = [
    "mechanism",
    "scenario",
    "fleet_size",
    "seed",
    "matching_rate",
    "avg_wait_min",
    "sensing_utility",
    "coverage_rate",
    "revenue",
    "avg_u_driver",
    "avg_u_rider",
];

/// Columns of `table2.csv`, one row per (over-reporting, scenario, fleet, mechanism) cell.
pub const TABLE2_HEADER: [&str; 8] =
    ["overreport", "scenario", "fleet_size", "mechanism", "seeds", "avg_u_driver", "avg_u_rider", "revenue"];

/// Columns of `matches.csv`; utilities are against truthful valuations.
pub const MATCHES_HEADER: [&str; 14] = [
    "mechanism",
    "seed",
    "epoch",
    "driver",
    "rider",
    "rider_epoch",
    "tau",
    "trip_len",
    "sigma",
    "zeta",
    "q_d",
    "q_r",
    "u_driver",
    "u_rider",
];

#[derive(Debug, Parser)]
#[command(name = "senseauction", version, about = "Sensing-aware matching and pricing for taxi fleets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one scenario and write kpi.csv, events.jsonl and matches.csv.
    Run(RunArgs),
    /// Sweep fleet sizes, scenarios, seeds and over-reporting for both mechanisms.
    Compare(CompareArgs),
    /// Randomized property checks against exhaustive enumeration.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct Shared {
    /// Scenario config (JSON). Fields left out take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    /// DS rider charge floor.
    #[arg(long, value_enum)]
    pub floor: Option<Toggle>,
    /// Worker threads for independent runs.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, default_value = "ds")]
    pub mechanism: Mechanism,
    #[arg(long)]
    pub fleet: Option<usize>,
    #[arg(long)]
    pub scenario: Option<usize>,
    /// Fraction of participants who inflate their rates.
    #[arg(long)]
    pub overreport: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// Comma-separated fleet sizes.
    #[arg(long)]
    pub fleet: Option<String>,
    /// Comma-separated scenario numbers.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Comma-separated over-reporting fractions.
    #[arg(long)]
    pub overreport: Option<String>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Only the rates are read from the config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Largest instance, drivers x riders.
    #[arg(long, default_value = "6x6")]
    pub sizes: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Perturbation trials per instance for the incentive checks.
    #[arg(long, default_value_t = 4)]
    pub perturbations: usize,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Negative control: let the DS solver ignore the welfare floor.
    #[arg(long, hide = true)]
    pub skip_welfare_floor: bool,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json(_) | Error::Geometry(_) => EXIT_USAGE,
        Error::Contract(_) => EXIT_PROPERTY,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    let Some(path) = path else {
        return Ok(ScenarioConfig::default());
    };
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
        _ => Error::Io(e),
    })?;
    ScenarioConfig::from_json(&text)
}

/// Comma-separated list; an empty string is an empty list.
fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|e| Error::Config(format!("--{flag}: cannot parse {t:?}: {e}"))))
        .collect()
}

fn seeds(shared: &Shared, cfg: &ScenarioConfig) -> Result<Vec<u64>> {
    if let Some(s) = &shared.seeds {
        return parse_list("seeds", s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => Ok(vec![v
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("{SEED_ENV}={v:?} is not a seed: {e}")))?]),
        Err(_) => Ok(vec![cfg.seed]),
    }
}

fn base_config(shared: &Shared) -> Result<ScenarioConfig> {
    let mut cfg = load_config(shared.config.as_deref())?;
    if let Some(t) = shared.floor {
        cfg.charge_floor = t == Toggle::On;
    }
    Ok(cfg)
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

#[derive(Serialize)]
struct EventLine<'a> {
    mechanism: Mechanism,
    seed: u64,
    #[serde(flatten)]
    outcome: &'a EpochOutcome,
}

pub fn cmd_run(a: &RunArgs) -> Result<i32> {
    let mut cfg = base_config(&a.shared)?;
    if let Some(f) = a.fleet {
        cfg.fleet_size = f;
    }
    if let Some(s) = a.scenario {
        cfg.scenario = s;
    }
    if let Some(f) = a.overreport {
        cfg.overreport.fraction = f;
    }
    cfg.validate()?;
    let seeds = seeds(&a.shared, &cfg)?;
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }

    let runs: Vec<(u64, KpiReport, Vec<EpochOutcome>)> = pool(a.shared.jobs)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let c = ScenarioConfig { seed, ..cfg.clone() };
                run_scenario_with_log(&c, a.mechanism).map(|(k, log)| (seed, k, log))
            })
            .collect::<Result<_>>()
    })?;

    fs::create_dir_all(&a.shared.out)?;
    let mut kpi = create(&a.shared.out, "kpi.csv")?;
    let mut events = create(&a.shared.out, "events.jsonl")?;
    let mut matches = csv::Writer::from_writer(create(&a.shared.out, "matches.csv")?);
    matches.write_record(MATCHES_HEADER)?;
    for (i, (seed, report, log)) in runs.iter().enumerate() {
        report.write_csv(&mut kpi, i == 0)?;
        for o in log {
            serde_json::to_writer(&mut events, &EventLine { mechanism: a.mechanism, seed: *seed, outcome: o })?;
            events.write_all(b"\n")?;
            for m in &o.matches {
                let mut row = vec![a.mechanism.to_string(), seed.to_string(), o.epoch.to_string()];
                row.extend([m.driver.to_string(), m.rider.to_string(), m.rider_epoch.to_string()]);
                row.extend(
                    [m.tau, m.trip_len, m.sigma, m.zeta, m.q_d, m.q_r, m.u_driver, m.u_rider].map(|v| v.to_string()),
                );
                matches.write_record(&row)?;
            }
        }
    }
    kpi.flush()?;
    events.flush()?;
    matches.flush()?;
    for (seed, r, _) in &runs {
        let g = &r.aggregate;
        println!(
            "{} seed {seed}: matched {}/{} requests, sensing {:.4}, coverage {:.4}, revenue {:.2}",
            a.mechanism, g.matched, g.requests, g.sensing_utility, g.coverage_rate, g.revenue
        );
    }
    Ok(EXIT_OK)
}

/// One cell of a comparison sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub overreport: f64,
    pub scenario: usize,
    pub fleet_size: usize,
    pub mechanism: Mechanism,
    pub seed: u64,
}

/// The full cross product, in output order.
pub fn sweep_cells(
    overreport: &[f64],
    scenarios: &[usize],
    fleets: &[usize],
    seeds: &[u64],
) -> Vec<SweepCell> {
    let mut out = Vec::new();
    for &o in overreport {
        for &s in scenarios {
            for &f in fleets {
                for m in [Mechanism::Vcg, Mechanism::Ds] {
                    for &seed in seeds {
                        out.push(SweepCell { overreport: o, scenario: s, fleet_size: f, mechanism: m, seed });
                    }
                }
            }
        }
    }
    out
}

pub fn cmd_compare(a: &CompareArgs) -> Result<i32> {
    let cfg = base_config(&a.shared)?;
    let fleets = match &a.fleet {
        Some(s) => parse_list("fleet", s)?,
        None => vec![cfg.fleet_size],
    };
    let scenarios = match &a.scenario {
        Some(s) => parse_list("scenario", s)?,
        None => vec![cfg.scenario],
    };
    let overreport = match &a.overreport {
        Some(s) => parse_list("overreport", s)?,
        None => vec![cfg.overreport.fraction],
    };
    let seeds = seeds(&a.shared, &cfg)?;
    let cells = sweep_cells(&overreport, &scenarios, &fleets, &seeds);
    if cells.is_empty() {
        return Err(Error::Config("empty sweep: every axis needs at least one value".into()));
    }
    let configs: Vec<ScenarioConfig> = cells
        .iter()
        .map(|c| {
            let mut k = ScenarioConfig { fleet_size: c.fleet_size, scenario: c.scenario, seed: c.seed, ..cfg.clone() };
            k.overreport.fraction = c.overreport;
            k.validate().map(|_| k)
        })
        .collect::<Result<_>>()?;

    let reports: Vec<KpiReport> = pool(a.shared.jobs)?.install(|| {
        cells
            .par_iter()
            .zip(&configs)
            .map(|(c, k)| crate::simengine::run_scenario(k, c.mechanism))
            .collect::<Result<_>>()
    })?;

    fs::create_dir_all(&a.shared.out)?;
    let mut fig3 = csv::Writer::from_writer(create(&a.shared.out, "fig3.csv")?);
    fig3.write_record(FIG3_HEADER)?;
    for (c, r) in cells.iter().zip(&reports) {
        if c.overreport == overreport[0] {
            fig3.write_record(r.summary_record())?;
        }
    }
    fig3.flush()?;

    let mut table2 = csv::Writer::from_writer(create(&a.shared.out, "table2.csv")?);
    table2.write_record(TABLE2_HEADER)?;
    for (group, chunk) in cells.chunks(seeds.len()).zip(reports.chunks(seeds.len())) {
        let c = group[0];
        let n = chunk.len() as f64;
        let mean = |f: fn(&KpiReport) -> f64| chunk.iter().map(f).sum::<f64>() / n;
        table2.write_record([
            c.overreport.to_string(),
            c.scenario.to_string(),
            c.fleet_size.to_string(),
            c.mechanism.to_string(),
            chunk.len().to_string(),
            mean(|r| r.aggregate.avg_u_driver).to_string(),
            mean(|r| r.aggregate.avg_u_rider).to_string(),
            mean(|r| r.aggregate.revenue).to_string(),
        ])?;
    }
    table2.flush()?;
    println!("{} runs written to {}", cells.len(), a.shared.out.display());
    Ok(EXIT_OK)
}

fn parse_sizes(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("--sizes expects DxR such as 6x6, got {s:?}"));
    let (d, r) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (d, r): (usize, usize) = (d.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?);
    if d == 0 || r == 0 {
        return Err(bad());
    }
    if d > ORACLE_LIMIT || r > ORACLE_LIMIT {
        return Err(Error::Config(format!(
            "--sizes {d}x{r} exceeds the enumeration limit of {ORACLE_LIMIT}x{ORACLE_LIMIT}"
        )));
    }
    Ok((d, r))
}

pub fn cmd_check(a: &CheckArgs) -> Result<i32> {
    if a.trials == 0 {
        return Err(Error::Config("--trials must be at least 1".into()));
    }
    let (max_drivers, max_riders) = parse_sizes(&a.sizes)?;
    let cfg = load_config(a.config.as_deref())?;
    let opts = CheckOptions {
        trials: a.trials,
        max_drivers,
        max_riders,
        seed: a.seed,
        perturbations: a.perturbations,
        rates: cfg.rates,
        skip_welfare_floor: a.skip_welfare_floor,
    };
    let report = pool(a.jobs)?.install(|| run_checks(&opts))?;
    print!("{}", report.summary());
    if report.all_passed() {
        return Ok(EXIT_OK);
    }
    fs::create_dir_all(&a.out)?;
    let path = a.out.join("check_failures.jsonl");
    let mut w = create(&a.out, "check_failures.jsonl")?;
    for f in &report.failures {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if let Some(f) = report.failures.first() {
        eprintln!("first failure ({}, trial {}): {}", f.property.name(), f.trial, f.detail);
        eprintln!("{}", serde_json::to_string(&f.problem)?);
    }
    eprintln!("{} failing instances written to {}", report.failures.len(), path.display());
    Ok(EXIT_PROPERTY)
}
