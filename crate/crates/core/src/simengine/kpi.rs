//! Run-level KPI accounting and CSV export.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::pricing::Mechanism;

use super::{EpochOutcome, Simulation};

/// Trips with marginal sensing gain at least this large count as high-gain.
pub const HIGH_ZETA: f64 = 0.5;

/// Columns of `kpi.csv`: one row per interval plus an `all` row.
pub const KPI_HEADER: [&str; 15] = [
    "interval",
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
    "requests",
    "matched",
    "high_zeta",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiRow {
    /// Requests that arrived in the window and were eventually served.
    pub matching_rate: f64,
    /// Mean pick-up time of matches made in the window, minutes.
    pub avg_wait_min: f64,
    pub sensing_utility: f64,
    pub coverage_rate: f64,
    pub revenue: f64,
    /// Mean utilities per matched pair, against truthful valuations.
    pub avg_u_driver: f64,
    pub avg_u_rider: f64,
    pub requests: usize,
    pub matched: usize,
    pub high_zeta: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub mechanism: Mechanism,
    pub scenario: usize,
    pub fleet_size: usize,
    pub seed: u64,
    pub per_interval: Vec<KpiRow>,
    pub aggregate: KpiRow,
}

#[derive(Default)]
struct Acc {
    requests: usize,
    served: usize,
    matched: usize,
    wait_min: f64,
    u_d: f64,
    u_r: f64,
    revenue: f64,
    high_zeta: usize,
}

impl Acc {
    fn row(&self, sensing_utility: f64, coverage_rate: f64) -> KpiRow {
        let mean = |x: f64, n: usize| if n == 0 { 0.0 } else { x / n as f64 };
        KpiRow {
            matching_rate: mean(self.served as f64, self.requests),
            avg_wait_min: mean(self.wait_min, self.matched),
            sensing_utility,
            coverage_rate,
            revenue: self.revenue,
            avg_u_driver: mean(self.u_d, self.matched),
            avg_u_rider: mean(self.u_r, self.matched),
            requests: self.requests,
            matched: self.matched,
            high_zeta: self.high_zeta,
        }
    }
}

impl KpiReport {
    pub(super) fn from_outcomes(sim: &Simulation, outcomes: &[EpochOutcome]) -> Result<Self> {
        let cfg = &sim.config;
        let per = cfg.epochs_per_interval as u32;
        let speed = cfg.speed_kmh;
        let mut acc: Vec<Acc> = (0..cfg.intervals).map(|_| Acc::default()).collect();
        let mut all = Acc::default();

        for o in outcomes {
            let slot = &mut acc[o.interval];
            slot.requests += o.generated;
            all.requests += o.generated;
            slot.revenue += o.revenue;
            all.revenue += o.revenue;
            for m in &o.matches {
                acc[(m.rider_epoch / per) as usize].served += 1;
                all.served += 1;
                let wait = m.tau / speed * 60.0;
                let high = usize::from(m.zeta >= HIGH_ZETA);
                for a in [&mut acc[o.interval], &mut all] {
                    a.matched += 1;
                    a.wait_min += wait;
                    a.u_d += m.u_driver;
                    a.u_r += m.u_rider;
                    a.high_zeta += high;
                }
            }
        }

        let per_interval: Vec<KpiRow> = acc
            .iter()
            .enumerate()
            .map(|(t, a)| {
                a.row(sim.coverage.interval_utility(&sim.sensing, t), sim.coverage.coverage_fraction(t))
            })
            .collect();
        let coverage_rate =
            per_interval.iter().map(|r| r.coverage_rate).sum::<f64>() / per_interval.len() as f64;
        let aggregate = all.row(sim.coverage.total_utility(&sim.sensing)?, coverage_rate);

        Ok(Self {
            mechanism: sim.mechanism,
            scenario: cfg.scenario,
            fleet_size: cfg.fleet_size,
            seed: cfg.seed,
            per_interval,
            aggregate,
        })
    }

    fn record(&self, interval: &str, row: &KpiRow) -> Vec<String> {
        vec![
            interval.to_string(),
            self.mechanism.to_string(),
            self.scenario.to_string(),
            self.fleet_size.to_string(),
            self.seed.to_string(),
            row.matching_rate.to_string(),
            row.avg_wait_min.to_string(),
            row.sensing_utility.to_string(),
            row.coverage_rate.to_string(),
            row.revenue.to_string(),
            row.avg_u_driver.to_string(),
            row.avg_u_rider.to_string(),
            row.requests.to_string(),
            row.matched.to_string(),
            row.high_zeta.to_string(),
        ]
    }

    /// Writes the per-interval rows and the aggregate (`all`) row.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        if header {
            wtr.write_record(KPI_HEADER)?;
        }
        for (t, row) in self.per_interval.iter().enumerate() {
            wtr.write_record(self.record(&t.to_string(), row))?;
        }
        wtr.write_record(self.record("all", &self.aggregate))?;
        wtr.flush()?;
        Ok(())
    }

    /// The aggregate row in sweep-table form (no interval column).
    pub fn summary_record(&self) -> Vec<String> {
        let mut rec = self.record("all", &self.aggregate);
        rec.remove(0);
        rec.truncate(11);
        rec
    }
}
