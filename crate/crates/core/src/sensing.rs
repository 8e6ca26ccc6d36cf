//! Count-based sensing utility: per-cell quality `N^lambda`, the weighted
//! aggregate over cells and intervals, and the marginal gain of one more trip.

use std::collections::HashSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::CellId;
use crate::market::DriverId;

pub const DEFAULT_EXPONENT: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingParams {
    pub exponent: f64,
    /// One weight per sensing interval, summing to 1.
    pub temporal_weights: Vec<f64>,
    /// One weight per cell, summing to 1.
    pub spatial_weights: Vec<f64>,
}

impl SensingParams {
    pub fn uniform(num_cells: usize, num_intervals: usize, exponent: f64) -> Result<Self> {
        if num_cells == 0 || num_intervals == 0 {
            return Err(Error::Config("sensing needs at least one cell and one interval".into()));
        }
        let params = Self {
            exponent,
            temporal_weights: vec![1.0 / num_intervals as f64; num_intervals],
            spatial_weights: vec![1.0 / num_cells as f64; num_cells],
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent < 1.0) {
            return Err(Error::Config(format!("exponent must lie in (0, 1), got {}", self.exponent)));
        }
        for (name, w) in [("temporal", &self.temporal_weights), ("spatial", &self.spatial_weights)] {
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Config(format!("{name} weights must be non-negative")));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("{name} weights sum to {total}, expected 1")));
            }
        }
        Ok(())
    }

    pub fn quality(&self, n: u32) -> f64 {
        sensing_quality(self.exponent, n)
    }
}

/// `N^lambda`, with `0^lambda = 0`.
pub fn sensing_quality(exponent: f64, n: u32) -> f64 {
    if n == 0 {
        0.0
    } else {
        f64::from(n).powf(exponent)
    }
}

/// `(N + 1)^lambda - N^lambda`.
pub fn cell_gain(exponent: f64, n: u32) -> f64 {
    sensing_quality(exponent, n + 1) - sensing_quality(exponent, n)
}

/// Visit counts per (sensing interval, cell).
///
/// Counts are scheduled coverage: a route is committed as soon as its match
/// is decided, not when the vehicle actually drives through.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageState {
    num_cells: usize,
    num_intervals: usize,
    counts: Vec<u32>,
    current_interval: usize,
    pub current_epoch: u32,
    distinct_vehicles: bool,
    visited: HashSet<(usize, CellId, DriverId)>,
}

impl CoverageState {
    pub fn new(num_cells: usize, num_intervals: usize) -> Self {
        Self {
            num_cells,
            num_intervals,
            counts: vec![0; num_cells * num_intervals.max(1)],
            current_interval: 0,
            current_epoch: 0,
            distinct_vehicles: false,
            visited: HashSet::new(),
        }
    }

    /// Count each vehicle at most once per cell and interval instead of once per trip.
    pub fn with_distinct_vehicles(mut self, on: bool) -> Self {
        self.distinct_vehicles = on;
        self
    }

    pub fn distinct_vehicles(&self) -> bool {
        self.distinct_vehicles
    }

    pub fn num_cells(&self) -> usize {
        self.num_cells
    }

    pub fn num_intervals(&self) -> usize {
        self.num_intervals
    }

    pub fn current_interval(&self) -> usize {
        self.current_interval
    }

    pub fn count(&self, interval: usize, cell: CellId) -> u32 {
        self.counts[interval * self.num_cells + cell]
    }

    pub fn interval_counts(&self, interval: usize) -> &[u32] {
        &self.counts[interval * self.num_cells..(interval + 1) * self.num_cells]
    }

    /// Moves to the next interval, where all counts start from zero.
    pub fn advance_interval(&mut self) -> Result<()> {
        if self.current_interval + 1 >= self.num_intervals {
            return Err(Error::Contract(format!(
                "cannot advance past the last of {} intervals",
                self.num_intervals
            )));
        }
        self.current_interval += 1;
        Ok(())
    }

    /// Sensing gain of a trip through `route_cells` against the counts of the
    /// current interval. Spatial and temporal weights do not enter here.
    pub fn marginal_gain(&self, params: &SensingParams, route_cells: &[CellId]) -> f64 {
        let counts = self.interval_counts(self.current_interval);
        route_cells.iter().map(|&g| cell_gain(params.exponent, counts[g])).sum()
    }

    /// Like [`marginal_gain`](Self::marginal_gain), but in distinct-vehicle mode
    /// cells this driver already covered this interval contribute nothing.
    pub fn marginal_gain_for(
        &self,
        params: &SensingParams,
        route_cells: &[CellId],
        driver: DriverId,
    ) -> f64 {
        if !self.distinct_vehicles {
            return self.marginal_gain(params, route_cells);
        }
        let t = self.current_interval;
        let counts = self.interval_counts(t);
        route_cells
            .iter()
            .filter(|&&g| !self.visited.contains(&(t, g, driver)))
            .map(|&g| cell_gain(params.exponent, counts[g]))
            .sum()
    }

    /// Records a committed trip route in the current interval.
    pub fn commit_route(&mut self, route_cells: &[CellId], driver: DriverId) {
        let t = self.current_interval;
        for &g in route_cells {
            if self.distinct_vehicles && !self.visited.insert((t, g, driver)) {
                continue;
            }
            self.counts[t * self.num_cells + g] += 1;
        }
    }

    /// `sum_t mu_t sum_g w_g N_{g,t}^lambda` over all intervals.
    pub fn total_utility(&self, params: &SensingParams) -> Result<f64> {
        if params.temporal_weights.len() != self.num_intervals
            || params.spatial_weights.len() != self.num_cells
        {
            return Err(Error::Config(format!(
                "weights are {}x{} but coverage is {} intervals x {} cells",
                params.temporal_weights.len(),
                params.spatial_weights.len(),
                self.num_intervals,
                self.num_cells
            )));
        }
        Ok((0..self.num_intervals).map(|t| self.interval_utility(params, t)).sum())
    }

    /// Weighted contribution `mu_t sum_g w_g N_{g,t}^lambda` of one interval.
    pub fn interval_utility(&self, params: &SensingParams, interval: usize) -> f64 {
        let inner: f64 = self
            .interval_counts(interval)
            .iter()
            .zip(&params.spatial_weights)
            .map(|(&n, w)| w * params.quality(n))
            .sum();
        params.temporal_weights[interval] * inner
    }

    /// Fraction of cells with at least one visit in `interval`.
    pub fn coverage_fraction(&self, interval: usize) -> f64 {
        let covered = self.interval_counts(interval).iter().filter(|&&n| n > 0).count();
        covered as f64 / self.num_cells as f64
    }

    /// Writes `interval,cell,count` rows for intervals up to the current one.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["interval", "cell", "count"])?;
        for t in 0..=self.current_interval.min(self.num_intervals - 1) {
            for (g, n) in self.interval_counts(t).iter().enumerate() {
                wtr.write_record([t.to_string(), g.to_string(), n.to_string()])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-9;

    #[test]
    fn quality_values() {
        assert_eq!(sensing_quality(0.2, 0), 0.0);
        assert_eq!(sensing_quality(0.7, 1), 1.0);
        assert!((sensing_quality(0.2, 32) - 2.0).abs() < EPS);
    }

    #[test]
    fn total_utility_examples() {
        let params = SensingParams::uniform(2, 1, 0.2).unwrap();
        let mut cov = CoverageState::new(2, 1);
        assert_eq!(cov.total_utility(&params).unwrap(), 0.0);
        cov.commit_route(&[0, 1], 0);
        assert!((cov.total_utility(&params).unwrap() - 1.0).abs() < EPS);
        for _ in 0..31 {
            cov.commit_route(&[0], 0);
        }
        assert!((cov.total_utility(&params).unwrap() - 1.5).abs() < EPS);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let params = SensingParams::uniform(3, 1, 0.2).unwrap();
        let cov = CoverageState::new(2, 1);
        assert!(matches!(cov.total_utility(&params), Err(Error::Config(_))));
    }

    #[test]
    fn marginal_gain_examples() {
        let params = SensingParams::uniform(4, 1, 0.2).unwrap();
        let mut cov = CoverageState::new(4, 1);
        assert!((cov.marginal_gain(&params, &[2]) - 1.0).abs() < EPS);
        assert!((cov.marginal_gain(&params, &[0, 1, 3]) - 3.0).abs() < EPS);
        for _ in 0..31 {
            cov.commit_route(&[1], 0);
        }
        let expected = 2.0 - 31f64.powf(0.2);
        assert!((cov.marginal_gain(&params, &[1]) - expected).abs() < EPS);
        assert!((expected - 0.012_659_245).abs() < 1e-8);
    }

    #[test]
    fn commits_accumulate_and_reset_per_interval() {
        let params = SensingParams::uniform(3, 2, 0.2).unwrap();
        let mut cov = CoverageState::new(3, 2);
        cov.commit_route(&[0, 1, 2], 0);
        assert_eq!(cov.interval_counts(0), &[1, 1, 1]);
        cov.commit_route(&[0, 1, 2], 1);
        assert_eq!(cov.interval_counts(0), &[2, 2, 2]);
        cov.advance_interval().unwrap();
        assert!((cov.marginal_gain(&params, &[0, 2]) - 2.0).abs() < EPS);
        assert!(cov.advance_interval().is_err());
    }

    #[test]
    fn replayed_commits_match_incremental_gains() {
        let params = SensingParams::uniform(3, 1, 0.2).unwrap();
        let mut cov = CoverageState::new(3, 1);
        cov.current_epoch = 0;
        cov.commit_route(&[0, 1], 0);
        cov.current_epoch = 1;
        let second = cov.marginal_gain(&params, &[1, 2]);
        // Replay: counts after the first commit are N = [1, 1, 0].
        let oracle = (2f64.powf(0.2) - 1.0) + 1.0;
        assert!((second - oracle).abs() < EPS);
    }

    #[test]
    fn distinct_vehicle_mode_ignores_repeat_visits() {
        let params = SensingParams::uniform(2, 1, 0.2).unwrap();
        let mut cov = CoverageState::new(2, 1).with_distinct_vehicles(true);
        cov.commit_route(&[0], 7);
        assert_eq!(cov.marginal_gain_for(&params, &[0, 1], 7), 1.0);
        cov.commit_route(&[0, 1], 7);
        assert_eq!(cov.interval_counts(0), &[1, 1]);
        cov.commit_route(&[0], 8);
        assert_eq!(cov.interval_counts(0), &[2, 1]);
    }

    #[test]
    fn csv_snapshot() {
        let mut cov = CoverageState::new(2, 2);
        cov.commit_route(&[1], 0);
        let mut buf = Vec::new();
        cov.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "interval,cell,count\n0,0,0\n0,1,1\n");
    }
}
