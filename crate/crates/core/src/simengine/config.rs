use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::WorldSpec;
use crate::market::Rates;

/// Everything needed to reproduce one simulation run.
///
/// Missing JSON fields fall back to the defaults below, so a config file only
/// has to name what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub world: WorldSpec,
    pub fleet_size: usize,
    /// Number of one-hour sensing intervals.
    pub intervals: usize,
    pub epochs_per_interval: usize,
    pub epoch_secs: f64,
    pub speed_kmh: f64,
    /// Maximum pick-up distance considered for a match.
    pub radius_km: f64,
    /// How far a vacant taxi looks for a better-prospect cell.
    pub reposition_radius_km: f64,
    pub rates: Rates,
    /// Truthful pick-up rates are drawn from `U[bid_low, bid_high]`.
    pub bid_low: f64,
    pub bid_high: f64,
    pub overreport: OverreportConfig,
    /// Demand scenario, 1-based index into `remote_fracs`.
    pub scenario: usize,
    pub remote_fracs: Vec<f64>,
    pub requests_per_hour: f64,
    /// Epochs an unmatched rider waits, counting the one they arrive in.
    pub rider_patience_epochs: u32,
    /// Apply the `alpha * h_r` lower bound on DS rider charges.
    pub charge_floor: bool,
    pub sensing_exponent: f64,
    pub distinct_vehicles: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverreportConfig {
    /// Probability that a participant inflates their bid.
    pub fraction: f64,
    /// Inflation is drawn from `U[0, max]`.
    pub max: f64,
}

impl Default for OverreportConfig {
    fn default() -> Self {
        Self { fraction: 0.0, max: 0.5 }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            world: WorldSpec::synthetic_district(10, 12),
            fleet_size: 40,
            intervals: 4,
            epochs_per_interval: 18,
            epoch_secs: 200.0,
            speed_kmh: 35.0,
            radius_km: 2.0,
            reposition_radius_km: 3.0,
            rates: Rates::default(),
            bid_low: 1.0,
            bid_high: 2.0,
            overreport: OverreportConfig::default(),
            scenario: 1,
            remote_fracs: vec![0.05, 0.15, 0.30],
            requests_per_hour: 144.0,
            rider_patience_epochs: 2,
            charge_floor: true,
            sensing_exponent: crate::sensing::DEFAULT_EXPONENT,
            distinct_vehicles: false,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epoch_secs", self.epoch_secs),
            ("speed_kmh", self.speed_kmh),
            ("radius_km", self.radius_km),
            ("requests_per_hour", self.requests_per_hour),
            ("bid_low", self.bid_low),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.reposition_radius_km.is_nan() || self.reposition_radius_km < 0.0 {
            return Err(Error::Config("reposition_radius_km must be non-negative".into()));
        }
        if self.intervals == 0 || self.epochs_per_interval == 0 {
            return Err(Error::Config("horizon must contain at least one epoch".into()));
        }
        if self.rider_patience_epochs == 0 {
            return Err(Error::Config("rider_patience_epochs must be at least 1".into()));
        }
        if self.bid_high < self.bid_low {
            return Err(Error::Config("bid_high must be at least bid_low".into()));
        }
        if !(0.0..=1.0).contains(&self.overreport.fraction) || self.overreport.max.is_nan() || self.overreport.max < 0.0 {
            return Err(Error::Config(format!(
                "overreport fraction must be in [0, 1] and max non-negative, got {:?}",
                self.overreport
            )));
        }
        if self.scenario == 0 || self.scenario > self.remote_fracs.len() {
            return Err(Error::Config(format!(
                "scenario {} not in 1..={}",
                self.scenario,
                self.remote_fracs.len()
            )));
        }
        if self.remote_fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("remote_fracs must lie in [0, 1]".into()));
        }
        self.rates.validate()
    }

    pub fn remote_frac(&self) -> f64 {
        self.remote_fracs[self.scenario - 1]
    }

    pub fn total_epochs(&self) -> usize {
        self.intervals * self.epochs_per_interval
    }

    /// km covered by a taxi in one epoch.
    pub fn epoch_travel_km(&self) -> f64 {
        self.speed_kmh * self.epoch_secs / 3600.0
    }

    pub fn mean_requests_per_epoch(&self) -> f64 {
        self.requests_per_hour * self.epoch_secs / 3600.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ScenarioConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_epochs(), 72);
        assert!((cfg.mean_requests_per_epoch() - 8.0).abs() < 1e-12);
        assert!((cfg.epoch_travel_km() - 35.0 * 200.0 / 3600.0).abs() < 1e-12);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"fleet_size": 20, "scenario": 3, "seed": 9}"#).unwrap();
        assert_eq!(cfg.fleet_size, 20);
        assert_eq!(cfg.remote_frac(), 0.30);
        assert_eq!(cfg.intervals, 4);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(ScenarioConfig::from_json(r#"{"scenario": 4}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"overreport": {"fraction": 1.5}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"speed_kmh": 0}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"fleet_size": "many"}"#).is_err());
    }
}
