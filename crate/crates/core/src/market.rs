//! Participants, valuations and welfare accounting.
//!
//! All monetary amounts are CNY; distances are km. Valuations always use the
//! *reported* rates; truthful rates are carried along only so that simulation
//! and tests can measure utilities against what a participant really values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{CellId, CellRoute, Point};

/// Absolute tolerance for monetary comparisons.
pub const MONEY_EPS: f64 = 1e-9;

pub type DriverId = u32;
pub type RiderId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    /// Driver's monetary value per km travelled.
    pub alpha: f64,
    /// Rider's monetary value per km travelled.
    pub beta: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self { alpha: 1.5, beta: 2.75 }
    }
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > self.alpha && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "rates must satisfy beta > alpha > 0, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiderRequest {
    pub id: RiderId,
    pub origin: Point,
    pub dest: Point,
    pub dest_cell: CellId,
    pub route: CellRoute,
    /// Truthful compensation rate per km of extra pick-up.
    pub delta_true: f64,
    pub delta_reported: f64,
    pub epoch: u32,
}

impl RiderRequest {
    pub fn trip_len(&self) -> f64 {
        self.route.length
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DriverStatus {
    Vacant,
    Pickup,
    InService,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverState {
    pub id: DriverId,
    pub location: Point,
    pub status: DriverStatus,
    /// Truthful cost rate per km of extra pick-up.
    pub b_true: f64,
    pub b_reported: f64,
    /// km/h
    pub speed: f64,
}

/// Reported valuations of one candidate match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub p_d: f64,
    pub p_r: f64,
    pub sigma: f64,
}

impl Quote {
    pub fn new(p_d: f64, p_r: f64) -> Self {
        Self { p_d, p_r, sigma: social_welfare(p_r, p_d) }
    }
}

fn check_pickup(tau: f64, tau_min: f64) -> Result<()> {
    if !(tau_min >= 0.0 && tau >= tau_min) {
        return Err(Error::Contract(format!(
            "pick-up distance {tau} must be at least the minimum {tau_min} >= 0"
        )));
    }
    Ok(())
}

/// Driver's desired payment: `alpha * h + b * (tau - tau_min) + f`.
pub fn driver_valuation(
    rates: &Rates,
    trip_len: f64,
    cost_rate: f64,
    tau: f64,
    tau_min: f64,
    opportunity_cost: f64,
) -> Result<f64> {
    check_pickup(tau, tau_min)?;
    Ok(rates.alpha * trip_len + cost_rate * (tau - tau_min) + opportunity_cost)
}

/// Rider's willingness to pay: `beta * h - delta * (tau - tau_min)`.
pub fn rider_valuation(
    rates: &Rates,
    trip_len: f64,
    comp_rate: f64,
    tau: f64,
    tau_min: f64,
) -> Result<f64> {
    check_pickup(tau, tau_min)?;
    Ok(rates.beta * trip_len - comp_rate * (tau - tau_min))
}

/// Welfare of a match; negative when the driver's cost exceeds what the rider would pay.
pub fn social_welfare(p_r: f64, p_d: f64) -> f64 {
    p_r - p_d
}

/// `(u_d, u_r)` for a payment `q_d` and charge `q_r` against valuations.
pub fn participant_utilities(q_d: f64, q_r: f64, p_d: f64, p_r: f64) -> (f64, f64) {
    (q_d - p_d, p_r - q_r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= MONEY_EPS
    }

    #[test]
    fn illustrative_valuations() {
        let rates = Rates::default();
        let pd1 = driver_valuation(&rates, 7.2, 1.5, 0.5, 0.5, 7.56).unwrap();
        let pd2 = driver_valuation(&rates, 4.8, 1.5, 0.5, 0.5, 0.0).unwrap();
        let pr1 = rider_valuation(&rates, 7.2, 1.5, 0.5, 0.5).unwrap();
        let pr2 = rider_valuation(&rates, 4.8, 1.5, 0.5, 0.5).unwrap();
        assert!(close(pd1, 18.36));
        assert!(close(pd2, 7.2));
        assert!(close(pr1, 19.80));
        assert!(close(pr2, 13.20));
        assert!(close(social_welfare(pr1, pd1), 1.44));
        assert!(close(social_welfare(pr2, pd2), 6.0));
    }

    #[test]
    fn empty_trip_is_worth_nothing() {
        let rates = Rates::default();
        assert_eq!(driver_valuation(&rates, 0.0, 1.3, 1.0, 1.0, 0.0).unwrap(), 0.0);
        assert_eq!(rider_valuation(&rates, 0.0, 1.3, 1.0, 1.0).unwrap(), 0.0);
        assert_eq!(social_welfare(3.0, 3.0), 0.0);
    }

    #[test]
    fn pickup_below_minimum_is_a_contract_violation() {
        let rates = Rates::default();
        assert!(matches!(
            driver_valuation(&rates, 1.0, 1.0, 0.4, 0.5, 0.0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(rider_valuation(&rates, 1.0, 1.0, 0.4, 0.5), Err(Error::Contract(_))));
    }

    #[test]
    fn utilities() {
        assert_eq!(participant_utilities(5.0, 7.0, 5.0, 7.0), (0.0, 0.0));
        let (u_d, _) = participant_utilities(18.36 + 1.0, 0.0, 18.36, 0.0);
        assert!(close(u_d, 1.0));
    }

    #[test]
    fn rates_validation() {
        assert!(Rates::default().validate().is_ok());
        assert!(Rates { alpha: 2.0, beta: 1.0 }.validate().is_err());
    }
}
