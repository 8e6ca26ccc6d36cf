//! Payments and charges for a solved matching.
//!
//! Both schemes start from the participants' valuations and add a
//! non-negative bonus: the driver is paid `q_d = P_d + rho_d`, the rider is
//! charged `q_r = P_r - rho_r`. They differ in where the bonus comes from:
//!
//! * VCG: `rho_x = V* - V_{x-}`, the welfare lost when `x` leaves the market;
//! * DS: the matched welfare `V` is split by sensing contribution,
//!   `rho_x = V * dU_x / sum(dU)` with `dU_x = U* - U*_{x-}`. Optionally
//!   the rider charge is floored at `alpha * h_r`, and whatever the floor
//!   claws back stays with the platform.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::{self, dequantize, MatchingProblem, MatchingSolution, Objective, Participant};
use crate::error::{Error, Result};
use crate::market::{self, DriverId, Rates, RiderId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Vcg,
    Ds,
}

impl Mechanism {
    pub fn objective(self) -> Objective {
        match self {
            Mechanism::Vcg => Objective::Welfare,
            Mechanism::Ds => Objective::Sensing,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mechanism::Vcg => "vcg",
            Mechanism::Ds => "ds",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vcg" => Ok(Mechanism::Vcg),
            "ds" => Ok(Mechanism::Ds),
            other => Err(Error::Config(format!("unknown mechanism {other:?}, expected vcg or ds"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricedMatch {
    pub driver: DriverId,
    pub rider: RiderId,
    pub tau: f64,
    pub trip_len: f64,
    pub p_d: f64,
    pub p_r: f64,
    pub sigma: f64,
    pub zeta: f64,
    pub bonus_d: f64,
    pub bonus_r: f64,
    pub q_d: f64,
    pub q_r: f64,
    /// Sensing shares, DS only.
    pub share_d: Option<f64>,
    pub share_r: Option<f64>,
}

impl PricedMatch {
    /// Utilities against the reported valuations.
    pub fn utilities(&self) -> (f64, f64) {
        market::participant_utilities(self.q_d, self.q_r, self.p_d, self.p_r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSettlement {
    pub mechanism: Mechanism,
    pub solution: MatchingSolution,
    pub priced: Vec<PricedMatch>,
    /// `sum q_r - sum q_d`.
    pub revenue: f64,
    /// Part of the revenue produced by the rider charge floor.
    pub floor_revenue: f64,
    pub welfare_total: f64,
    pub sensing_total: f64,
}

impl EpochSettlement {
    fn assemble(mechanism: Mechanism, solution: MatchingSolution, priced: Vec<PricedMatch>, floor_revenue: f64) -> Self {
        let revenue = priced.iter().map(|m| m.q_r - m.q_d).sum();
        Self {
            mechanism,
            welfare_total: solution.welfare_total,
            sensing_total: solution.sensing_total,
            solution,
            priced,
            revenue,
            floor_revenue,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.priced.is_empty()
    }
}

/// Objective values of the program re-solved without each matched participant.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Marginals {
    units: BTreeMap<Participant, i128>,
}

impl Marginals {
    /// One re-solve per matched participant, run in parallel.
    pub fn compute(problem: &MatchingProblem, solution: &MatchingSolution) -> Self {
        let who: Vec<Participant> = solution
            .pairs(problem)
            .flat_map(|e| [Participant::Driver(e.driver), Participant::Rider(e.rider)])
            .collect();
        let units = who
            .par_iter()
            .map(|&p| (p, assignment::marginal_objective(problem, p).objective_units()))
            .collect();
        Self { units }
    }

    pub fn insert_units(&mut self, who: Participant, units: i128) {
        self.units.insert(who, units);
    }

    pub fn get(&self, who: Participant) -> Option<f64> {
        self.units.get(&who).map(|&u| dequantize(u))
    }

    /// `objective - value_without(who)`, exact in solver units.
    fn drop_of(&self, solution: &MatchingSolution, who: Participant) -> Result<f64> {
        self.units
            .get(&who)
            .map(|&u| dequantize(solution.objective_units() - u))
            .ok_or_else(|| Error::Contract(format!("missing marginal value for {who:?}")))
    }
}

fn base_match(problem: &MatchingProblem, idx: usize) -> PricedMatch {
    let e = &problem.edges[idx];
    PricedMatch {
        driver: e.driver,
        rider: e.rider,
        tau: e.tau,
        trip_len: e.trip_len,
        p_d: e.p_d,
        p_r: e.p_r,
        sigma: e.sigma,
        zeta: e.zeta,
        bonus_d: 0.0,
        bonus_r: 0.0,
        q_d: e.p_d,
        q_r: e.p_r,
        share_d: None,
        share_r: None,
    }
}

/// VCG payments: each matched participant's bonus is the welfare the others
/// lose without them. The platform's revenue is `V* - sum(rho)`, never positive.
pub fn vcg_prices(
    problem: &MatchingProblem,
    solution: &MatchingSolution,
    marginals: &Marginals,
) -> Result<EpochSettlement> {
    let mut priced = Vec::with_capacity(solution.chosen.len());
    for &idx in &solution.chosen {
        let mut m = base_match(problem, idx);
        m.bonus_d = marginals.drop_of(solution, Participant::Driver(m.driver))?;
        m.bonus_r = marginals.drop_of(solution, Participant::Rider(m.rider))?;
        m.q_d = m.p_d + m.bonus_d;
        m.q_r = m.p_r - m.bonus_r;
        priced.push(m);
    }
    Ok(EpochSettlement::assemble(Mechanism::Vcg, solution.clone(), priced, 0.0))
}

/// DS payments: the matched welfare is shared out in proportion to sensing
/// contributions. If no participant changes the optimum (all contributions
/// zero) the welfare is split evenly among matched participants.
pub fn ds_prices(
    problem: &MatchingProblem,
    solution: &MatchingSolution,
    marginals: &Marginals,
    rates: &Rates,
    charge_floor: bool,
) -> Result<EpochSettlement> {
    let welfare = solution.welfare_total;
    if welfare < -market::MONEY_EPS {
        return Err(Error::Contract(format!("DS matching has negative welfare {welfare}")));
    }

    let mut contributions = Vec::with_capacity(solution.chosen.len());
    for e in solution.pairs(problem) {
        let du_d = marginals.drop_of(solution, Participant::Driver(e.driver))?;
        let du_r = marginals.drop_of(solution, Participant::Rider(e.rider))?;
        contributions.push((du_d, du_r));
    }
    let total: f64 = contributions.iter().map(|(d, r)| d + r).sum();
    let even = 1.0 / (2 * contributions.len()).max(1) as f64;

    let mut priced = Vec::with_capacity(solution.chosen.len());
    let mut floor_revenue = 0.0;
    for (&idx, &(du_d, du_r)) in solution.chosen.iter().zip(&contributions) {
        let mut m = base_match(problem, idx);
        let (share_d, share_r) = if total > 0.0 { (du_d / total, du_r / total) } else { (even, even) };
        m.share_d = Some(share_d);
        m.share_r = Some(share_r);
        m.bonus_d = welfare * share_d;
        m.bonus_r = welfare * share_r;
        m.q_d = m.p_d + m.bonus_d;
        m.q_r = m.p_r - m.bonus_r;
        if charge_floor {
            let floor = rates.alpha * m.trip_len;
            if m.q_r < floor {
                floor_revenue += floor - m.q_r;
                m.q_r = floor;
            }
        }
        priced.push(m);
    }
    Ok(EpochSettlement::assemble(Mechanism::Ds, solution.clone(), priced, floor_revenue))
}

/// Solve, re-solve once per matched participant, then price.
///
/// The problem's objective is overridden by the mechanism; DS always solves
/// with the welfare floor.
pub fn settle_epoch(
    mechanism: Mechanism,
    problem: &MatchingProblem,
    rates: &Rates,
    charge_floor: bool,
) -> Result<EpochSettlement> {
    let problem = match mechanism {
        Mechanism::Vcg => problem.with_objective(Objective::Welfare),
        Mechanism::Ds => problem.with_objective(Objective::Sensing).with_floor(true),
    };
    let solution = assignment::solve(&problem);
    let marginals = Marginals::compute(&problem, &solution);
    match mechanism {
        Mechanism::Vcg => vcg_prices(&problem, &solution, &marginals),
        Mechanism::Ds => ds_prices(&problem, &solution, &marginals, rates, charge_floor),
    }
}

/// Prices a fixed matching of `problem` (for example one found on truthful
/// bids) using the problem's own valuations and re-solves.
pub fn settle_fixed(
    mechanism: Mechanism,
    problem: &MatchingProblem,
    chosen: &[usize],
    rates: &Rates,
    charge_floor: bool,
) -> Result<EpochSettlement> {
    let problem = match mechanism {
        Mechanism::Vcg => problem.with_objective(Objective::Welfare),
        Mechanism::Ds => problem.with_objective(Objective::Sensing).with_floor(true),
    };
    let solution = MatchingSolution::for_edges(&problem, chosen.to_vec());
    let marginals = Marginals::compute(&problem, &solution);
    match mechanism {
        Mechanism::Vcg => vcg_prices(&problem, &solution, &marginals),
        Mechanism::Ds => ds_prices(&problem, &solution, &marginals, rates, charge_floor),
    }
}

pub const SETTLEMENT_HEADER: [&str; 14] = [
    "epoch", "mechanism", "d", "r", "P_d", "P_r", "sigma", "zeta", "rho_d", "rho_r", "q_d", "q_r",
    "u_d", "u_r",
];

/// Appends one CSV row per priced match (header included when `header`).
pub fn write_settlement_csv<W: Write>(
    out: W,
    epoch: u32,
    settlement: &EpochSettlement,
    header: bool,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    if header {
        wtr.write_record(SETTLEMENT_HEADER)?;
    }
    for m in &settlement.priced {
        let (u_d, u_r) = m.utilities();
        let mut row = vec![epoch.to_string(), settlement.mechanism.to_string(), m.driver.to_string(), m.rider.to_string()];
        row.extend(
            [m.p_d, m.p_r, m.sigma, m.zeta, m.bonus_d, m.bonus_r, m.q_d, m.q_r, u_d, u_r]
                .iter()
                .map(|v| format!("{v:.6}")),
        );
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
