//! Candidate construction and exact solvers for the two matching programs.
//!
//! * welfare maximization: `max sum sigma x` over one-to-one matchings;
//! * sensing maximization: `max sum zeta x` over one-to-one matchings with
//!   the side constraint `sum sigma x >= 0`.
//!
//! Both are solved exactly. Edge values are quantized to integer units of
//! [`UNIT`] and combined into lexicographic keys, so ties are resolved by a
//! total order rather than by floating-point accident:
//!
//! | objective | key                                         |
//! |-----------|---------------------------------------------|
//! | welfare   | (sigma, -tau, -rank)                        |
//! | sensing   | (zeta, sigma, -tau, -rank)                  |
//!
//! where `rank` is the edge's position in `(driver, rider)` order.

mod hungarian;
mod search;

use std::collections::{BTreeSet, HashMap};
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gridworld::ProspectModel;
use crate::market::{self, DriverId, DriverState, DriverStatus, Rates, RiderId, RiderRequest};
use crate::sensing::{CoverageState, SensingParams};

pub use hungarian::{min_cost_assignment, Weight};

/// Quantization step for solver keys.
pub const UNIT: f64 = 1e-12;

pub(crate) fn quantize(v: f64) -> i128 {
    (v / UNIT).round() as i128
}

pub(crate) fn dequantize(units: i128) -> f64 {
    units as f64 * UNIT
}

/// Lexicographic solver key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(pub [i128; 4]);

impl Add for Key {
    type Output = Key;
    fn add(self, o: Key) -> Key {
        Key(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl Sub for Key {
    type Output = Key;
    fn sub(self, o: Key) -> Key {
        Key(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl Neg for Key {
    type Output = Key;
    fn neg(self) -> Key {
        Key(self.0.map(|v| -v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Welfare,
    Sensing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Participant {
    Driver(DriverId),
    Rider(RiderId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEdge {
    #[serde(rename = "d")]
    pub driver: DriverId,
    #[serde(rename = "r")]
    pub rider: RiderId,
    pub tau: f64,
    #[serde(default)]
    pub tau_min_d: f64,
    #[serde(default)]
    pub tau_min_r: f64,
    /// Rider trip length, needed for the charge floor.
    #[serde(default, rename = "h")]
    pub trip_len: f64,
    #[serde(rename = "P_d")]
    pub p_d: f64,
    #[serde(rename = "P_r")]
    pub p_r: f64,
    #[serde(skip_deserializing, default)]
    pub sigma: f64,
    pub zeta: f64,
}

impl CandidateEdge {
    pub fn new(driver: DriverId, rider: RiderId, tau: f64, p_d: f64, p_r: f64, zeta: f64) -> Self {
        Self {
            driver,
            rider,
            tau,
            tau_min_d: tau,
            tau_min_r: tau,
            trip_len: 0.0,
            p_d,
            p_r,
            sigma: market::social_welfare(p_r, p_d),
            zeta,
        }
    }

    pub fn with_pickup_minima(mut self, tau_min_d: f64, tau_min_r: f64) -> Self {
        self.tau_min_d = tau_min_d;
        self.tau_min_r = tau_min_r;
        self
    }

    pub fn with_trip_len(mut self, h: f64) -> Self {
        self.trip_len = h;
        self
    }

    pub fn extra_pickup_d(&self) -> f64 {
        self.tau - self.tau_min_d
    }

    pub fn extra_pickup_r(&self) -> f64 {
        self.tau - self.tau_min_r
    }
}

/// One decision epoch's matching instance.
///
/// Edges are kept sorted by `(driver, rider)`, one edge per pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawProblem")]
pub struct MatchingProblem {
    pub drivers: Vec<DriverId>,
    pub riders: Vec<RiderId>,
    pub edges: Vec<CandidateEdge>,
    pub objective: Objective,
    /// Enforce `sum sigma >= 0` (meaningful for the sensing objective).
    pub welfare_floor: bool,
}

#[derive(Deserialize)]
struct RawProblem {
    #[serde(default)]
    drivers: Vec<DriverId>,
    #[serde(default)]
    riders: Vec<RiderId>,
    edges: Vec<CandidateEdge>,
    objective: Objective,
    #[serde(default = "default_true")]
    welfare_floor: bool,
}

fn default_true() -> bool {
    true
}

impl From<RawProblem> for MatchingProblem {
    fn from(raw: RawProblem) -> Self {
        MatchingProblem::new(raw.drivers, raw.riders, raw.edges, raw.objective, raw.welfare_floor)
    }
}

impl MatchingProblem {
    /// Normalizes participants and edges: sigma is recomputed from the
    /// valuations, edges are sorted, duplicate pairs keep their first entry and
    /// every endpoint is registered as a participant.
    pub fn new(
        drivers: Vec<DriverId>,
        riders: Vec<RiderId>,
        mut edges: Vec<CandidateEdge>,
        objective: Objective,
        welfare_floor: bool,
    ) -> Self {
        for e in &mut edges {
            e.sigma = market::social_welfare(e.p_r, e.p_d);
        }
        edges.sort_by_key(|e| (e.driver, e.rider));
        edges.dedup_by_key(|e| (e.driver, e.rider));
        let drivers: BTreeSet<_> = drivers.into_iter().chain(edges.iter().map(|e| e.driver)).collect();
        let riders: BTreeSet<_> = riders.into_iter().chain(edges.iter().map(|e| e.rider)).collect();
        Self {
            drivers: drivers.into_iter().collect(),
            riders: riders.into_iter().collect(),
            edges,
            objective,
            welfare_floor,
        }
    }

    pub fn with_objective(&self, objective: Objective) -> Self {
        Self { objective, ..self.clone() }
    }

    pub fn with_floor(&self, welfare_floor: bool) -> Self {
        Self { welfare_floor, ..self.clone() }
    }

    pub fn edge(&self, driver: DriverId, rider: RiderId) -> Option<&CandidateEdge> {
        self.edges
            .binary_search_by_key(&(driver, rider), |e| (e.driver, e.rider))
            .ok()
            .map(|i| &self.edges[i])
    }

    pub fn touches(edge: &CandidateEdge, who: Participant) -> bool {
        match who {
            Participant::Driver(d) => edge.driver == d,
            Participant::Rider(r) => edge.rider == r,
        }
    }

    /// Same instance with every edge incident to `who` removed.
    pub fn without(&self, who: Participant) -> Self {
        let mut out = self.clone();
        out.edges.retain(|e| !Self::touches(e, who));
        match who {
            Participant::Driver(d) => out.drivers.retain(|&x| x != d),
            Participant::Rider(r) => out.riders.retain(|&x| x != r),
        }
        out
    }

    /// Shifts reported rates: a driver shift `eps` raises `P_d` by
    /// `eps * (tau - tau_min_d)`, a rider shift lowers `P_r` by `eps * (tau - tau_min_r)`.
    pub fn with_bid_shifts(
        &self,
        driver_shift: &HashMap<DriverId, f64>,
        rider_shift: &HashMap<RiderId, f64>,
    ) -> Self {
        let mut out = self.clone();
        for e in &mut out.edges {
            if let Some(eps) = driver_shift.get(&e.driver) {
                e.p_d += eps * e.extra_pickup_d();
            }
            if let Some(eps) = rider_shift.get(&e.rider) {
                e.p_r -= eps * e.extra_pickup_r();
            }
            e.sigma = market::social_welfare(e.p_r, e.p_d);
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn keys(&self) -> Vec<Key> {
        self.edges
            .iter()
            .enumerate()
            .map(|(rank, e)| {
                let (sigma, tau, rank) = (quantize(e.sigma), quantize(e.tau), rank as i128);
                match self.objective {
                    Objective::Welfare => Key([sigma, -tau, -rank, 0]),
                    Objective::Sensing => Key([quantize(e.zeta), sigma, -tau, -rank]),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingSolution {
    /// Indices into the problem's edge list, ascending.
    pub chosen: Vec<usize>,
    /// Optimal value of the program's objective (`V*` or `U*`).
    pub objective_value: f64,
    /// Sum of sigma over the chosen edges.
    pub welfare_total: f64,
    /// Sum of zeta over the chosen edges.
    pub sensing_total: f64,
    pub optimal: bool,
    #[serde(skip)]
    objective_units: i128,
}

impl MatchingSolution {
    /// Solution record for an arbitrary edge set; `optimal` is left unset.
    pub fn for_edges(problem: &MatchingProblem, chosen: Vec<usize>) -> Self {
        Self { optimal: false, ..Self::from_chosen(problem, chosen) }
    }

    fn from_chosen(problem: &MatchingProblem, mut chosen: Vec<usize>) -> Self {
        chosen.sort_unstable();
        let welfare_total = chosen.iter().map(|&i| problem.edges[i].sigma).sum();
        let sensing_total = chosen.iter().map(|&i| problem.edges[i].zeta).sum();
        let objective_units = chosen
            .iter()
            .map(|&i| {
                let e = &problem.edges[i];
                match problem.objective {
                    Objective::Welfare => quantize(e.sigma),
                    Objective::Sensing => quantize(e.zeta),
                }
            })
            .sum();
        Self {
            chosen,
            objective_value: dequantize(objective_units),
            welfare_total,
            sensing_total,
            optimal: true,
            objective_units,
        }
    }

    /// Objective in exact integer units of [`UNIT`].
    pub fn objective_units(&self) -> i128 {
        self.objective_units
    }

    pub fn pairs<'a>(&'a self, problem: &'a MatchingProblem) -> impl Iterator<Item = &'a CandidateEdge> + 'a {
        self.chosen.iter().map(move |&i| &problem.edges[i])
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }
}

/// Builds the candidate edges for one epoch.
///
/// Only vacant drivers take part. A driver-rider pair becomes an edge when the
/// straight-line pick-up distance is within `radius`; pick-up minima are taken
/// over each participant's in-radius counterparts. Sensing gains are frozen
/// against `coverage` as it stands at the start of the epoch.
#[allow(clippy::too_many_arguments)]
pub fn build_candidates(
    drivers: &[DriverState],
    riders: &[RiderRequest],
    rates: &Rates,
    prospect: &ProspectModel,
    params: &SensingParams,
    coverage: &CoverageState,
    radius: f64,
    objective: Objective,
) -> Result<MatchingProblem> {
    let vacant: Vec<&DriverState> =
        drivers.iter().filter(|d| d.status == DriverStatus::Vacant).collect();

    let mut raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut tau_min_d = vec![f64::INFINITY; vacant.len()];
    let mut tau_min_r = vec![f64::INFINITY; riders.len()];
    for (di, d) in vacant.iter().enumerate() {
        for (ri, r) in riders.iter().enumerate() {
            let tau = d.location.distance(&r.origin);
            if tau <= radius {
                raw.push((di, ri, tau));
                tau_min_d[di] = tau_min_d[di].min(tau);
                tau_min_r[ri] = tau_min_r[ri].min(tau);
            }
        }
    }

    let mut edges = Vec::with_capacity(raw.len());
    for (di, ri, tau) in raw {
        let (d, r) = (vacant[di], &riders[ri]);
        let h = r.trip_len();
        let p_d = market::driver_valuation(
            rates,
            h,
            d.b_reported,
            tau,
            tau_min_d[di],
            prospect.cell_cost(r.dest_cell),
        )?;
        let p_r = market::rider_valuation(rates, h, r.delta_reported, tau, tau_min_r[ri])?;
        let zeta = coverage.marginal_gain_for(params, &r.route.cells, d.id);
        edges.push(
            CandidateEdge::new(d.id, r.id, tau, p_d, p_r, zeta)
                .with_pickup_minima(tau_min_d[di], tau_min_r[ri])
                .with_trip_len(h),
        );
    }

    Ok(MatchingProblem::new(
        vacant.iter().map(|d| d.id).collect(),
        riders.iter().map(|r| r.id).collect(),
        edges,
        objective,
        objective == Objective::Sensing,
    ))
}

/// Welfare maximization. Negative-welfare edges can never improve an
/// unconstrained maximum, so they are dropped before the assignment solve.
pub fn solve_welfare_max(problem: &MatchingProblem) -> MatchingSolution {
    let keys = problem.with_objective(Objective::Welfare).keys();
    let allowed: Vec<bool> = problem.edges.iter().map(|e| quantize(e.sigma) >= 0).collect();
    let chosen = search::best_matching(problem, &keys, &allowed);
    MatchingSolution::from_chosen(&problem.with_objective(Objective::Welfare), chosen)
}

/// Sensing maximization, subject to `sum sigma >= 0` when the problem's
/// welfare floor is enabled.
pub fn solve_sensing_max(problem: &MatchingProblem) -> MatchingSolution {
    let sensing = problem.with_objective(Objective::Sensing);
    let keys = sensing.keys();
    let allowed = vec![true; problem.edges.len()];
    let chosen = if problem.welfare_floor {
        search::best_matching_with_floor(&sensing, &keys, &allowed)
    } else {
        search::best_matching(&sensing, &keys, &allowed)
    };
    MatchingSolution::from_chosen(&sensing, chosen)
}

pub fn solve(problem: &MatchingProblem) -> MatchingSolution {
    match problem.objective {
        Objective::Welfare => solve_welfare_max(problem),
        Objective::Sensing => solve_sensing_max(problem),
    }
}

/// Optimal objective after removing `who` (`V_{x-}` or `U*_{x-}`).
pub fn marginal_objective(problem: &MatchingProblem, who: Participant) -> MatchingSolution {
    solve(&problem.without(who))
}
