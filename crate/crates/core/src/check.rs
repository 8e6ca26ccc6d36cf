//! Randomized property harness for the two mechanisms.
//!
//! Each trial draws a small matching instance, solves it, cross-checks the
//! solver against exhaustive enumeration and verifies the settlement
//! properties: budget balance, individual rationality, the VCG deficit,
//! group incentive compatibility, the reporting lemmas, envy-freeness and
//! feasibility of the DS matching. Failing instances are kept as JSON so they
//! can be replayed with [`MatchingProblem::from_json`].

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::{self, CandidateEdge, MatchingProblem, MatchingSolution, Objective, Participant};
use crate::error::Result;
use crate::market::{self, DriverId, Rates, RiderId, MONEY_EPS};
use crate::oracle;
use crate::pricing::{ds_prices, vcg_prices, EpochSettlement, Marginals};
use crate::simengine::substream;

const CHECK_STREAM: u64 = 100;

type TrialResult = Result<(HashMap<Property, Tally>, Vec<Failure>)>;

/// Perturbation range for reported rates.
pub const EPS_LOW: f64 = -0.3;
pub const EPS_HIGH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub trials: usize,
    pub max_drivers: usize,
    pub max_riders: usize,
    pub seed: u64,
    /// Perturbation trials per instance for the incentive checks.
    pub perturbations: usize,
    pub rates: Rates,
    /// Negative control: the DS solver silently ignores the welfare floor.
    pub skip_welfare_floor: bool,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self {
            trials: 1000,
            max_drivers: 6,
            max_riders: 6,
            seed: 1,
            perturbations: 4,
            rates: Rates::default(),
            skip_welfare_floor: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    AeWelfare,
    AeSensingFloor,
    AeSensingNoFloor,
    Feasibility,
    BudgetBalance,
    WeakBudgetBalance,
    ShareNormalization,
    VcgDeficit,
    IndividualRationality,
    GroupIc,
    DriverLemma,
    RiderLemma,
    UnmatchedLemma,
    EnvyFree,
}

impl Property {
    pub const ALL: [Property; 14] = [
        Property::AeWelfare,
        Property::AeSensingFloor,
        Property::AeSensingNoFloor,
        Property::Feasibility,
        Property::BudgetBalance,
        Property::WeakBudgetBalance,
        Property::ShareNormalization,
        Property::VcgDeficit,
        Property::IndividualRationality,
        Property::GroupIc,
        Property::DriverLemma,
        Property::RiderLemma,
        Property::UnmatchedLemma,
        Property::EnvyFree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::AeWelfare => "ae_welfare",
            Property::AeSensingFloor => "ae_sensing_floor",
            Property::AeSensingNoFloor => "ae_sensing_nofloor",
            Property::Feasibility => "feasibility",
            Property::BudgetBalance => "budget_balance",
            Property::WeakBudgetBalance => "weak_budget_balance",
            Property::ShareNormalization => "share_normalization",
            Property::VcgDeficit => "vcg_deficit",
            Property::IndividualRationality => "individual_rationality",
            Property::GroupIc => "group_ic",
            Property::DriverLemma => "driver_lemma",
            Property::RiderLemma => "rider_lemma",
            Property::UnmatchedLemma => "unmatched_lemma",
            Property::EnvyFree => "envy_free",
        }
    }
}

/// A property violation with everything needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub property: Property,
    pub trial: usize,
    pub detail: String,
    pub problem: MatchingProblem,
    #[serde(skip_serializing_if = "HashMap::is_empty")]
    pub driver_shift: HashMap<DriverId, f64>,
    #[serde(skip_serializing_if = "HashMap::is_empty")]
    pub rider_shift: HashMap<RiderId, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Tally {
    pub passed: u64,
    pub failed: u64,
    pub skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub trials: usize,
    pub tallies: Vec<(Property, Tally)>,
    pub failures: Vec<Failure>,
}

impl CheckReport {
    pub fn tally(&self, p: Property) -> &Tally {
        &self.tallies.iter().find(|(q, _)| *q == p).expect("every property is tallied").1
    }

    pub fn all_passed(&self) -> bool {
        self.tallies.iter().all(|(_, t)| t.failed == 0)
    }

    /// One line per property.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (p, t) in &self.tallies {
            let verdict = if t.failed == 0 { "PASS" } else { "FAIL" };
            s.push_str(&format!(
                "{verdict} {:<24} passed {:>6} failed {:>4} skipped {:>5}\n",
                p.name(),
                t.passed,
                t.failed,
                t.skipped
            ));
        }
        s
    }
}

/// A random instance in the shape of one epoch.
///
/// Each pair is a candidate with probability 0.75. Pick-up distances are
/// uniform on [0, 3] km, trip lengths on [1, 10] km, rates on [1, 2] and
/// sensing gains on (0, 1]. Half the riders head somewhere with an
/// opportunity cost of up to twice the trip's surplus, so negative-welfare
/// edges are common.
pub fn random_instance<R: Rng>(rng: &mut R, n_d: usize, n_r: usize, rates: &Rates) -> Result<MatchingProblem> {
    let b: Vec<f64> = (0..n_d).map(|_| rng.gen_range(1.0..=2.0)).collect();
    let delta: Vec<f64> = (0..n_r).map(|_| rng.gen_range(1.0..=2.0)).collect();
    let h: Vec<f64> = (0..n_r).map(|_| rng.gen_range(1.0..=10.0)).collect();
    let f: Vec<f64> = h
        .iter()
        .map(|&h| {
            if rng.gen_bool(0.5) {
                rng.gen_range(0.0..=2.0 * (rates.beta - rates.alpha) * h)
            } else {
                0.0
            }
        })
        .collect();

    let mut raw = Vec::new();
    for d in 0..n_d {
        for r in 0..n_r {
            if rng.gen_bool(0.75) {
                raw.push((d, r, rng.gen_range(0.0..=3.0), rng.gen_range(1e-3..=1.0)));
            }
        }
    }
    let mut tmin_d = vec![f64::INFINITY; n_d];
    let mut tmin_r = vec![f64::INFINITY; n_r];
    for &(d, r, tau, _) in &raw {
        tmin_d[d] = tmin_d[d].min(tau);
        tmin_r[r] = tmin_r[r].min(tau);
    }
    let mut edges = Vec::with_capacity(raw.len());
    for (d, r, tau, zeta) in raw {
        let p_d = market::driver_valuation(rates, h[r], b[d], tau, tmin_d[d], f[r])?;
        let p_r = market::rider_valuation(rates, h[r], delta[r], tau, tmin_r[r])?;
        edges.push(
            CandidateEdge::new(d as DriverId, r as RiderId, tau, p_d, p_r, zeta)
                .with_pickup_minima(tmin_d[d], tmin_r[r])
                .with_trip_len(h[r]),
        );
    }
    Ok(MatchingProblem::new(
        (0..n_d as DriverId).collect(),
        (0..n_r as RiderId).collect(),
        edges,
        Objective::Sensing,
        true,
    ))
}

/// The DS settlement as the harness runs it; identical to
/// [`crate::pricing::settle_epoch`] unless the negative control is on.
fn ds_settle(problem: &MatchingProblem, opts: &CheckOptions, charge_floor: bool) -> Result<EpochSettlement> {
    let p = problem.with_objective(Objective::Sensing).with_floor(!opts.skip_welfare_floor);
    let solution = assignment::solve(&p);
    let marginals = Marginals::compute(&p, &solution);
    ds_prices(&p, &solution, &marginals, &opts.rates, charge_floor)
}

fn vcg_settle(problem: &MatchingProblem) -> Result<EpochSettlement> {
    let p = problem.with_objective(Objective::Welfare);
    let solution = assignment::solve(&p);
    let marginals = Marginals::compute(&p, &solution);
    vcg_prices(&p, &solution, &marginals)
}

struct Trial<'a> {
    index: usize,
    opts: &'a CheckOptions,
    problem: MatchingProblem,
    tallies: HashMap<Property, Tally>,
    failures: Vec<Failure>,
}

impl Trial<'_> {
    fn record(&mut self, p: Property, ok: bool, detail: impl FnOnce() -> String) {
        self.record_shifted(p, ok, detail, &HashMap::new(), &HashMap::new());
    }

    fn record_shifted(
        &mut self,
        p: Property,
        ok: bool,
        detail: impl FnOnce() -> String,
        ds: &HashMap<DriverId, f64>,
        rs: &HashMap<RiderId, f64>,
    ) {
        let t = self.tallies.entry(p).or_default();
        if ok {
            t.passed += 1;
        } else {
            t.failed += 1;
            self.failures.push(Failure {
                property: p,
                trial: self.index,
                detail: detail(),
                problem: self.problem.clone(),
                driver_shift: ds.clone(),
                rider_shift: rs.clone(),
            });
        }
    }

    fn skip(&mut self, p: Property) {
        self.tallies.entry(p).or_default().skipped += 1;
    }

    fn ae(&mut self, prop: Property, program: MatchingProblem) {
        let solved = assignment::solve(&program);
        let Some(best) = oracle::brute_force(&program) else {
            self.skip(prop);
            return;
        };
        let valid = is_matching(&program, &solved);
        let gap = solved.objective_value - best.objective_value;
        self.record(prop, valid && gap.abs() <= MONEY_EPS, || {
            format!("solver {} vs enumeration {} (valid matching: {valid})", solved.objective_value, best.objective_value)
        });
    }

    fn run(&mut self, rng: &mut impl Rng) {
        let p = self.problem.clone();
        self.ae(Property::AeWelfare, p.with_objective(Objective::Welfare).with_floor(false));
        let floor_program = p.with_objective(Objective::Sensing).with_floor(!self.opts.skip_welfare_floor);
        self.ae(Property::AeSensingFloor, floor_program);
        self.ae(Property::AeSensingNoFloor, p.with_objective(Objective::Sensing).with_floor(false));

        self.check_vcg();
        let truthful = match ds_settle(&p, self.opts, false) {
            Ok(s) => s,
            Err(e) => {
                self.record(Property::Feasibility, false, || format!("DS settlement failed: {e}"));
                return;
            }
        };
        self.check_ds(&truthful);
        self.check_group_ic(&truthful, rng);
        self.check_lemmas(&truthful, rng);
        self.check_envy(rng);
    }

    fn check_vcg(&mut self) {
        let s = match vcg_settle(&self.problem) {
            Ok(s) => s,
            Err(e) => {
                self.record(Property::VcgDeficit, false, || format!("VCG settlement failed: {e}"));
                return;
            }
        };
        let bonuses_ok = s.priced.iter().all(|m| m.bonus_d >= -MONEY_EPS && m.bonus_r >= -MONEY_EPS);
        self.record(Property::VcgDeficit, s.revenue <= MONEY_EPS && bonuses_ok, || {
            format!("VCG revenue {} (bonuses non-negative: {bonuses_ok})", s.revenue)
        });
        let ir = s.priced.iter().all(|m| m.q_d >= m.p_d - MONEY_EPS && m.q_r <= m.p_r + MONEY_EPS);
        self.record(Property::IndividualRationality, ir, || "VCG payment below valuation".into());
    }

    fn check_ds(&mut self, s: &EpochSettlement) {
        let feasible = s.welfare_total >= -MONEY_EPS;
        self.record(Property::Feasibility, feasible, || {
            format!("DS matching has total welfare {}", s.welfare_total)
        });
        self.record(Property::BudgetBalance, s.revenue.abs() <= MONEY_EPS, || {
            format!("DS revenue {} without charge floor", s.revenue)
        });
        let ir = s.priced.iter().all(|m| m.q_d >= m.p_d - MONEY_EPS && m.q_r <= m.p_r + MONEY_EPS);
        self.record(Property::IndividualRationality, ir, || "DS payment below valuation".into());
        if !s.priced.is_empty() {
            let total: f64 = s.priced.iter().map(|m| m.share_d.unwrap_or(0.0) + m.share_r.unwrap_or(0.0)).sum();
            self.record(Property::ShareNormalization, (total - 1.0).abs() <= MONEY_EPS, || {
                format!("shares sum to {total}")
            });
        }

        match ds_settle(&self.problem, self.opts, true) {
            Ok(f) => {
                let ok = f.revenue >= -MONEY_EPS
                    && f.priced.iter().all(|m| m.q_d >= m.p_d - MONEY_EPS && m.bonus_r >= -MONEY_EPS);
                self.record(Property::WeakBudgetBalance, ok, || {
                    format!("DS revenue {} with charge floor", f.revenue)
                });
            }
            Err(e) => self.record(Property::WeakBudgetBalance, false, || format!("DS settlement failed: {e}")),
        }
    }

    /// Utilities of a settlement against the truthful valuations.
    fn truthful_utilities(&self, s: &EpochSettlement) -> HashMap<Participant, f64> {
        let mut out = HashMap::new();
        for m in &s.priced {
            let e = self.problem.edge(m.driver, m.rider).expect("priced edge exists");
            out.insert(Participant::Driver(m.driver), m.q_d - e.p_d);
            out.insert(Participant::Rider(m.rider), e.p_r - m.q_r);
        }
        out
    }

    fn check_group_ic(&mut self, truthful: &EpochSettlement, rng: &mut impl Rng) {
        if truthful.priced.is_empty() {
            self.skip(Property::GroupIc);
            return;
        }
        let v_bar: f64 = truthful.priced.iter().map(|m| m.sigma).sum();
        for _ in 0..self.opts.perturbations {
            let ds: HashMap<DriverId, f64> =
                truthful.priced.iter().map(|m| (m.driver, rng.gen_range(EPS_LOW..=EPS_HIGH))).collect();
            let rs: HashMap<RiderId, f64> =
                truthful.priced.iter().map(|m| (m.rider, rng.gen_range(EPS_LOW..=EPS_HIGH))).collect();
            let perturbed = self.problem.with_bid_shifts(&ds, &rs);
            let Ok(s) = ds_settle(&perturbed, self.opts, false) else {
                self.skip(Property::GroupIc);
                continue;
            };
            if s.solution.chosen != truthful.solution.chosen || s.welfare_total < 0.0 {
                self.skip(Property::GroupIc);
                continue;
            }
            let total: f64 = self.truthful_utilities(&s).values().sum();
            self.record_shifted(
                Property::GroupIc,
                (total - v_bar).abs() <= MONEY_EPS,
                || format!("total utility {total} vs truthful welfare {v_bar}"),
                &ds,
                &rs,
            );
        }
    }

    fn check_lemmas(&mut self, truthful: &EpochSettlement, rng: &mut impl Rng) {
        let base = self.truthful_utilities(truthful);
        let matched: Vec<(Participant, f64)> = truthful
            .priced
            .iter()
            .flat_map(|m| {
                let e = self.problem.edge(m.driver, m.rider).expect("priced edge exists");
                [
                    (Participant::Driver(m.driver), e.extra_pickup_d()),
                    (Participant::Rider(m.rider), e.extra_pickup_r()),
                ]
            })
            .collect();
        let unmatched: Vec<Participant> = self
            .problem
            .drivers
            .iter()
            .map(|&d| Participant::Driver(d))
            .chain(self.problem.riders.iter().map(|&r| Participant::Rider(r)))
            .filter(|p| !base.contains_key(p))
            .collect();

        for _ in 0..self.opts.perturbations {
            if !matched.is_empty() {
                let (who, extra) = matched[rng.gen_range(0..matched.len())];
                let eps = rng.gen_range(EPS_LOW..=EPS_HIGH);
                let prop = match who {
                    Participant::Driver(_) => Property::DriverLemma,
                    Participant::Rider(_) => Property::RiderLemma,
                };
                if extra <= 0.0 {
                    self.skip(prop);
                } else if let Some((s, ds, rs)) = self.perturb_one(who, eps, truthful) {
                    let u = self.truthful_utilities(&s)[&who];
                    let diff = u - base[&who];
                    let (before, after) = (share_of(truthful, who), share_of(&s, who));
                    self.record_shifted(
                        prop,
                        sign(diff) == sign(eps),
                        || {
                            format!(
                                "{who:?} reported {eps:+} and utility moved by {diff:+}; share {before} -> {after}"
                            )
                        },
                        &ds,
                        &rs,
                    );
                } else {
                    self.skip(prop);
                }
            }
            if !unmatched.is_empty() {
                let who = unmatched[rng.gen_range(0..unmatched.len())];
                let eps = rng.gen_range(EPS_LOW..=EPS_HIGH);
                if let Some((s, ds, rs)) = self.perturb_one(who, eps, truthful) {
                    let u = self.truthful_utilities(&s).get(&who).copied().unwrap_or(0.0);
                    self.record_shifted(
                        Property::UnmatchedLemma,
                        u == 0.0,
                        || format!("unmatched {who:?} has utility {u}"),
                        &ds,
                        &rs,
                    );
                } else {
                    self.skip(Property::UnmatchedLemma);
                }
            }
        }
    }

    /// Settles with one participant's rate shifted; `None` if the matching moved.
    #[allow(clippy::type_complexity)]
    fn perturb_one(
        &self,
        who: Participant,
        eps: f64,
        truthful: &EpochSettlement,
    ) -> Option<(EpochSettlement, HashMap<DriverId, f64>, HashMap<RiderId, f64>)> {
        let mut ds = HashMap::new();
        let mut rs = HashMap::new();
        match who {
            Participant::Driver(d) => ds.insert(d, eps),
            Participant::Rider(r) => rs.insert(r, eps),
        };
        let s = ds_settle(&self.problem.with_bid_shifts(&ds, &rs), self.opts, false).ok()?;
        (s.solution.chosen == truthful.solution.chosen).then_some((s, ds, rs))
    }

    fn check_envy(&mut self, rng: &mut impl Rng) {
        let p = &self.problem;
        let (twin, original, copy) = if rng.gen_bool(0.5) && !p.drivers.is_empty() {
            let d = p.drivers[rng.gen_range(0..p.drivers.len())];
            let id = p.drivers.iter().max().copied().unwrap_or(0) + 1;
            let mut edges = p.edges.clone();
            edges.extend(p.edges.iter().filter(|e| e.driver == d).map(|e| CandidateEdge { driver: id, ..e.clone() }));
            let mut drivers = p.drivers.clone();
            drivers.push(id);
            let twin = MatchingProblem::new(drivers, p.riders.clone(), edges, p.objective, p.welfare_floor);
            (twin, Participant::Driver(d), Participant::Driver(id))
        } else if !p.riders.is_empty() {
            let r = p.riders[rng.gen_range(0..p.riders.len())];
            let id = p.riders.iter().max().copied().unwrap_or(0) + 1;
            let mut edges = p.edges.clone();
            edges.extend(p.edges.iter().filter(|e| e.rider == r).map(|e| CandidateEdge { rider: id, ..e.clone() }));
            let mut riders = p.riders.clone();
            riders.push(id);
            let twin = MatchingProblem::new(p.drivers.clone(), riders, edges, p.objective, p.welfare_floor);
            (twin, Participant::Rider(r), Participant::Rider(id))
        } else {
            self.skip(Property::EnvyFree);
            return;
        };

        let Ok(s) = ds_settle(&twin, self.opts, false) else {
            self.skip(Property::EnvyFree);
            return;
        };
        let utils: HashMap<Participant, f64> = s
            .priced
            .iter()
            .flat_map(|m| {
                let (u_d, u_r) = m.utilities();
                [(Participant::Driver(m.driver), u_d), (Participant::Rider(m.rider), u_r)]
            })
            .collect();
        let (a, b) = (utils.get(&original).copied(), utils.get(&copy).copied());
        let ok = match (a, b) {
            (Some(x), Some(y)) => (x - y).abs() <= MONEY_EPS,
            (None, None) => true,
            // Capacity tie: only one twin fits. Comparable only if the matched
            // twin gains nothing.
            (Some(x), None) | (None, Some(x)) if x.abs() <= MONEY_EPS => true,
            _ => {
                self.skip(Property::EnvyFree);
                return;
            }
        };
        let problem = twin.clone();
        self.record(Property::EnvyFree, ok, || format!("duplicates of {original:?} earn {a:?} and {b:?}"));
        if !ok {
            if let Some(f) = self.failures.last_mut() {
                f.problem = problem;
            }
        }
    }
}

fn sign(x: f64) -> i8 {
    if x > MONEY_EPS * 1e-3 {
        1
    } else if x < -MONEY_EPS * 1e-3 {
        -1
    } else {
        0
    }
}

fn share_of(s: &EpochSettlement, who: Participant) -> f64 {
    s.priced
        .iter()
        .find_map(|m| match who {
            Participant::Driver(d) if m.driver == d => m.share_d,
            Participant::Rider(r) if m.rider == r => m.share_r,
            _ => None,
        })
        .unwrap_or(0.0)
}

fn is_matching(problem: &MatchingProblem, s: &MatchingSolution) -> bool {
    let mut d = std::collections::HashSet::new();
    let mut r = std::collections::HashSet::new();
    s.pairs(problem).all(|e| d.insert(e.driver) && r.insert(e.rider))
}

/// Runs `opts.trials` independent trials. Trial `i` only depends on
/// `(opts.seed, i)`, so results do not depend on the thread count.
pub fn run_checks(opts: &CheckOptions) -> Result<CheckReport> {
    let results: Vec<TrialResult> = (0..opts.trials)
        .into_par_iter()
        .map(|index| {
            let mut rng = substream(opts.seed, CHECK_STREAM, index as u64);
            let n_d = rng.gen_range(1..=opts.max_drivers.max(1));
            let n_r = rng.gen_range(1..=opts.max_riders.max(1));
            let problem = random_instance(&mut rng, n_d, n_r, &opts.rates)?;
            let mut t = Trial { index, opts, problem, tallies: HashMap::new(), failures: Vec::new() };
            t.run(&mut rng);
            Ok((t.tallies, t.failures))
        })
        .collect();

    let mut totals: HashMap<Property, Tally> = HashMap::new();
    let mut failures = Vec::new();
    for r in results {
        let (tallies, f) = r?;
        for (p, t) in tallies {
            let acc = totals.entry(p).or_default();
            acc.passed += t.passed;
            acc.failed += t.failed;
            acc.skipped += t.skipped;
        }
        failures.extend(f);
    }
    let tallies = Property::ALL.iter().map(|&p| (p, totals.remove(&p).unwrap_or_default())).collect();
    Ok(CheckReport { trials: opts.trials, tallies, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_settles_and_matches_enumeration() {
        let opts = CheckOptions { trials: 40, max_drivers: 4, max_riders: 4, ..CheckOptions::default() };
        let report = run_checks(&opts).unwrap();
        for p in [Property::AeWelfare, Property::AeSensingFloor, Property::Feasibility, Property::BudgetBalance] {
            assert_eq!(report.tally(p).passed, 40, "{}", report.summary());
        }
        assert_eq!(report.tally(Property::GroupIc).failed, 0);
    }

    #[test]
    fn skipping_the_floor_is_caught_by_feasibility_only() {
        let opts =
            CheckOptions { trials: 200, skip_welfare_floor: true, perturbations: 0, ..CheckOptions::default() };
        let report = run_checks(&opts).unwrap();
        assert_eq!(report.tally(Property::AeSensingFloor).failed, 0);
        assert!(report.tally(Property::Feasibility).failed > 0);
        let f = report.failures.iter().find(|f| f.property == Property::Feasibility).unwrap();
        assert!(MatchingProblem::from_json(&serde_json::to_string(&f.problem).unwrap()).is_ok());
    }

    #[test]
    fn random_instance_has_consistent_minima() {
        let mut rng = substream(9, CHECK_STREAM, 0);
        let p = random_instance(&mut rng, 5, 5, &Rates::default()).unwrap();
        for e in &p.edges {
            assert!(e.extra_pickup_d() >= 0.0 && e.extra_pickup_r() >= 0.0);
            assert!(e.zeta > 0.0);
        }
    }

    #[test]
    fn trials_are_reproducible() {
        let opts = CheckOptions { trials: 10, ..CheckOptions::default() };
        assert_eq!(run_checks(&opts).unwrap(), run_checks(&opts).unwrap());
    }
}
