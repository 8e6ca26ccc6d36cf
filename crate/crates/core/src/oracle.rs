//! Exhaustive reference solver for small instances.
//!
//! Enumerates every one-to-one matching of the candidate edges and keeps the
//! best objective value. It shares nothing with the production solvers beyond
//! the problem type, which is what makes it useful as a cross-check.

use crate::assignment::{MatchingProblem, Objective};

/// Participants per side above which enumeration is refused.
pub const ORACLE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub objective_value: f64,
    /// One optimal edge set (indices into the problem's edges).
    pub chosen: Vec<usize>,
    pub matchings_enumerated: u64,
}

/// Best objective over all matchings. Negative-welfare edges are *not*
/// filtered here; the welfare floor is applied when `problem.welfare_floor`
/// is set and the objective is sensing.
pub fn brute_force(problem: &MatchingProblem) -> Option<OracleResult> {
    if problem.drivers.len() > ORACLE_LIMIT || problem.riders.len() > ORACLE_LIMIT {
        return None;
    }
    let by_driver: Vec<Vec<usize>> = problem
        .drivers
        .iter()
        .map(|&d| {
            problem
                .edges
                .iter()
                .enumerate()
                .filter(|(_, e)| e.driver == d)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let mut state = Search {
        problem,
        by_driver: &by_driver,
        used_riders: Vec::new(),
        current: Vec::new(),
        best: OracleResult { objective_value: 0.0, chosen: Vec::new(), matchings_enumerated: 0 },
    };
    state.visit(0);
    Some(state.best)
}

struct Search<'a> {
    problem: &'a MatchingProblem,
    by_driver: &'a [Vec<usize>],
    used_riders: Vec<u32>,
    current: Vec<usize>,
    best: OracleResult,
}

impl Search<'_> {
    fn visit(&mut self, driver: usize) {
        if driver == self.by_driver.len() {
            self.evaluate();
            return;
        }
        self.visit(driver + 1);
        for &e in &self.by_driver[driver] {
            let rider = self.problem.edges[e].rider;
            if self.used_riders.contains(&rider) {
                continue;
            }
            self.used_riders.push(rider);
            self.current.push(e);
            self.visit(driver + 1);
            self.current.pop();
            self.used_riders.pop();
        }
    }

    fn evaluate(&mut self) {
        self.best.matchings_enumerated += 1;
        let edges = &self.problem.edges;
        let welfare: f64 = self.current.iter().map(|&e| edges[e].sigma).sum();
        let value = match self.problem.objective {
            Objective::Welfare => welfare,
            Objective::Sensing => {
                if self.problem.welfare_floor && welfare < 0.0 {
                    return;
                }
                self.current.iter().map(|&e| edges[e].zeta).sum()
            }
        };
        if value > self.best.objective_value {
            self.best.objective_value = value;
            self.best.chosen = self.current.clone();
            self.best.chosen.sort_unstable();
        }
    }
}
