//! Randomized invariants for every module.

use std::collections::{BTreeSet, HashMap};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use senseauction::assignment::{marginal_objective, solve, MatchingProblem, Objective, Participant};
use senseauction::check::random_instance;
use senseauction::gridworld::{opportunity_cost, GridWorld, Point};
use senseauction::market::{driver_valuation, participant_utilities, rider_valuation, social_welfare};
use senseauction::pricing::{settle_epoch, Mechanism};
use senseauction::sensing::{cell_gain, CoverageState, SensingParams};
use senseauction::simengine::{run_scenario_with_log, ScenarioConfig};
use senseauction::Rates;

fn instance(seed: u64, n_d: usize, n_r: usize) -> MatchingProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance(&mut rng, n_d, n_r, &Rates::default()).unwrap()
}

fn world_and_points() -> impl Strategy<Value = (usize, usize, f64, Point, Point)> {
    (1usize..8, 1usize..8, 0.2f64..2.0).prop_flat_map(|(rows, cols, size)| {
        let (w, h) = (cols as f64 * size, rows as f64 * size);
        (Just(rows), Just(cols), Just(size), (0.0..w, 0.0..h), (0.0..w, 0.0..h))
            .prop_map(|(r, c, s, a, b)| (r, c, s, Point::new(a.0, a.1), Point::new(b.0, b.1)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // gridworld

    #[test]
    fn densities_normalize(raw in prop::collection::vec(0.0f64..5.0, 12)) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-6);
        let w = GridWorld::new(3, 4, 1.0, &raw).unwrap();
        prop_assert!((w.densities().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn opportunity_cost_is_non_increasing(xi in 1.0f64..100.0, p_star in 0.05f64..1.0, a in 0.0f64..1.2, b in 0.0f64..1.2) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(opportunity_cost(xi, p_star, lo) >= opportunity_cost(xi, p_star, hi));
        let below = opportunity_cost(xi, p_star, p_star - 1e-12);
        prop_assert!(below.abs() < 1e-9 && opportunity_cost(xi, p_star, p_star) == 0.0);
    }

    #[test]
    fn routes_are_symmetric((rows, cols, size, a, b) in world_and_points()) {
        let w = GridWorld::uniform(rows, cols, size).unwrap();
        let ab = w.route(&a, &b).unwrap();
        let ba = w.route(&b, &a).unwrap();
        prop_assert_eq!(ab.length, ba.length);
        let s1: BTreeSet<_> = ab.cells.iter().collect();
        let s2: BTreeSet<_> = ba.cells.iter().collect();
        prop_assert_eq!(s1, s2);
        prop_assert!(ab.cells.contains(&w.cell_of(&a).unwrap()));
        prop_assert!(ab.cells.contains(&w.cell_of(&b).unwrap()));
    }

    #[test]
    fn prospect_weighted_sum_grows_with_mass(
        raw in prop::collection::vec(0.1f64..5.0, 12),
        cell in 0usize..12,
        extra in 0.01f64..5.0,
        dest in 0usize..12,
    ) {
        let before = GridWorld::new(3, 4, 1.0, &raw).unwrap();
        let mut more = raw.clone();
        more[cell] += extra;
        let after = GridWorld::new(3, 4, 1.0, &more).unwrap();
        // Undo the normalization to compare sum_g w_g n_g on raw masses.
        let unnorm = |w: &GridWorld, total: f64| w.order_prospect(dest) * total;
        prop_assert!(unnorm(&after, more.iter().sum()) >= unnorm(&before, raw.iter().sum()) - 1e-9);
    }

    // market

    #[test]
    fn welfare_falls_linearly_in_both_rates(
        h in 0.5f64..15.0, tau_min in 0.0f64..2.0, extra in 0.0f64..2.0,
        b in 1.0f64..2.0, delta in 1.0f64..2.0, f in 0.0f64..20.0, step in 0.01f64..0.5,
    ) {
        let rates = Rates::default();
        let tau = tau_min + extra;
        let sigma = |b: f64, delta: f64| {
            social_welfare(
                rider_valuation(&rates, h, delta, tau, tau_min).unwrap(),
                driver_valuation(&rates, h, b, tau, tau_min, f).unwrap(),
            )
        };
        let base = sigma(b, delta);
        prop_assert!(((sigma(b + step, delta) - base) / step + extra).abs() < 1e-6);
        prop_assert!(((sigma(b, delta + step) - base) / step + extra).abs() < 1e-6);
        let at_min = |b: f64, d: f64| social_welfare(
            rider_valuation(&rates, h, d, tau_min, tau_min).unwrap(),
            driver_valuation(&rates, h, b, tau_min, tau_min, f).unwrap(),
        );
        prop_assert_eq!(at_min(b, delta), at_min(b + step, delta + step));
    }

    #[test]
    fn accounting_identity(p_d in 0.0f64..50.0, p_r in 0.0f64..50.0, q_d in 0.0f64..50.0, q_r in 0.0f64..50.0) {
        let (u_d, u_r) = participant_utilities(q_d, q_r, p_d, p_r);
        prop_assert!(((q_r - q_d) - (social_welfare(p_r, p_d) - u_d - u_r)).abs() < 1e-9);
    }

    // sensing

    #[test]
    fn cell_gain_diminishes(n in 0u32..10_000, lambda in 0.05f64..0.95) {
        prop_assert!(cell_gain(lambda, n + 1) < cell_gain(lambda, n));
        prop_assert!(cell_gain(lambda, n) > 0.0);
    }

    #[test]
    fn gains_are_submodular(
        a in prop::collection::btree_set(0usize..20, 0..10),
        b in prop::collection::btree_set(0usize..20, 0..10),
        prior in prop::collection::vec(0usize..20, 0..30),
    ) {
        let params = SensingParams::uniform(20, 1, 0.2).unwrap();
        let mut cov = CoverageState::new(20, 1);
        cov.commit_route(&prior, 0);
        let b: Vec<_> = b.into_iter().collect();
        let before = cov.marginal_gain(&params, &b);
        cov.commit_route(&a.into_iter().collect::<Vec<_>>(), 1);
        prop_assert!(cov.marginal_gain(&params, &b) <= before + 1e-12);
    }

    #[test]
    fn committed_gains_add_up_to_utility(routes in prop::collection::vec(prop::collection::btree_set(0usize..16, 1..6), 0..20)) {
        let params = SensingParams::uniform(16, 2, 0.2).unwrap();
        let mut cov = CoverageState::new(16, 2);
        let mut committed = 0.0;
        for r in &routes {
            let cells: Vec<_> = r.iter().copied().collect();
            committed += cov.marginal_gain(&params, &cells);
            cov.commit_route(&cells, 0);
        }
        let weight = params.temporal_weights[0] * params.spatial_weights[0];
        prop_assert!((committed * weight - cov.total_utility(&params).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn new_interval_starts_fresh(
        prior in prop::collection::vec(0usize..16, 0..40),
        route in prop::collection::btree_set(0usize..16, 0..8),
    ) {
        let params = SensingParams::uniform(16, 2, 0.2).unwrap();
        let mut cov = CoverageState::new(16, 2);
        cov.commit_route(&prior, 0);
        cov.advance_interval().unwrap();
        let cells: Vec<_> = route.iter().copied().collect();
        prop_assert!((cov.marginal_gain(&params, &cells) - cells.len() as f64).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // assignment

    #[test]
    fn solutions_are_feasible_and_deterministic(seed in any::<u64>(), n_d in 1usize..9, n_r in 1usize..9, floor in any::<bool>()) {
        let p = instance(seed, n_d, n_r).with_floor(floor);
        for program in [p.with_objective(Objective::Welfare), p.clone()] {
            let s = solve(&program);
            let drivers: BTreeSet<_> = s.pairs(&program).map(|e| e.driver).collect();
            let riders: BTreeSet<_> = s.pairs(&program).map(|e| e.rider).collect();
            prop_assert_eq!(drivers.len(), s.chosen.len());
            prop_assert_eq!(riders.len(), s.chosen.len());
            if program.objective == Objective::Sensing && floor {
                prop_assert!(s.welfare_total >= -1e-9);
            }
            let replay = MatchingProblem::from_json(&program.to_json().unwrap()).unwrap();
            prop_assert_eq!(&solve(&replay).chosen, &s.chosen);
        }
    }

    #[test]
    fn removing_a_participant_never_helps(seed in any::<u64>(), n_d in 1usize..7, n_r in 1usize..7) {
        let p = instance(seed, n_d, n_r);
        for program in [p.with_objective(Objective::Welfare), p.clone()] {
            let full = solve(&program).objective_units();
            let who = program.drivers.iter().map(|&d| Participant::Driver(d))
                .chain(program.riders.iter().map(|&r| Participant::Rider(r)));
            for x in who {
                prop_assert!(marginal_objective(&program, x).objective_units() <= full);
            }
        }
    }

    #[test]
    fn slack_floor_makes_ds_matching_bid_independent(
        seed in any::<u64>(), n_d in 1usize..7, n_r in 1usize..7,
        shifts in prop::collection::vec(-0.3f64..0.5, 14),
    ) {
        let p = instance(seed, n_d, n_r);
        let s = solve(&p);
        prop_assume!(s.chosen == solve(&p.with_floor(false)).chosen);
        let ds: HashMap<u32, f64> = p.drivers.iter().zip(&shifts).map(|(&d, &e)| (d, e)).collect();
        let rs: HashMap<u32, f64> = p.riders.iter().zip(&shifts[7..]).map(|(&r, &e)| (r, e)).collect();
        let q = p.with_bid_shifts(&ds, &rs);
        let still_feasible: f64 = s.chosen.iter().map(|&i| q.edges[i].sigma).sum();
        prop_assume!(still_feasible >= 0.0);
        prop_assert_eq!(solve(&q).chosen, s.chosen);
    }

    // pricing

    #[test]
    fn settlements_balance_and_are_rational(seed in any::<u64>(), n_d in 1usize..7, n_r in 1usize..7) {
        let p = instance(seed, n_d, n_r);
        let rates = Rates::default();
        let ds = settle_epoch(Mechanism::Ds, &p, &rates, false).unwrap();
        prop_assert!(ds.revenue.abs() <= 1e-9);
        if !ds.priced.is_empty() {
            let shares: f64 = ds.priced.iter().map(|m| m.share_d.unwrap() + m.share_r.unwrap()).sum();
            prop_assert!((shares - 1.0).abs() <= 1e-9);
        }
        let floored = settle_epoch(Mechanism::Ds, &p, &rates, true).unwrap();
        prop_assert!(floored.revenue >= -1e-9);
        for m in &floored.priced {
            prop_assert!(m.q_d >= m.p_d - 1e-9 && m.bonus_r >= -1e-9);
            prop_assert!(m.q_r <= m.p_r.max(rates.alpha * m.trip_len) + 1e-9);
        }
        let vcg = settle_epoch(Mechanism::Vcg, &p, &rates, false).unwrap();
        prop_assert!(vcg.revenue <= 1e-9);
        for m in &vcg.priced {
            prop_assert!(m.bonus_d >= -1e-9 && m.bonus_r >= -1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // simengine

    #[test]
    fn simulation_conserves_riders_and_keeps_revenue_signs(seed in any::<u64>(), fleet in 0usize..25, scenario in 1usize..4) {
        let cfg = ScenarioConfig { fleet_size: fleet, scenario, seed, intervals: 1, ..Default::default() };
        for mech in [Mechanism::Vcg, Mechanism::Ds] {
            let (report, log) = run_scenario_with_log(&cfg, mech).unwrap();
            for o in &log {
                prop_assert_eq!(o.matched + o.unmatched, o.generated + o.carried_over);
                prop_assert!(o.matched <= o.vacant_drivers);
            }
            match mech {
                Mechanism::Ds => prop_assert!(report.aggregate.revenue >= -1e-9),
                Mechanism::Vcg => prop_assert!(report.aggregate.revenue <= 1e-9),
            }
        }
    }
}
