//! Epoch-driven fleet simulation.
//!
//! A run covers `intervals x epochs_per_interval` decision epochs. Each
//! epoch completes finished trips, repositions vacant taxis, collects new
//! requests, builds the candidate market, settles it with the chosen
//! mechanism, commits the matched routes to coverage and dispatches the
//! matched taxis. Everything random comes from per-purpose substreams of the
//! master seed, so a `(config, mechanism)` pair always replays identically.

mod config;
mod demand;
mod kpi;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::assignment::{build_candidates, MatchingProblem};
use crate::error::Result;
use crate::gridworld::{CellId, GridWorld, Point, ProspectModel};
use crate::market::{DriverState, DriverStatus, RiderRequest};
use crate::pricing::{settle_epoch, EpochSettlement, Mechanism};
use crate::sensing::{CoverageState, SensingParams};

pub use config::{OverreportConfig, ScenarioConfig};
pub use demand::{apply_reporting, DemandModel};
pub use kpi::{KpiReport, KpiRow, HIGH_ZETA, KPI_HEADER};

const STREAM_POSITIONS: u64 = 1;
const STREAM_DRIVER_BIDS: u64 = 2;
const STREAM_DRIVER_REPORTS: u64 = 3;
const STREAM_DEMAND: u64 = 4;
const STREAM_RIDER_REPORTS: u64 = 5;

/// Independent generator for one purpose (and epoch) of a run.
pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 32) | index);
    rng
}

/// Taxis plus their dispatch bookkeeping (simulation clock in seconds).
#[derive(Debug, Clone, PartialEq)]
pub struct FleetState {
    pub drivers: Vec<DriverState>,
    pickup_done_at: Vec<f64>,
    busy_until: Vec<f64>,
    drop_off: Vec<Option<Point>>,
}

impl FleetState {
    pub fn new(drivers: Vec<DriverState>) -> Self {
        let n = drivers.len();
        Self { drivers, pickup_done_at: vec![0.0; n], busy_until: vec![0.0; n], drop_off: vec![None; n] }
    }

    pub fn busy_until(&self, idx: usize) -> f64 {
        self.busy_until[idx]
    }

    pub fn vacant_count(&self) -> usize {
        self.drivers.iter().filter(|d| d.status == DriverStatus::Vacant).count()
    }

    /// Releases taxis whose trip has ended by `now`.
    pub fn complete_trips(&mut self, now: f64) {
        for (i, d) in self.drivers.iter_mut().enumerate() {
            if d.status == DriverStatus::Vacant {
                continue;
            }
            if now >= self.busy_until[i] {
                if let Some(p) = self.drop_off[i].take() {
                    d.location = p;
                }
                d.status = DriverStatus::Vacant;
            } else if now >= self.pickup_done_at[i] {
                d.status = DriverStatus::InService;
            }
        }
    }

    /// Commits a taxi to a trip starting at `now`.
    pub fn dispatch(&mut self, idx: usize, rider: &RiderRequest, tau: f64, now: f64) {
        let speed = self.drivers[idx].speed;
        debug_assert!(self.drivers[idx].status == DriverStatus::Vacant);
        debug_assert!(self.busy_until[idx] <= now);
        self.pickup_done_at[idx] = now + tau / speed * 3600.0;
        self.busy_until[idx] = now + (tau + rider.trip_len()) / speed * 3600.0;
        self.drop_off[idx] = Some(rider.dest);
        self.drivers[idx].status = DriverStatus::Pickup;
    }

    /// Moves every vacant taxi toward the best-prospect cell centroid within
    /// `search_km`. The taxi's own cell wins ties, then the nearest centroid.
    pub fn reposition_vacant(
        &mut self,
        world: &GridWorld,
        prospect: &ProspectModel,
        search_km: f64,
        step_km: f64,
    ) -> Result<()> {
        for d in self.drivers.iter_mut().filter(|d| d.status == DriverStatus::Vacant) {
            let here = world.cell_of(&d.location)?;
            let mut best = (here, prospect.prospect(here), 0.0);
            for cell in 0..world.num_cells() {
                let dist = world.centroid(cell).distance(&d.location);
                if dist > search_km || cell == here {
                    continue;
                }
                let p = prospect.prospect(cell);
                let better = p > best.1 || (p == best.1 && best.0 != here && dist < best.2);
                if better {
                    best = (cell, p, dist);
                }
            }
            if best.0 != here {
                d.location = d.location.step_towards(&world.centroid(best.0), step_km);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRecord {
    pub driver: u32,
    pub rider: u32,
    /// Epoch in which the rider's request arrived.
    pub rider_epoch: u32,
    pub tau: f64,
    pub trip_len: f64,
    pub sigma: f64,
    pub zeta: f64,
    pub q_d: f64,
    pub q_r: f64,
    /// Utilities measured against truthful valuations.
    pub u_driver: f64,
    pub u_rider: f64,
}

/// What happened in one epoch. Serialized as one line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochOutcome {
    pub epoch: u32,
    pub interval: usize,
    pub generated: usize,
    pub carried_over: usize,
    pub matched: usize,
    /// Riders left unmatched this epoch, whether they wait or abandon.
    pub unmatched: usize,
    pub abandoned: usize,
    pub vacant_drivers: usize,
    pub revenue: f64,
    pub welfare_total: f64,
    pub sensing_total: f64,
    pub matches: Vec<MatchRecord>,
    #[serde(skip)]
    pub problem: MatchingProblem,
    #[serde(skip)]
    pub settlement: EpochSettlement,
}

/// Full simulation state for one run.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: ScenarioConfig,
    pub mechanism: Mechanism,
    pub world: GridWorld,
    pub prospect: ProspectModel,
    pub sensing: SensingParams,
    pub coverage: CoverageState,
    pub fleet: FleetState,
    demand: DemandModel,
    waiting: Vec<RiderRequest>,
    next_rider: u32,
    epoch: u32,
}

impl Simulation {
    pub fn new(config: ScenarioConfig, mechanism: Mechanism) -> Result<Self> {
        config.validate()?;
        let (world, prospect) = config.world.build()?;
        let sensing = SensingParams::uniform(world.num_cells(), config.intervals, config.sensing_exponent)?;
        let coverage = CoverageState::new(world.num_cells(), config.intervals)
            .with_distinct_vehicles(config.distinct_vehicles);
        let demand = DemandModel::new(&world, &prospect)?;

        let mut pos_rng = substream(config.seed, STREAM_POSITIONS, 0);
        let mut bid_rng = substream(config.seed, STREAM_DRIVER_BIDS, 0);
        let truthful: Vec<f64> =
            (0..config.fleet_size).map(|_| bid_rng.gen_range(config.bid_low..=config.bid_high)).collect();
        let reported = apply_reporting(
            &truthful,
            config.overreport.fraction,
            config.overreport.max,
            &mut substream(config.seed, STREAM_DRIVER_REPORTS, 0),
        );
        let drivers = (0..config.fleet_size)
            .map(|i| DriverState {
                id: i as u32,
                location: Point::new(
                    pos_rng.gen_range(0.0..world.width()),
                    pos_rng.gen_range(0.0..world.height()),
                ),
                status: DriverStatus::Vacant,
                b_true: truthful[i],
                b_reported: reported[i],
                speed: config.speed_kmh,
            })
            .collect();

        Ok(Self {
            config,
            mechanism,
            world,
            prospect,
            sensing,
            coverage,
            fleet: FleetState::new(drivers),
            demand,
            waiting: Vec::new(),
            next_rider: 0,
            epoch: 0,
        })
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn is_finished(&self) -> bool {
        self.epoch as usize >= self.config.total_epochs()
    }

    pub fn demand_model(&self) -> &DemandModel {
        &self.demand
    }

    /// New requests for `epoch`, with reported rates applied.
    pub fn generate_demand(&self, epoch: u32, first_id: u32) -> Result<Vec<RiderRequest>> {
        let cfg = &self.config;
        let mut riders = self.demand.generate(
            cfg,
            &self.world,
            epoch,
            first_id,
            &mut substream(cfg.seed, STREAM_DEMAND, u64::from(epoch)),
        )?;
        let truthful: Vec<f64> = riders.iter().map(|r| r.delta_true).collect();
        let reported = apply_reporting(
            &truthful,
            cfg.overreport.fraction,
            cfg.overreport.max,
            &mut substream(cfg.seed, STREAM_RIDER_REPORTS, u64::from(epoch)),
        );
        for (r, rep) in riders.iter_mut().zip(reported) {
            r.delta_reported = rep;
        }
        Ok(riders)
    }

    /// Advances one decision epoch.
    pub fn step_epoch(&mut self) -> Result<EpochOutcome> {
        let cfg = self.config.clone();
        let epoch = self.epoch;
        let interval = epoch as usize / cfg.epochs_per_interval;
        let now = f64::from(epoch) * cfg.epoch_secs;
        if interval > self.coverage.current_interval() {
            self.coverage.advance_interval()?;
        }
        self.coverage.current_epoch = epoch;

        self.fleet.complete_trips(now);
        self.fleet.reposition_vacant(
            &self.world,
            &self.prospect,
            cfg.reposition_radius_km,
            cfg.epoch_travel_km(),
        )?;

        let fresh = self.generate_demand(epoch, self.next_rider)?;
        self.next_rider += fresh.len() as u32;
        let generated = fresh.len();
        let carried_over = self.waiting.len();
        let mut pool = std::mem::take(&mut self.waiting);
        pool.extend(fresh);

        let problem = build_candidates(
            &self.fleet.drivers,
            &pool,
            &cfg.rates,
            &self.prospect,
            &self.sensing,
            &self.coverage,
            cfg.radius_km,
            self.mechanism.objective(),
        )?;
        let vacant_drivers = problem.drivers.len();
        let settlement = settle_epoch(self.mechanism, &problem, &cfg.rates, cfg.charge_floor)?;

        let mut matches = Vec::with_capacity(settlement.priced.len());
        let mut matched_riders = Vec::with_capacity(settlement.priced.len());
        for m in &settlement.priced {
            let d_idx = m.driver as usize;
            let r_idx = pool.iter().position(|r| r.id == m.rider).expect("matched rider is in the pool");
            let rider = &pool[r_idx];
            let driver = &self.fleet.drivers[d_idx];
            let edge = problem.edge(m.driver, m.rider).expect("matched pair is a candidate");

            self.coverage.commit_route(&rider.route.cells, m.driver);

            let true_p_d = m.p_d - (driver.b_reported - driver.b_true) * edge.extra_pickup_d();
            let true_p_r = m.p_r + (rider.delta_reported - rider.delta_true) * edge.extra_pickup_r();
            matches.push(MatchRecord {
                driver: m.driver,
                rider: m.rider,
                rider_epoch: rider.epoch,
                tau: m.tau,
                trip_len: m.trip_len,
                sigma: m.sigma,
                zeta: m.zeta,
                q_d: m.q_d,
                q_r: m.q_r,
                u_driver: m.q_d - true_p_d,
                u_rider: true_p_r - m.q_r,
            });
            let rider = rider.clone();
            self.fleet.dispatch(d_idx, &rider, m.tau, now);
            matched_riders.push(rider.id);
        }

        let unmatched: Vec<RiderRequest> =
            pool.into_iter().filter(|r| !matched_riders.contains(&r.id)).collect();
        let n_unmatched = unmatched.len();
        let patience = cfg.rider_patience_epochs;
        let (stay, leave): (Vec<_>, Vec<_>) =
            unmatched.into_iter().partition(|r| epoch + 1 < r.epoch + patience);
        self.waiting = stay;

        self.epoch += 1;
        Ok(EpochOutcome {
            epoch,
            interval,
            generated,
            carried_over,
            matched: matches.len(),
            unmatched: n_unmatched,
            abandoned: leave.len(),
            vacant_drivers,
            revenue: settlement.revenue,
            welfare_total: settlement.welfare_total,
            sensing_total: settlement.sensing_total,
            matches,
            problem,
            settlement,
        })
    }

    /// Riders generated in `epoch` that are still waiting for a match.
    pub fn waiting(&self) -> &[RiderRequest] {
        &self.waiting
    }

    pub fn cell_of(&self, p: &Point) -> Result<CellId> {
        self.world.cell_of(p)
    }
}

/// Runs the whole horizon and returns the KPIs plus every epoch outcome.
pub fn run_scenario_with_log(
    config: &ScenarioConfig,
    mechanism: Mechanism,
) -> Result<(KpiReport, Vec<EpochOutcome>)> {
    let mut sim = Simulation::new(config.clone(), mechanism)?;
    let mut outcomes = Vec::with_capacity(config.total_epochs());
    while !sim.is_finished() {
        outcomes.push(sim.step_epoch()?);
    }
    let report = KpiReport::from_outcomes(&sim, &outcomes)?;
    Ok((report, outcomes))
}

pub fn run_scenario(config: &ScenarioConfig, mechanism: Mechanism) -> Result<KpiReport> {
    run_scenario_with_log(config, mechanism).map(|(r, _)| r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ScenarioConfig {
        ScenarioConfig {
            world: crate::gridworld::WorldSpec::synthetic_district(6, 6),
            fleet_size: 10,
            intervals: 2,
            epochs_per_interval: 6,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn vacant_driver_in_best_cell_stays_put() {
        let world = GridWorld::new(1, 3, 1.0, &[1.0, 5.0, 1.0]).unwrap();
        let prospect = ProspectModel::new(&world, 50.0, 0.9).unwrap();
        let start = Point::new(1.2, 0.3);
        let mut fleet = FleetState::new(vec![DriverState {
            id: 0,
            location: start,
            status: DriverStatus::Vacant,
            b_true: 1.0,
            b_reported: 1.0,
            speed: 35.0,
        }]);
        fleet.reposition_vacant(&world, &prospect, 3.0, 1.94).unwrap();
        assert_eq!(fleet.drivers[0].location, start);
    }

    #[test]
    fn vacant_driver_reaches_nearby_target() {
        let world = GridWorld::new(1, 3, 1.0, &[5.0, 1.0, 0.1]).unwrap();
        let prospect = ProspectModel::new(&world, 50.0, 0.9).unwrap();
        let mut fleet = FleetState::new(vec![DriverState {
            id: 0,
            location: Point::new(1.5, 0.5),
            status: DriverStatus::Vacant,
            b_true: 1.0,
            b_reported: 1.0,
            speed: 35.0,
        }]);
        let step = 35.0 * 200.0 / 3600.0;
        fleet.reposition_vacant(&world, &prospect, 3.0, step).unwrap();
        assert_eq!(fleet.drivers[0].location, Point::new(0.5, 0.5));
    }

    #[test]
    fn equal_prospects_keep_drivers_still() {
        let world = GridWorld::new(1, 1, 3.0, &[1.0]).unwrap();
        let prospect = ProspectModel::new(&world, 50.0, 0.9).unwrap();
        let start = Point::new(0.1, 2.9);
        let mut fleet = FleetState::new(vec![DriverState {
            id: 0,
            location: start,
            status: DriverStatus::Vacant,
            b_true: 1.0,
            b_reported: 1.0,
            speed: 35.0,
        }]);
        fleet.reposition_vacant(&world, &prospect, 3.0, 1.94).unwrap();
        assert_eq!(fleet.drivers[0].location, start);
    }

    #[test]
    fn riders_are_conserved_and_drivers_never_double_booked() {
        for mech in [Mechanism::Vcg, Mechanism::Ds] {
            let mut sim = Simulation::new(small_config(), mech).unwrap();
            while !sim.is_finished() {
                let now = f64::from(sim.epoch()) * sim.config.epoch_secs;
                let busy_before: Vec<bool> =
                    (0..sim.fleet.drivers.len()).map(|i| sim.fleet.busy_until(i) > now).collect();
                let out = sim.step_epoch().unwrap();
                assert_eq!(out.matched + out.unmatched, out.generated + out.carried_over);
                for m in &out.matches {
                    assert!(!busy_before[m.driver as usize], "driver {} double booked", m.driver);
                }
                let mut ds: Vec<_> = out.matches.iter().map(|m| m.driver).collect();
                ds.sort_unstable();
                ds.dedup();
                assert_eq!(ds.len(), out.matches.len());
            }
        }
    }

    #[test]
    fn zero_demand_epoch_changes_nothing() {
        let cfg = ScenarioConfig { requests_per_hour: 1e-9, ..small_config() };
        let mut sim = Simulation::new(cfg, Mechanism::Ds).unwrap();
        let mut before = sim.coverage.clone();
        before.current_epoch = 0;
        let out = sim.step_epoch().unwrap();
        assert_eq!(out.generated, 0);
        assert_eq!(out.matched, 0);
        assert_eq!(sim.coverage, before);
    }

    #[test]
    fn empty_fleet_reports_zeros() {
        let cfg = ScenarioConfig { fleet_size: 0, ..small_config() };
        for mech in [Mechanism::Vcg, Mechanism::Ds] {
            let r = run_scenario(&cfg, mech).unwrap();
            assert_eq!(r.aggregate.matching_rate, 0.0);
            assert_eq!(r.aggregate.sensing_utility, 0.0);
            assert_eq!(r.aggregate.revenue, 0.0);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let a = run_scenario(&small_config(), Mechanism::Ds).unwrap();
        let b = run_scenario(&small_config(), Mechanism::Ds).unwrap();
        assert_eq!(a, b);
        let (_, log_a) = run_scenario_with_log(&small_config(), Mechanism::Vcg).unwrap();
        let (_, log_b) = run_scenario_with_log(&small_config(), Mechanism::Vcg).unwrap();
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn single_driver_single_rider_matches_under_both() {
        // One vacant taxi next to one rider with a short central trip.
        let world = GridWorld::uniform(3, 3, 1.0).unwrap();
        let prospect = ProspectModel::new(&world, 50.0, 0.9).unwrap();
        let params = SensingParams::uniform(9, 1, 0.2).unwrap();
        let coverage = CoverageState::new(9, 1);
        let origin = Point::new(1.5, 1.5);
        let dest = Point::new(1.9, 1.6);
        let rider = RiderRequest {
            id: 0,
            origin,
            dest,
            dest_cell: world.cell_of(&dest).unwrap(),
            route: world.route(&origin, &dest).unwrap(),
            delta_true: 1.5,
            delta_reported: 1.5,
            epoch: 0,
        };
        let driver = DriverState {
            id: 0,
            location: Point::new(1.2, 1.4),
            status: DriverStatus::Vacant,
            b_true: 1.2,
            b_reported: 1.2,
            speed: 35.0,
        };
        for mech in [Mechanism::Vcg, Mechanism::Ds] {
            let problem = build_candidates(
                std::slice::from_ref(&driver),
                std::slice::from_ref(&rider),
                &crate::market::Rates::default(),
                &prospect,
                &params,
                &coverage,
                2.0,
                mech.objective(),
            )
            .unwrap();
            assert!(problem.edges[0].sigma >= 0.0);
            let s = settle_epoch(mech, &problem, &crate::market::Rates::default(), true).unwrap();
            assert_eq!(s.priced.len(), 1);
        }
    }
}
