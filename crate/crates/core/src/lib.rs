//! Matching and pricing for e-hailing fleets that double as mobile sensors.
//!
//! Two mechanisms are provided over the same market model:
//!
//! * **VCG**: match to maximize social welfare and pay each participant the
//!   welfare they add to everyone else.
//! * **DS** (drive-by sensing): match to maximize the marginal sensing gain of
//!   the served trips subject to non-negative total welfare, then split that
//!   welfare in proportion to each participant's contribution to sensing.
//!
//! Modules follow the data flow of one decision epoch:
//! [`gridworld`] → [`market`] / [`sensing`] → [`assignment`] → [`pricing`],
//! with [`simengine`] running the epoch loop and [`cli`] wrapping batch runs.

pub mod assignment;
pub mod check;
pub mod cli;
pub mod error;
pub mod gridworld;
pub mod market;
pub mod oracle;
pub mod pricing;
pub mod sensing;
pub mod simengine;

pub use assignment::{
    build_candidates, marginal_objective, solve, solve_sensing_max, solve_welfare_max,
    CandidateEdge, MatchingProblem, MatchingSolution, Objective, Participant,
};
pub use error::{Error, Result};
pub use gridworld::{CellRoute, GridWorld, Point, ProspectModel, WorldSpec};
pub use market::{DriverState, Quote, Rates, RiderRequest};
pub use pricing::{settle_epoch, EpochSettlement, Mechanism, PricedMatch};
pub use sensing::{CoverageState, SensingParams};
