//! One driver, two riders: VCG serves the higher-welfare trip, DS the one
//! that senses more.
//!
//!     cargo run --example worked_example

use senseauction::assignment::{CandidateEdge, MatchingProblem, Objective};
use senseauction::market::{driver_valuation, rider_valuation};
use senseauction::pricing::write_settlement_csv;
use senseauction::{settle_epoch, Mechanism, Rates};

fn main() -> senseauction::Result<()> {
    let rates = Rates::default();
    // r1 rides 7.2 km into a quiet district (opportunity cost 7.56),
    // r2 rides 4.8 km downtown. Both are the driver's nearest rider.
    let trips = [(1, 7.2, 7.56, 2.0), (2, 4.8, 0.0, 0.5)];
    let tau = 0.4;

    let mut edges = Vec::new();
    for (rider, h, f, zeta) in trips {
        let p_d = driver_valuation(&rates, h, 1.5, tau, tau, f)?;
        let p_r = rider_valuation(&rates, h, 1.5, tau, tau)?;
        println!("r{rider}: h={h} P_d={p_d:.2} P_r={p_r:.2} sigma={:.2} zeta={zeta}", p_r - p_d);
        edges.push(CandidateEdge::new(0, rider, tau, p_d, p_r, zeta).with_trip_len(h));
    }
    let problem = MatchingProblem::new(vec![0], vec![1, 2], edges, Objective::Sensing, true);

    for (epoch, mech) in [Mechanism::Vcg, Mechanism::Ds].into_iter().enumerate() {
        let s = settle_epoch(mech, &problem, &rates, true)?;
        write_settlement_csv(std::io::stdout(), epoch as u32, &s, epoch == 0)?;
    }
    Ok(())
}
