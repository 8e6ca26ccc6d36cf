//! Synthetic trip demand and bid reporting.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::Poisson;

use crate::error::{Error, Result};
use crate::gridworld::{CellId, GridWorld, Point, ProspectModel};
use crate::market::{RiderId, RiderRequest};

use super::ScenarioConfig;

/// Precomputed sampling tables for one world.
#[derive(Debug, Clone)]
pub struct DemandModel {
    by_density: WeightedIndex<f64>,
    /// Cells in the bottom quartile of order prospect.
    remote_cells: Vec<CellId>,
}

impl DemandModel {
    pub fn new(world: &GridWorld, prospect: &ProspectModel) -> Result<Self> {
        let by_density = WeightedIndex::new(world.densities())
            .map_err(|e| Error::Config(format!("cannot sample demand densities: {e}")))?;
        let mut order: Vec<CellId> = (0..world.num_cells()).collect();
        order.sort_by(|&a, &b| prospect.prospect(a).total_cmp(&prospect.prospect(b)).then(a.cmp(&b)));
        let quartile = world.num_cells().div_ceil(4);
        order.truncate(quartile);
        order.sort_unstable();
        Ok(Self { by_density, remote_cells: order })
    }

    pub fn remote_cells(&self) -> &[CellId] {
        &self.remote_cells
    }

    pub fn is_remote(&self, cell: CellId) -> bool {
        self.remote_cells.binary_search(&cell).is_ok()
    }

    fn point_in<R: Rng>(world: &GridWorld, cell: CellId, rng: &mut R) -> Point {
        let c = world.centroid(cell);
        let half = world.cell_size() / 2.0;
        Point::new(c.x + rng.gen_range(-half..half), c.y + rng.gen_range(-half..half))
    }

    /// Draws one epoch's requests. Bids are truthful; see [`apply_reporting`].
    ///
    /// Origins follow the density field. Destinations follow it too, except
    /// that with probability `remote_frac` they are drawn uniformly from the
    /// low-prospect quartile instead.
    pub fn generate<R: Rng>(
        &self,
        cfg: &ScenarioConfig,
        world: &GridWorld,
        epoch: u32,
        first_id: RiderId,
        rng: &mut R,
    ) -> Result<Vec<RiderRequest>> {
        let mean = cfg.mean_requests_per_epoch();
        let count = Poisson::new(mean)
            .map_err(|e| Error::Config(format!("bad demand rate {mean}: {e}")))?
            .sample(rng) as u32;
        let remote_frac = cfg.remote_frac();
        let mut out = Vec::with_capacity(count as usize);
        for k in 0..count {
            let origin_cell = self.by_density.sample(rng);
            let remote = rng.gen::<f64>() < remote_frac;
            let dest_cell = if remote {
                self.remote_cells[rng.gen_range(0..self.remote_cells.len())]
            } else {
                self.by_density.sample(rng)
            };
            let origin = Self::point_in(world, origin_cell, rng);
            let dest = Self::point_in(world, dest_cell, rng);
            let delta = rng.gen_range(cfg.bid_low..=cfg.bid_high);
            out.push(RiderRequest {
                id: first_id + k,
                origin,
                dest,
                dest_cell: world.cell_of(&dest)?,
                route: world.route(&origin, &dest)?,
                delta_true: delta,
                delta_reported: delta,
                epoch,
            });
        }
        Ok(out)
    }
}

/// Reported rates: each participant over-reports with probability `fraction`
/// by `eps ~ U[0, max]`.
///
/// Both random draws are consumed for every participant regardless of
/// `fraction`, so runs that differ only in `fraction` see the same draws and
/// the over-reporting set grows monotonically with it.
pub fn apply_reporting<R: Rng>(truthful: &[f64], fraction: f64, max: f64, rng: &mut R) -> Vec<f64> {
    truthful
        .iter()
        .map(|&b| {
            let u: f64 = rng.gen();
            let eps = if max > 0.0 { rng.gen_range(0.0..=max) } else { 0.0 };
            if u < fraction {
                b + eps
            } else {
                b
            }
        })
        .collect()
}
