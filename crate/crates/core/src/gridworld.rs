//! Meshed study area: cells, demand densities, routing and order prospect.
//!
//! Cells are indexed row-major (`row * cols + col`), with row 0 at the
//! bottom of the extent. Coordinates are continuous kilometres measured
//! from the lower-left corner of the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CellId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Moves at most `step` towards `target`, stopping on arrival.
    pub fn step_towards(&self, target: &Point, step: f64) -> Point {
        let dist = self.distance(target);
        if dist <= step || dist == 0.0 {
            *target
        } else {
            let k = step / dist;
            Point::new(self.x + (target.x - self.x) * k, self.y + (target.y - self.y) * k)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    rows: usize,
    cols: usize,
    cell_size: f64,
    densities: Vec<f64>,
    max_centroid_dist: f64,
}

/// Cells touched by a trip, in traversal order, plus the trip length.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRoute {
    pub cells: Vec<CellId>,
    pub length: f64,
}

impl GridWorld {
    /// Builds a grid and normalizes `densities` to a probability mass.
    pub fn new(rows: usize, cols: usize, cell_size: f64, densities: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Config(format!("grid must be at least 1x1, got {rows}x{cols}")));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::Config(format!("cell size must be positive, got {cell_size}")));
        }
        if densities.len() != rows * cols {
            return Err(Error::Config(format!(
                "expected {} densities, got {}",
                rows * cols,
                densities.len()
            )));
        }
        if let Some(bad) = densities.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Config(format!("density {bad} is not a finite non-negative value")));
        }
        let total: f64 = densities.iter().sum();
        if total <= 0.0 {
            return Err(Error::Config("total demand density is zero".into()));
        }
        let densities = densities.iter().map(|v| v / total).collect();

        // Farthest centroid pair is always a pair of opposite corners.
        let max_centroid_dist = if rows * cols == 1 {
            cell_size
        } else {
            cell_size * ((rows - 1) as f64).hypot((cols - 1) as f64)
        };

        Ok(Self { rows, cols, cell_size, densities, max_centroid_dist })
    }

    /// Uniform demand over every cell.
    pub fn uniform(rows: usize, cols: usize, cell_size: f64) -> Result<Self> {
        Self::new(rows, cols, cell_size, &vec![1.0; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Largest centroid-to-centroid distance `M`.
    pub fn max_centroid_dist(&self) -> f64 {
        self.max_centroid_dist
    }

    pub fn width(&self) -> f64 {
        self.cols as f64 * self.cell_size
    }

    pub fn height(&self) -> f64 {
        self.rows as f64 * self.cell_size
    }

    pub fn contains(&self, p: &Point) -> bool {
        p.x.is_finite()
            && p.y.is_finite()
            && (0.0..=self.width()).contains(&p.x)
            && (0.0..=self.height()).contains(&p.y)
    }

    pub fn centroid(&self, cell: CellId) -> Point {
        let (row, col) = (cell / self.cols, cell % self.cols);
        Point::new(
            (col as f64 + 0.5) * self.cell_size,
            (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn centroid_distance(&self, a: CellId, b: CellId) -> f64 {
        self.centroid(a).distance(&self.centroid(b))
    }

    /// Cell containing `p`. Points on the far boundary belong to the last row/column.
    pub fn cell_of(&self, p: &Point) -> Result<CellId> {
        if !self.contains(p) {
            return Err(Error::Geometry(format!(
                "point ({}, {}) lies outside the {}x{} km extent",
                p.x,
                p.y,
                self.width(),
                self.height()
            )));
        }
        let col = ((p.x / self.cell_size) as usize).min(self.cols - 1);
        let row = ((p.y / self.cell_size) as usize).min(self.rows - 1);
        Ok(row * self.cols + col)
    }

    /// Straight-line route between two points.
    ///
    /// The cell list is the supercover of the segment: every cell whose closed
    /// square the segment touches, ordered by where the segment first enters it.
    pub fn route(&self, origin: &Point, dest: &Point) -> Result<CellRoute> {
        self.cell_of(origin)?;
        self.cell_of(dest)?;

        let (dx, dy) = (dest.x - origin.x, dest.y - origin.y);
        let cs = self.cell_size;
        let col_range = |a: f64, b: f64| {
            let lo = (a.min(b) / cs).floor().max(1.0) as usize - 1;
            let hi = ((a.max(b) / cs).floor() as usize).min(self.cols - 1);
            lo..=hi
        };
        let row_range = |a: f64, b: f64| {
            let lo = (a.min(b) / cs).floor().max(1.0) as usize - 1;
            let hi = ((a.max(b) / cs).floor() as usize).min(self.rows - 1);
            lo..=hi
        };

        let mut hits: Vec<(f64, CellId)> = Vec::new();
        for row in row_range(origin.y, dest.y) {
            for col in col_range(origin.x, dest.x) {
                let (x0, y0) = (col as f64 * cs, row as f64 * cs);
                if let Some(t) = clip_entry(origin, dx, dy, x0, x0 + cs, y0, y0 + cs) {
                    hits.push((t, row * self.cols + col));
                }
            }
        }
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        Ok(CellRoute {
            cells: hits.into_iter().map(|(_, c)| c).collect(),
            length: origin.distance(dest),
        })
    }

    /// Order prospect of a destination cell: `sum_g (1 - d(g, dest) / M) * n_g`.
    pub fn order_prospect(&self, dest_cell: CellId) -> f64 {
        let m = self.max_centroid_dist;
        self.densities
            .iter()
            .enumerate()
            .map(|(g, n)| (1.0 - self.centroid_distance(g, dest_cell) / m) * n)
            .sum()
    }

    /// Prospect of every cell, indexed by cell id.
    pub fn prospect_field(&self) -> Vec<f64> {
        (0..self.num_cells()).map(|c| self.order_prospect(c)).collect()
    }
}

/// Liang-Barsky clip of `origin + t * (dx, dy)`, `t` in `[0, 1]`, against a
/// closed box. Returns the entry parameter if the segment touches the box.
fn clip_entry(origin: &Point, dx: f64, dy: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> Option<f64> {
    let mut t_lo = 0.0_f64;
    let mut t_hi = 1.0_f64;
    for (p, d, lo, hi) in [(origin.x, dx, x0, x1), (origin.y, dy, y0, y1)] {
        if d == 0.0 {
            if p < lo || p > hi {
                return None;
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            t_lo = t_lo.max(a);
            t_hi = t_hi.min(b);
        }
    }
    (t_lo <= t_hi).then_some(t_lo)
}

/// Opportunity-cost model built on top of a world's prospect field.
///
/// `f(p) = xi * (p* - p)` below the critical prospect `p* = p_star_frac * p_max`,
/// zero above it.
#[derive(Debug, Clone, PartialEq)]
pub struct ProspectModel {
    pub xi: f64,
    pub p_star_frac: f64,
    pub p_min: f64,
    pub p_max: f64,
    field: Vec<f64>,
}

impl ProspectModel {
    pub fn new(world: &GridWorld, xi: f64, p_star_frac: f64) -> Result<Self> {
        if !(xi.is_finite() && xi >= 0.0) {
            return Err(Error::Config(format!("xi must be non-negative, got {xi}")));
        }
        if !(p_star_frac.is_finite() && p_star_frac >= 0.0) {
            return Err(Error::Config(format!("p_star_frac must be non-negative, got {p_star_frac}")));
        }
        let field = world.prospect_field();
        let p_min = field.iter().copied().fold(f64::INFINITY, f64::min);
        let p_max = field.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { xi, p_star_frac, p_min, p_max, field })
    }

    pub fn p_star(&self) -> f64 {
        self.p_star_frac * self.p_max
    }

    pub fn prospect(&self, cell: CellId) -> f64 {
        self.field[cell]
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    pub fn opportunity_cost(&self, p: f64) -> f64 {
        opportunity_cost(self.xi, self.p_star(), p)
    }

    /// Opportunity cost of dropping off in `cell`.
    pub fn cell_cost(&self, cell: CellId) -> f64 {
        self.opportunity_cost(self.field[cell])
    }
}

pub fn opportunity_cost(xi: f64, p_star: f64, p: f64) -> f64 {
    if p < p_star {
        xi * (p_star - p)
    } else {
        0.0
    }
}

/// JSON world definition. Densities may be unnormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_cell_size")]
    pub cell_size_km: f64,
    pub densities: Vec<f64>,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_p_star_frac")]
    pub p_star_frac: f64,
}

fn default_cell_size() -> f64 {
    1.0
}

fn default_xi() -> f64 {
    50.0
}

fn default_p_star_frac() -> f64 {
    0.9
}

impl WorldSpec {
    pub fn build(&self) -> Result<(GridWorld, ProspectModel)> {
        let world = GridWorld::new(self.rows, self.cols, self.cell_size_km, &self.densities)?;
        let model = ProspectModel::new(&world, self.xi, self.p_star_frac)?;
        Ok((world, model))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Synthetic district with a dense commercial core in the east-centre and a
    /// sparsely populated north, on `rows x cols` one-kilometre cells.
    pub fn synthetic_district(rows: usize, cols: usize) -> Self {
        let (core_r, core_c) = (rows as f64 * 0.4, cols as f64 * 0.7);
        let spread = (rows.min(cols) as f64 / 4.0).max(1.0);
        let mut densities = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let (dr, dc) = (r as f64 + 0.5 - core_r, c as f64 + 0.5 - core_c);
                let core = (-(dr * dr + dc * dc) / (2.0 * spread * spread)).exp();
                // The northern third only sees scattered trips.
                let base = if (r as f64) >= rows as f64 * 2.0 / 3.0 { 0.002 } else { 0.02 };
                densities.push(base + core);
            }
        }
        Self {
            rows,
            cols,
            cell_size_km: 1.0,
            densities,
            xi: default_xi(),
            p_star_frac: default_p_star_frac(),
        }
    }
}
