//! Exact search over matchings.
//!
//! The unconstrained program is a maximum-weight bipartite matching, solved
//! by [`min_cost_assignment`] on lexicographic keys. The welfare floor couples
//! all edges, so it is handled by depth-first branch-and-bound over which
//! participants are matched, with Lagrangian bounds per node.

use std::collections::HashMap;

use std::ops::{Add, Neg, Sub};

use super::hungarian::{min_cost_assignment, Weight};
use super::{quantize, Key, MatchingProblem};

struct Index {
    /// (driver slot, rider slot) per edge.
    ends: Vec<(usize, usize)>,
    n_drivers: usize,
    n_riders: usize,
}

impl Index {
    fn new(problem: &MatchingProblem) -> Self {
        let mut d_slot = HashMap::new();
        let mut r_slot = HashMap::new();
        let ends = problem
            .edges
            .iter()
            .map(|e| {
                let n = d_slot.len();
                let d = *d_slot.entry(e.driver).or_insert(n);
                let n = r_slot.len();
                let r = *r_slot.entry(e.rider).or_insert(n);
                (d, r)
            })
            .collect();
        Self { ends, n_drivers: d_slot.len(), n_riders: r_slot.len() }
    }
}

/// Best matching using only edges with `allowed[e]`, ignoring the floor.
pub(super) fn best_matching(problem: &MatchingProblem, keys: &[Key], allowed: &[bool]) -> Vec<usize> {
    let idx = Index::new(problem);
    relax(&idx, keys, allowed, &vec![false; idx.n_drivers], &vec![false; idx.n_riders])
}

fn relax<W: Weight + Neg<Output = W>>(
    idx: &Index,
    keys: &[W],
    allowed: &[bool],
    blocked_d: &[bool],
    blocked_r: &[bool],
) -> Vec<usize> {
    let zero = W::default();
    let active: Vec<usize> = (0..keys.len())
        .filter(|&e| {
            let (d, r) = idx.ends[e];
            allowed[e] && !blocked_d[d] && !blocked_r[r] && keys[e] > zero
        })
        .collect();
    if active.is_empty() {
        return Vec::new();
    }

    // Compact the participants that still have edges.
    let mut d_row: HashMap<usize, usize> = HashMap::new();
    let mut r_row: HashMap<usize, usize> = HashMap::new();
    for &e in &active {
        let (d, r) = idx.ends[e];
        let n = d_row.len();
        d_row.entry(d).or_insert(n);
        let n = r_row.len();
        r_row.entry(r).or_insert(n);
    }
    let drivers_as_rows = d_row.len() <= r_row.len();
    let (n_rows, n_cols) = if drivers_as_rows {
        (d_row.len(), r_row.len())
    } else {
        (r_row.len(), d_row.len())
    };

    let mut cost = vec![vec![zero; n_cols]; n_rows];
    let mut edge_at = vec![vec![None; n_cols]; n_rows];
    for &e in &active {
        let (d, r) = idx.ends[e];
        let (row, col) = if drivers_as_rows { (d_row[&d], r_row[&r]) } else { (r_row[&r], d_row[&d]) };
        cost[row][col] = -keys[e];
        edge_at[row][col] = Some(e);
    }

    let mut chosen: Vec<usize> = min_cost_assignment(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(row, col)| edge_at[row][col])
        .collect();
    chosen.sort_unstable();
    chosen
}

/// Lexicographic weight with a leading count of must-match endpoints, so a
/// maximum matching covers every must-match participant whenever possible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord)]
struct Biased<W> {
    must: i128,
    w: W,
}

impl<W: Add<Output = W>> Add for Biased<W> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self { must: self.must + o.must, w: self.w + o.w }
    }
}

impl<W: Sub<Output = W>> Sub for Biased<W> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self { must: self.must - o.must, w: self.w - o.w }
    }
}

impl<W: Neg<Output = W>> Neg for Biased<W> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { must: -self.must, w: -self.w }
    }
}

/// A subproblem: forced edges, excluded edges, and participants that must
/// be matched (by some open edge).
#[derive(Clone)]
struct Node {
    forced: Vec<usize>,
    excluded: Vec<bool>,
    must_d: Vec<bool>,
    must_r: Vec<bool>,
}

/// Fixed denominator of the Lagrange multiplier `lambda = p / LAMBDA_DEN`.
const LAMBDA_DEN: i128 = 1 << 16;
const LAMBDA_MAX: i128 = LAMBDA_DEN << 24;
const BISECTION_STEPS: usize = 18;

/// Per-node view for the floor search.
struct NodeView<'a> {
    idx: &'a Index,
    keys: &'a [Key],
    sigma: &'a [i128],
    node: &'a Node,
    open: Vec<bool>,
    blocked_d: Vec<bool>,
    blocked_r: Vec<bool>,
    n_must: i128,
}

impl<'a> NodeView<'a> {
    fn new(idx: &'a Index, keys: &'a [Key], sigma: &'a [i128], node: &'a Node) -> Self {
        let mut blocked_d = vec![false; idx.n_drivers];
        let mut blocked_r = vec![false; idx.n_riders];
        for &e in &node.forced {
            let (d, r) = idx.ends[e];
            blocked_d[d] = true;
            blocked_r[r] = true;
        }
        let open = (0..keys.len())
            .map(|e| {
                let (d, r) = idx.ends[e];
                !node.excluded[e] && !blocked_d[d] && !blocked_r[r]
            })
            .collect();
        let n_must = (node.must_d.iter().chain(&node.must_r).filter(|&&m| m).count()) as i128;
        Self { idx, keys, sigma, node, open, blocked_d, blocked_r, n_must }
    }

    fn must_count(&self, e: usize) -> i128 {
        let (d, r) = self.idx.ends[e];
        i128::from(self.node.must_d[d]) + i128::from(self.node.must_r[r])
    }

    /// Forced edges plus the best completion under `weights`, or `None` when
    /// no completion covers every must-match participant.
    fn complete<W: Weight + Neg<Output = W>>(&self, weights: &[W]) -> Option<Vec<usize>> {
        let biased: Vec<Biased<W>> =
            weights.iter().enumerate().map(|(e, &w)| Biased { must: self.must_count(e), w }).collect();
        let free = relax(self.idx, &biased, &self.open, &self.blocked_d, &self.blocked_r);
        if free.iter().map(|&e| self.must_count(e)).sum::<i128>() < self.n_must {
            return None;
        }
        let mut set = self.node.forced.clone();
        set.extend(free);
        Some(set)
    }

    fn sigma_of(&self, set: &[usize]) -> i128 {
        set.iter().map(|&e| self.sigma[e]).sum()
    }

    /// Maximizer of `LAMBDA_DEN * zeta + p * sigma` (leading key only).
    fn weighted(&self, p: i128) -> Option<(Vec<usize>, i128)> {
        let w: Vec<i128> =
            self.keys.iter().zip(self.sigma).map(|(k, &s)| LAMBDA_DEN * k.0[0] + p * s).collect();
        let set = self.complete(&w)?;
        let value = set.iter().map(|&e| w[e]).sum();
        Some((set, value))
    }

    /// Tries to prove that no matching in this node has both
    /// `zeta >= zeta_min` and `sigma >= sigma_min` (leading key units).
    ///
    /// Uses `zeta + lambda * (sigma - sigma_min) <= max`, minimized over
    /// `lambda >= 0` by doubling and bisection. Every maximizer visited is
    /// passed to `seen`.
    fn excludes(&self, zeta_min: i128, sigma_min: i128, seen: &mut dyn FnMut(&[usize])) -> bool {
        let target = LAMBDA_DEN * zeta_min;
        let mut probe = |p: i128| match self.weighted(p) {
            None => (true, 0),
            Some((set, value)) => {
                seen(&set);
                (value - p * sigma_min < target, self.sigma_of(&set) - sigma_min)
            }
        };
        let (done, slope) = probe(0);
        if done {
            return true;
        }
        if slope >= 0 {
            return false;
        }
        let mut lo = 0;
        let mut hi = LAMBDA_DEN;
        loop {
            let (done, slope) = probe(hi);
            if done {
                return true;
            }
            if slope >= 0 {
                break;
            }
            lo = hi;
            hi *= 2;
            if hi > LAMBDA_MAX {
                return false;
            }
        }
        for _ in 0..BISECTION_STEPS {
            if hi - lo <= 1 {
                break;
            }
            let mid = lo + (hi - lo) / 2;
            let (done, slope) = probe(mid);
            if done {
                return true;
            }
            if slope >= 0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        false
    }

    /// Splits the node around the highest-gain edge on which the last
    /// infeasible and last feasible Lagrangian maximizers disagree.
    ///
    /// If one of its endpoints is matched in only one of the two, that
    /// participant must be matched in one child and stays unmatched in the
    /// other; the endpoint whose open edges have the narrowest spread of
    /// sensing gain is used. Otherwise the edge itself is forced / excluded.
    fn branch(&self, infeasible: &[usize], feasible: &[usize]) -> Vec<Node> {
        let idx = self.idx;
        let node = self.node;
        let mut status_d = vec![0u8; idx.n_drivers];
        let mut status_r = vec![0u8; idx.n_riders];
        for (bit, set) in [(1u8, infeasible), (2u8, feasible)] {
            for &e in set {
                let (d, r) = idx.ends[e];
                status_d[d] |= bit;
                status_r[r] |= bit;
            }
        }
        let mut spread_d = vec![(i128::MAX, i128::MIN); idx.n_drivers];
        let mut spread_r = vec![(i128::MAX, i128::MIN); idx.n_riders];
        for (e, &(d, r)) in idx.ends.iter().enumerate() {
            if self.open[e] {
                let z = self.keys[e].0[0];
                for s in [&mut spread_d[d], &mut spread_r[r]] {
                    *s = (s.0.min(z), s.1.max(z));
                }
            }
        }
        let split = |s: u8| s == 1 || s == 2;

        let mut diff: Vec<usize> = infeasible
            .iter()
            .filter(|e| !feasible.contains(e))
            .chain(feasible.iter().filter(|e| !infeasible.contains(e)))
            .copied()
            .filter(|e| !node.forced.contains(e))
            .collect();
        diff.sort_by_key(|&e| (std::cmp::Reverse(self.keys[e].0[0]), std::cmp::Reverse(self.sigma[e].abs()), e));

        let width = |s: (i128, i128)| s.1 - s.0;
        let pick = |e: usize, narrow_only: bool| {
            let (d, r) = idx.ends[e];
            let d_ok = split(status_d[d]) && !node.must_d[d];
            let r_ok = split(status_r[r]) && !node.must_r[r];
            let (wd, wr) = (width(spread_d[d]), width(spread_r[r]));
            match (d_ok, r_ok) {
                (false, false) => None,
                (true, true) => Some(wr <= wd),
                (true, false) => (!narrow_only || wd <= wr).then_some(false),
                (false, true) => (!narrow_only || wr <= wd).then_some(true),
            }
        };
        let choice = [true, false]
            .into_iter()
            .find_map(|narrow_only| diff.iter().find_map(|&e| pick(e, narrow_only).map(|by_rider| (e, by_rider))));
        if let Some((e, by_rider)) = choice {
            let (d, r) = idx.ends[e];
            let mut out = node.clone();
            for (f, &(fd, fr)) in idx.ends.iter().enumerate() {
                if self.open[f] && (if by_rider { fr == r } else { fd == d }) {
                    out.excluded[f] = true;
                }
            }
            let mut inside = node.clone();
            if by_rider {
                inside.must_r[r] = true;
            } else {
                inside.must_d[d] = true;
            }
            // The last pushed child is explored first.
            return vec![out, inside];
        }

        let free = || infeasible.iter().copied().filter(|e| !node.forced.contains(e));
        let Some(e) = diff.first().copied().or_else(|| free().min_by_key(|&e| (self.sigma[e], e))) else {
            return Vec::new();
        };
        let mut without = node.clone();
        without.excluded[e] = true;
        let mut with = node.clone();
        with.forced.push(e);
        let (d, r) = idx.ends[e];
        with.must_d[d] = false;
        with.must_r[r] = false;
        vec![without, with]
    }
}

#[derive(Clone, Copy)]
enum Side {
    Driver,
    Rider,
}

/// Edges of participants that no optimal floor-feasible matching uses.
///
/// Take participants with the same neighbour set `N`. If at least `|N|`
/// others in that group beat `x` on every shared counterpart (welfare no
/// lower, key strictly higher), one of them is always free when `x` is
/// matched, and swapping it in keeps the floor and strictly raises the key.
/// So `x` can be dropped. Groups of co-located idle taxis are the common case.
fn dominated_edges(idx: &Index, keys: &[Key], sigma: &[i128], excluded: &[bool], side: Side) -> Vec<usize> {
    let n = match side {
        Side::Driver => idx.n_drivers,
        Side::Rider => idx.n_riders,
    };
    // Per participant: (counterpart, edge), sorted by counterpart.
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (e, &(d, r)) in idx.ends.iter().enumerate() {
        if !excluded[e] {
            match side {
                Side::Driver => adj[d].push((r, e)),
                Side::Rider => adj[r].push((d, e)),
            }
        }
    }
    for a in &mut adj {
        a.sort_unstable();
    }
    let mut groups: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (x, a) in adj.iter().enumerate() {
        if !a.is_empty() {
            groups.entry(a.iter().map(|p| p.0).collect()).or_default().push(x);
        }
    }
    let beats = |x: usize, y: usize| {
        adj[x].iter().zip(&adj[y]).all(|(&(_, ex), &(_, ey))| sigma[ex] >= sigma[ey] && keys[ex] > keys[ey])
    };

    let mut out = Vec::new();
    let mut groups: Vec<_> = groups.into_iter().collect();
    groups.sort_unstable();
    for (counterparts, members) in groups {
        let need = counterparts.len();
        let mut alive = members;
        loop {
            let victim = alive
                .iter()
                .copied()
                .find(|&y| alive.iter().filter(|&&x| x != y && beats(x, y)).count() >= need);
            let Some(y) = victim else { break };
            alive.retain(|&x| x != y);
            out.extend(adj[y].iter().map(|p| p.1));
        }
    }
    out
}

/// Best matching subject to `sum sigma >= 0` over the chosen edges.
///
/// Depth-first branch-and-bound. A node is cut when it cannot cover its
/// must-match participants, when its unconstrained optimum is no better than
/// the incumbent, or when Lagrangian bounds show that it holds no feasible
/// matching that either raises the sensing total or ties it with at least the
/// incumbent's welfare.
pub(super) fn best_matching_with_floor(
    problem: &MatchingProblem,
    keys: &[Key],
    allowed: &[bool],
) -> Vec<usize> {
    let idx = Index::new(problem);
    let sigma: Vec<i128> = problem.edges.iter().map(|e| quantize(e.sigma)).collect();
    let key_of = |set: &[usize]| set.iter().fold(Key::default(), |acc, &e| acc + keys[e]);
    let sigma_of = |set: &[usize]| set.iter().map(|&e| sigma[e]).sum::<i128>();

    // The empty matching is always feasible.
    let mut best: Vec<usize> = Vec::new();
    let mut best_key = Key::default();
    let offer = |set: &[usize], best: &mut Vec<usize>, best_key: &mut Key| {
        if sigma_of(set) >= 0 {
            let k = key_of(set);
            if k > *best_key {
                *best_key = k;
                *best = set.to_vec();
            }
        }
    };

    let mut excluded: Vec<bool> = allowed.iter().map(|a| !a).collect();
    for side in [Side::Driver, Side::Rider] {
        for e in dominated_edges(&idx, keys, &sigma, &excluded, side) {
            excluded[e] = true;
        }
    }

    let mut stack = vec![Node {
        forced: Vec::new(),
        excluded,
        must_d: vec![false; idx.n_drivers],
        must_r: vec![false; idx.n_riders],
    }];
    while let Some(node) = stack.pop() {
        let view = NodeView::new(&idx, keys, &sigma, &node);

        // Welfare reachable from here: forced edges plus the best positive
        // sigma still available to each free driver.
        let mut best_sigma_d = vec![0i128; idx.n_drivers];
        for e in (0..keys.len()).filter(|&e| view.open[e]) {
            let d = idx.ends[e].0;
            best_sigma_d[d] = best_sigma_d[d].max(sigma[e]);
        }
        if sigma_of(&node.forced) + best_sigma_d.iter().sum::<i128>() < 0 {
            continue;
        }

        let Some(relaxed) = view.complete(keys) else {
            continue;
        };
        if key_of(&relaxed) <= best_key {
            continue;
        }
        if sigma_of(&relaxed) >= 0 {
            offer(&relaxed, &mut best, &mut best_key);
            continue;
        }

        let (z0, s0) = (best_key.0[0], best_key.0[1]);
        let mut infeasible = relaxed;
        let mut feasible: Vec<usize> = Vec::new();
        let mut seen = |set: &[usize]| {
            offer(set, &mut best, &mut best_key);
            if sigma_of(set) < 0 {
                infeasible = set.to_vec();
            } else {
                feasible = set.to_vec();
            }
        };
        if view.excludes(z0 + 1, 0, &mut seen) && view.excludes(z0, s0, &mut seen) {
            continue;
        }

        // Repair the infeasible maximizer by dropping its worst-welfare
        // edges; the result is a valid incumbent even if it leaves the node.
        let mut repaired = infeasible.clone();
        let mut droppable = repaired.clone();
        droppable.sort_by_key(|&e| (sigma[e], e));
        for e in droppable {
            if sigma_of(&repaired) >= 0 || sigma[e] >= 0 {
                break;
            }
            repaired.retain(|&x| x != e);
        }
        offer(&repaired, &mut best, &mut best_key);

        stack.extend(view.branch(&infeasible, &feasible));
    }

    best.sort_unstable();
    best
}
