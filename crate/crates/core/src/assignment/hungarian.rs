//! Kuhn-Munkres with potentials, generic over any totally ordered abelian
//! group so that lexicographic tie-break keys can be optimized exactly.

use std::ops::{Add, Sub};

pub trait Weight: Copy + Ord + Default + Add<Output = Self> + Sub<Output = Self> {}

impl<T> Weight for T where T: Copy + Ord + Default + Add<Output = T> + Sub<Output = T> {}

/// Minimum-cost assignment of every row to a distinct column.
///
/// Requires `rows <= cols` and a complete, rectangular matrix. Returns the
/// column chosen for each row.
pub fn min_cost_assignment<W: Weight>(cost: &[Vec<W>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "assignment needs rows <= cols, got {n}x{m}");

    // 1-indexed potentials; column 0 is the virtual root of each augmenting tree.
    let zero = W::default();
    let mut u = vec![zero; n + 1];
    let mut v = vec![zero; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<W>> = vec![None; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta: Option<W> = None;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if minv[j].is_none_or(|mv| cur < mv) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mv = minv[j].expect("scanned column has a slack");
                if delta.is_none_or(|d| mv < d) {
                    delta = Some(mv);
                    j1 = j;
                }
            }
            let delta = delta.expect("rows <= cols leaves a free column");
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(mv) = minv[j] {
                    minv[j] = Some(mv - delta);
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            assignment[owner[j] - 1] = j - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_min(cost: &[Vec<i64>]) -> i64 {
        fn rec(cost: &[Vec<i64>], row: usize, used: &mut Vec<bool>) -> i64 {
            if row == cost.len() {
                return 0;
            }
            let mut best = i64::MAX;
            for j in 0..cost[0].len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[row][j] + rec(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost[0].len()])
    }

    #[test]
    fn classic_three_by_three() {
        let cost = vec![vec![4i64, 1, 3], vec![2, 0, 5], vec![3, 2, 2]];
        let a = min_cost_assignment(&cost);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, 5);
    }

    #[test]
    fn rectangular_matches_enumeration() {
        let cost = vec![vec![7i64, -3, 2, 9, 0], vec![1, 4, -6, 2, 3], vec![5, 5, 5, -1, 8]];
        let a = min_cost_assignment(&cost);
        let total: i64 = a.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
        assert_eq!(total, brute_min(&cost));
        let mut cols = a.clone();
        cols.sort_unstable();
        cols.dedup();
        assert_eq!(cols.len(), 3);
    }

    #[test]
    fn lexicographic_tuples() {
        // Primary component ties; the secondary decides.
        let cost = [vec![(0i64, 5i64), (0, 1)], vec![(0, 1), (0, 5)]];
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Default, Debug)]
        struct P(i64, i64);
        impl Add for P {
            type Output = P;
            fn add(self, o: P) -> P {
                P(self.0 + o.0, self.1 + o.1)
            }
        }
        impl Sub for P {
            type Output = P;
            fn sub(self, o: P) -> P {
                P(self.0 - o.0, self.1 - o.1)
            }
        }
        let cost: Vec<Vec<P>> =
            cost.iter().map(|r| r.iter().map(|&(a, b)| P(a, b)).collect()).collect();
        assert_eq!(min_cost_assignment(&cost), vec![1, 0]);
    }
}
