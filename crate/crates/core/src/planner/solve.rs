//! Exact cover of a segment `0..n` by contiguous intervals at minimum cost.
//!
//! Two independent solvers: a shortest-path dynamic program over cut
//! positions and a 0/1 branch-and-bound over the `n(n+1)/2` candidates.
//! Both accumulate interval costs left to right, so equal partitions give
//! bit-equal totals, and both break cost ties toward the lexicographically
//! smallest sequence of interval end positions.

use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

/// Costs `c(a, b)` of every interval `a..=b` (0-based) of a segment.
/// `f64::INFINITY` marks an infeasible candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct CostTable {
    n: usize,
    costs: Vec<f64>,
}

impl CostTable {
    pub fn from_fn(n: usize, mut cost: impl FnMut(usize, usize) -> f64) -> Self {
        let mut costs = vec![f64::INFINITY; n * n];
        for a in 0..n {
            for b in a..n {
                costs[a * n + b] = cost(a, b);
            }
        }
        CostTable { n, costs }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.costs[a * self.n + b]
    }
}

/// A partition given by the exclusive end of each interval, in order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Partition {
    pub ends: Vec<usize>,
    pub cost: f64,
}

impl Partition {
    /// Inclusive `(first, last)` pairs.
    pub fn intervals(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        self.ends
            .iter()
            .map(|&e| {
                let iv = (start, e - 1);
                start = e;
                iv
            })
            .collect()
    }
}

/// Forward DP: `best[j] = min_i best[i] + c(i, j − 1)`.
pub fn solve_dp(table: &CostTable) -> Option<Partition> {
    let n = table.len();
    if n == 0 {
        return None;
    }
    let mut best = vec![f64::INFINITY; n + 1];
    best[0] = 0.0;
    for j in 1..=n {
        for i in 0..j {
            let c = best[i] + table.get(i, j - 1);
            if c < best[j] {
                best[j] = c;
            }
        }
    }
    if !best[n].is_finite() {
        return None;
    }
    // Cut positions that lie on some optimal path to n.
    let tight = |i: usize, j: usize| best[i] + table.get(i, j - 1) == best[j];
    let mut reaches_end = vec![false; n + 1];
    reaches_end[n] = true;
    for i in (0..n).rev() {
        reaches_end[i] = (i + 1..=n).any(|j| reaches_end[j] && tight(i, j));
    }
    let mut ends = Vec::new();
    let mut pos = 0;
    while pos < n {
        let next = (pos + 1..=n)
            .find(|&j| reaches_end[j] && tight(pos, j))
            .expect("optimal path continues");
        ends.push(next);
        pos = next;
    }
    Some(Partition {
        ends,
        cost: best[n],
    })
}

/// Exact-cover branch-and-bound: branch on the interval covering the first
/// uncovered position, bound with the cheapest interval starting at each
/// later position (admissible for non-negative costs).
pub fn solve_branch_and_bound(table: &CostTable) -> Option<Partition> {
    let n = table.len();
    if n == 0 {
        return None;
    }
    let nonneg = (0..n).all(|a| (a..n).all(|b| table.get(a, b) >= 0.0));
    let mut bound = vec![0.0; n + 1];
    if nonneg {
        for (a, slot) in bound.iter_mut().enumerate().take(n) {
            *slot = (a..n)
                .map(|b| table.get(a, b))
                .fold(f64::INFINITY, f64::min);
        }
    } else {
        bound.fill(f64::NEG_INFINITY);
        bound[n] = 0.0;
    }

    struct Search<'a> {
        table: &'a CostTable,
        bound: Vec<f64>,
        stack: Vec<usize>,
        best: Option<Partition>,
    }

    impl Search<'_> {
        fn go(&mut self, pos: usize, partial: f64) {
            let n = self.table.len();
            if pos == n {
                if self.best.as_ref().is_none_or(|b| partial < b.cost) {
                    self.best = Some(Partition {
                        ends: self.stack.clone(),
                        cost: partial,
                    });
                }
                return;
            }
            for b in pos..n {
                let c = partial + self.table.get(pos, b);
                if !c.is_finite() {
                    continue;
                }
                let lower = c + self.bound[b + 1];
                if self.best.as_ref().is_some_and(|best| lower > best.cost) {
                    continue;
                }
                self.stack.push(b + 1);
                self.go(b + 1, c);
                self.stack.pop();
            }
        }
    }

    let mut s = Search {
        table,
        bound,
        stack: Vec::new(),
        best: None,
    };
    s.go(0, 0.0);
    s.best
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every contiguous partition, enumerated from the `n − 1` cut bits.
    fn brute_force(t: &CostTable) -> Option<f64> {
        let n = t.len();
        let mut best: Option<f64> = None;
        for mask in 0u32..(1 << (n - 1)) {
            let mut start = 0;
            let mut total = 0.0;
            for end in 1..=n {
                if end == n || mask & (1 << (end - 1)) != 0 {
                    total += t.get(start, end - 1);
                    start = end;
                }
            }
            if total.is_finite() && best.is_none_or(|b| total < b) {
                best = Some(total);
            }
        }
        best
    }

    #[test]
    fn single_kernel() {
        let t = CostTable::from_fn(1, |_, _| 5.0);
        let p = solve_dp(&t).unwrap();
        assert_eq!(p.ends, [1]);
        assert_eq!(solve_branch_and_bound(&t).unwrap(), p);
    }

    #[test]
    fn full_fusion_when_intervals_are_cheap() {
        // Fusing saves a fixed overhead per merged kernel.
        let t = CostTable::from_fn(3, |a, b| 10.0 + (b - a) as f64);
        let p = solve_dp(&t).unwrap();
        assert_eq!(p.ends, [3]);
        assert_eq!(p.cost, 12.0);
        assert_eq!(brute_force(&t), Some(12.0));
    }

    #[test]
    fn infeasible_full_group_forces_split() {
        let t = CostTable::from_fn(3, |a, b| {
            if b - a == 2 {
                f64::INFINITY
            } else {
                10.0 + (b - a) as f64
            }
        });
        let dp = solve_dp(&t).unwrap();
        let bb = solve_branch_and_bound(&t).unwrap();
        assert_eq!(dp.cost, 21.0);
        assert_eq!(dp, bb);
        assert_eq!(dp.ends, [1, 3]);
        assert_eq!(brute_force(&t), Some(21.0));
    }

    #[test]
    fn nothing_feasible() {
        let t = CostTable::from_fn(2, |_, _| f64::INFINITY);
        assert!(solve_dp(&t).is_none());
        assert!(solve_branch_and_bound(&t).is_none());
    }

    #[test]
    fn ties_prefer_earliest_ends() {
        // Every partition costs 3.
        let t = CostTable::from_fn(3, |a, b| (b - a + 1) as f64);
        let dp = solve_dp(&t).unwrap();
        assert_eq!(dp.ends, [1, 2, 3]);
        assert_eq!(solve_branch_and_bound(&t).unwrap(), dp);
        let t = CostTable::from_fn(2, |a, b| if a == b { 1.0 } else { 2.0 });
        let dp = solve_dp(&t).unwrap();
        assert_eq!(dp.ends, [1, 2]);
        assert_eq!(solve_branch_and_bound(&t).unwrap(), dp);
    }

    #[test]
    fn intervals_from_ends() {
        let p = Partition {
            ends: vec![2, 5],
            cost: 0.0,
        };
        assert_eq!(p.intervals(), [(0, 1), (2, 4)]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn dp_bb_and_brute_force_agree(
                n in 1usize..=9,
                raw in proptest::collection::vec(0u32..1000, 81),
                holes in proptest::collection::vec(any::<bool>(), 81),
            ) {
                let t = CostTable::from_fn(n, |a, b| {
                    let k = a * 9 + b;
                    if holes[k] && a != b { f64::INFINITY } else { raw[k] as f64 / 7.0 }
                });
                let dp = solve_dp(&t).unwrap();
                let bb = solve_branch_and_bound(&t).unwrap();
                prop_assert_eq!(dp.cost, bb.cost);
                prop_assert_eq!(&dp.ends, &bb.ends);
                prop_assert_eq!(Some(dp.cost), brute_force(&t));
                // Exact cover: ends strictly increase to n.
                prop_assert_eq!(*dp.ends.last().unwrap(), n);
                prop_assert!(dp.ends.windows(2).all(|w| w[0] < w[1]));
                // Dominance over the two fixed baselines.
                let singles: f64 = (0..n).map(|i| t.get(i, i)).sum();
                prop_assert!(dp.cost <= singles);
                prop_assert!(dp.cost <= t.get(0, n - 1));
            }
        }
    }
}
