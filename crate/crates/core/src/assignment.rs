//! Balanced assignment: augmentation with diagonal projections, an exact
//! Hungarian solver and an ε-scaling auction.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Cost of a forbidden entry.
pub const FORBIDDEN: f64 = 1e30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntryKind {
    RealReal,
    RealDiagonal,
    DiagonalReal,
    DiagonalDiagonal,
}

/// Square cost matrix. The first `real_rows` rows and `real_cols` columns are real points.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
    real_rows: usize,
    real_cols: usize,
}

impl CostMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::InvalidParameter("cost matrix must be square".into()));
            }
            data.extend_from_slice(r);
        }
        check_costs(&data)?;
        Ok(CostMatrix {
            n,
            data,
            real_rows: n,
            real_cols: n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn kind(&self, i: usize, j: usize) -> EntryKind {
        match (i < self.real_rows, j < self.real_cols) {
            (true, true) => EntryKind::RealReal,
            (true, false) => EntryKind::RealDiagonal,
            (false, true) => EntryKind::DiagonalReal,
            (false, false) => EntryKind::DiagonalDiagonal,
        }
    }
}

fn check_costs(data: &[f64]) -> Result<()> {
    if data.iter().any(|&c| !(c >= 0.0) || c.is_infinite()) {
        return Err(Error::InvalidParameter(
            "costs must be finite and non-negative".into(),
        ));
    }
    Ok(())
}

/// Balanced `(|A|+|B|)²` problem for a partial assignment between A and B.
///
/// Rows are A then one diagonal slot per element of B; columns are B then one
/// diagonal slot per element of A.
pub fn augment(real: &[Vec<f64>], a_diag: &[f64], b_diag: &[f64]) -> Result<CostMatrix> {
    let (na, nb) = (a_diag.len(), b_diag.len());
    if real.len() != na || real.iter().any(|r| r.len() != nb) {
        return Err(Error::InvalidParameter(format!(
            "real cost block must be {na}x{nb}"
        )));
    }
    for r in real {
        check_costs(r)?;
    }
    check_costs(a_diag)?;
    check_costs(b_diag)?;
    let n = na + nb;
    let mut data = vec![0.0; n * n];
    for i in 0..na {
        let row = &mut data[i * n..(i + 1) * n];
        row[..nb].copy_from_slice(&real[i]);
        for k in 0..na {
            row[nb + k] = if k == i { a_diag[i] } else { FORBIDDEN };
        }
    }
    for k in 0..nb {
        let row = &mut data[(na + k) * n..(na + k + 1) * n];
        for j in 0..nb {
            row[j] = if j == k { b_diag[j] } else { FORBIDDEN };
        }
    }
    Ok(CostMatrix {
        n,
        data,
        real_rows: na,
        real_cols: nb,
    })
}

/// A permutation of columns indexed by row, with its total cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentResult {
    pub assignment: Vec<usize>,
    pub cost: f64,
}

fn total(costs: &CostMatrix, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| costs.get(i, j))
        .sum()
}

/// Hungarian algorithm with potentials, O(n³).
pub fn solve_exact(costs: &CostMatrix) -> AssignmentResult {
    let n = costs.n();
    if n == 0 {
        return AssignmentResult {
            assignment: Vec::new(),
            cost: 0.0,
        };
    }
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = costs.row(i0 - 1);
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = row[j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    let cost = total(costs, &assignment);
    AssignmentResult { assignment, cost }
}

/// ε-scaling parameters for [`solve_auction`], as fractions of the largest finite cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuctionSchedule {
    pub start: f64,
    pub factor: f64,
    pub end: f64,
    pub max_bids: usize,
}

impl Default for AuctionSchedule {
    fn default() -> Self {
        AuctionSchedule {
            start: 0.25,
            factor: 4.0,
            end: 1e-6,
            max_bids: 100_000_000,
        }
    }
}

impl AuctionSchedule {
    /// Final ε for a matrix whose largest finite cost is `max_cost`.
    pub fn final_epsilon(&self, max_cost: f64) -> f64 {
        if max_cost > 0.0 {
            self.end * max_cost
        } else {
            1e-9
        }
    }
}

/// Largest entry below [`FORBIDDEN`].
pub fn max_finite_cost(costs: &CostMatrix) -> f64 {
    costs
        .data
        .iter()
        .copied()
        .filter(|&c| c < FORBIDDEN)
        .fold(0.0, f64::max)
}

/// Forward auction with ε-scaling; rows bid in ascending order.
pub fn solve_auction(costs: &CostMatrix, schedule: &AuctionSchedule) -> Result<AssignmentResult> {
    let n = costs.n();
    if n == 0 {
        return Ok(AssignmentResult {
            assignment: Vec::new(),
            cost: 0.0,
        });
    }
    if !(schedule.factor > 1.0) || !(schedule.end > 0.0) || !(schedule.start >= schedule.end) {
        return Err(Error::InvalidParameter("invalid auction schedule".into()));
    }
    let cmax = max_finite_cost(costs);
    let eps_final = schedule.final_epsilon(cmax);
    let mut eps = (schedule.start * cmax).max(eps_final);
    let mut price = vec![0.0f64; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut bids = 0usize;
    loop {
        owner.iter_mut().for_each(|o| *o = None);
        assigned.iter_mut().for_each(|a| *a = None);
        let mut queue: VecDeque<usize> = (0..n).collect();
        while let Some(i) = queue.pop_front() {
            bids += 1;
            if bids > schedule.max_bids {
                return Err(Error::NonConvergence(bids));
            }
            let row = costs.row(i);
            let mut best = usize::MAX;
            let mut best_val = f64::NEG_INFINITY;
            let mut second_val = f64::NEG_INFINITY;
            for j in 0..n {
                if row[j] >= FORBIDDEN {
                    continue;
                }
                let val = -row[j] - price[j];
                if val > best_val {
                    second_val = best_val;
                    best_val = val;
                    best = j;
                } else if val > second_val {
                    second_val = val;
                }
            }
            if best == usize::MAX {
                return Err(Error::InvalidParameter(format!(
                    "row {i} has no admissible column"
                )));
            }
            let gap = if second_val.is_finite() {
                best_val - second_val
            } else {
                cmax
            };
            price[best] += gap + eps;
            if let Some(k) = owner[best].replace(i) {
                assigned[k] = None;
                queue.push_back(k);
            }
            assigned[i] = Some(best);
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / schedule.factor).max(eps_final);
    }
    let assignment: Vec<usize> = assigned.into_iter().map(|a| a.expect("all rows assigned")).collect();
    let cost = total(costs, &assignment);
    Ok(AssignmentResult { assignment, cost })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(costs: &CostMatrix) -> f64 {
        fn rec(c: &CostMatrix, i: usize, used: &mut Vec<bool>) -> f64 {
            if i == c.n() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..c.n() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(c.get(i, j) + rec(c, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(costs, 0, &mut vec![false; costs.n()])
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CostMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.gen_range(0.0..10.0)).collect())
            .collect();
        CostMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn augment_examples() {
        let empty = augment(&[], &[], &[]).unwrap();
        assert_eq!(empty.n(), 0);
        let m = augment(&[vec![5.0]], &[1.0], &[2.0]).unwrap();
        assert_eq!(m.row(0), &[5.0, 1.0]);
        assert_eq!(m.row(1), &[2.0, 0.0]);
        assert_eq!(m.kind(0, 1), EntryKind::RealDiagonal);
        assert_eq!(m.kind(1, 1), EntryKind::DiagonalDiagonal);
        assert_eq!(solve_exact(&m).cost, 3.0);
        assert!(augment(&[vec![-1.0]], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn augment_transposes_under_swap() {
        let real = vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]];
        let real_t: Vec<Vec<f64>> = (0..3).map(|j| real.iter().map(|r| r[j]).collect()).collect();
        let a = augment(&real, &[7.0, 8.0], &[9.0, 10.0, 11.0]).unwrap();
        let b = augment(&real_t, &[9.0, 10.0, 11.0], &[7.0, 8.0]).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(a.get(i, j), b.get(j, i));
            }
        }
    }

    #[test]
    fn exact_examples() {
        let m = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let r = solve_exact(&m);
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.assignment, vec![0, 1]);
        let m = CostMatrix::from_rows(&[vec![5.0, 1.0], vec![2.0, 0.0]]).unwrap();
        let r = solve_exact(&m);
        assert_eq!(r.cost, 3.0);
        assert_eq!(r.assignment, vec![1, 0]);
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(1..=7);
            let m = random_matrix(&mut rng, n);
            assert!((solve_exact(&m).cost - brute_force(&m)).abs() <= 1e-9);
        }
    }

    #[test]
    fn auction_examples() {
        let m = CostMatrix::from_rows(&[vec![5.0, 1.0], vec![2.0, 0.0]]).unwrap();
        assert_eq!(solve_auction(&m, &AuctionSchedule::default()).unwrap().cost, 3.0);
        let z = CostMatrix::from_rows(&[vec![0.0, 9.0, 9.0], vec![9.0, 9.0, 0.0], vec![9.0, 0.0, 9.0]]).unwrap();
        let r = solve_auction(&z, &AuctionSchedule::default()).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.assignment, vec![0, 2, 1]);
    }

    #[test]
    fn auction_near_exact_on_large() {
        let schedule = AuctionSchedule::default();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, 50);
            let exact = solve_exact(&m).cost;
            let approx = solve_auction(&m, &schedule).unwrap();
            let bound = 50.0 * schedule.final_epsilon(max_finite_cost(&m));
            assert!(approx.cost <= exact + bound + 1e-9, "seed {seed}");
            assert!(approx.cost >= exact - 1e-9);
        }
    }

    #[test]
    fn auction_iteration_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_matrix(&mut rng, 20);
        let schedule = AuctionSchedule {
            max_bids: 5,
            ..AuctionSchedule::default()
        };
        assert!(matches!(solve_auction(&m, &schedule), Err(Error::NonConvergence(_))));
    }

    fn partial_brute_force(real: &[Vec<f64>], a_diag: &[f64], b_diag: &[f64]) -> f64 {
        fn rec(real: &[Vec<f64>], a: &[f64], b: &[f64], i: usize, used: &mut Vec<bool>) -> f64 {
            if i == a.len() {
                return (0..b.len()).filter(|&j| !used[j]).map(|j| b[j]).sum();
            }
            let mut best = a[i] + rec(real, a, b, i + 1, used);
            for j in 0..b.len() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(real[i][j] + rec(real, a, b, i + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(real, a_diag, b_diag, 0, &mut vec![false; b_diag.len()])
    }

    proptest! {
        #[test]
        fn augmented_optimum_is_best_partial_assignment(
            na in 0usize..=3,
            nb in 0usize..=3,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let real: Vec<Vec<f64>> = (0..na)
                .map(|_| (0..nb).map(|_| rng.gen_range(0.0..5.0)).collect())
                .collect();
            let a: Vec<f64> = (0..na).map(|_| rng.gen_range(0.0..5.0)).collect();
            let b: Vec<f64> = (0..nb).map(|_| rng.gen_range(0.0..5.0)).collect();
            let m = augment(&real, &a, &b).unwrap();
            let exact = solve_exact(&m).cost;
            prop_assert!((exact - partial_brute_force(&real, &a, &b)).abs() <= 1e-9);
        }

        #[test]
        fn exact_result_is_a_permutation(n in 1usize..12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random_matrix(&mut rng, n);
            let r = solve_exact(&m);
            let mut cols = r.assignment.clone();
            cols.sort_unstable();
            prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
            let sum: f64 = r.assignment.iter().enumerate().map(|(i, &j)| m.get(i, j)).sum();
            prop_assert_eq!(sum, r.cost);
        }
    }
}
