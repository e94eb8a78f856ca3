//! Wasserstein distances between persistence diagrams and between merge trees.

mod diagram;
pub(crate) mod engine;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::{prepare, MetricParams, Prepared};
use crate::tree::Bdt;

pub use diagram::{
    diagonal_cost, diagonal_projection, diagram_distance, essential_diagram_distance, point_cost, DiagramMatching,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Exact,
    Auction,
}

/// Rooted partial isomorphism between two BDTs with its cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMatching {
    pub distance: f64,
    pub matched: Vec<(usize, usize)>,
    pub destroyed: Vec<usize>,
    pub created: Vec<usize>,
}

impl TreeMatching {
    /// Partner of each branch of the first tree, if matched.
    pub fn forward(&self, len: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; len];
        for &(i, j) in &self.matched {
            out[i] = Some(j);
        }
        out
    }

    /// Checks that every branch of both trees is accounted for exactly once.
    pub fn validate(&self, len_a: usize, len_b: usize) -> Result<()> {
        let mut seen_a = vec![false; len_a];
        let mut seen_b = vec![false; len_b];
        let mark = |seen: &mut Vec<bool>, i: usize, side: &str| -> Result<()> {
            if i >= seen.len() {
                return Err(Error::MatchingMismatch(format!("unknown branch {i} in {side} tree")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::MatchingMismatch(format!("branch {i} of {side} tree used twice")));
            }
            Ok(())
        };
        for &(i, j) in &self.matched {
            mark(&mut seen_a, i, "first")?;
            mark(&mut seen_b, j, "second")?;
        }
        for &i in &self.destroyed {
            mark(&mut seen_a, i, "first")?;
        }
        for &j in &self.created {
            mark(&mut seen_b, j, "second")?;
        }
        if seen_a.iter().chain(&seen_b).any(|s| !s) {
            return Err(Error::MatchingMismatch("some branches are not covered".into()));
        }
        Ok(())
    }
}

/// Subtree and forest distances for every depth-compatible pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTables {
    /// `tree[i][j]`: distance between the subtrees rooted at i and j; infinite across depths.
    pub tree: Vec<Vec<f64>>,
    /// `forest[i][j]`: distance between the child forests of i and j.
    pub forest: Vec<Vec<f64>>,
}

/// Thread pool shared by all distance computations of one run.
#[derive(Debug)]
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
    threads: usize,
}

impl Executor {
    pub fn sequential() -> Self {
        Executor {
            pool: None,
            threads: 1,
        }
    }

    pub fn new(threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(Error::InvalidParameter("thread count must be positive".into()));
        }
        if threads == 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Executor {
            pool: Some(pool),
            threads,
        })
    }

    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn is_parallel(&self) -> bool {
        self.pool.is_some()
    }

    pub(crate) fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// Maps `f` over `items`, in parallel on the pool when there is one.
    pub(crate) fn map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        use rayon::prelude::*;
        match &self.pool {
            Some(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            None => items.iter().map(f).collect(),
        }
    }
}

impl Default for Executor {
    fn default() -> Self {
        Self::sequential()
    }
}

/// Distance between preprocessed trees; matching ids are the trees' own.
pub(crate) fn distance_prepared(a: &Prepared, b: &Prepared, solver: Solver, parallel: bool) -> Result<TreeMatching> {
    let engine = engine::Engine::new(a, b, solver);
    let tables = if parallel {
        engine.fill_parallel()?
    } else {
        engine.fill_sequential()?
    };
    engine.extract(&tables)
}

/// `(γ(b→∅)² + Σ_k subtree_empty_distance(b_k)²)^½` in raw coordinates.
pub fn subtree_empty_distance(bdt: &Bdt, b: usize) -> f64 {
    let t = Prepared::with_coords(bdt.clone(), bdt.pairs(), false);
    engine::empty_costs(&t)[b].sqrt()
}

/// W^T_2 between two BDTs, with the matching in the inputs' branch ids.
pub fn mt_distance(a: &Bdt, b: &Bdt, params: &MetricParams, solver: Solver) -> Result<TreeMatching> {
    let (pa, pb) = (prepare(a, params)?, prepare(b, params)?);
    distance_prepared(&pa, &pb, solver, false)
}

/// Same result as [`mt_distance`], evaluated by a task pool of `threads` workers.
pub fn mt_distance_parallel(
    a: &Bdt,
    b: &Bdt,
    params: &MetricParams,
    solver: Solver,
    threads: usize,
) -> Result<TreeMatching> {
    let exec = Executor::new(threads)?;
    mt_distance_with(a, b, params, solver, &exec)
}

pub fn mt_distance_with(
    a: &Bdt,
    b: &Bdt,
    params: &MetricParams,
    solver: Solver,
    exec: &Executor,
) -> Result<TreeMatching> {
    let (pa, pb) = (prepare(a, params)?, prepare(b, params)?);
    let parallel = exec.is_parallel();
    exec.install(|| distance_prepared(&pa, &pb, solver, parallel))
}

pub fn distance_tables(a: &Bdt, b: &Bdt, params: &MetricParams, solver: Solver) -> Result<DistanceTables> {
    let (pa, pb) = (prepare(a, params)?, prepare(b, params)?);
    let engine = engine::Engine::new(&pa, &pb, solver);
    let tables = engine.fill_sequential()?;
    let reshape = |v: &[f64]| -> Vec<Vec<f64>> {
        v.chunks(tables.nb)
            .map(|row| {
                row.iter()
                    .map(|&x| if x.is_nan() { f64::INFINITY } else { x.max(0.0).sqrt() })
                    .collect()
            })
            .collect()
    };
    Ok(DistanceTables {
        tree: reshape(&tables.tree),
        forest: reshape(&tables.forest),
    })
}

/// Pairwise distance matrix of an ensemble.
pub fn distance_matrix(trees: &[Bdt], params: &MetricParams, solver: Solver, exec: &Executor) -> Result<Vec<Vec<f64>>> {
    let prepared = trees
        .iter()
        .map(|t| prepare(t, params))
        .collect::<Result<Vec<_>>>()?;
    let n = trees.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = exec.map(&pairs, |&(i, j)| {
        distance_prepared(&prepared[i], &prepared[j], solver, false).map(|m| m.distance)
    });
    let mut out = vec![vec![0.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        let v = v?;
        out[i][j] = v;
        out[j][i] = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeKind;

    fn bdt(pairs: &[(f64, f64)], arcs: &[(usize, usize)]) -> Bdt {
        Bdt::from_pairs(TreeKind::Join, pairs, arcs).unwrap()
    }

    #[test]
    fn empty_distance_examples() {
        let leaf = bdt(&[(1.0, 3.0)], &[]);
        assert!((subtree_empty_distance(&leaf, 0) - 2f64.sqrt()).abs() < 1e-15);
        let flat = bdt(&[(2.0, 2.0)], &[]);
        assert_eq!(subtree_empty_distance(&flat, 0), 0.0);
        let two = bdt(&[(0.0, 4.0), (1.0, 3.0)], &[(0, 1)]);
        assert!((subtree_empty_distance(&two, 0) - 10f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn identical_trees() {
        let b = bdt(&[(0.0, 10.0), (2.0, 5.0), (3.0, 4.0), (6.0, 9.0)], &[(0, 1), (1, 2), (0, 3)]);
        let m = mt_distance(&b, &b, &MetricParams::default(), Solver::Exact).unwrap();
        assert_eq!(m.distance, 0.0);
        assert_eq!(m.matched, vec![(0, 0), (1, 1), (2, 2), (3, 3)]);
        assert!(m.destroyed.is_empty() && m.created.is_empty());
    }

    #[test]
    fn single_branches_forced_roots() {
        let a = bdt(&[(0.0, 4.0)], &[]);
        let b = bdt(&[(0.0, 2.0)], &[]);
        let m = mt_distance(&a, &b, &MetricParams::no_preprocessing(false), Solver::Exact).unwrap();
        assert_eq!(m.distance, 2.0);
        assert_eq!(m.matched, vec![(0, 0)]);
    }

    #[test]
    fn normalized_children_match() {
        let a = bdt(&[(0.0, 10.0), (2.0, 5.0)], &[(0, 1)]);
        let b = bdt(&[(0.0, 10.0), (4.0, 6.0)], &[(0, 1)]);
        let m = mt_distance(&a, &b, &MetricParams::no_preprocessing(true), Solver::Exact).unwrap();
        assert!((m.distance - 0.05f64.sqrt()).abs() < 1e-12);
        assert_eq!(m.matched, vec![(0, 0), (1, 1)]);
        let t = distance_tables(&a, &b, &MetricParams::no_preprocessing(true), Solver::Exact).unwrap();
        assert_eq!(t.tree[0][1], f64::INFINITY);
        assert!((t.tree[0][0] - m.distance).abs() < 1e-15);
    }

    #[test]
    fn parallel_equals_sequential() {
        let a = bdt(&[(0.0, 10.0), (2.0, 5.0), (3.0, 4.0), (6.0, 9.0)], &[(0, 1), (1, 2), (0, 3)]);
        let b = bdt(&[(0.0, 8.0), (1.0, 7.0), (2.0, 3.0)], &[(0, 1), (0, 2)]);
        let p = MetricParams::no_preprocessing(true);
        let s = mt_distance(&a, &b, &p, Solver::Exact).unwrap();
        for threads in [1, 2, 4] {
            let q = mt_distance_parallel(&a, &b, &p, Solver::Exact, threads).unwrap();
            assert_eq!(q.distance.to_bits(), s.distance.to_bits());
            assert_eq!(q, s);
        }
    }

    #[test]
    fn matching_validation() {
        let m = TreeMatching {
            distance: 0.0,
            matched: vec![(0, 0)],
            destroyed: vec![1],
            created: vec![],
        };
        assert!(m.validate(2, 1).is_ok());
        assert!(m.validate(3, 1).is_err());
        assert!(m.validate(2, 2).is_err());
        assert!(m.validate(1, 1).is_err());
    }
}
