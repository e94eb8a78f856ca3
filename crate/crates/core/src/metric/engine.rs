//! Bottom-up evaluation of the subtree and forest tables over depth-matched pairs.

use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;

use rayon::prelude::*;

use crate::assignment::{augment, solve_auction, solve_exact, AuctionSchedule, AssignmentResult, CostMatrix};
use crate::error::Result;
use crate::metric::{Solver, TreeMatching};
use crate::preprocess::Prepared;

pub(crate) fn match_cost(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0) * (a.0 - b.0) + (a.1 - b.1) * (a.1 - b.1)
}

/// Squared distance of a branch to its diagonal projection.
pub(crate) fn delete_cost(a: (f64, f64)) -> f64 {
    let p = a.1 - a.0;
    p * p / 2.0
}

pub(crate) fn solve(solver: Solver, costs: &CostMatrix) -> Result<AssignmentResult> {
    match solver {
        Solver::Exact => Ok(solve_exact(costs)),
        Solver::Auction => solve_auction(costs, &AuctionSchedule::default()),
    }
}

/// Squared cost of deleting every subtree, indexed by subtree root.
pub(crate) fn empty_costs(t: &Prepared) -> Vec<f64> {
    let mut e = vec![0.0; t.len()];
    let order = t.structure.pre_order();
    for &b in order.iter().rev() {
        let mut s = delete_cost(t.coords[b]);
        for &c in t.children(b) {
            s += e[c];
        }
        e[b] = s;
    }
    e
}

pub(crate) struct Engine<'a> {
    pub a: &'a Prepared,
    pub b: &'a Prepared,
    pub ea: Vec<f64>,
    pub eb: Vec<f64>,
    pub solver: Solver,
}

pub(crate) enum Forest {
    Deleted,
    Inserted,
    Solved(AssignmentResult),
}

/// Squared subtree and forest distances; NaN where depths differ.
pub(crate) struct Tables {
    pub nb: usize,
    pub tree: Vec<f64>,
    pub forest: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub fn new(a: &'a Prepared, b: &'a Prepared, solver: Solver) -> Self {
        Engine {
            a,
            b,
            ea: empty_costs(a),
            eb: empty_costs(b),
            solver,
        }
    }

    /// Forest assignment between the children of `x` and `y`.
    fn forest(&self, x: usize, y: usize, tree: impl Fn(usize, usize) -> f64) -> Result<(f64, Forest)> {
        let (cx, cy) = (self.a.children(x), self.b.children(y));
        if cy.is_empty() {
            return Ok((cx.iter().map(|&c| self.ea[c]).sum(), Forest::Deleted));
        }
        if cx.is_empty() {
            return Ok((cy.iter().map(|&c| self.eb[c]).sum(), Forest::Inserted));
        }
        let real: Vec<Vec<f64>> = cx
            .iter()
            .map(|&i| cy.iter().map(|&j| tree(i, j)).collect())
            .collect();
        let del: Vec<f64> = cx.iter().map(|&c| self.ea[c]).collect();
        let ins: Vec<f64> = cy.iter().map(|&c| self.eb[c]).collect();
        let costs = augment(&real, &del, &ins)?;
        let result = solve(self.solver, &costs)?;
        Ok((result.cost, Forest::Solved(result)))
    }

    fn cell(&self, x: usize, y: usize, tree: impl Fn(usize, usize) -> f64) -> Result<(f64, f64)> {
        let (f, _) = self.forest(x, y, tree)?;
        Ok((match_cost(self.a.coords[x], self.b.coords[y]) + f, f))
    }

    fn levels(t: &Prepared) -> Vec<Vec<usize>> {
        let mut levels: Vec<Vec<usize>> = Vec::new();
        for b in 0..t.len() {
            let d = t.depth[b];
            if levels.len() <= d {
                levels.resize(d + 1, Vec::new());
            }
            levels[d].push(b);
        }
        levels
    }

    pub fn fill_sequential(&self) -> Result<Tables> {
        let nb = self.b.len();
        let mut tree = vec![f64::NAN; self.a.len() * nb];
        let mut forest = vec![f64::NAN; self.a.len() * nb];
        let (la, lb) = (Self::levels(self.a), Self::levels(self.b));
        for d in (0..la.len().min(lb.len())).rev() {
            for &x in &la[d] {
                for &y in &lb[d] {
                    let (t, f) = self.cell(x, y, |i, j| tree[i * nb + j])?;
                    tree[x * nb + y] = t;
                    forest[x * nb + y] = f;
                }
            }
        }
        Ok(Tables { nb, tree, forest })
    }

    /// Task-parallel fill: each ready pair runs on the pool, and the child
    /// pair that completes last goes on to evaluate its parent pair.
    pub fn fill_parallel(&self) -> Result<Tables> {
        let (na, nb) = (self.a.len(), self.b.len());
        let nan = f64::NAN.to_bits();
        let tree: Vec<AtomicU64> = (0..na * nb).map(|_| AtomicU64::new(nan)).collect();
        let forest: Vec<AtomicU64> = (0..na * nb).map(|_| AtomicU64::new(nan)).collect();
        let pending: Vec<AtomicUsize> = (0..na * nb)
            .map(|k| {
                let (x, y) = (k / nb, k % nb);
                AtomicUsize::new(self.a.children(x).len() * self.b.children(y).len())
            })
            .collect();
        let mut ready = Vec::new();
        for x in 0..na {
            for y in 0..nb {
                if self.a.depth[x] == self.b.depth[y]
                    && (self.a.children(x).is_empty() || self.b.children(y).is_empty())
                {
                    ready.push((x, y));
                }
            }
        }
        let failure: Mutex<Option<crate::Error>> = Mutex::new(None);
        ready.par_iter().for_each(|&(mut x, mut y)| loop {
            let read = |i: usize, j: usize| f64::from_bits(tree[i * nb + j].load(Ordering::Acquire));
            match self.cell(x, y, read) {
                Ok((t, f)) => {
                    tree[x * nb + y].store(t.to_bits(), Ordering::Release);
                    forest[x * nb + y].store(f.to_bits(), Ordering::Release);
                }
                Err(e) => {
                    failure.lock().expect("error slot").get_or_insert(e);
                    return;
                }
            }
            let (Some(px), Some(py)) = (self.a.parent(x), self.b.parent(y)) else {
                return;
            };
            if pending[px * nb + py].fetch_sub(1, Ordering::AcqRel) != 1 {
                return;
            }
            x = px;
            y = py;
        });
        if let Some(e) = failure.into_inner().expect("error slot") {
            return Err(e);
        }
        let unpack = |v: Vec<AtomicU64>| v.into_iter().map(|c| f64::from_bits(c.into_inner())).collect();
        Ok(Tables {
            nb,
            tree: unpack(tree),
            forest: unpack(forest),
        })
    }

    /// Optimal matching read back from filled tables.
    pub fn extract(&self, tables: &Tables) -> Result<TreeMatching> {
        let nb = tables.nb;
        let (ra, rb) = (self.a.root(), self.b.root());
        let mut out = TreeMatching {
            distance: tables.tree[ra * nb + rb].max(0.0).sqrt(),
            matched: Vec::new(),
            destroyed: Vec::new(),
            created: Vec::new(),
        };
        let mut stack = vec![(ra, rb)];
        while let Some((x, y)) = stack.pop() {
            out.matched.push((x, y));
            let (cx, cy) = (self.a.children(x), self.b.children(y));
            match self.forest(x, y, |i, j| tables.tree[i * nb + j])?.1 {
                Forest::Deleted => {
                    for &c in cx {
                        out.destroyed.extend(self.a.structure.subtree(c));
                    }
                }
                Forest::Inserted => {
                    for &c in cy {
                        out.created.extend(self.b.structure.subtree(c));
                    }
                }
                Forest::Solved(result) => {
                    let mut used = vec![false; cy.len()];
                    for (i, &j) in result.assignment.iter().enumerate().take(cx.len()) {
                        if j < cy.len() {
                            used[j] = true;
                            stack.push((cx[i], cy[j]));
                        } else {
                            out.destroyed.extend(self.a.structure.subtree(cx[i]));
                        }
                    }
                    for (j, &c) in cy.iter().enumerate() {
                        if !used[j] {
                            out.created.extend(self.b.structure.subtree(c));
                        }
                    }
                }
            }
        }
        out.matched.sort_unstable();
        out.destroyed.sort_unstable();
        out.created.sort_unstable();
        Ok(out)
    }
}
