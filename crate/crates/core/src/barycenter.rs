//! Wasserstein barycenters of BDT ensembles by alternating assignment and update.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::check_isomorphism;
use crate::metric::{diagonal_projection, distance_prepared, mt_distance, Executor, Solver, TreeMatching};
use crate::preprocess::{prepare, MetricParams, Prepared};
use crate::tree::{bdt_to_merge_tree, Bdt, Branch, MergeTree};

/// Relative energy decrease below which the descent stops.
pub const STOP_RATIO: f64 = 0.01;
pub const MAX_ITERATIONS: usize = 500;
const TINY: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterRun {
    pub result: Bdt,
    /// Merge tree of `result`; absent when unnormalized updates broke nesting.
    pub merge_tree: Option<MergeTree>,
    pub energy_trace: Vec<f64>,
    /// Final matchings from `result` to each member.
    pub matchings: Vec<TreeMatching>,
    pub weights: Vec<f64>,
    pub init_index: usize,
}

#[derive(Serialize)]
struct RunJson<'a> {
    result: serde_json::Value,
    energy_trace: &'a [f64],
    matchings: &'a [TreeMatching],
    weights: &'a [f64],
    init_index: usize,
}

impl BarycenterRun {
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(RunJson {
            result: self.result.to_json_value(),
            energy_trace: &self.energy_trace,
            matchings: &self.matchings,
            weights: &self.weights,
            init_index: self.init_index,
        })
        .expect("run serialization")
    }

    pub fn energy(&self) -> f64 {
        *self.energy_trace.last().expect("trace is never empty")
    }
}

/// Options for [`barycenter_with`].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BarycenterOptions {
    pub weights: Option<Vec<f64>>,
    pub init_index: Option<usize>,
    pub solver: Solver,
}

pub fn uniform_weights(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::WeightError(format!(
            "{} weights for {n} members",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
        return Err(Error::WeightError("weights must lie in [0, 1]".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::WeightError(format!("weights sum to {sum}")));
    }
    Ok(())
}

/// Member whose total persistence is the (lower) median of the ensemble.
pub fn median_member(ensemble: &[Bdt]) -> usize {
    let mut idx: Vec<usize> = (0..ensemble.len()).collect();
    idx.sort_by(|&a, &b| {
        ensemble[a]
            .total_persistence()
            .total_cmp(&ensemble[b].total_persistence())
            .then(a.cmp(&b))
    });
    idx[(idx.len() - 1) / 2]
}

/// `Σ α_i W(B, B_i)²`.
pub fn frechet_energy(
    candidate: &Bdt,
    ensemble: &[Bdt],
    weights: &[f64],
    params: &MetricParams,
    solver: Solver,
) -> Result<f64> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_weights(weights, ensemble.len())?;
    let mut e = 0.0;
    for (t, &w) in ensemble.iter().zip(weights) {
        let d = mt_distance(candidate, t, params, solver)?.distance;
        e += w * d * d;
    }
    Ok(e)
}

/// Moves every candidate branch to the weighted mean of its targets and grows
/// the subtrees that members create.
pub(crate) fn update_prepared(
    cand: &Prepared,
    members: &[Prepared],
    matchings: &[TreeMatching],
    weights: &[f64],
) -> Prepared {
    let n = cand.len();
    let fwd: Vec<Vec<Option<usize>>> = matchings.iter().map(|m| m.forward(n)).collect();
    let mut moved = vec![(0.0, 0.0); n];
    let mut matched_any = vec![false; n];
    for b in 0..n {
        let p = cand.coords[b];
        let mut acc = (0.0, 0.0);
        for (i, &w) in weights.iter().enumerate() {
            let target = match fwd[i][b] {
                Some(y) => {
                    matched_any[b] = true;
                    members[i].coords[y]
                }
                None => diagonal_projection(p),
            };
            acc.0 += w * target.0;
            acc.1 += w * target.1;
        }
        moved[b] = (acc.0, acc.1.max(acc.0));
    }

    let root = cand.root();
    let scale = if cand.normalized {
        1.0
    } else {
        (moved[root].1 - moved[root].0).max(1.0)
    };
    let mut keep = vec![false; n];
    for b in cand.structure.pre_order() {
        keep[b] = match cand.parent(b) {
            None => true,
            Some(p) => keep[p] && (matched_any[b] || moved[b].1 - moved[b].0 >= TINY * scale),
        };
    }
    let mut index = vec![usize::MAX; n];
    let mut coords = Vec::new();
    let mut old = Vec::new();
    for b in 0..n {
        if keep[b] {
            index[b] = coords.len();
            coords.push(moved[b]);
            old.push(b);
        }
    }
    let mut parent: Vec<Option<usize>> = old.iter().map(|&b| cand.parent(b).map(|p| index[p])).collect();

    for (i, m) in matchings.iter().enumerate() {
        let w = weights[i];
        let member = &members[i];
        let mut bwd = vec![None; member.len()];
        for &(x, y) in &m.matched {
            bwd[y] = Some(index[x]);
        }
        let mut created = vec![false; member.len()];
        for &y in &m.created {
            created[y] = true;
        }
        for &y in &m.created {
            let py = member.parent(y).expect("roots are matched");
            if created[py] {
                continue;
            }
            let mut stack = vec![(y, bwd[py].expect("parent is matched"))];
            while let Some((z, at)) = stack.pop() {
                let q = member.coords[z];
                if w * (q.1 - q.0) <= TINY * scale {
                    continue;
                }
                let d = diagonal_projection(q);
                let id = coords.len();
                coords.push((w * q.0 + (1.0 - w) * d.0, w * q.1 + (1.0 - w) * d.1));
                parent.push(Some(at));
                for &c in member.children(z).iter().rev() {
                    stack.push((c, id));
                }
            }
        }
    }
    let branches = coords.iter().map(|&(x, y)| Branch::new(x, y)).collect();
    let structure = Bdt::unchecked_nesting(cand.structure.kind(), branches, parent)
        .expect("update keeps a rooted tree");
    Prepared::with_coords(structure, coords, cand.normalized)
}

/// One update step on raw BDTs: `matchings[i]` must come from
/// `mt_distance(candidate, members[i], params, _)`.
pub fn update_candidate(
    candidate: &Bdt,
    members: &[Bdt],
    matchings: &[TreeMatching],
    weights: &[f64],
    params: &MetricParams,
) -> Result<Bdt> {
    if members.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_weights(weights, members.len())?;
    if matchings.len() != members.len() {
        return Err(Error::MatchingMismatch(format!(
            "{} matchings for {} members",
            matchings.len(),
            members.len()
        )));
    }
    let cand = prepare(candidate, params)?;
    let prepared = members
        .iter()
        .map(|m| prepare(m, params))
        .collect::<Result<Vec<_>>>()?;
    for (p, m) in prepared.iter().zip(matchings) {
        check_isomorphism(&cand, p, m)?;
    }
    Ok(update_prepared(&cand, &prepared, matchings, weights).to_bdt())
}

fn assign(
    cand: &Prepared,
    members: &[Prepared],
    weights: &[f64],
    solver: Solver,
    exec: &Executor,
) -> Result<(Vec<TreeMatching>, f64)> {
    let parallel = exec.is_parallel();
    let matchings = exec
        .map(members, |m| distance_prepared(cand, m, solver, parallel))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let energy = matchings
        .iter()
        .zip(weights)
        .map(|(m, &w)| w * m.distance * m.distance)
        .sum();
    Ok((matchings, energy))
}

/// Barycenter with uniform weights and the median-persistence member as start.
pub fn barycenter(ensemble: &[Bdt], params: &MetricParams, solver: Solver) -> Result<BarycenterRun> {
    let options = BarycenterOptions {
        solver,
        ..BarycenterOptions::default()
    };
    barycenter_with(ensemble, params, &options, &Executor::sequential())
}

pub fn barycenter_with(
    ensemble: &[Bdt],
    params: &MetricParams,
    options: &BarycenterOptions,
    exec: &Executor,
) -> Result<BarycenterRun> {
    if ensemble.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n = ensemble.len();
    let weights = options.weights.clone().unwrap_or_else(|| uniform_weights(n));
    check_weights(&weights, n)?;
    let init_index = options.init_index.unwrap_or_else(|| median_member(ensemble));
    if init_index >= n {
        return Err(Error::InvalidParameter(format!(
            "init index {init_index} out of range for {n} members"
        )));
    }
    let members = ensemble
        .iter()
        .map(|t| prepare(t, params))
        .collect::<Result<Vec<_>>>()?;
    barycenter_from(ensemble, &members, init_index, weights, options.solver, exec)
}

pub(crate) struct Descent {
    pub cand: Prepared,
    pub matchings: Vec<TreeMatching>,
    pub trace: Vec<f64>,
    pub updated: bool,
}

/// Alternates assignment and update from `start` until the stop rule holds.
pub(crate) fn descend(
    members: &[Prepared],
    start: Prepared,
    weights: &[f64],
    solver: Solver,
    exec: &Executor,
) -> Result<Descent> {
    let mut cand = start;
    let (mut matchings, mut energy) = assign(&cand, members, weights, solver, exec)?;
    let mut trace = vec![energy];
    let mut updated = false;
    let mut iteration = 0;
    while energy > 0.0 {
        iteration += 1;
        if iteration > MAX_ITERATIONS {
            return Err(Error::NonConvergence(MAX_ITERATIONS));
        }
        let next = update_prepared(&cand, members, &matchings, weights);
        let (next_matchings, next_energy) = assign(&next, members, weights, solver, exec)?;
        cand = next;
        matchings = next_matchings;
        updated = true;
        trace.push(next_energy);
        let previous = energy;
        energy = next_energy;
        if previous - energy < STOP_RATIO * previous {
            break;
        }
    }
    Ok(Descent {
        cand,
        matchings,
        trace,
        updated,
    })
}

/// Descent started at member `init_index`, which is returned as is when no
/// update happens.
pub(crate) fn barycenter_from(
    ensemble: &[Bdt],
    members: &[Prepared],
    init_index: usize,
    weights: Vec<f64>,
    solver: Solver,
    exec: &Executor,
) -> Result<BarycenterRun> {
    let d = descend(members, members[init_index].clone(), &weights, solver, exec)?;
    let result = if d.updated {
        d.cand.to_bdt()
    } else {
        ensemble[init_index].clone()
    };
    let merge_tree = bdt_to_merge_tree(&result).ok();
    Ok(BarycenterRun {
        result,
        merge_tree,
        energy_trace: d.trace,
        matchings: d.matchings,
        weights,
        init_index,
    })
}
