//! Clustering, temporal reduction and feature tracking over BDT ensembles.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::barycenter::{descend, median_member, uniform_weights};
use crate::error::{Error, Result};
use crate::geodesic::interpolate;
use crate::metric::{distance_prepared, mt_distance, Executor, Solver, TreeMatching};
use crate::preprocess::{prepare, MetricParams, Prepared};
use crate::tree::Bdt;

const MAX_KMEANS_ITERATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    #[serde(serialize_with = "bdts")]
    pub centroids: Vec<Bdt>,
    pub iterations: usize,
    /// Σ W² from each cluster's members to its centroid.
    pub energies: Vec<f64>,
    /// Total energy after each assignment step.
    pub energy_trace: Vec<f64>,
}

fn bdts<S: serde::Serializer>(v: &[Bdt], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(Bdt::to_json_value))
}

struct Centroid {
    prepared: Prepared,
    /// Member the centroid still equals, if any.
    source: Option<usize>,
}

impl Centroid {
    fn member(members: &[Prepared], i: usize) -> Self {
        Centroid {
            prepared: members[i].clone(),
            source: Some(i),
        }
    }
}

fn distances_to(
    centroids: &[Centroid],
    members: &[Prepared],
    solver: Solver,
    exec: &Executor,
) -> Result<Vec<Vec<f64>>> {
    let pairs: Vec<(usize, usize)> = (0..members.len())
        .flat_map(|i| (0..centroids.len()).map(move |c| (i, c)))
        .collect();
    let values = exec.map(&pairs, |&(i, c)| {
        distance_prepared(&members[i], &centroids[c].prepared, solver, false).map(|m| m.distance)
    });
    let mut out = vec![vec![0.0; centroids.len()]; members.len()];
    for (&(i, c), v) in pairs.iter().zip(values) {
        out[i][c] = v?;
    }
    Ok(out)
}

/// k-means++ seeding driven by W distances.
fn seed_centroids(
    members: &[Prepared],
    k: usize,
    rng: &mut ChaCha8Rng,
    solver: Solver,
    exec: &Executor,
) -> Result<Vec<usize>> {
    let n = members.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2 = vec![f64::INFINITY; n];
    while chosen.len() < k {
        let last = *chosen.last().unwrap();
        let ds = exec.map(members, |m| distance_prepared(m, &members[last], solver, false).map(|r| r.distance));
        for (i, d) in ds.into_iter().enumerate() {
            let d = d?;
            d2[i] = d2[i].min(d * d);
        }
        for &c in &chosen {
            d2[c] = 0.0;
        }
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
    }
    Ok(chosen)
}

fn argmin(row: &[f64]) -> usize {
    let mut best = 0;
    for (c, &d) in row.iter().enumerate() {
        if d < row[best] {
            best = c;
        }
    }
    best
}

/// Fresh barycenter of the cluster, or a descent from the current centroid
/// when that reaches a lower energy.
fn update_centroid(
    members: &[Prepared],
    ensemble: &[Bdt],
    cluster: &[usize],
    current: &Centroid,
    solver: Solver,
    exec: &Executor,
) -> Result<Centroid> {
    let sub: Vec<Prepared> = cluster.iter().map(|&i| members[i].clone()).collect();
    let raw: Vec<Bdt> = cluster.iter().map(|&i| ensemble[i].clone()).collect();
    let weights = uniform_weights(sub.len());
    let local = median_member(&raw);
    let fresh = descend(&sub, sub[local].clone(), &weights, solver, exec)?;
    let fresh_energy = *fresh.trace.last().unwrap();
    let current_energy = {
        let ds = exec.map(&sub, |m| distance_prepared(m, &current.prepared, solver, false).map(|r| r.distance));
        let mut e = 0.0;
        for (d, w) in ds.into_iter().zip(&weights) {
            let d = d?;
            e += w * d * d;
        }
        e
    };
    if fresh_energy <= current_energy {
        return Ok(Centroid {
            source: (!fresh.updated).then_some(cluster[local]),
            prepared: fresh.cand,
        });
    }
    let cont = descend(&sub, current.prepared.clone(), &weights, solver, exec)?;
    Ok(Centroid {
        source: if cont.updated { None } else { current.source },
        prepared: cont.cand,
    })
}

pub fn kmeans(ensemble: &[Bdt], k: usize, params: &MetricParams, seed: u64, solver: Solver) -> Result<ClusteringResult> {
    kmeans_with(ensemble, k, params, seed, solver, &Executor::sequential())
}

pub fn kmeans_with(
    ensemble: &[Bdt],
    k: usize,
    params: &MetricParams,
    seed: u64,
    solver: Solver,
    exec: &Executor,
) -> Result<ClusteringResult> {
    let n = ensemble.len();
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let members = ensemble
        .iter()
        .map(|t| prepare(t, params))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Centroid> = seed_centroids(&members, k, &mut rng, solver, exec)?
        .into_iter()
        .map(|i| Centroid::member(&members, i))
        .collect();

    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let dist = loop {
        iterations += 1;
        if iterations > MAX_KMEANS_ITERATIONS {
            return Err(Error::NonConvergence(MAX_KMEANS_ITERATIONS));
        }
        let dist = distances_to(&centroids, &members, solver, exec)?;
        let mut next: Vec<usize> = dist.iter().map(|row| argmin(row)).collect();
        // An empty cluster takes the member farthest from its own centroid.
        for c in 0..k {
            if next.contains(&c) {
                continue;
            }
            let mut sizes = vec![0usize; k];
            for &a in &next {
                sizes[a] += 1;
            }
            let far = (0..n)
                .filter(|&i| sizes[next[i]] > 1)
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if dist[b][next[b]] >= dist[i][next[i]] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves a cluster with two members");
            next[far] = c;
            centroids[c] = Centroid::member(&members, far);
        }
        let dist = distances_to(&centroids, &members, solver, exec)?;
        trace.push((0..n).map(|i| dist[i][next[i]].powi(2)).sum::<f64>());
        if next == assignments {
            break dist;
        }
        let changed: Vec<bool> = (0..k)
            .map(|c| {
                assignments.is_empty()
                    || (0..n).any(|i| (assignments[i] == c) != (next[i] == c))
            })
            .collect();
        assignments = next;
        for c in 0..k {
            if !changed[c] {
                continue;
            }
            let cluster: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
            centroids[c] = update_centroid(&members, ensemble, &cluster, &centroids[c], solver, exec)?;
        }
    };

    let mut energies = vec![0.0; k];
    for i in 0..n {
        energies[assignments[i]] += dist[i][assignments[i]].powi(2);
    }
    let centroids = centroids
        .into_iter()
        .map(|c| match c.source {
            Some(i) => ensemble[i].clone(),
            None => c.prepared.to_bdt(),
        })
        .collect();
    Ok(ClusteringResult {
        assignments,
        centroids,
        iterations,
        energies,
        energy_trace: trace,
    })
}

fn relabel(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = HashMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Joint counts with both marginals.
type Contingency = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>);

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::InvalidParameter("labels must not be empty".into()));
    }
    let (a, ka) = relabel(a);
    let (b, kb) = relabel(b);
    let mut table = vec![vec![0.0; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1.0;
    }
    let rows = table.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    Ok((table, rows, cols))
}

fn entropy(counts: &[f64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0.0)
        .map(|&c| -(c / n) * (c / n).ln())
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
pub fn nmi(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    let (table, rows, cols) = contingency(labels_a, labels_b)?;
    let n = labels_a.len() as f64;
    let (ha, hb) = (entropy(&rows, n), entropy(&cols, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0.0 {
                mi += (c / n) * (c * n / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

fn pairs(x: f64) -> f64 {
    x * (x - 1.0) / 2.0
}

/// Adjusted Rand index.
pub fn ari(labels_a: &[usize], labels_b: &[usize]) -> Result<f64> {
    let (table, rows, cols) = contingency(labels_a, labels_b)?;
    let n = labels_a.len() as f64;
    let index: f64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sa: f64 = rows.iter().map(|&c| pairs(c)).sum();
    let sb: f64 = cols.iter().map(|&c| pairs(c)).sum();
    let expected = if n > 1.0 { sa * sb / pairs(n) } else { 0.0 };
    let max = (sa + sb) / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Frame reconstructed by interpolation between two key frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reconstruction {
    pub index: usize,
    pub from: usize,
    pub to: usize,
    pub alpha: f64,
    /// W between the frame and its reconstruction.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionResult {
    pub kept: Vec<usize>,
    /// Frames in the order they were removed.
    pub removed: Vec<usize>,
    /// d_S after each removal.
    pub trace: Vec<f64>,
    pub reconstructions: Vec<Reconstruction>,
}

fn check_key_frames(n: usize, kept: &[usize]) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if kept.first() != Some(&0) || kept.last() != Some(&(n - 1)) {
        return Err(Error::InvalidKeyFrames(format!(
            "key frames must start at 0 and end at {}",
            n - 1
        )));
    }
    if kept.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidKeyFrames("key frames must be strictly increasing".into()));
    }
    Ok(())
}

/// Memoized reconstruction errors of the frames strictly between two key frames.
struct Segments<'a> {
    seq: &'a [Bdt],
    params: &'a MetricParams,
    solver: Solver,
    cache: HashMap<(usize, usize), Vec<f64>>,
}

impl<'a> Segments<'a> {
    fn new(seq: &'a [Bdt], params: &'a MetricParams, solver: Solver) -> Self {
        Segments {
            seq,
            params,
            solver,
            cache: HashMap::new(),
        }
    }

    fn errors(seq: &[Bdt], params: &MetricParams, solver: Solver, j: usize, k: usize) -> Result<Vec<f64>> {
        if k <= j + 1 {
            return Ok(Vec::new());
        }
        let m = mt_distance(&seq[j], &seq[k], params, solver)?;
        (j + 1..k)
            .map(|i| {
                let alpha = (i - j) as f64 / (k - j) as f64;
                let b = interpolate(&seq[j], &seq[k], &m, alpha, params)?.bdt;
                mt_distance(&seq[i], &b, params, solver).map(|r| r.distance)
            })
            .collect()
    }

    fn fill(&mut self, spans: &[(usize, usize)], exec: &Executor) -> Result<()> {
        let todo: Vec<(usize, usize)> = spans
            .iter()
            .copied()
            .filter(|s| !self.cache.contains_key(s))
            .collect();
        let (seq, params, solver) = (self.seq, self.params, self.solver);
        let values = exec.map(&todo, |&(j, k)| Self::errors(seq, params, solver, j, k));
        for (s, v) in todo.into_iter().zip(values) {
            self.cache.insert(s, v?);
        }
        Ok(())
    }

    /// d_S for the given key frames; spans must be filled.
    fn total(&self, kept: &[usize]) -> f64 {
        kept.windows(2)
            .flat_map(|w| self.cache[&(w[0], w[1])].iter())
            .map(|d| d * d)
            .sum::<f64>()
            .sqrt()
    }
}

fn spans(kept: &[usize]) -> Vec<(usize, usize)> {
    kept.windows(2).map(|w| (w[0], w[1])).collect()
}

/// Distance between a sequence and its reconstruction from `kept` key frames.
pub fn sequence_distance(seq: &[Bdt], kept: &[usize], params: &MetricParams, solver: Solver) -> Result<f64> {
    check_key_frames(seq.len(), kept)?;
    let mut segs = Segments::new(seq, params, solver);
    segs.fill(&spans(kept), &Executor::sequential())?;
    Ok(segs.total(kept))
}

pub fn temporal_reduce(seq: &[Bdt], target: usize, params: &MetricParams, solver: Solver) -> Result<ReductionResult> {
    temporal_reduce_with(seq, target, params, solver, &Executor::sequential())
}

/// Greedily drops the frame whose removal gives the lowest d_S, ties to the
/// earlier frame.
pub fn temporal_reduce_with(
    seq: &[Bdt],
    target: usize,
    params: &MetricParams,
    solver: Solver,
    exec: &Executor,
) -> Result<ReductionResult> {
    let n = seq.len();
    if target < 2 || target > n {
        return Err(Error::InvalidParameter(format!(
            "target size {target} must lie in [2, {n}]"
        )));
    }
    let mut segs = Segments::new(seq, params, solver);
    let mut kept: Vec<usize> = (0..n).collect();
    let mut removed = Vec::new();
    let mut trace = Vec::new();
    while kept.len() > target {
        let merged: Vec<(usize, usize)> = (1..kept.len() - 1).map(|p| (kept[p - 1], kept[p + 1])).collect();
        segs.fill(&merged, exec)?;
        let mut best: Option<(usize, f64)> = None;
        for p in 1..kept.len() - 1 {
            let mut candidate = kept.clone();
            candidate.remove(p);
            segs.fill(&spans(&candidate), exec)?;
            let d = segs.total(&candidate);
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((p, d));
            }
        }
        let (p, d) = best.expect("at least one interior frame");
        removed.push(kept.remove(p));
        trace.push(d);
    }
    segs.fill(&spans(&kept), exec)?;
    let mut reconstructions = Vec::new();
    for (j, k) in spans(&kept) {
        for (off, &distance) in segs.cache[&(j, k)].iter().enumerate() {
            let index = j + 1 + off;
            reconstructions.push(Reconstruction {
                index,
                from: j,
                to: k,
                alpha: (index - j) as f64 / (k - j) as f64,
                distance,
            });
        }
    }
    Ok(ReductionResult {
        kept,
        removed,
        trace,
        reconstructions,
    })
}

/// Matchings between consecutive frames.
pub fn track(seq: &[Bdt], params: &MetricParams, solver: Solver) -> Result<Vec<TreeMatching>> {
    track_with(seq, params, solver, &Executor::sequential())
}

pub fn track_with(seq: &[Bdt], params: &MetricParams, solver: Solver, exec: &Executor) -> Result<Vec<TreeMatching>> {
    if seq.len() < 2 {
        return Err(Error::InvalidParameter("tracking needs at least two frames".into()));
    }
    let prepared = seq
        .iter()
        .map(|t| prepare(t, params))
        .collect::<Result<Vec<_>>>()?;
    let steps: Vec<usize> = (0..seq.len() - 1).collect();
    exec.map(&steps, |&i| distance_prepared(&prepared[i], &prepared[i + 1], solver, false))
        .into_iter()
        .collect()
}
