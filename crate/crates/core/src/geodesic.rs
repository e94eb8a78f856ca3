//! Geodesics between BDTs by linear interpolation of an optimal matching.

use crate::error::{Error, Result};
use crate::metric::{diagonal_projection, mt_distance, Solver, TreeMatching};
use crate::preprocess::{denormalized_pairs, prepare, MetricParams, Prepared};
use crate::tree::{Bdt, Branch};

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicSample {
    pub alpha: f64,
    pub bdt: Bdt,
    pub matching: TreeMatching,
}

fn lerp(p: (f64, f64), q: (f64, f64), alpha: f64) -> (f64, f64) {
    ((1.0 - alpha) * p.0 + alpha * q.0, (1.0 - alpha) * p.1 + alpha * q.1)
}

/// Checks that `m` is a rooted partial isomorphism between the prepared trees.
pub(crate) fn check_isomorphism(a: &Prepared, b: &Prepared, m: &TreeMatching) -> Result<()> {
    m.validate(a.len(), b.len())?;
    let fwd = m.forward(a.len());
    if fwd[a.root()] != Some(b.root()) {
        return Err(Error::MatchingMismatch("roots are not matched".into()));
    }
    for &(x, y) in &m.matched {
        if x == a.root() {
            continue;
        }
        let (px, py) = (a.parent(x), b.parent(y));
        match (px, py) {
            (Some(px), Some(py)) if fwd[px] == Some(py) => {}
            _ => {
                return Err(Error::MatchingMismatch(format!(
                    "pair ({x}, {y}) does not preserve parents"
                )))
            }
        }
    }
    Ok(())
}

/// Tree at `alpha` along the geodesic, in the coordinates of the prepared inputs.
pub(crate) fn interpolate_prepared(
    a: &Prepared,
    b: &Prepared,
    m: &TreeMatching,
    alpha: f64,
) -> Result<Bdt> {
    let fwd = m.forward(a.len());
    let mut bwd = vec![None; b.len()];
    for &(x, y) in &m.matched {
        bwd[y] = Some(x);
    }
    let mut coords = Vec::with_capacity(a.len() + m.created.len());
    let mut parent: Vec<Option<usize>> = Vec::with_capacity(a.len() + m.created.len());
    for x in 0..a.len() {
        let p = a.coords[x];
        let target = match fwd[x] {
            Some(y) => b.coords[y],
            None => diagonal_projection(p),
        };
        coords.push(lerp(p, target, alpha));
        parent.push(a.parent(x));
    }
    let mut image = bwd.clone();
    for &y in &m.created {
        image[y] = Some(coords.len());
        let q = b.coords[y];
        coords.push(lerp(diagonal_projection(q), q, alpha));
        parent.push(None);
    }
    for &y in &m.created {
        let py = b.parent(y).expect("roots are matched");
        parent[image[y].unwrap()] = image[py];
    }
    let branches = coords.iter().map(|&(x, y)| Branch::new(x, y)).collect();
    let structure = Bdt::unchecked_nesting(a.structure.kind(), branches, parent)?;
    if a.normalized {
        let pairs = denormalized_pairs(&structure, &coords);
        Ok(structure.with_pairs(&pairs))
    } else {
        Ok(structure)
    }
}

/// Point at `alpha` on the geodesic from `a` to `b` along `matching`.
///
/// `alpha = 0` and `alpha = 1` return the inputs themselves. Interior samples
/// carry the preprocessed structure of `a` plus the branches created from `b`.
pub fn interpolate(
    a: &Bdt,
    b: &Bdt,
    matching: &TreeMatching,
    alpha: f64,
    params: &MetricParams,
) -> Result<GeodesicSample> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let (pa, pb) = (prepare(a, params)?, prepare(b, params)?);
    check_isomorphism(&pa, &pb, matching)?;
    let bdt = if alpha == 0.0 {
        a.clone()
    } else if alpha == 1.0 {
        b.clone()
    } else {
        interpolate_prepared(&pa, &pb, matching, alpha)?
    };
    Ok(GeodesicSample {
        alpha,
        bdt,
        matching: matching.clone(),
    })
}

/// Samples the geodesic at each alpha from one optimal matching.
pub fn geodesic(
    a: &Bdt,
    b: &Bdt,
    alphas: &[f64],
    params: &MetricParams,
    solver: Solver,
) -> Result<Vec<GeodesicSample>> {
    if let Some(&bad) = alphas.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::InvalidAlpha(bad));
    }
    let m = mt_distance(a, b, params, solver)?;
    alphas
        .iter()
        .map(|&alpha| interpolate(a, b, &m, alpha, params))
        .collect()
}
