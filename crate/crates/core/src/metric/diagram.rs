use serde::{Deserialize, Serialize};

use crate::assignment::{augment, solve_exact};
use crate::error::{Error, Result};

/// Optimal partial matching between two persistence diagrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramMatching {
    pub distance: f64,
    pub matched: Vec<(usize, usize)>,
    /// Points of the first diagram sent to their diagonal projection.
    pub deleted: Vec<usize>,
    /// Points of the second diagram coming from the diagonal.
    pub inserted: Vec<usize>,
}

pub fn diagonal_projection(p: (f64, f64)) -> (f64, f64) {
    let m = (p.0 + p.1) / 2.0;
    (m, m)
}

fn on_diagonal(p: (f64, f64)) -> bool {
    p.0 == p.1
}

/// `d_q(p, r)^q`, zero when both points lie on the diagonal.
pub fn point_cost(p: (f64, f64), r: (f64, f64), q: f64) -> f64 {
    if on_diagonal(p) && on_diagonal(r) {
        return 0.0;
    }
    (p.0 - r.0).abs().powf(q) + (p.1 - r.1).abs().powf(q)
}

/// `d_q(p, Δ(p))^q`.
pub fn diagonal_cost(p: (f64, f64), q: f64) -> f64 {
    2.0 * ((p.1 - p.0).abs() / 2.0).powf(q)
}

/// L^q Wasserstein distance between diagrams given as (birth, death) points.
pub fn diagram_distance(a: &[(f64, f64)], b: &[(f64, f64)], q: f64) -> Result<DiagramMatching> {
    if !(q >= 1.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("q = {q} must be at least 1")));
    }
    let real: Vec<Vec<f64>> = a
        .iter()
        .map(|&p| b.iter().map(|&r| point_cost(p, r, q)).collect())
        .collect();
    let del: Vec<f64> = a.iter().map(|&p| diagonal_cost(p, q)).collect();
    let ins: Vec<f64> = b.iter().map(|&r| diagonal_cost(r, q)).collect();
    let costs = augment(&real, &del, &ins)?;
    let result = solve_exact(&costs);
    let mut matching = DiagramMatching {
        distance: result.cost.powf(1.0 / q),
        matched: Vec::new(),
        deleted: Vec::new(),
        inserted: Vec::new(),
    };
    let mut used = vec![false; b.len()];
    for (i, &j) in result.assignment.iter().enumerate().take(a.len()) {
        if j < b.len() {
            matching.matched.push((i, j));
            used[j] = true;
        } else {
            matching.deleted.push(i);
        }
    }
    matching.inserted = (0..b.len()).filter(|&j| !used[j]).collect();
    Ok(matching)
}

/// Like [`diagram_distance`], with the first point of each diagram treated as
/// the essential class: it is matched to the other essential point and to
/// nothing else.
pub fn essential_diagram_distance(a: &[(f64, f64)], b: &[(f64, f64)], q: f64) -> Result<DiagramMatching> {
    let (Some(&ea), Some(&eb)) = (a.first(), b.first()) else {
        return Err(Error::EmptyTree);
    };
    let rest = diagram_distance(&a[1..], &b[1..], q)?;
    let cost = point_cost(ea, eb, q) + rest.distance.powf(q);
    let mut matched = vec![(0, 0)];
    matched.extend(rest.matched.iter().map(|&(i, j)| (i + 1, j + 1)));
    Ok(DiagramMatching {
        distance: cost.powf(1.0 / q),
        matched,
        deleted: rest.deleted.iter().map(|i| i + 1).collect(),
        inserted: rest.inserted.iter().map(|j| j + 1).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_diagrams() {
        let d = [(0.0, 2.0), (1.0, 5.0)];
        let m = diagram_distance(&d, &d, 2.0).unwrap();
        assert_eq!(m.distance, 0.0);
        assert_eq!(m.matched, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn forced_deletion() {
        let m = diagram_distance(&[(0.0, 2.0)], &[], 2.0).unwrap();
        assert!((m.distance - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.deleted, vec![0]);
    }

    #[test]
    fn matching_beats_deletion() {
        let m = diagram_distance(&[(1.0, 3.0)], &[(2.0, 5.0)], 2.0).unwrap();
        assert!((m.distance - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.matched, vec![(0, 0)]);
    }

    #[test]
    fn essential_points_pair_up() {
        let a = [(0.0, 10.0)];
        let b = [(0.0, 1.0), (0.0, 10.0)];
        let free = diagram_distance(&a, &b, 2.0).unwrap();
        let ess = essential_diagram_distance(&a, &b, 2.0).unwrap();
        assert!((free.distance - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((ess.distance - (81.0f64 + 50.0).sqrt()).abs() < 1e-12);
        assert_eq!(ess.matched, vec![(0, 0)]);
        assert_eq!(ess.inserted, vec![1]);
    }

    #[test]
    fn rejects_small_q() {
        assert!(diagram_distance(&[], &[], 0.5).is_err());
    }
}
