//! Saddle merging, branch displacement and local normalization of BDTs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{build_bdt, reconstruct, Bdt, MergeTree, NodeOrigin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub normalize: bool,
}

impl Default for MetricParams {
    fn default() -> Self {
        MetricParams {
            eps1: 0.05,
            eps2: 0.95,
            eps3: 0.9,
            normalize: true,
        }
    }
}

impl MetricParams {
    /// Parameters that leave the input structure untouched.
    pub fn no_preprocessing(normalize: bool) -> Self {
        MetricParams {
            eps1: 0.0,
            eps2: 1.0,
            eps3: 0.0,
            normalize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eps1", self.eps1), ("eps2", self.eps2), ("eps3", self.eps3)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Sweep-space value of the saddle end of a branch.
fn top(bdt: &Bdt, b: usize) -> f64 {
    let br = bdt.branch(b);
    bdt.kind().sweep(match bdt.kind() {
        crate::tree::TreeKind::Join => br.death,
        crate::tree::TreeKind::Split => br.birth,
    })
}

/// Merges adjacent saddles of the dual merge tree; only parent links change.
///
/// Saddles are the distinct (parent branch, death value) groups. A saddle is
/// merged into the next one up when their gap is at most `eps1` times the
/// largest gap between adjacent saddles.
pub fn merge_saddles_bdt(bdt: &Bdt, eps1: f64) -> Bdt {
    if eps1 <= 0.0 || bdt.len() <= 1 {
        return bdt.clone();
    }
    let n = bdt.len();
    let root = bdt.root();
    let mut group_branch = Vec::new();
    let mut group_value = Vec::new();
    let mut group_of = vec![usize::MAX; n];
    let mut first_group = vec![0; n];
    let mut group_end = vec![0; n];
    for p in 0..n {
        let mut kids = bdt.children(p).to_vec();
        kids.sort_by(|&a, &b| top(bdt, a).total_cmp(&top(bdt, b)).then(a.cmp(&b)));
        first_group[p] = group_branch.len();
        for c in kids {
            let v = top(bdt, c);
            if group_value.len() == first_group[p] || *group_value.last().unwrap() != v {
                group_branch.push(p);
                group_value.push(v);
            }
            group_of[c] = group_value.len() - 1;
        }
        group_end[p] = group_branch.len();
    }
    let groups = group_branch.len();
    let up: Vec<Option<usize>> = (0..groups)
        .map(|g| {
            let p = group_branch[g];
            if g + 1 < group_end[p] {
                Some(g + 1)
            } else if p != root {
                Some(group_of[p])
            } else {
                None
            }
        })
        .collect();
    let max_gap = (0..groups)
        .filter_map(|g| up[g].map(|h| group_value[h] - group_value[g]))
        .fold(0.0, f64::max);
    let mut top_group: Vec<usize> = (0..groups).collect();
    let mut order: Vec<usize> = (0..groups).collect();
    order.sort_by(|&a, &b| group_value[b].total_cmp(&group_value[a]).then(b.cmp(&a)));
    // an upper saddle is resolved before any saddle below it
    let mut resolved = vec![false; groups];
    for g in order {
        let mut chain = vec![g];
        let mut cur = g;
        while !resolved[cur] {
            match up[cur] {
                Some(h) if group_value[h] - group_value[cur] <= eps1 * max_gap => {
                    chain.push(h);
                    cur = h;
                }
                _ => break,
            }
        }
        let t = if resolved[cur] { top_group[cur] } else { cur };
        for x in chain {
            top_group[x] = t;
            resolved[x] = true;
        }
    }
    let parent = (0..n)
        .map(|c| bdt.parent(c).map(|_| group_branch[top_group[group_of[c]]]))
        .collect();
    bdt.with_parents(parent).expect("re-parenting keeps a tree")
}

/// Merge tree with adjacent saddles merged; vertex ids are carried over.
pub fn merge_saddles(tree: &MergeTree, eps1: f64) -> MergeTree {
    if eps1 <= 0.0 {
        return tree.clone();
    }
    let merged = merge_saddles_bdt(&build_bdt(tree), eps1);
    let (mut out, origins) = reconstruct(&merged);
    let vertex = |node: Option<usize>| node.and_then(|n| tree.nodes()[n].vertex);
    for (node, origin) in origins.into_iter().enumerate() {
        let v = match origin {
            NodeOrigin::Root(b) | NodeOrigin::Saddle(b) => vertex(merged.branch(b).saddle_node),
            NodeOrigin::Leaf(b) => vertex(merged.branch(b).leaf_node),
        };
        out.set_vertex(node, v);
    }
    out
}

/// Moves small subtrees up while their persistence is close to their parent's.
pub fn move_branches_up(bdt: &Bdt, eps2: f64, eps3: f64) -> Bdt {
    let root = bdt.root();
    let range = bdt.range();
    let mut order: Vec<usize> = (0..bdt.len()).filter(|&b| b != root).collect();
    order.sort_by(|&a, &b| {
        bdt.persistence(b)
            .total_cmp(&bdt.persistence(a))
            .then(bdt.branch(a).birth.total_cmp(&bdt.branch(b).birth))
            .then(a.cmp(&b))
    });
    let mut parent = bdt.parents().to_vec();
    let mut moved = false;
    for b in order {
        let relative = if range > 0.0 {
            bdt.persistence(b) / range
        } else {
            0.0
        };
        if !(relative < eps3 || eps3 >= 1.0) {
            continue;
        }
        loop {
            let p = parent[b].expect("non-root branch");
            if p == root {
                break;
            }
            let pp = bdt.persistence(p);
            let ratio = if pp > 0.0 { bdt.persistence(b) / pp } else { 1.0 };
            if ratio > eps2 || eps2 <= 0.0 {
                parent[b] = parent[p];
                moved = true;
            } else {
                break;
            }
        }
    }
    if !moved {
        return bdt.clone();
    }
    bdt.with_parents(parent).expect("re-parenting keeps a tree")
}

/// A BDT whose non-root branches hold coordinates relative to their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedBdt {
    bdt: Bdt,
}

impl NormalizedBdt {
    pub fn bdt(&self) -> &Bdt {
        &self.bdt
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.bdt.pairs()
    }
}

pub(crate) fn normalized_pairs(bdt: &Bdt) -> Result<Vec<(f64, f64)>> {
    let raw = bdt.pairs();
    let mut out = raw.clone();
    for b in bdt.pre_order() {
        let (x, y) = raw[b];
        let span = y - x;
        if span <= 0.0 && !bdt.children(b).is_empty() {
            return Err(Error::ZeroPersistenceParent(b));
        }
        for &c in bdt.children(b) {
            let (xc, yc) = raw[c];
            out[c] = ((xc - x) / span, (yc - x) / span);
        }
    }
    Ok(out)
}

/// Inverse of the local normalization, clamped into each parent's interval.
pub(crate) fn denormalized_pairs(bdt: &Bdt, coords: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = coords.to_vec();
    for b in bdt.pre_order() {
        let (x, y) = out[b];
        let span = y - x;
        for &c in bdt.children(b) {
            let (nx, ny) = coords[c];
            let xc = (x + nx * span).clamp(x, y);
            let yc = (x + ny * span).clamp(xc, y);
            out[c] = (xc, yc);
        }
    }
    out
}

pub fn normalize(bdt: &Bdt) -> Result<NormalizedBdt> {
    let pairs = normalized_pairs(bdt)?;
    Ok(NormalizedBdt {
        bdt: bdt.with_pairs(&pairs),
    })
}

pub fn denormalize(nbdt: &NormalizedBdt) -> Bdt {
    let pairs = denormalized_pairs(&nbdt.bdt, &nbdt.bdt.pairs());
    nbdt.bdt.with_pairs(&pairs)
}

/// A BDT after structural preprocessing, with the coordinates the metric works in.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub structure: Bdt,
    pub coords: Vec<(f64, f64)>,
    pub depth: Vec<usize>,
    pub normalized: bool,
}

impl Prepared {
    pub fn from_structure(structure: Bdt, normalize: bool) -> Result<Self> {
        let coords = if normalize {
            normalized_pairs(&structure)?
        } else {
            structure.pairs()
        };
        Ok(Self::with_coords(structure, coords, normalize))
    }

    pub fn with_coords(structure: Bdt, coords: Vec<(f64, f64)>, normalized: bool) -> Self {
        let depth = structure.depths();
        Prepared {
            structure,
            coords,
            depth,
            normalized,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn root(&self) -> usize {
        self.structure.root()
    }

    pub fn children(&self, b: usize) -> &[usize] {
        self.structure.children(b)
    }

    pub fn parent(&self, b: usize) -> Option<usize> {
        self.structure.parent(b)
    }

    /// Raw-coordinate BDT with this structure.
    pub fn to_bdt(&self) -> Bdt {
        if self.normalized {
            self.structure
                .with_pairs(&denormalized_pairs(&self.structure, &self.coords))
        } else {
            self.structure.with_pairs(&self.coords)
        }
    }
}

pub(crate) fn preprocess_structure(bdt: &Bdt, params: &MetricParams) -> Bdt {
    let merged = merge_saddles_bdt(bdt, params.eps1);
    move_branches_up(&merged, params.eps2, params.eps3)
}

pub(crate) fn prepare(bdt: &Bdt, params: &MetricParams) -> Result<Prepared> {
    params.validate()?;
    Prepared::from_structure(preprocess_structure(bdt, params), params.normalize)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{bdt_to_merge_tree, TreeKind};

    fn bdt(pairs: &[(f64, f64)], arcs: &[(usize, usize)]) -> Bdt {
        Bdt::from_pairs(TreeKind::Join, pairs, arcs).unwrap()
    }

    #[test]
    fn normalize_examples() {
        let b = bdt(&[(0.0, 4.0), (1.0, 3.0), (2.0, 3.0)], &[(0, 1), (1, 2)]);
        let n = normalize(&b).unwrap();
        assert_eq!(n.coords(), vec![(0.0, 4.0), (0.25, 0.75), (0.5, 1.0)]);
        let back = denormalize(&n);
        for (x, y) in back.pairs().iter().zip(b.pairs()) {
            assert!((x.0 - y.0).abs() <= 1e-12 && (x.1 - y.1).abs() <= 1e-12);
        }
        let same = bdt(&[(0.0, 4.0), (0.0, 4.0)], &[(0, 1)]);
        assert_eq!(normalize(&same).unwrap().coords()[1], (0.0, 1.0));
        let single = bdt(&[(1.0, 2.0)], &[]);
        assert_eq!(denormalize(&normalize(&single).unwrap()), single);
    }

    #[test]
    fn denormalize_example() {
        let structure = bdt(&[(0.0, 4.0), (0.0, 1.0)], &[(0, 1)]);
        let n = NormalizedBdt {
            bdt: structure.with_pairs(&[(0.0, 4.0), (0.25, 0.75)]),
        };
        assert_eq!(denormalize(&n).pairs()[1], (1.0, 3.0));
    }

    #[test]
    fn zero_persistence_parent_rejected() {
        let b = bdt(&[(0.0, 4.0), (2.0, 2.0), (2.0, 2.0)], &[(0, 1), (1, 2)]);
        assert!(matches!(normalize(&b), Err(Error::ZeroPersistenceParent(1))));
    }

    #[test]
    fn close_saddles_merge() {
        let b = bdt(
            &[(0.0, 10.0), (1.0, 2.001), (1.5, 2.0), (0.2, 3.001)],
            &[(0, 1), (1, 2), (0, 3)],
        );
        let merged = merge_saddles_bdt(&b, 0.01);
        assert_eq!(merged.parent(2), Some(0));
        assert_eq!(merged.pairs(), b.pairs());
        let kept = merge_saddles_bdt(&b, 0.0001);
        assert_eq!(kept.parent(2), Some(1));
        let tree = bdt_to_merge_tree(&b).unwrap();
        assert_eq!(merge_saddles(&tree, 0.0), tree);
        let flat = build_bdt(&merge_saddles(&tree, 0.01));
        assert_eq!(flat.depths().iter().max(), Some(&1));
    }

    #[test]
    fn full_merge_flattens() {
        let b = bdt(
            &[(0.0, 10.0), (1.0, 8.0), (2.0, 6.0), (3.0, 5.0), (1.5, 7.0)],
            &[(0, 1), (1, 2), (2, 3), (1, 4)],
        );
        let flat = merge_saddles_bdt(&b, 1.0);
        assert!(flat.depths().iter().all(|&d| d <= 1));
        assert!(flat.check_nesting().is_ok());
        assert_eq!(merge_saddles_bdt(&b, 0.0), b);
    }

    #[test]
    fn move_up_examples() {
        let b = bdt(&[(0.0, 10.0), (1.0, 8.0), (2.0, 6.0), (3.0, 5.0)], &[(0, 1), (1, 2), (2, 3)]);
        assert_eq!(move_branches_up(&b, 0.95, 0.0), b);
        assert_eq!(move_branches_up(&b, 1.0, 1.0), b);
        let flat = move_branches_up(&b, 0.0, 1.0);
        assert!(flat.depths().iter().all(|&d| d <= 1));
        let big = bdt(&[(0.0, 10.0), (0.1, 9.9), (0.2, 9.8)], &[(0, 1), (1, 2)]);
        let moved = move_branches_up(&big, 0.95, 0.9);
        assert_eq!(moved.parent(1), Some(0));
        assert_eq!(moved.parent(2), Some(1));
    }

    #[test]
    fn move_up_ratio_rule() {
        // 2.0/2.2 > 0.9 moves branch 2 to the root; 0.5/2.0 stays
        let b = bdt(&[(0.0, 10.0), (1.0, 3.2), (1.1, 3.1), (1.2, 1.7)], &[(0, 1), (1, 2), (2, 3)]);
        let m = move_branches_up(&b, 0.9, 0.9);
        assert_eq!(m.parent(2), Some(0));
        assert_eq!(m.parent(3), Some(2));
        assert!(m.check_nesting().is_ok());
    }
}
