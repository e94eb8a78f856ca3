use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TreeKind {
    Join,
    Split,
}

impl TreeKind {
    /// Maps a scalar so that the sweep always runs upward.
    pub fn sweep(self, v: f64) -> f64 {
        match self {
            TreeKind::Join => v,
            TreeKind::Split => -v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Leaf,
    Saddle,
    Root,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergeNode {
    pub scalar: f64,
    pub vertex: Option<usize>,
}

/// Join tree (sub-level sets) or split tree (super-level sets).
///
/// Node ids double as the tie-break for equal scalars: lower id is older.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeTree {
    kind: TreeKind,
    nodes: Vec<MergeNode>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersistencePair {
    pub birth: f64,
    pub death: f64,
    pub birth_node: usize,
    pub death_node: usize,
}

impl PersistencePair {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagram {
    pub kind: TreeKind,
    pub pairs: Vec<PersistencePair>,
}

impl Diagram {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.pairs.iter().map(|p| (p.birth, p.death)).collect()
    }
}

/// One branch of the persistence-driven branch decomposition.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RawBranch {
    pub leaf: usize,
    pub saddle: usize,
    /// Child of `saddle` through which the branch arrives.
    pub entry: Option<usize>,
    pub parent: Option<usize>,
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return ra;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            Ordering::Less => {
                self.parent[ra] = rb;
                rb
            }
            Ordering::Greater => {
                self.parent[rb] = ra;
                ra
            }
            Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
                ra
            }
        }
    }
}

/// Merge tree of `field` by a union-find sweep under the tie-break order.
pub fn compute_merge_tree(field: &ScalarField, kind: TreeKind) -> MergeTree {
    let mut order = field.sorted_vertices();
    if kind == TreeKind::Split {
        order.reverse();
    }
    let n = field.len();
    let mut sets = DisjointSets::new(n);
    let mut processed = vec![false; n];
    let mut top = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut children: Vec<Vec<usize>> = Vec::new();
    let mut new_node = |v: usize, kids: Vec<usize>, parent: &mut Vec<Option<usize>>| {
        let id = nodes.len();
        nodes.push(MergeNode {
            scalar: field.value(v),
            vertex: Some(v),
        });
        parent.push(None);
        for &k in &kids {
            parent[k] = Some(id);
        }
        children.push(kids);
        id
    };

    let mut last_regular = false;
    for &v in &order {
        let mut roots: Vec<usize> = field
            .neighbors(v)
            .into_iter()
            .filter(|&u| processed[u])
            .map(|u| sets.find(u))
            .collect();
        roots.sort_unstable();
        roots.dedup();
        processed[v] = true;
        match roots.len() {
            0 => {
                top[v] = new_node(v, Vec::new(), &mut parent);
                last_regular = false;
            }
            1 => {
                let t = top[roots[0]];
                let r = sets.union(v, roots[0]);
                top[r] = t;
                last_regular = true;
            }
            _ => {
                let mut kids: Vec<usize> = roots.iter().map(|&r| top[r]).collect();
                kids.sort_unstable();
                let s = new_node(v, kids, &mut parent);
                let mut r = v;
                for &c in &roots {
                    r = sets.union(r, c);
                }
                top[r] = s;
                last_regular = false;
            }
        }
    }
    let last = *order.last().expect("grid has vertices");
    if last_regular {
        let t = top[sets.find(last)];
        new_node(last, vec![t], &mut parent);
    }
    let root = nodes.len() - 1;
    MergeTree {
        kind,
        nodes,
        parent,
        children,
        root,
    }
}

impl MergeTree {
    /// Builds a tree from nodes and `(parent, child)` arcs.
    pub fn from_arcs(kind: TreeKind, nodes: Vec<MergeNode>, arcs: &[(usize, usize)]) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::EmptyTree);
        }
        if let Some(i) = nodes.iter().position(|x| !x.scalar.is_finite()) {
            return Err(Error::NonFiniteValue(i));
        }
        let mut parent = vec![None; n];
        for &(p, c) in arcs {
            if p >= n || c >= n {
                return Err(Error::InvalidTree(format!("arc ({p}, {c}) references a missing node")));
            }
            if parent[c].replace(p).is_some() {
                return Err(Error::InvalidTree(format!("node {c} has two parents")));
            }
        }
        let tree = Self::from_parent_links(kind, nodes, parent)?;
        for c in 0..n {
            if let Some(p) = tree.parent[c] {
                if kind.sweep(tree.nodes[c].scalar) > kind.sweep(tree.nodes[p].scalar) {
                    return Err(Error::InvalidTree(format!(
                        "arc ({p}, {c}) is not monotone"
                    )));
                }
            }
        }
        Ok(tree)
    }

    pub(crate) fn from_parent_links(
        kind: TreeKind,
        nodes: Vec<MergeNode>,
        parent: Vec<Option<usize>>,
    ) -> Result<Self> {
        let roots: Vec<usize> = (0..parent.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!("expected one root, found {}", roots.len())));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); parent.len()];
        for (c, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(c);
            }
        }
        let mut seen = 0;
        let mut stack = vec![root];
        while let Some(x) = stack.pop() {
            seen += 1;
            stack.extend(children[x].iter().copied());
        }
        if seen != parent.len() {
            return Err(Error::InvalidTree("arcs contain a cycle".into()));
        }
        Ok(MergeTree {
            kind,
            nodes,
            parent,
            children,
            root,
        })
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[MergeNode] {
        &self.nodes
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, n: usize) -> Option<usize> {
        self.parent[n]
    }

    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    pub(crate) fn set_vertex(&mut self, n: usize, vertex: Option<usize>) {
        self.nodes[n].vertex = vertex;
    }

    pub fn scalar(&self, n: usize) -> f64 {
        self.nodes[n].scalar
    }

    pub fn node_kind(&self, n: usize) -> NodeKind {
        if n == self.root {
            NodeKind::Root
        } else if self.children[n].is_empty() {
            NodeKind::Leaf
        } else {
            NodeKind::Saddle
        }
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&n| self.children[n].is_empty())
            .collect()
    }

    pub fn arcs(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .filter_map(|c| self.parent[c].map(|p| (p, c)))
            .collect()
    }

    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .nodes
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x.scalar), hi.max(x.scalar))
            });
        hi - lo
    }

    fn elder_key(&self, n: usize) -> (f64, usize) {
        (self.kind.sweep(self.nodes[n].scalar), n)
    }

    fn older(&self, a: usize, b: usize) -> bool {
        let (ka, kb) = (self.elder_key(a), self.elder_key(b));
        ka.0.total_cmp(&kb.0).then(ka.1.cmp(&kb.1)) == Ordering::Less
    }

    pub(crate) fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![(self.root, false)];
        while let Some((x, expanded)) = stack.pop() {
            if expanded {
                out.push(x);
            } else {
                stack.push((x, true));
                for &c in self.children[x].iter().rev() {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Branch decomposition under the Elder rule, one branch per leaf.
    /// The global branch is listed last.
    pub(crate) fn decompose(&self) -> Vec<RawBranch> {
        let mut owner = vec![usize::MAX; self.len()];
        let mut branch_of_leaf = vec![usize::MAX; self.len()];
        let mut branches: Vec<RawBranch> = Vec::new();
        let mut pending: Vec<(usize, usize)> = Vec::new();
        for n in self.post_order() {
            if self.children[n].is_empty() {
                owner[n] = n;
                continue;
            }
            let elder = self.children[n]
                .iter()
                .map(|&c| owner[c])
                .fold(usize::MAX, |best, o| {
                    if best == usize::MAX || self.older(o, best) {
                        o
                    } else {
                        best
                    }
                });
            for &c in &self.children[n] {
                let o = owner[c];
                if o != elder {
                    branch_of_leaf[o] = branches.len();
                    branches.push(RawBranch {
                        leaf: o,
                        saddle: n,
                        entry: Some(c),
                        parent: None,
                    });
                    pending.push((branch_of_leaf[o], elder));
                }
            }
            owner[n] = elder;
        }
        let global = owner[self.root];
        branch_of_leaf[global] = branches.len();
        branches.push(RawBranch {
            leaf: global,
            saddle: self.root,
            entry: None,
            parent: None,
        });
        for (b, elder) in pending {
            branches[b].parent = Some(branch_of_leaf[elder]);
        }
        branches
    }

    pub(crate) fn pair_of(&self, b: &RawBranch) -> PersistencePair {
        let (l, s) = (self.nodes[b.leaf].scalar, self.nodes[b.saddle].scalar);
        if l <= s {
            PersistencePair {
                birth: l,
                death: s,
                birth_node: b.leaf,
                death_node: b.saddle,
            }
        } else {
            PersistencePair {
                birth: s,
                death: l,
                birth_node: b.saddle,
                death_node: b.leaf,
            }
        }
    }

    /// Subtree rooted at `n`, `n` included.
    pub(crate) fn subtree(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![n];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x].iter().copied());
        }
        out
    }

    /// Keeps the flagged nodes, splicing out non-root nodes left with one child.
    fn restrict(&self, keep: &[bool]) -> MergeTree {
        let alive = keep;
        let mut keep = alive.to_vec();
        let mut new_parent: Vec<Option<usize>> = vec![None; self.len()];
        for n in 0..self.len() {
            let alive_children = self.children[n].iter().filter(|&&c| alive[c]).count();
            if alive[n] && n != self.root && alive_children == 1 {
                keep[n] = false;
            }
        }
        for n in 0..self.len() {
            if !keep[n] || n == self.root {
                continue;
            }
            let mut p = self.parent[n].expect("non-root has a parent");
            while !keep[p] {
                p = self.parent[p].expect("root is kept");
            }
            new_parent[n] = Some(p);
        }
        let mut remap = vec![usize::MAX; self.len()];
        let mut nodes = Vec::new();
        for n in 0..self.len() {
            if keep[n] {
                remap[n] = nodes.len();
                nodes.push(self.nodes[n].clone());
            }
        }
        let parent = (0..self.len())
            .filter(|&n| keep[n])
            .map(|n| new_parent[n].map(|p| remap[p]))
            .collect();
        MergeTree::from_parent_links(self.kind, nodes, parent).expect("restriction stays a tree")
    }
}

/// Elder-rule persistence pairs, one per leaf.
pub fn elder_pairs(tree: &MergeTree) -> Diagram {
    let pairs = tree
        .decompose()
        .iter()
        .map(|b| tree.pair_of(b))
        .collect();
    Diagram {
        kind: tree.kind,
        pairs,
    }
}

/// Removes every non-global pair with persistence below `threshold` times the data range.
pub fn simplify(tree: &MergeTree, threshold: f64) -> Result<MergeTree> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!(
            "simplification threshold {threshold} outside [0, 1]"
        )));
    }
    if threshold == 0.0 {
        return Ok(tree.clone());
    }
    let cutoff = threshold * tree.range();
    let mut keep = vec![true; tree.len()];
    for b in tree.decompose() {
        let Some(entry) = b.entry else { continue };
        if tree.pair_of(&b).persistence() < cutoff {
            for n in tree.subtree(entry) {
                keep[n] = false;
            }
        }
    }
    Ok(tree.restrict(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> ScalarField {
        ScalarField::new(vec![values.len()], values.to_vec()).unwrap()
    }

    fn sorted_pairs(d: &Diagram) -> Vec<(f64, f64)> {
        let mut p = d.points();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p
    }

    #[test]
    fn join_tree_of_small_line() {
        let t = compute_merge_tree(&line(&[3.0, 1.0, 2.0, 0.0]), TreeKind::Join);
        let mut leaves: Vec<f64> = t.leaves().iter().map(|&n| t.scalar(n)).collect();
        leaves.sort_by(f64::total_cmp);
        assert_eq!(leaves, vec![0.0, 1.0]);
        assert_eq!(t.scalar(t.root()), 3.0);
        let saddles: Vec<f64> = (0..t.len())
            .filter(|&n| t.node_kind(n) == NodeKind::Saddle)
            .map(|n| t.scalar(n))
            .collect();
        assert_eq!(saddles, vec![2.0]);
        assert_eq!(sorted_pairs(&elder_pairs(&t)), vec![(0.0, 3.0), (1.0, 2.0)]);
    }

    #[test]
    fn split_tree_of_small_line() {
        let t = compute_merge_tree(&line(&[0.0, 3.0, 1.0, 5.0]), TreeKind::Split);
        let mut leaves: Vec<f64> = t.leaves().iter().map(|&n| t.scalar(n)).collect();
        leaves.sort_by(f64::total_cmp);
        assert_eq!(leaves, vec![3.0, 5.0]);
        assert_eq!(t.scalar(t.root()), 0.0);
        let d = elder_pairs(&t);
        assert_eq!(sorted_pairs(&d), vec![(0.0, 5.0), (1.0, 3.0)]);
        assert_eq!(d.kind, TreeKind::Split);
    }

    #[test]
    fn monotone_line_has_one_leaf() {
        let t = compute_merge_tree(&line(&[0.0, 1.0, 2.0, 3.0]), TreeKind::Join);
        assert_eq!(t.leaves().len(), 1);
        assert_eq!(t.len(), 2);
        let d = elder_pairs(&t);
        assert_eq!(d.points(), vec![(0.0, 3.0)]);
    }

    #[test]
    fn simplify_examples() {
        let t = compute_merge_tree(&line(&[3.0, 1.0, 2.0, 0.0]), TreeKind::Join);
        assert_eq!(simplify(&t, 0.0).unwrap(), t);
        let s = simplify(&t, 0.4).unwrap();
        assert_eq!(elder_pairs(&s).points(), vec![(0.0, 3.0)]);
        let s1 = simplify(&t, 1.0).unwrap();
        assert_eq!(s1.leaves().len(), 1);
        assert!(simplify(&t, 1.5).is_err());
    }

    #[test]
    fn rejects_non_monotone_arcs() {
        let nodes = vec![
            MergeNode { scalar: 0.0, vertex: None },
            MergeNode { scalar: 1.0, vertex: None },
        ];
        assert!(MergeTree::from_arcs(TreeKind::Join, nodes.clone(), &[(1, 0)]).is_ok());
        assert!(MergeTree::from_arcs(TreeKind::Join, nodes.clone(), &[(0, 1)]).is_err());
        assert!(MergeTree::from_arcs(TreeKind::Split, nodes, &[(0, 1)]).is_ok());
    }
}
