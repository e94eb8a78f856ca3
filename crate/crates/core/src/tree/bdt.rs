use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tree::merge_tree::{MergeNode, MergeTree, TreeKind};

/// A persistent branch: its (birth, death) pair with `birth <= death`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub birth: f64,
    pub death: f64,
    /// Merge tree node ids of the branch extremum and of the saddle where it ends.
    pub leaf_node: Option<usize>,
    pub saddle_node: Option<usize>,
}

impl Branch {
    pub fn new(birth: f64, death: f64) -> Self {
        Branch {
            birth,
            death,
            leaf_node: None,
            saddle_node: None,
        }
    }

    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

/// Branch decomposition tree.
#[derive(Debug, Clone, PartialEq)]
pub struct Bdt {
    kind: TreeKind,
    branches: Vec<Branch>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
}

impl Bdt {
    /// Validated construction: a single rooted tree satisfying the nesting condition.
    pub fn new(kind: TreeKind, branches: Vec<Branch>, parent: Vec<Option<usize>>) -> Result<Self> {
        let bdt = Self::unchecked_nesting(kind, branches, parent)?;
        bdt.check_nesting()?;
        Ok(bdt)
    }

    pub fn from_pairs(kind: TreeKind, pairs: &[(f64, f64)], arcs: &[(usize, usize)]) -> Result<Self> {
        let mut parent = vec![None; pairs.len()];
        for &(p, c) in arcs {
            if p >= pairs.len() || c >= pairs.len() {
                return Err(Error::InvalidTree(format!(
                    "arc ({p}, {c}) references a missing branch"
                )));
            }
            if parent[c].replace(p).is_some() {
                return Err(Error::InvalidTree(format!("branch {c} has two parents")));
            }
        }
        let branches = pairs.iter().map(|&(x, y)| Branch::new(x, y)).collect();
        Self::new(kind, branches, parent)
    }

    /// Structural validation only; interpolated trees may legitimately break nesting.
    pub(crate) fn unchecked_nesting(
        kind: TreeKind,
        branches: Vec<Branch>,
        parent: Vec<Option<usize>>,
    ) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::EmptyTree);
        }
        for (i, b) in branches.iter().enumerate() {
            if !b.birth.is_finite() || !b.death.is_finite() {
                return Err(Error::NonFiniteValue(i));
            }
            if b.birth > b.death {
                return Err(Error::InvalidTree(format!(
                    "branch {i} has birth {} above death {}",
                    b.birth, b.death
                )));
            }
        }
        let roots: Vec<usize> = (0..parent.len()).filter(|&i| parent[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::InvalidTree(format!(
                "expected one root branch, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); branches.len()];
        for (c, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                children[p].push(c);
            }
        }
        let bdt = Bdt {
            kind,
            branches,
            parent,
            children,
            root,
        };
        if bdt.pre_order().len() != bdt.len() {
            return Err(Error::InvalidTree("arcs contain a cycle".into()));
        }
        Ok(bdt)
    }

    pub fn check_nesting(&self) -> Result<()> {
        for c in 0..self.len() {
            if let Some(p) = self.parent[c] {
                let (bp, bc) = (&self.branches[p], &self.branches[c]);
                if bc.birth < bp.birth || bc.death > bp.death {
                    return Err(Error::NestingViolation {
                        parent: p,
                        child: c,
                        parent_birth: bp.birth,
                        parent_death: bp.death,
                        child_birth: bc.birth,
                        child_death: bc.death,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.branches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.branches.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn branch(&self, b: usize) -> &Branch {
        &self.branches[b]
    }

    pub fn parent(&self, b: usize) -> Option<usize> {
        self.parent[b]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn children(&self, b: usize) -> &[usize] {
        &self.children[b]
    }

    pub fn persistence(&self, b: usize) -> f64 {
        self.branches[b].persistence()
    }

    /// Persistence of the root branch, i.e. the data range.
    pub fn range(&self) -> f64 {
        self.persistence(self.root)
    }

    pub fn total_persistence(&self) -> f64 {
        self.branches.iter().map(Branch::persistence).sum()
    }

    pub fn pairs(&self) -> Vec<(f64, f64)> {
        self.branches.iter().map(|b| (b.birth, b.death)).collect()
    }

    pub fn arcs(&self) -> Vec<(usize, usize)> {
        (0..self.len())
            .filter_map(|c| self.parent[c].map(|p| (p, c)))
            .collect()
    }

    /// Breadth-first order from the root, children by ascending id.
    pub fn pre_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root]);
        while let Some(b) = queue.pop_front() {
            out.push(b);
            queue.extend(self.children[b].iter().copied());
        }
        out
    }

    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.len()];
        for b in self.pre_order() {
            for &c in &self.children[b] {
                depth[c] = depth[b] + 1;
            }
        }
        depth
    }

    pub fn subtree(&self, b: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![b];
        while let Some(x) = stack.pop() {
            out.push(x);
            stack.extend(self.children[x].iter().copied());
        }
        out.sort_unstable();
        out
    }

    /// Same structure with new (birth, death) values.
    pub(crate) fn with_pairs(&self, pairs: &[(f64, f64)]) -> Bdt {
        let mut out = self.clone();
        for (b, &(x, y)) in out.branches.iter_mut().zip(pairs) {
            b.birth = x;
            b.death = y;
        }
        out
    }

    /// Same branches under new parent links.
    pub(crate) fn with_parents(&self, parent: Vec<Option<usize>>) -> Result<Bdt> {
        Bdt::unchecked_nesting(self.kind, self.branches.clone(), parent)
    }

    /// Id-independent description, equal for isomorphic trees with equal values.
    pub fn canonical_form(&self) -> String {
        fn rec(t: &Bdt, b: usize) -> String {
            let mut kids: Vec<String> = t.children[b].iter().map(|&c| rec(t, c)).collect();
            kids.sort();
            let br = &t.branches[b];
            format!(
                "({:016x},{:016x})[{}]",
                br.birth.to_bits(),
                br.death.to_bits(),
                kids.join(",")
            )
        }
        rec(self, self.root)
    }

    /// Value at the extremum end of a branch (its leaf in the merge tree).
    fn leaf_value(&self, b: usize) -> f64 {
        match self.kind {
            TreeKind::Join => self.branches[b].birth,
            TreeKind::Split => self.branches[b].death,
        }
    }

    /// Value at the saddle end of a branch.
    fn top_value(&self, b: usize) -> f64 {
        match self.kind {
            TreeKind::Join => self.branches[b].death,
            TreeKind::Split => self.branches[b].birth,
        }
    }
}

/// Branch decomposition tree of `tree`.
///
/// Ids are assigned breadth-first from the global branch, siblings by
/// decreasing persistence, then birth, then leaf node id.
pub fn build_bdt(tree: &MergeTree) -> Bdt {
    let raw = tree.decompose();
    let pairs: Vec<_> = raw.iter().map(|b| tree.pair_of(b)).collect();
    let mut kids = vec![Vec::new(); raw.len()];
    let mut global = 0;
    for (i, b) in raw.iter().enumerate() {
        match b.parent {
            Some(p) => kids[p].push(i),
            None => global = i,
        }
    }
    for list in kids.iter_mut() {
        list.sort_by(|&a, &b| {
            pairs[b]
                .persistence()
                .total_cmp(&pairs[a].persistence())
                .then(pairs[a].birth.total_cmp(&pairs[b].birth))
                .then(raw[a].leaf.cmp(&raw[b].leaf))
        });
    }
    let mut order = Vec::with_capacity(raw.len());
    let mut queue = VecDeque::from([global]);
    while let Some(b) = queue.pop_front() {
        order.push(b);
        queue.extend(kids[b].iter().copied());
    }
    let mut id = vec![0; raw.len()];
    for (new, &old) in order.iter().enumerate() {
        id[old] = new;
    }
    let branches = order
        .iter()
        .map(|&old| Branch {
            birth: pairs[old].birth,
            death: pairs[old].death,
            leaf_node: Some(raw[old].leaf),
            saddle_node: Some(raw[old].saddle),
        })
        .collect();
    let parent = order.iter().map(|&old| raw[old].parent.map(|p| id[p])).collect();
    Bdt::new(tree.kind(), branches, parent).expect("elder branches are nested")
}

/// Provenance of a reconstructed merge tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeOrigin {
    Root(usize),
    Leaf(usize),
    /// Saddle on a branch where the given child branch ends.
    Saddle(usize),
}

/// Merge tree whose branch decomposition is `bdt`.
pub fn bdt_to_merge_tree(bdt: &Bdt) -> Result<MergeTree> {
    bdt.check_nesting()?;
    Ok(reconstruct(bdt).0)
}

pub(crate) fn reconstruct(bdt: &Bdt) -> (MergeTree, Vec<NodeOrigin>) {
    let kind = bdt.kind();
    let mut scalars = Vec::new();
    let mut origins = Vec::new();
    let mut parent: Vec<Option<usize>> = Vec::new();
    let mut push = |v: f64, o: NodeOrigin, parent: &mut Vec<Option<usize>>| {
        scalars.push(v);
        origins.push(o);
        parent.push(None);
        scalars.len() - 1
    };

    let root_branch = bdt.root();
    let root_node = push(bdt.top_value(root_branch), NodeOrigin::Root(root_branch), &mut parent);
    let mut attach = vec![usize::MAX; bdt.len()];
    attach[root_branch] = root_node;
    for b in bdt.pre_order() {
        let leaf = push(bdt.leaf_value(b), NodeOrigin::Leaf(b), &mut parent);
        let mut kids: Vec<usize> = bdt.children(b).to_vec();
        kids.sort_by(|&x, &y| {
            kind.sweep(bdt.top_value(x))
                .total_cmp(&kind.sweep(bdt.top_value(y)))
                .then(x.cmp(&y))
        });
        let mut chain = vec![leaf];
        let mut i = 0;
        while i < kids.len() {
            let v = bdt.top_value(kids[i]);
            let mut j = i;
            while j < kids.len() && bdt.top_value(kids[j]) == v {
                j += 1;
            }
            let node = if b == root_branch && v == bdt.top_value(b) {
                root_node
            } else {
                let s = push(v, NodeOrigin::Saddle(kids[i]), &mut parent);
                chain.push(s);
                s
            };
            for &c in &kids[i..j] {
                attach[c] = node;
            }
            i = j;
        }
        chain.push(attach[b]);
        for w in chain.windows(2) {
            parent[w[0]] = Some(w[1]);
        }
    }
    let nodes = scalars
        .into_iter()
        .map(|scalar| MergeNode {
            scalar,
            vertex: None,
        })
        .collect();
    let tree = MergeTree::from_parent_links(kind, nodes, parent).expect("chains form a tree");
    (tree, origins)
}
