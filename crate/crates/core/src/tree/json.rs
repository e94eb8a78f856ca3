use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::bdt::{Branch, Bdt};
use crate::tree::merge_tree::{MergeNode, MergeTree, TreeKind};

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: usize,
    scalar: f64,
    vertex: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct MergeTreeJson {
    kind: TreeKind,
    nodes: Vec<NodeJson>,
    arcs: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct BranchJson {
    id: usize,
    birth: f64,
    death: f64,
}

#[derive(Serialize, Deserialize)]
struct BdtJson {
    #[serde(default = "default_kind")]
    kind: TreeKind,
    branches: Vec<BranchJson>,
    arcs: Vec<(usize, usize)>,
}

fn default_kind() -> TreeKind {
    TreeKind::Join
}

/// Places items by their `id`, which must enumerate `0..n`.
fn by_id<T>(items: Vec<(usize, T)>) -> Result<Vec<T>> {
    let n = items.len();
    let mut slots: Vec<Option<T>> = (0..n).map(|_| None).collect();
    for (id, item) in items {
        if id >= n {
            return Err(Error::Parse(format!("id {id} out of range 0..{n}")));
        }
        if slots[id].replace(item).is_some() {
            return Err(Error::Parse(format!("duplicate id {id}")));
        }
    }
    Ok(slots.into_iter().map(|s| s.expect("all ids filled")).collect())
}

impl MergeTree {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: MergeTreeJson = serde_json::from_str(text)?;
        let nodes = by_id(
            raw.nodes
                .into_iter()
                .map(|n| {
                    (
                        n.id,
                        MergeNode {
                            scalar: n.scalar,
                            vertex: n.vertex,
                        },
                    )
                })
                .collect(),
        )?;
        MergeTree::from_arcs(raw.kind, nodes, &raw.arcs)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = MergeTreeJson {
            kind: self.kind(),
            nodes: self
                .nodes()
                .iter()
                .enumerate()
                .map(|(id, n)| NodeJson {
                    id,
                    scalar: n.scalar,
                    vertex: n.vertex,
                })
                .collect(),
            arcs: self.arcs(),
        };
        serde_json::to_value(&raw).expect("tree serialization")
    }

    pub fn to_json_string(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

impl Bdt {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: BdtJson = serde_json::from_str(text)?;
        if raw.branches.is_empty() {
            return Err(Error::EmptyTree);
        }
        let pairs = by_id(
            raw.branches
                .into_iter()
                .map(|b| (b.id, (b.birth, b.death)))
                .collect(),
        )?;
        Bdt::from_pairs(raw.kind, &pairs, &raw.arcs)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let raw = BdtJson {
            kind: self.kind(),
            branches: self
                .branches()
                .iter()
                .enumerate()
                .map(|(id, b): (usize, &Branch)| BranchJson {
                    id,
                    birth: b.birth,
                    death: b.death,
                })
                .collect(),
            arcs: self.arcs(),
        };
        serde_json::to_value(&raw).expect("bdt serialization")
    }

    pub fn to_json_string(&self) -> String {
        self.to_json_value().to_string()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }
}

pub fn load_merge_tree(path: impl AsRef<Path>) -> Result<MergeTree> {
    MergeTree::from_json_str(&std::fs::read_to_string(path)?)
}

pub fn load_bdt(path: impl AsRef<Path>) -> Result<Bdt> {
    Bdt::from_json_str(&std::fs::read_to_string(path)?)
}
