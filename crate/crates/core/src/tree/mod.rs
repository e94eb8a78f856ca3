//! Merge trees, persistence pairs and branch decomposition trees.

mod bdt;
mod json;
mod merge_tree;

pub use bdt::{bdt_to_merge_tree, build_bdt, Bdt, Branch};
pub(crate) use bdt::{reconstruct, NodeOrigin};
pub use json::{load_bdt, load_merge_tree};
pub use merge_tree::{
    compute_merge_tree, elder_pairs, simplify, Diagram, MergeNode, MergeTree, NodeKind,
    PersistencePair, TreeKind,
};
