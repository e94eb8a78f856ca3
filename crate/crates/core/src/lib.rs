//! Wasserstein distances, geodesics and barycenters of merge trees.

pub mod assignment;
pub mod barycenter;
pub mod ensemble;
pub mod error;
pub mod field;
pub mod geodesic;
pub mod metric;
pub mod preprocess;
pub mod stability;
pub mod synth;
pub mod tree;

pub use error::{Error, Result};
