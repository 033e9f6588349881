//! Hierarchical Tucker decomposed weights: dimension tree, factors,
//! dense reconstruction, the leaves-to-root forward kernel, and the model
//! file format.

pub mod io;
mod schedule;
mod tree;
mod weight;

pub use schedule::{htl_forward, htl_forward_batch, htl_forward_recorded, HtTape};
pub use tree::{DimNode, DimTree};
pub use weight::{factor_shape, param_count_of, HTWeight, HtLayout, DEFAULT_ORACLE_CAP};
