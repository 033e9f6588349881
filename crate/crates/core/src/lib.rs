//! Hierarchical Tucker (HT) decomposed linear layers and LSTM cells whose
//! entire stacked gate matrix is a single HT-format weight.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense multiway arrays and pairwise contraction
//! - [`ht`]: dimension trees, HT weights, the forward kernel, model files
//! - [`grad`]: reverse-mode gradients through the HT layer and finite-difference checks
//! - [`lstm`]: the fully decomposed LSTM cell, classifier head and BPTT
//! - [`complexity`]: parameter counts for TT, TR, BT and HT layers
//! - [`train`]: ADAM with L2, synthetic sequence task, training loop
//! - [`config`] and [`commands`]: the run configuration and the `fdht` commands

pub mod commands;
pub mod complexity;
pub mod config;
pub mod error;
pub mod grad;
pub mod ht;
pub mod lstm;
pub mod matrix;
pub mod tensor;
pub mod train;

pub use error::{Error, ParseError, Result};
pub use ht::{htl_forward, DimTree, HTWeight, HtLayout};
pub use matrix::Matrix;
pub use tensor::Tensor;
