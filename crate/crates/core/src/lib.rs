//! Flood-risk rating on gridded urban data.
//!
//! The pipeline learns a spatial flood-dependence graph from weekly flood
//! occurrences, clusters grid cells with a fused autoencoder / graph
//! convolution model, ranks clusters into flood-risk levels and validates the
//! result with spatial statistics.

// `!(x > 0.0)` guards reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod autodiff;
pub mod checkpoint;
pub mod clustering;
pub mod error;
mod fsutil;
pub mod gradcheck;
pub mod graph_learner;
pub mod ingest;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod risk;
pub mod spatial;

pub use error::{Error, Result};
pub use matrix::Matrix;
