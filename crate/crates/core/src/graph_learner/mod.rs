//! Unsupervised learning of the spatial flood-dependence graph from weekly
//! flood occurrences, by contrasting a learned similarity graph against a
//! slowly bootstrapped KNN anchor graph.

mod augment;
mod knn;
mod model;
mod train;

pub use augment::{augment_view, draw_masks, AugmentedView, ViewMasks};
pub use knn::build_knn_graph;
pub use model::{
    bootstrap_anchor, contrastive_embed, contrastive_embed_on, embed_for_similarity,
    embed_for_similarity_on, learned_adjacency, learned_adjacency_on, nt_xent_loss,
    nt_xent_loss_on, EncoderVars, NtXentDenominator,
};
pub use train::{train_graph_structure, train_graph_structure_with, GraphTrainingOutcome};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Epochs between anchor bootstrapping steps.
pub const BOOTSTRAP_PERIOD: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct GraphLearnerConfig {
    pub embedding_layers: usize,
    pub knn_k: usize,
    pub temperature: f64,
    pub mask_prob: f64,
    pub edge_drop_prob: f64,
    pub tau: f64,
    pub encoder_width: usize,
    pub projector_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub denominator: NtXentDenominator,
    /// Entries of the final graph below this value are set to 0.
    pub threshold: f64,
}

impl Default for GraphLearnerConfig {
    fn default() -> Self {
        Self {
            embedding_layers: 2,
            knn_k: 10,
            temperature: 0.5,
            mask_prob: 0.3,
            edge_drop_prob: 0.3,
            tau: 0.99,
            encoder_width: 64,
            projector_width: 32,
            epochs: 500,
            learning_rate: 1e-2,
            seed: 0,
            denominator: NtXentDenominator::Standard,
            threshold: 0.0,
        }
    }
}

impl GraphLearnerConfig {
    pub fn validate(&self) -> Result<()> {
        for (p, what) in [
            (self.mask_prob, "mask probability"),
            (self.edge_drop_prob, "edge-drop probability"),
            (self.tau, "tau"),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{what} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if self.knn_k == 0 {
            return Err(Error::invalid("knn k must be at least 1"));
        }
        if self.embedding_layers == 0 || self.encoder_width == 0 || self.projector_width == 0 {
            return Err(Error::invalid("layer counts and widths must be positive"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// Symmetric, zero-diagonal, [0, 1]-valued dependence weights between cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialDependenceGraph(Matrix);

impl SpatialDependenceGraph {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::invalid("dependence graph must be square"));
        }
        if !m.is_symmetric() {
            return Err(Error::invalid("dependence graph must be symmetric"));
        }
        for i in 0..m.rows() {
            if m.get(i, i) != 0.0 {
                return Err(Error::invalid(format!("dependence graph has self-loop at {i}")));
            }
        }
        if m.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("dependence weights must lie in [0, 1]"));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn cells(&self) -> usize {
        self.0.rows()
    }

    /// `(i, j, weight)` for `i < j` and positive weight.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.0.rows();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let w = self.0.get(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }
}
