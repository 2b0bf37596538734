//! Deep clustering of grid cells: an autoencoder and a graph convolution over
//! the learned dependence graph are fused layer by layer and trained with a
//! dual self-supervised objective.

mod kmeans;
mod model;
mod train;

pub use kmeans::{kmeans, kmeans_init_centers, KMeansResult};
pub use model::{
    ancillary_distribution, ancillary_distribution_on, argmax_rows, autoencoder_forward_on,
    cluster_assignment, clustering_losses, fused_gcn_forward_on, kl_divergence, kl_from_log_on,
    reconstruction_loss, reconstruction_loss_on, target_distribution, AutoencoderOutput,
    AutoencoderVars, ClusteringLosses, DenseLayer, GcnOutput, KernelScale,
};
pub use train::{
    autoencoder_forward, best_cluster_count, fused_gcn_forward, pretrain_autoencoder, sweep_cluster_count,
    train_clustering, train_clustering_with, ClusterModel, ClusterTrainingOutcome, EpochSnapshot,
    FusedForward, PretrainOutcome, SweepRow,
};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Epochs between refreshes of the target distribution.
pub const TARGET_UPDATE_PERIOD: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModelConfig {
    /// Encoder widths after the input layer; the decoder and the graph
    /// convolution use the same widths.
    pub hidden: Vec<usize>,
    pub clusters: usize,
    pub fusion: f64,
    pub dof: f64,
    pub kernel_scale: KernelScale,
    pub alpha: f64,
    pub beta: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub kmeans_restarts: usize,
}

impl Default for ClusterModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 32, 16],
            clusters: 6,
            fusion: 0.5,
            dof: 1.0,
            kernel_scale: KernelScale::DegreesOfFreedom,
            alpha: 0.1,
            beta: 0.01,
            pretrain_epochs: 200,
            epochs: 300,
            learning_rate: 1e-3,
            seed: 0,
            kmeans_restarts: 20,
        }
    }
}

impl ClusterModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::invalid("layer widths must be non-empty and positive"));
        }
        if self.clusters == 0 {
            return Err(Error::invalid("cluster count must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.fusion) {
            return Err(Error::invalid(format!("fusion coefficient must lie in [0, 1], got {}", self.fusion)));
        }
        if !(self.dof > 0.0) {
            return Err(Error::invalid("degrees of freedom must be positive"));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid("loss weights must be non-negative"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::invalid("k-means needs at least one restart"));
        }
        Ok(())
    }

    pub fn embedding_width(&self) -> usize {
        *self.hidden.last().unwrap_or(&0)
    }
}

/// Final clustering of `m` cells into `K′` non-empty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    /// Bottleneck embedding, `m × d_emb`.
    pub h: Matrix,
    pub z: Matrix,
    pub q: Matrix,
    pub p: Matrix,
    pub centers: Matrix,
    pub labels: Vec<usize>,
    /// Index of each kept cluster in the trained model.
    pub kept: Vec<usize>,
}

impl ClusterState {
    pub fn clusters(&self) -> usize {
        self.z.cols()
    }

    pub fn cells(&self) -> usize {
        self.labels.len()
    }
}
