use std::ops::RangeInclusive;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::kmeans::kmeans_init_centers;
use super::model::{
    ancillary_distribution_on, argmax_rows, autoencoder_forward_on, fused_gcn_forward_on,
    kl_from_log_on, reconstruction_loss_on, target_distribution, AutoencoderVars,
    ClusteringLosses, DenseLayer,
};
use super::{ClusterModelConfig, ClusterState, TARGET_UPDATE_PERIOD};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};
use crate::metrics::silhouette_score;
use crate::optim::{glorot_uniform, Adam, ParamSet};

/// Parameters of the clustering model. Autoencoder parameters come first in
/// `params`, followed by the graph-convolution weights, the output layer and
/// the cluster centers.
#[derive(Debug, Clone)]
pub struct ClusterModel {
    pub params: ParamSet,
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub clusters: usize,
}

struct BoundModel {
    all: Vec<Var>,
    ae: AutoencoderVars,
    gcn: Vec<Var>,
    output: Var,
    centers: Var,
}

impl ClusterModel {
    pub fn new(input_width: usize, cfg: &ClusterModelConfig) -> Result<Self> {
        cfg.validate()?;
        if input_width == 0 {
            return Err(Error::invalid("input width must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut params = ParamSet::new();
        let mut widths = vec![input_width];
        widths.extend(&cfg.hidden);
        for (l, w) in widths.windows(2).enumerate() {
            params.push(format!("cluster.encoder.{l}.w"), glorot_uniform(w[0], w[1], &mut rng));
            params.push(format!("cluster.encoder.{l}.b"), Matrix::zeros(1, w[1]));
        }
        let rev: Vec<usize> = widths.iter().rev().copied().collect();
        for (l, w) in rev.windows(2).enumerate() {
            params.push(format!("cluster.decoder.{l}.w"), glorot_uniform(w[0], w[1], &mut rng));
            params.push(format!("cluster.decoder.{l}.b"), Matrix::zeros(1, w[1]));
        }
        for (l, w) in widths.windows(2).enumerate() {
            params.push(format!("cluster.gcn.{l}"), glorot_uniform(w[0], w[1], &mut rng));
        }
        let emb = cfg.embedding_width();
        params.push("cluster.gcn.out", glorot_uniform(emb, cfg.clusters, &mut rng));
        params.push("cluster.centers", Matrix::zeros(cfg.clusters, emb));
        Ok(Self {
            params,
            input_width,
            hidden: cfg.hidden.clone(),
            clusters: cfg.clusters,
        })
    }

    fn layers(&self) -> usize {
        self.hidden.len()
    }

    /// Number of leading autoencoder parameters.
    pub fn autoencoder_len(&self) -> usize {
        4 * self.layers()
    }

    fn centers_index(&self) -> usize {
        self.params.len() - 1
    }

    pub fn centers(&self) -> &Matrix {
        self.params.get(self.centers_index()).value()
    }

    fn bind(&self, tape: &mut Tape) -> BoundModel {
        let all = self.params.bind(tape);
        let l = self.layers();
        let dense = |i: usize| DenseLayer {
            weight: all[2 * i],
            bias: all[2 * i + 1],
        };
        let ae = AutoencoderVars {
            encoder: (0..l).map(dense).collect(),
            decoder: (l..2 * l).map(dense).collect(),
        };
        let g0 = self.autoencoder_len();
        BoundModel {
            gcn: all[g0..g0 + l].to_vec(),
            output: all[g0 + l],
            centers: all[g0 + l + 1],
            ae,
            all,
        }
    }
}

/// Encoder activations per layer and the reconstruction of `x`.
pub fn autoencoder_forward(x: &Matrix, model: &ClusterModel) -> Result<(Vec<Matrix>, Matrix)> {
    let mut tape = Tape::new();
    let b = model.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let out = autoencoder_forward_on(&mut tape, xv, &b.ae)?;
    Ok((
        out.hidden.iter().map(|&h| tape.value(h).clone()).collect(),
        tape.value(out.reconstruction).clone(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedForward {
    pub inputs: Vec<Matrix>,
    pub layers: Vec<Matrix>,
    pub scores: Matrix,
}

/// Graph-convolution path over the dependence graph `a_star` (without self
/// loops), fusing in the autoencoder activations `hidden`.
pub fn fused_gcn_forward(
    x: &Matrix,
    a_star: &Matrix,
    hidden: &[Matrix],
    weights: &[Matrix],
    output: &Matrix,
    fusion: f64,
) -> Result<FusedForward> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let adj = tape.constant(matrix::normalized_adjacency(a_star)?);
    let hv: Vec<Var> = hidden.iter().map(|h| tape.constant(h.clone())).collect();
    let wv: Vec<Var> = weights.iter().map(|w| tape.constant(w.clone())).collect();
    let ov = tape.constant(output.clone());
    let out = fused_gcn_forward_on(&mut tape, xv, adj, &hv, &wv, ov, fusion)?;
    let grab = |vs: &[Var]| vs.iter().map(|&v| tape.value(v).clone()).collect::<Vec<_>>();
    Ok(FusedForward {
        inputs: grab(&out.inputs),
        layers: grab(&out.layers),
        scores: tape.value(out.scores).clone(),
    })
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub model: ClusterModel,
    /// Bottleneck embedding after pretraining.
    pub h: Matrix,
    /// Reconstruction loss before each update.
    pub losses: Vec<f64>,
}

/// Fresh model for `cfg.seed` with its autoencoder fitted to `fr` by
/// minimizing the reconstruction loss.
pub fn pretrain_autoencoder(fr: &Matrix, cfg: &ClusterModelConfig) -> Result<PretrainOutcome> {
    let mut model = ClusterModel::new(fr.cols(), cfg)?;
    let adam = Adam::new(cfg.learning_rate)?;
    let n_ae = model.autoencoder_len();
    let mut losses = Vec::with_capacity(cfg.pretrain_epochs);
    for epoch in 1..=cfg.pretrain_epochs {
        let mut tape = Tape::new();
        let b = model.bind(&mut tape);
        let x = tape.constant(fr.clone());
        let out = autoencoder_forward_on(&mut tape, x, &b.ae)?;
        let loss = reconstruction_loss_on(&mut tape, x, out.reconstruction)?;
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numerical(format!("pretraining loss is {value} at epoch {epoch}")));
        }
        losses.push(value);
        model
            .params
            .backprop(&tape, loss, &b.all)
            .map_err(|e| Error::Numerical(format!("pretraining epoch {epoch}: {e}")))?;
        for i in 0..n_ae {
            adam.update(model.params.get_mut(i))
                .map_err(|e| Error::Numerical(format!("pretraining epoch {epoch}: {e}")))?;
        }
    }
    let (hidden, _) = autoencoder_forward(fr, &model)?;
    let h = hidden.last().cloned().expect("at least one encoder layer");
    Ok(PretrainOutcome { model, h, losses })
}

/// Distributions seen during one training epoch, before its update.
#[derive(Debug, Clone)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub z: Matrix,
    pub q: Matrix,
    pub p: Matrix,
    pub losses: ClusteringLosses,
}

#[derive(Debug, Clone)]
pub struct ClusterTrainingOutcome {
    pub state: ClusterState,
    pub pretrain_losses: Vec<f64>,
    pub history: Vec<ClusteringLosses>,
    pub model: ClusterModel,
}

struct Forward {
    tape: Tape,
    bound: BoundModel,
    h: Var,
    z: Matrix,
    q: Var,
    log_z: Var,
    reconstruction: Var,
}

fn forward(model: &ClusterModel, fr: &Matrix, norm_adj: &Matrix, cfg: &ClusterModelConfig) -> Result<Forward> {
    let mut tape = Tape::new();
    let bound = model.bind(&mut tape);
    let x = tape.constant(fr.clone());
    let adj = tape.constant(norm_adj.clone());
    let ae = autoencoder_forward_on(&mut tape, x, &bound.ae)?;
    let gcn = fused_gcn_forward_on(&mut tape, x, adj, &ae.hidden, &bound.gcn, bound.output, cfg.fusion)?;
    let h = *ae.hidden.last().expect("at least one encoder layer");
    let q = ancillary_distribution_on(&mut tape, h, bound.centers, cfg.dof, cfg.kernel_scale)?;
    let log_z = tape.row_log_softmax(gcn.scores)?;
    let res = reconstruction_loss_on(&mut tape, x, ae.reconstruction)?;
    let z = matrix::row_softmax(tape.value(gcn.scores));
    Ok(Forward {
        tape,
        bound,
        h,
        z,
        q,
        log_z,
        reconstruction: res,
    })
}

pub fn train_clustering(fr: &Matrix, a_star: &Matrix, cfg: &ClusterModelConfig) -> Result<ClusterTrainingOutcome> {
    train_clustering_with(fr, a_star, cfg, |_| {})
}

/// As [`train_clustering`], passing a snapshot of every epoch to `observe`.
pub fn train_clustering_with(
    fr: &Matrix,
    a_star: &Matrix,
    cfg: &ClusterModelConfig,
    mut observe: impl FnMut(&EpochSnapshot),
) -> Result<ClusterTrainingOutcome> {
    cfg.validate()?;
    let m = fr.rows();
    if a_star.shape() != (m, m) {
        return Err(Error::shape(
            "train_clustering",
            format!("graph {:?} for {m} cells", a_star.shape()),
        ));
    }
    if cfg.clusters > m {
        return Err(Error::invalid(format!("{} clusters for {m} cells", cfg.clusters)));
    }
    let norm_adj = matrix::normalized_adjacency(a_star)?;

    let PretrainOutcome {
        mut model,
        h,
        losses: pretrain_losses,
    } = pretrain_autoencoder(fr, cfg)?;
    let centers = kmeans_init_centers(&h, cfg.clusters, cfg.kmeans_restarts, cfg.seed)?;
    let ci = model.centers_index();
    model.params.get_mut(ci).set_value(centers)?;

    let adam = Adam::new(cfg.learning_rate)?;
    let mut p = Matrix::zeros(m, cfg.clusters);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let Forward {
            mut tape,
            bound,
            z,
            q,
            log_z,
            reconstruction,
            ..
        } = forward(&model, fr, &norm_adj, cfg)?;
        let q_value = tape.value(q).clone();
        if epoch % TARGET_UPDATE_PERIOD == 0 {
            p = target_distribution(&q_value)?;
        }
        let l_clu = kl_from_log_on(&mut tape, &p, log_z)?;
        let log_q = tape.log(q)?;
        let l_ta = kl_from_log_on(&mut tape, &p, log_q)?;
        let a = tape.scale(l_clu, cfg.alpha)?;
        let b = tape.scale(l_ta, cfg.beta)?;
        let ab = tape.add(a, b)?;
        let total = tape.add(reconstruction, ab)?;
        let losses = ClusteringLosses {
            reconstruction: tape.scalar(reconstruction),
            clustering: tape.scalar(l_clu),
            target: tape.scalar(l_ta),
            total: tape.scalar(total),
        };
        if !losses.total.is_finite() {
            return Err(Error::Numerical(format!("clustering loss is {} at epoch {}", losses.total, epoch + 1)));
        }
        observe(&EpochSnapshot {
            epoch: epoch + 1,
            z,
            q: q_value,
            p: p.clone(),
            losses,
        });
        history.push(losses);
        model
            .params
            .backprop(&tape, total, &bound.all)
            .map_err(|e| Error::Numerical(format!("clustering epoch {}: {e}", epoch + 1)))?;
        adam.step(&mut model.params)
            .map_err(|e| Error::Numerical(format!("clustering epoch {}: {e}", epoch + 1)))?;
        if (epoch + 1) % 50 == 0 {
            debug!("clustering epoch {}: loss {:.6}", epoch + 1, losses.total);
        }
    }

    let fin = forward(&model, fr, &norm_adj, cfg)?;
    let h = fin.tape.value(fin.h).clone();
    let q = fin.tape.value(fin.q).clone();
    let state = finalize_state(h, fin.z, q, model.centers().clone())?;
    Ok(ClusterTrainingOutcome {
        state,
        pretrain_losses,
        history,
        model,
    })
}

fn select_columns(m: &Matrix, cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), cols.len());
    for r in 0..m.rows() {
        let src = m.row(r);
        let dst = out.row_mut(r);
        for (d, &c) in dst.iter_mut().zip(cols) {
            *d = src[c];
        }
        let s: f64 = dst.iter().sum();
        dst.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Drops clusters that no cell is assigned to and re-indexes labels densely.
fn finalize_state(h: Matrix, z: Matrix, q: Matrix, centers: Matrix) -> Result<ClusterState> {
    let k = z.cols();
    let labels = argmax_rows(&z);
    let mut used = vec![false; k];
    for &l in &labels {
        used[l] = true;
    }
    let kept: Vec<usize> = (0..k).filter(|&c| used[c]).collect();
    if kept.len() == k {
        let p = target_distribution(&q)?;
        return Ok(ClusterState {
            h,
            z,
            q,
            p,
            centers,
            labels,
            kept,
        });
    }
    warn!(
        "{} of {k} clusters are empty after training and were dropped",
        k - kept.len()
    );
    if kept.len() == 1 && k > 1 {
        warn!("all cells collapsed into a single cluster");
    }
    let mut remap = vec![usize::MAX; k];
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let z = select_columns(&z, &kept);
    let q = select_columns(&q, &kept);
    let p = target_distribution(&q)?;
    Ok(ClusterState {
        h,
        z,
        q,
        p,
        centers: centers.select_rows(&kept),
        labels: labels.iter().map(|&l| remap[l]).collect(),
        kept,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    /// `None` when training left fewer than two non-empty clusters.
    pub silhouette: Option<f64>,
    pub loss: f64,
}

/// Trains one model per cluster count and scores its final labels by the
/// silhouette of the pretrained bottleneck embedding. Pretraining depends only
/// on the seed, so every count is scored in the same space.
pub fn sweep_cluster_count(
    fr: &Matrix,
    a_star: &Matrix,
    ks: RangeInclusive<usize>,
    cfg: &ClusterModelConfig,
) -> Result<Vec<SweepRow>> {
    if ks.is_empty() {
        return Err(Error::invalid("cluster-count range is empty"));
    }
    let m = fr.rows();
    if *ks.start() < 2 || *ks.end() + 1 > m {
        return Err(Error::invalid(format!(
            "cluster counts must lie in [2, {}], got {}..={}",
            m.saturating_sub(1),
            ks.start(),
            ks.end()
        )));
    }
    let shared = pretrain_autoencoder(fr, cfg)?.h;
    ks.collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let run_cfg = ClusterModelConfig {
                clusters: k,
                ..cfg.clone()
            };
            let out = train_clustering(fr, a_star, &run_cfg)?;
            let silhouette = silhouette_score(&shared, &out.state.labels).ok();
            Ok(SweepRow {
                k,
                silhouette,
                loss: out.history.last().map_or(f64::NAN, |l| l.total),
            })
        })
        .collect()
}

/// Cluster count with the highest silhouette; the smaller count wins ties.
pub fn best_cluster_count(rows: &[SweepRow]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for r in rows {
        if let Some(s) = r.silhouette {
            if best.is_none_or(|(k, b)| s > b || (s == b && r.k < k)) {
                best = Some((r.k, s));
            }
        }
    }
    best.map(|(k, _)| k)
}
