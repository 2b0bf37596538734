use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::augment::draw_masks;
use super::knn::build_knn_graph;
use super::model::{
    bootstrap_anchor, contrastive_embed_on, embed_for_similarity, embed_for_similarity_on,
    learned_adjacency, learned_adjacency_on, nt_xent_loss_on, EncoderVars,
};
use super::{GraphLearnerConfig, SpatialDependenceGraph, BOOTSTRAP_PERIOD};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::optim::{glorot_uniform, Adam, ParamSet};

#[derive(Debug, Clone)]
pub struct GraphTrainingOutcome {
    pub graph: SpatialDependenceGraph,
    /// Contrastive loss of every epoch, before that epoch's update.
    pub losses: Vec<f64>,
    pub params: ParamSet,
    /// Anchor adjacency after the last bootstrapping step.
    pub anchor: Matrix,
}

pub fn train_graph_structure(bf: &Matrix, cfg: &GraphLearnerConfig) -> Result<GraphTrainingOutcome> {
    train_graph_structure_with(bf, cfg, |_, _, _| {})
}

/// As [`train_graph_structure`], calling `observe(epoch, loss, learned)` with
/// the learned adjacency of every epoch.
pub fn train_graph_structure_with(
    bf: &Matrix,
    cfg: &GraphLearnerConfig,
    mut observe: impl FnMut(usize, f64, &Matrix),
) -> Result<GraphTrainingOutcome> {
    cfg.validate()?;
    let (m, d) = bf.shape();
    if m < 2 {
        return Err(Error::invalid(format!("graph learning needs at least 2 cells, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut params = ParamSet::new();
    for l in 0..cfg.embedding_layers {
        params.push(format!("graph.omega.{l}"), Matrix::identity(d));
    }
    let (d1, d2) = (cfg.encoder_width, cfg.projector_width);
    params.push("graph.encoder.gcn1", glorot_uniform(d, d1, &mut rng));
    params.push("graph.encoder.gcn2", glorot_uniform(d1, d1, &mut rng));
    params.push("graph.projector.w1", glorot_uniform(d1, d2, &mut rng));
    params.push("graph.projector.b1", Matrix::zeros(1, d2));
    params.push("graph.projector.w2", glorot_uniform(d2, d2, &mut rng));
    params.push("graph.projector.b2", Matrix::zeros(1, d2));
    let n_omega = cfg.embedding_layers;

    let adam = Adam::new(cfg.learning_rate)?;
    let mut anchor = build_knn_graph(bf, cfg.knn_k.min(m - 1))?;
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let anchor_masks = draw_masks(m, d, cfg.mask_prob, cfg.edge_drop_prob, &mut rng)?;
        let learned_masks = draw_masks(m, d, cfg.mask_prob, cfg.edge_drop_prob, &mut rng)?;

        let mut tape = Tape::new();
        let vars = params.bind(&mut tape);
        let enc = EncoderVars {
            gcn1: vars[n_omega],
            gcn2: vars[n_omega + 1],
            proj1_w: vars[n_omega + 2],
            proj1_b: vars[n_omega + 3],
            proj2_w: vars[n_omega + 4],
            proj2_b: vars[n_omega + 5],
        };
        let x = tape.constant(bf.clone());
        let e = embed_for_similarity_on(&mut tape, x, &vars[..n_omega])?;
        let learned = learned_adjacency_on(&mut tape, e)?;

        let anchor_adj = tape.constant(anchor.hadamard(&anchor_masks.edges)?);
        let anchor_x = tape.constant(anchor_masks.apply_features(bf)?);
        let z_anchor = contrastive_embed_on(&mut tape, anchor_adj, anchor_x, &enc)?;

        let edge_keep = tape.constant(learned_masks.edges.clone());
        let learned_adj = tape.mul(learned, edge_keep)?;
        let learned_x = tape.constant(learned_masks.apply_features(bf)?);
        let z_learned = contrastive_embed_on(&mut tape, learned_adj, learned_x, &enc)?;

        let loss = nt_xent_loss_on(&mut tape, z_anchor, z_learned, cfg.temperature, cfg.denominator)?;
        let loss_value = tape.scalar(loss);
        if !loss_value.is_finite() {
            return Err(Error::Numerical(format!(
                "graph learner loss is {loss_value} at epoch {epoch}"
            )));
        }
        losses.push(loss_value);
        let learned_now = tape.value(learned).clone();
        observe(epoch, loss_value, &learned_now);

        params
            .backprop(&tape, loss, &vars)
            .map_err(|e| Error::Numerical(format!("graph learner epoch {epoch}: {e}")))?;
        adam.step(&mut params)
            .map_err(|e| Error::Numerical(format!("graph learner epoch {epoch}: {e}")))?;

        if epoch % BOOTSTRAP_PERIOD == 0 {
            anchor = bootstrap_anchor(&anchor, &learned_now, cfg.tau)?;
        }
        if epoch % 50 == 0 {
            debug!("graph learner epoch {epoch}: loss {loss_value:.6}");
        }
    }

    let omegas: Vec<Matrix> = (0..n_omega).map(|l| params.get(l).value().clone()).collect();
    let mut final_adj = learned_adjacency(&embed_for_similarity(bf, &omegas)?);
    if cfg.threshold > 0.0 {
        final_adj = final_adj.map(|w| if w < cfg.threshold { 0.0 } else { w });
    }
    Ok(GraphTrainingOutcome {
        graph: SpatialDependenceGraph::new(final_adj)?,
        losses,
        params,
        anchor,
    })
}
