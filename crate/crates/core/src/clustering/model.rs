//! Forward passes, assignment distributions and losses of the deep
//! clustering model. Every `*_on` function records onto a [`Tape`]; the plain
//! variants evaluate the same code path on constants.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// How the squared distance is scaled inside the Student-t kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelScale {
    /// `1 + d²/α`, the usual Student-t form with α degrees of freedom.
    #[default]
    DegreesOfFreedom,
    /// `1 + d²/2` regardless of α.
    Half,
}

#[derive(Debug, Clone, Copy)]
pub struct DenseLayer {
    pub weight: Var,
    pub bias: Var,
}

/// Encoder layers followed by mirrored decoder layers.
#[derive(Debug, Clone)]
pub struct AutoencoderVars {
    pub encoder: Vec<DenseLayer>,
    pub decoder: Vec<DenseLayer>,
}

#[derive(Debug, Clone)]
pub struct AutoencoderOutput {
    /// `H^(1) .. H^(L)`; the last entry is the bottleneck embedding.
    pub hidden: Vec<Var>,
    pub reconstruction: Var,
}

fn dense(tape: &mut Tape, x: Var, layer: &DenseLayer, op: &'static str) -> Result<Var> {
    let (w_rows, _) = tape.value(layer.weight).shape();
    if tape.value(x).cols() != w_rows {
        return Err(Error::shape(
            op,
            format!("input width {} vs weight {:?}", tape.value(x).cols(), tape.value(layer.weight).shape()),
        ));
    }
    let lin = tape.matmul(x, layer.weight)?;
    tape.add_row(lin, layer.bias)
}

/// Encoder layers are `ReLU(H W + b)`; decoder layers likewise except the
/// last, which is linear so signed z-scores can be reconstructed.
pub fn autoencoder_forward_on(tape: &mut Tape, x: Var, p: &AutoencoderVars) -> Result<AutoencoderOutput> {
    let mut hidden = Vec::with_capacity(p.encoder.len());
    let mut h = x;
    for layer in &p.encoder {
        let lin = dense(tape, h, layer, "autoencoder encoder")?;
        h = tape.relu(lin)?;
        hidden.push(h);
    }
    let last = p.decoder.len().saturating_sub(1);
    for (i, layer) in p.decoder.iter().enumerate() {
        let lin = dense(tape, h, layer, "autoencoder decoder")?;
        h = if i == last { lin } else { tape.relu(lin)? };
    }
    if tape.value(h).shape() != tape.value(x).shape() {
        return Err(Error::shape(
            "autoencoder_forward",
            format!("reconstruction {:?} vs input {:?}", tape.value(h).shape(), tape.value(x).shape()),
        ));
    }
    Ok(AutoencoderOutput {
        hidden,
        reconstruction: h,
    })
}

/// `(1/2N) Σ_i ‖x_i − x̂_i‖²` with `N` the number of rows.
pub fn reconstruction_loss_on(tape: &mut Tape, x: Var, x_hat: Var) -> Result<Var> {
    let n = tape.value(x).rows().max(1);
    let diff = tape.sub(x, x_hat)?;
    let sq = tape.mul(diff, diff)?;
    let total = tape.sum(sq)?;
    tape.scale(total, 0.5 / n as f64)
}

pub fn reconstruction_loss(x: &Matrix, x_hat: &Matrix) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(x.clone());
    let b = tape.constant(x_hat.clone());
    let l = reconstruction_loss_on(&mut tape, a, b)?;
    Ok(tape.scalar(l))
}

#[derive(Debug, Clone)]
pub struct GcnOutput {
    /// Input consumed by each graph-convolution layer, `Z̃^(l−1)`.
    pub inputs: Vec<Var>,
    /// `Z^(1) .. Z^(L)`.
    pub layers: Vec<Var>,
    /// Pre-softmax cluster scores `Â Z^(L) W_out`.
    pub scores: Var,
}

/// Graph convolution over the fixed renormalized adjacency `norm_adj`, where
/// layer `l` consumes `(1−ε) H^(l−1) + ε Z^(l−1)` and `H^(0) = Z^(0) = x`.
pub fn fused_gcn_forward_on(
    tape: &mut Tape,
    x: Var,
    norm_adj: Var,
    hidden: &[Var],
    weights: &[Var],
    output: Var,
    fusion: f64,
) -> Result<GcnOutput> {
    if weights.len() != hidden.len() {
        return Err(Error::shape(
            "fused_gcn_forward",
            format!("{} GCN layers vs {} autoencoder layers", weights.len(), hidden.len()),
        ));
    }
    if !(0.0..=1.0).contains(&fusion) {
        return Err(Error::invalid(format!("fusion coefficient must lie in [0, 1], got {fusion}")));
    }
    let mut inputs = Vec::with_capacity(weights.len());
    let mut layers = Vec::with_capacity(weights.len());
    let mut z = x;
    for (l, &w) in weights.iter().enumerate() {
        let input = if l == 0 {
            x
        } else {
            let h_prev = hidden[l - 1];
            if tape.value(h_prev).shape() != tape.value(z).shape() {
                return Err(Error::shape(
                    "fused_gcn_forward",
                    format!(
                        "layer {l}: autoencoder {:?} vs GCN {:?}",
                        tape.value(h_prev).shape(),
                        tape.value(z).shape()
                    ),
                ));
            }
            let a = tape.scale(h_prev, 1.0 - fusion)?;
            let b = tape.scale(z, fusion)?;
            tape.add(a, b)?
        };
        inputs.push(input);
        let agg = tape.matmul(norm_adj, input)?;
        let lin = tape.matmul(agg, w)?;
        z = tape.relu(lin)?;
        layers.push(z);
    }
    let agg = tape.matmul(norm_adj, z)?;
    let scores = tape.matmul(agg, output)?;
    Ok(GcnOutput {
        inputs,
        layers,
        scores,
    })
}

/// Soft assignment (row softmax) and hard labels (argmax, smallest index on ties).
pub fn cluster_assignment(scores: &Matrix) -> (Matrix, Vec<usize>) {
    let z = matrix::row_softmax(scores);
    let labels = argmax_rows(&z);
    (z, labels)
}

pub fn argmax_rows(m: &Matrix) -> Vec<usize> {
    (0..m.rows())
        .map(|r| {
            let row = m.row(r);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// Student-t soft assignment of embedding rows to cluster centers.
pub fn ancillary_distribution_on(
    tape: &mut Tape,
    h: Var,
    centers: Var,
    dof: f64,
    scale: KernelScale,
) -> Result<Var> {
    if tape.value(centers).rows() == 0 {
        return Err(Error::invalid("ancillary distribution needs at least one center"));
    }
    if !(dof > 0.0) {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {dof}")));
    }
    let d2 = tape.squared_distances(h, centers)?;
    let divisor = match scale {
        KernelScale::DegreesOfFreedom => dof,
        KernelScale::Half => 2.0,
    };
    let scaled = tape.scale(d2, 1.0 / divisor)?;
    let base = tape.add_scalar(scaled, 1.0)?;
    let kernel = tape.powf(base, -(dof + 1.0) / 2.0)?;
    tape.row_sum_normalize(kernel)
}

pub fn ancillary_distribution(h: &Matrix, centers: &Matrix, dof: f64, scale: KernelScale) -> Result<Matrix> {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone());
    let cv = tape.constant(centers.clone());
    let q = ancillary_distribution_on(&mut tape, hv, cv, dof, scale)?;
    Ok(tape.value(q).clone())
}

/// Sharpened target `p_ik ∝ q_ik² / f_k` with soft frequencies `f_k = Σ_i q_ik`.
pub fn target_distribution(q: &Matrix) -> Result<Matrix> {
    let (m, k) = q.shape();
    let freq: Vec<f64> = (0..k).map(|c| (0..m).map(|r| q.get(r, c)).sum()).collect();
    if let Some(empty) = freq.iter().position(|&f| f <= 0.0) {
        return Err(Error::Numerical(format!(
            "cluster {empty} has zero soft frequency in the target distribution"
        )));
    }
    let mut p = Matrix::zeros(m, k);
    for r in 0..m {
        let row = p.row_mut(r);
        for (c, v) in row.iter_mut().enumerate() {
            let qv = q.get(r, c);
            *v = qv * qv / freq[c];
        }
        let s: f64 = row.iter().sum();
        if !(s > 0.0) {
            return Err(Error::Numerical(format!("row {r} of Q has no mass")));
        }
        row.iter_mut().for_each(|v| *v /= s);
    }
    Ok(p)
}

/// `Σ p log p`, skipping zero entries.
fn neg_entropy(p: &Matrix) -> f64 {
    p.data().iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
}

/// `KL(P ‖ R)` given `log R` on the tape and a constant `P`.
pub fn kl_from_log_on(tape: &mut Tape, p: &Matrix, log_r: Var) -> Result<Var> {
    if tape.value(log_r).shape() != p.shape() {
        return Err(Error::shape(
            "kl_divergence",
            format!("{:?} vs {:?}", p.shape(), tape.value(log_r).shape()),
        ));
    }
    let pv = tape.constant(p.clone());
    let cross = tape.mul(pv, log_r)?;
    let s = tape.sum(cross)?;
    let neg = tape.scale(s, -1.0)?;
    tape.add_scalar(neg, neg_entropy(p))
}

/// `Σ_ik p_ik log(p_ik / r_ik)`; zero `p_ik` contribute nothing.
pub fn kl_divergence(p: &Matrix, r: &Matrix) -> Result<f64> {
    if p.shape() != r.shape() {
        return Err(Error::shape("kl_divergence", format!("{:?} vs {:?}", p.shape(), r.shape())));
    }
    let mut total = 0.0;
    for (i, (&pv, &rv)) in p.data().iter().zip(r.data()).enumerate() {
        if pv > 0.0 {
            if rv <= 0.0 {
                return Err(Error::Numerical(format!(
                    "infinite KL divergence: zero probability at entry {i} where the target is positive"
                )));
            }
            total += pv * (pv / rv).ln();
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringLosses {
    pub reconstruction: f64,
    pub clustering: f64,
    pub target: f64,
    pub total: f64,
}

/// `L_clu = KL(P‖Z)`, `L_ta = KL(P‖Q)`, `L = L_res + α L_clu + β L_ta`.
pub fn clustering_losses(
    p: &Matrix,
    z: &Matrix,
    q: &Matrix,
    reconstruction: f64,
    alpha: f64,
    beta: f64,
) -> Result<ClusteringLosses> {
    let clustering = kl_divergence(p, z)?;
    let target = kl_divergence(p, q)?;
    Ok(ClusteringLosses {
        reconstruction,
        clustering,
        target,
        total: reconstruction + alpha * clustering + beta * target,
    })
}
