//! Differentiable pieces of the graph learner: similarity embedding, learned
//! adjacency, shared GCN encoder / MLP projector and the contrastive loss.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

/// `E ← row_l2_normalize(ReLU(E Ω))` for each layer, starting from `x`.
pub fn embed_for_similarity_on(tape: &mut Tape, x: Var, omegas: &[Var]) -> Result<Var> {
    let d = tape.value(x).cols();
    let mut e = x;
    for &w in omegas {
        if tape.value(w).shape() != (d, d) {
            return Err(Error::shape(
                "embed_for_similarity",
                format!("Ω must be {d}x{d}, got {:?}", tape.value(w).shape()),
            ));
        }
        let lin = tape.matmul(e, w)?;
        let act = tape.relu(lin)?;
        e = tape.row_l2_normalize(act)?;
    }
    Ok(e)
}

pub fn embed_for_similarity(bf: &Matrix, omegas: &[Matrix]) -> Result<Matrix> {
    let mut tape = Tape::new();
    let x = tape.constant(bf.clone());
    let ws: Vec<Var> = omegas.iter().map(|w| tape.constant(w.clone())).collect();
    let e = embed_for_similarity_on(&mut tape, x, &ws)?;
    Ok(tape.value(e).clone())
}

/// `ReLU(cos(E))` with the diagonal zeroed. The upper clamp at 1 only
/// absorbs rounding of unit-vector dot products.
pub fn learned_adjacency_on(tape: &mut Tape, e: Var) -> Result<Var> {
    let n = tape.value(e).rows();
    let unit = tape.row_l2_normalize(e)?;
    let sim = tape.matmul_t(unit, unit)?;
    let clamped = tape.clamp(sim, 0.0, 1.0)?;
    let off_diag = tape.constant(off_diagonal_mask(n));
    tape.mul(clamped, off_diag)
}

pub fn learned_adjacency(e: &Matrix) -> Matrix {
    let mut a = matrix::elementwise_relu(&matrix::cosine_similarity_matrix(e));
    for i in 0..a.rows() {
        a.set_unchecked(i, i, 0.0);
    }
    a
}

pub(crate) fn off_diagonal_mask(n: usize) -> Matrix {
    let mut m = Matrix::filled(n, n, 1.0);
    for i in 0..n {
        m.set_unchecked(i, i, 0.0);
    }
    m
}

/// Parameters shared by both views: GCN encoder (θ) and MLP projector (ξ).
#[derive(Debug, Clone, Copy)]
pub struct EncoderVars {
    pub gcn1: Var,
    pub gcn2: Var,
    pub proj1_w: Var,
    pub proj1_b: Var,
    pub proj2_w: Var,
    pub proj2_b: Var,
}

/// Two ReLU graph-convolution layers on the renormalized adjacency followed
/// by a two-layer perceptron. Returns the m×d₂ projection.
pub fn contrastive_embed_on(tape: &mut Tape, adjacency: Var, features: Var, p: &EncoderVars) -> Result<Var> {
    let norm = tape.gcn_normalize(adjacency)?;
    let mut h = features;
    for w in [p.gcn1, p.gcn2] {
        let agg = tape.matmul(norm, h)?;
        let lin = tape.matmul(agg, w)?;
        h = tape.relu(lin)?;
    }
    let z1 = tape.matmul(h, p.proj1_w)?;
    let z1 = tape.add_row(z1, p.proj1_b)?;
    let z1 = tape.relu(z1)?;
    let z2 = tape.matmul(z1, p.proj2_w)?;
    tape.add_row(z2, p.proj2_b)
}

/// Plain-matrix evaluation of [`contrastive_embed_on`]; `params` in the order
/// gcn1, gcn2, proj1_w, proj1_b, proj2_w, proj2_b.
pub fn contrastive_embed(adjacency: &Matrix, features: &Matrix, params: &[Matrix; 6]) -> Result<Matrix> {
    let mut tape = Tape::new();
    let a = tape.constant(adjacency.clone());
    let x = tape.constant(features.clone());
    let v: Vec<Var> = params.iter().map(|m| tape.constant(m.clone())).collect();
    let vars = EncoderVars {
        gcn1: v[0],
        gcn2: v[1],
        proj1_w: v[2],
        proj1_b: v[3],
        proj2_w: v[4],
        proj2_b: v[5],
    };
    let z = contrastive_embed_on(&mut tape, a, x, &vars)?;
    Ok(tape.value(z).clone())
}

/// Which terms appear in each NT-Xent denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NtXentDenominator {
    /// Positive pair plus every cross-view negative.
    #[default]
    Standard,
    /// Cross-view negatives only (`j ≠ i`).
    NegativesOnly,
}

/// Symmetric NT-Xent over cosine similarities of paired rows.
pub fn nt_xent_loss_on(
    tape: &mut Tape,
    z_k: Var,
    z_l: Var,
    temperature: f64,
    denominator: NtXentDenominator,
) -> Result<Var> {
    let (sk, sl) = (tape.value(z_k).shape(), tape.value(z_l).shape());
    if sk != sl {
        return Err(Error::shape("nt_xent_loss", format!("{sk:?} vs {sl:?}")));
    }
    let n = sk.0;
    if n < 2 {
        return Err(Error::invalid("NT-Xent needs at least 2 nodes for negatives"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!("temperature must be positive, got {temperature}")));
    }
    let exclude = denominator == NtXentDenominator::NegativesOnly;
    let uk = tape.row_l2_normalize(z_k)?;
    let ul = tape.row_l2_normalize(z_l)?;
    let sim = tape.matmul_t(uk, ul)?;
    let logits = tape.scale(sim, 1.0 / temperature)?;
    let logits_t = tape.transpose(logits)?;
    let lse_k = tape.row_log_sum_exp(logits, exclude)?;
    let lse_l = tape.row_log_sum_exp(logits_t, exclude)?;
    let pos = tape.diag(logits)?;
    let pos2 = tape.scale(pos, 2.0)?;
    let lse = tape.add(lse_k, lse_l)?;
    let per_node = tape.sub(lse, pos2)?;
    let total = tape.sum(per_node)?;
    tape.scale(total, 1.0 / (2.0 * n as f64))
}

pub fn nt_xent_loss(z_k: &Matrix, z_l: &Matrix, temperature: f64, denominator: NtXentDenominator) -> Result<f64> {
    let mut tape = Tape::new();
    let a = tape.constant(z_k.clone());
    let b = tape.constant(z_l.clone());
    let l = nt_xent_loss_on(&mut tape, a, b, temperature, denominator)?;
    Ok(tape.scalar(l))
}

/// `τK + (1−τ)Ã*`, kept inside the elementwise envelope of its inputs.
pub fn bootstrap_anchor(anchor: &Matrix, learned: &Matrix, tau: f64) -> Result<Matrix> {
    if anchor.shape() != learned.shape() {
        return Err(Error::shape(
            "bootstrap_anchor",
            format!("{:?} vs {:?}", anchor.shape(), learned.shape()),
        ));
    }
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::invalid(format!("tau must lie in [0, 1], got {tau}")));
    }
    Ok(anchor.zip_map(learned, |k, a| {
        (tau * k + (1.0 - tau) * a).clamp(k.min(a), k.max(a))
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_rows_are_unit_or_zero() {
        let bf = Matrix::new(3, 3, vec![1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let w = Matrix::new(3, 3, vec![0.5, -0.2, 0.1, 0.3, 0.9, -0.4, -0.1, 0.2, 0.7]).unwrap();
        let e = embed_for_similarity(&bf, &[w.clone(), w]).unwrap();
        for r in 0..3 {
            let norm: f64 = e.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_weights_give_normalized_input() {
        let bf = Matrix::new(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
        let e = embed_for_similarity(&bf, &[Matrix::identity(3)]).unwrap();
        assert_eq!(e, matrix::row_l2_normalize(&bf));
        assert!(embed_for_similarity(&bf, &[Matrix::identity(2)]).is_err());
    }

    #[test]
    fn learned_adjacency_examples() {
        let orth = Matrix::identity(3);
        assert_eq!(learned_adjacency(&orth), Matrix::zeros(3, 3));
        let same = Matrix::filled(3, 2, 0.7);
        let a = learned_adjacency(&same);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(a.get(i, j), if i == j { 0.0 } else { 1.0 });
            }
        }
        let obtuse = Matrix::new(2, 2, vec![1.0, 0.0, -1.0, 1.0]).unwrap();
        assert_eq!(learned_adjacency(&obtuse), Matrix::zeros(2, 2));
    }

    #[test]
    fn tape_and_plain_adjacency_agree() {
        let e = Matrix::new(3, 2, vec![1.0, 0.2, 0.3, 0.9, -0.5, 0.5]).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(e.clone());
        let a = learned_adjacency_on(&mut tape, v).unwrap();
        assert!(tape.value(a).max_abs_diff(&learned_adjacency(&e)) < 1e-15);
        assert!(tape.value(a).is_symmetric());
    }

    #[test]
    fn nt_xent_two_node_closed_form() {
        let z = Matrix::identity(2);
        let l = nt_xent_loss(&z, &z, 1.0, NtXentDenominator::Standard).unwrap();
        assert!((l - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
        assert!((l - 0.31326).abs() < 1e-5);
        let printed = nt_xent_loss(&z, &z, 1.0, NtXentDenominator::NegativesOnly).unwrap();
        assert!((printed + 1.0).abs() < 1e-12);
    }

    #[test]
    fn nt_xent_prefers_aligned_positives() {
        let good = Matrix::identity(3);
        let shifted = Matrix::new(3, 3, vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]).unwrap();
        let aligned = nt_xent_loss(&good, &good, 0.5, NtXentDenominator::Standard).unwrap();
        let misaligned = nt_xent_loss(&good, &shifted, 0.5, NtXentDenominator::Standard).unwrap();
        assert!(aligned < misaligned);
        assert!(aligned >= 0.0);
        assert!(nt_xent_loss(&Matrix::identity(1), &Matrix::identity(1), 1.0, Default::default()).is_err());
    }

    #[test]
    fn bootstrap_examples() {
        let k = Matrix::new(1, 2, vec![1.0, 0.3]).unwrap();
        let a = Matrix::new(1, 2, vec![0.0, 0.7]).unwrap();
        assert_eq!(bootstrap_anchor(&k, &a, 1.0).unwrap(), k);
        assert_eq!(bootstrap_anchor(&k, &a, 0.0).unwrap(), a);
        assert!((bootstrap_anchor(&k, &a, 0.9).unwrap().get(0, 0) - 0.9).abs() < 1e-15);
        assert!(bootstrap_anchor(&k, &Matrix::zeros(2, 2), 0.5).is_err());
    }

    #[test]
    fn single_node_encoder_collapses_to_dense_layers() {
        let x = Matrix::new(1, 2, vec![0.5, -1.0]).unwrap();
        let g1 = Matrix::new(2, 2, vec![1.0, -0.5, 0.25, 2.0]).unwrap();
        let g2 = Matrix::new(2, 2, vec![0.3, 0.1, -0.2, 0.4]).unwrap();
        let p1 = Matrix::new(2, 1, vec![1.0, 1.0]).unwrap();
        let b1 = Matrix::new(1, 1, vec![0.1]).unwrap();
        let p2 = Matrix::new(1, 1, vec![2.0]).unwrap();
        let b2 = Matrix::new(1, 1, vec![-0.3]).unwrap();
        let z = contrastive_embed(
            &Matrix::zeros(1, 1),
            &x,
            &[g1.clone(), g2.clone(), p1.clone(), b1.clone(), p2.clone(), b2.clone()],
        )
        .unwrap();
        let relu = |m: Matrix| matrix::elementwise_relu(&m);
        let h = relu(matrix::matrix_product(&relu(matrix::matrix_product(&x, &g1).unwrap()), &g2).unwrap());
        let z1 = relu(matrix::matrix_product(&h, &p1).unwrap().add(&b1).unwrap());
        let want = matrix::matrix_product(&z1, &p2).unwrap().add(&b2).unwrap();
        assert!(z.max_abs_diff(&want) < 1e-15);
    }
}
