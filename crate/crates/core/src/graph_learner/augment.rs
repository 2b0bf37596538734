//! Attribute masking and edge dropping for the two contrastive views.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Keep-masks for one augmented view: 1 keeps, 0 drops.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewMasks {
    /// 1×d mask over feature columns.
    pub features: Matrix,
    /// m×m symmetric mask over edges; the diagonal is always kept.
    pub edges: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedView {
    pub adjacency: Matrix,
    pub features: Matrix,
    pub masks: ViewMasks,
    pub seed: u64,
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("{what} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

/// Draws feature-column masks first, then one decision per unordered pair
/// `i < j` in row-major order.
pub fn draw_masks(m: usize, d: usize, p_mask: f64, p_drop: f64, rng: &mut ChaCha8Rng) -> Result<ViewMasks> {
    check_prob(p_mask, "mask probability")?;
    check_prob(p_drop, "edge-drop probability")?;
    let features = Matrix::from_raw(
        1,
        d,
        (0..d).map(|_| if rng.random_bool(p_mask) { 0.0 } else { 1.0 }).collect(),
    );
    let mut edges = Matrix::identity(m);
    for i in 0..m {
        for j in i + 1..m {
            let keep = if rng.random_bool(p_drop) { 0.0 } else { 1.0 };
            edges.set_unchecked(i, j, keep);
            edges.set_unchecked(j, i, keep);
        }
    }
    Ok(ViewMasks { features, edges })
}

impl ViewMasks {
    pub fn apply_features(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.clone();
        if self.features.cols() != x.cols() {
            return Err(Error::shape("apply_features", format!("{:?}", x.shape())));
        }
        for r in 0..x.rows() {
            for (v, k) in out.row_mut(r).iter_mut().zip(self.features.data()) {
                *v *= k;
            }
        }
        Ok(out)
    }

    /// Feature mask broadcast to `rows` rows, for use as a tape constant.
    pub fn feature_mask_rows(&self, rows: usize) -> Matrix {
        let mut out = Matrix::zeros(rows, self.features.cols());
        for r in 0..rows {
            out.row_mut(r).copy_from_slice(self.features.data());
        }
        out
    }
}

pub fn augment_view(adjacency: &Matrix, features: &Matrix, p_mask: f64, p_drop: f64, seed: u64) -> Result<AugmentedView> {
    let m = adjacency.rows();
    if adjacency.cols() != m || features.rows() != m {
        return Err(Error::shape(
            "augment_view",
            format!("adjacency {:?}, features {:?}", adjacency.shape(), features.shape()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = draw_masks(m, features.cols(), p_mask, p_drop, &mut rng)?;
    Ok(AugmentedView {
        adjacency: adjacency.hadamard(&masks.edges)?,
        features: masks.apply_features(features)?,
        masks,
        seed,
    })
}
