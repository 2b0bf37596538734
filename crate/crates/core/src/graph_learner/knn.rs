use crate::error::{Error, Result};
use crate::matrix::{cosine_similarity_matrix, Matrix};

/// Cosine k-nearest-neighbour graph over the rows of `x`.
///
/// Each row keeps its `k` most similar other rows, with equal computed
/// similarities going to the smaller index. Weights are the similarities
/// clamped at 0, and the result is symmetrized with an elementwise maximum.
/// The diagonal is zero.
pub fn build_knn_graph(x: &Matrix, k: usize) -> Result<Matrix> {
    let m = x.rows();
    if k == 0 || k + 1 > m {
        return Err(Error::invalid(format!("knn k = {k} must lie in 1..={}", m.saturating_sub(1))));
    }
    let sim = cosine_similarity_matrix(x);
    let mut directed = Matrix::zeros(m, m);
    let mut order: Vec<usize> = Vec::with_capacity(m);
    for i in 0..m {
        order.clear();
        order.extend((0..m).filter(|&j| j != i));
        let row = sim.row(i);
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        for &j in &order[..k] {
            directed.set_unchecked(i, j, row[j].max(0.0));
        }
    }
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            out.set_unchecked(i, j, directed.get(i, j).max(directed.get(j, i)));
        }
    }
    Ok(out)
}
