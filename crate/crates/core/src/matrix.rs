//! Dense row-major `f64` matrices and the forward kernels shared by the
//! differentiable tape and the plain (inference / oracle) code paths.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            if r > 0 {
                write!(f, "; ")?;
            }
            let row = self.row(r);
            for (c, v) in row.iter().take(8).enumerate() {
                if c > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{v:.6}")?;
            }
            if self.cols > 8 {
                write!(f, ", ..")?;
            }
        }
        if self.rows > 8 {
            write!(f, "; ..")?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting NaN/Inf entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(
                "Matrix::new",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "Matrix::new (entry {} of {rows}x{cols})",
                pos
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("Matrix::from_rows", "ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::from_raw(rows, cols, vec![value; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Sets one entry. Non-finite values are rejected.
    pub fn set(&mut self, r: usize, c: usize, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("Matrix::set({r}, {c})")));
        }
        self.data[r * self.cols + c] = value;
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub(crate) fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix::from_raw(self.rows, self.cols, self.data.iter().map(|&v| f(v)).collect())
    }

    pub(crate) fn zip_map(&self, other: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
        debug_assert_eq!(self.shape(), other.shape());
        Matrix::from_raw(
            self.rows,
            self.cols,
            self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    fn same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "add")?;
        self.zip_map(other, |a, b| a + b).checked("add")
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "sub")?;
        self.zip_map(other, |a, b| a - b).checked("sub")
    }

    pub fn hadamard(&self, other: &Matrix) -> Result<Matrix> {
        self.same_shape(other, "hadamard")?;
        self.zip_map(other, |a, b| a * b).checked("hadamard")
    }

    pub fn scale(&self, factor: f64) -> Result<Matrix> {
        self.map(|v| v * factor).checked("scale")
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// Copy with the listed rows in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_raw(idx.len(), self.cols, data)
    }

    pub(crate) fn checked(self, op: &str) -> Result<Matrix> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(self)
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }
}

pub fn matrix_product(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::shape(
            "matrix_product",
            format!("{:?} x {:?}", a.shape(), b.shape()),
        ));
    }
    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Matrix::from_raw(m, n, out).checked("matrix_product")
}

/// `a · bᵀ` without materializing the transpose.
pub(crate) fn product_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "product_transposed",
            format!("{:?} x {:?}^T", a.shape(), b.shape()),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            let br = b.row(j);
            out.data[i * b.rows + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    out.checked("product_transposed")
}

pub fn elementwise_relu(m: &Matrix) -> Matrix {
    m.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Scales every nonzero row to unit Euclidean norm; all-zero rows pass through.
pub fn row_l2_normalize(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

pub fn row_softmax(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    for r in 0..m.rows {
        softmax_in_place(out.row_mut(r));
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

/// Log-sum-exp of one row, stabilized by the row maximum.
pub(crate) fn log_sum_exp(row: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = row.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Pairwise cosine similarity of the rows of `e`.
///
/// Zero rows have similarity 0 against everything (including themselves);
/// nonzero rows have an exact 1 on the diagonal. The result is exactly
/// symmetric and clamped to [-1, 1].
pub fn cosine_similarity_matrix(e: &Matrix) -> Matrix {
    let n = e.rows;
    let unit = row_l2_normalize(e);
    let nonzero: Vec<bool> = (0..n).map(|r| e.row(r).iter().any(|&v| v != 0.0)).collect();
    let mut s = Matrix::zeros(n, n);
    for i in 0..n {
        if !nonzero[i] {
            continue;
        }
        s.data[i * n + i] = 1.0;
        for j in 0..i {
            if !nonzero[j] {
                continue;
            }
            let dot: f64 = unit.row(i).iter().zip(unit.row(j)).map(|(a, b)| a * b).sum();
            let v = dot.clamp(-1.0, 1.0);
            s.data[i * n + j] = v;
            s.data[j * n + i] = v;
        }
    }
    s
}

/// Squared Euclidean distances between rows of `a` (n×d) and rows of `b` (k×d).
pub fn squared_distances(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::shape(
            "squared_distances",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        for k in 0..b.rows {
            out.data[i * b.rows + k] = a
                .row(i)
                .iter()
                .zip(b.row(k))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
        }
    }
    out.checked("squared_distances")
}

/// Symmetric renormalized adjacency `D^{-1/2} (A + I) D^{-1/2}` with
/// `D` the row sums of `A + I`.
pub fn normalized_adjacency(a: &Matrix) -> Result<Matrix> {
    if a.rows != a.cols {
        return Err(Error::shape("normalized_adjacency", format!("{:?}", a.shape())));
    }
    let n = a.rows;
    let mut tilde = a.clone();
    for i in 0..n {
        tilde.data[i * n + i] += 1.0;
    }
    let inv_sqrt = inv_sqrt_degrees(&tilde)?;
    for i in 0..n {
        for j in 0..n {
            tilde.data[i * n + j] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(tilde)
}

pub(crate) fn inv_sqrt_degrees(tilde: &Matrix) -> Result<Vec<f64>> {
    (0..tilde.rows)
        .map(|i| {
            let d: f64 = tilde.row(i).iter().sum();
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::Numerical(format!(
                    "node {i} has nonpositive degree {d} after adding self-loops"
                )))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn product_examples() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matrix_product(&a, &Matrix::identity(2)).unwrap(), a);
        assert_eq!(matrix_product(&a, &Matrix::zeros(2, 3)).unwrap(), Matrix::zeros(2, 3));
        let b = m(&[&[5.0], &[6.0]]);
        assert_eq!(matrix_product(&a, &b).unwrap(), m(&[&[17.0], &[39.0]]));
        assert!(matches!(matrix_product(&b, &b), Err(Error::Shape { .. })));
    }

    #[test]
    fn rejects_non_finite_construction() {
        assert!(Matrix::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Matrix::new(1, 2, vec![1.0]).is_err());
        let mut z = Matrix::zeros(1, 1);
        assert!(z.set(0, 0, f64::INFINITY).is_err());
    }

    #[test]
    fn relu_examples() {
        assert_eq!(elementwise_relu(&m(&[&[-1.0, 2.0]])), m(&[&[0.0, 2.0]]));
        let pos = m(&[&[0.0, 1.5], &[2.0, 3.0]]);
        assert_eq!(elementwise_relu(&pos), pos);
        assert_eq!(elementwise_relu(&m(&[&[-0.5, 0.0, 0.5]])), m(&[&[0.0, 0.0, 0.5]]));
    }

    #[test]
    fn normalize_examples() {
        let n = row_l2_normalize(&m(&[&[3.0, 4.0]]));
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15 && (n.get(0, 1) - 0.8).abs() < 1e-15);
        let unit = m(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(row_l2_normalize(&unit), unit);
        assert_eq!(row_l2_normalize(&Matrix::zeros(1, 3)), Matrix::zeros(1, 3));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(row_softmax(&m(&[&[0.0, 0.0]])), m(&[&[0.5, 0.5]]));
        assert_eq!(row_softmax(&m(&[&[1000.0, 1000.0]])), m(&[&[0.5, 0.5]]));
        let s = row_softmax(&m(&[&[0.0, 3f64.ln()]]));
        assert!((s.get(0, 0) - 0.25).abs() < 1e-15);
        assert!((s.get(0, 1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_similarity_matrix(&m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(s.get(0, 1), 0.0);
        let s = cosine_similarity_matrix(&m(&[&[1.0, 1.0], &[2.0, 2.0]]));
        assert!((s.get(0, 1) - 1.0).abs() < 1e-15);
        let s = cosine_similarity_matrix(&m(&[&[1.0, 0.0], &[1.0, 1.0]]));
        assert!((s.get(0, 1) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        let s = cosine_similarity_matrix(&m(&[&[0.0, 0.0], &[1.0, 1.0]]));
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), 1.0);
    }

    #[test]
    fn renormalized_adjacency_of_isolated_node_is_identity() {
        assert_eq!(normalized_adjacency(&Matrix::zeros(1, 1)).unwrap(), Matrix::identity(1));
        let path = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let n = normalized_adjacency(&path).unwrap();
        assert!(n.max_abs_diff(&m(&[&[0.5, 0.5], &[0.5, 0.5]])) < 1e-15);
    }
}
