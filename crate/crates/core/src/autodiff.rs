//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation in evaluation order; [`Tape::backward`]
//! walks it in reverse and accumulates exact adjoints. Only nodes that depend
//! on a differentiable leaf receive gradients.

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Clamp(Var, f64, f64),
    RowL2Normalize(Var),
    RowSoftmax(Var),
    RowLogSoftmax(Var),
    RowSumNormalize(Var),
    Powf(Var, f64),
    Log(Var),
    Sum(Var),
    Diag(Var),
    RowLogSumExp(Var, bool),
    SquaredDistances(Var, Var),
    GcnNormalize(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints indexed by [`Var`]; `None` for nodes that do not depend on a
/// differentiable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        debug_assert_eq!(m.shape(), (1, 1));
        m.data()[0]
    }

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    fn push_raw(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Matrix, op: Op, name: &str) -> Result<Var> {
        let value = value.checked(name)?;
        let needs_grad = self.inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push_raw(value, op, needs_grad))
    }

    fn inputs(&self, op: &Op) -> Vec<Var> {
        match *op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::MatMulT(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b)
            | Op::SquaredDistances(a, b) => vec![a, b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Relu(a)
            | Op::Clamp(a, _, _)
            | Op::RowL2Normalize(a)
            | Op::RowSoftmax(a)
            | Op::RowLogSoftmax(a)
            | Op::RowSumNormalize(a)
            | Op::Powf(a, _)
            | Op::Log(a)
            | Op::Sum(a)
            | Op::Diag(a)
            | Op::RowLogSumExp(a, _)
            | Op::GcnNormalize(a) => vec![a],
        }
    }

    fn shape_eq(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = matrix::matrix_product(self.value(a), self.value(b))?;
        self.push(v, Op::MatMul(a, b), "matmul")
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = matrix::product_transposed(self.value(a), self.value(b))?;
        self.push(v, Op::MatMulT(a, b), "matmul_t")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a), "transpose")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.shape_eq(a, b, "add")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.shape_eq(a, b, "sub")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b), "sub")
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.shape_eq(a, b, "mul")?;
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b), "mul")
    }

    /// Adds the 1×n row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (am, bm) = (self.value(a), self.value(bias));
        if bm.rows() != 1 || bm.cols() != am.cols() {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", am.shape(), bm.shape()),
            ));
        }
        let mut v = am.clone();
        for r in 0..v.rows() {
            for (x, b) in v.row_mut(r).iter_mut().zip(bm.data()) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, bias), "add_row")
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x * factor);
        self.push(v, Op::Scale(a, factor), "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a), "add_scalar")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = matrix::elementwise_relu(self.value(a));
        self.push(v, Op::Relu(a), "relu")
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the open interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi), "clamp")
    }

    pub fn row_l2_normalize(&mut self, a: Var) -> Result<Var> {
        let v = matrix::row_l2_normalize(self.value(a));
        self.push(v, Op::RowL2Normalize(a), "row_l2_normalize")
    }

    pub fn row_softmax(&mut self, a: Var) -> Result<Var> {
        let v = matrix::row_softmax(self.value(a));
        self.push(v, Op::RowSoftmax(a), "row_softmax")
    }

    pub fn row_log_softmax(&mut self, a: Var) -> Result<Var> {
        let src = self.value(a);
        let mut v = src.clone();
        for r in 0..v.rows() {
            let lse = matrix::log_sum_exp(src.row(r).iter().copied());
            v.row_mut(r).iter_mut().for_each(|x| *x -= lse);
        }
        self.push(v, Op::RowLogSoftmax(a), "row_log_softmax")
    }

    /// Divides each row by its sum. Rows must have a positive sum.
    pub fn row_sum_normalize(&mut self, a: Var) -> Result<Var> {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            let s: f64 = v.row(r).iter().sum();
            if s <= 0.0 {
                return Err(Error::Numerical(format!(
                    "row_sum_normalize: row {r} sums to {s}"
                )));
            }
            v.row_mut(r).iter_mut().for_each(|x| *x /= s);
        }
        self.push(v, Op::RowSumNormalize(a), "row_sum_normalize")
    }

    /// Elementwise power of a strictly positive matrix.
    pub fn powf(&mut self, a: Var, exponent: f64) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Numerical("powf of nonpositive entry".into()));
        }
        let v = self.value(a).map(|x| x.powf(exponent));
        self.push(v, Op::Powf(a, exponent), "powf")
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Numerical("log of nonpositive entry".into()));
        }
        let v = self.value(a).map(f64::ln);
        self.push(v, Op::Log(a), "log")
    }

    /// Sum of all entries as a 1×1 node.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Matrix::from_raw(1, 1, vec![self.value(a).sum()]);
        self.push(v, Op::Sum(a), "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Diagonal of a square matrix as an n×1 column.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let m = self.value(a);
        if m.rows() != m.cols() {
            return Err(Error::shape("diag", format!("{:?}", m.shape())));
        }
        let v = Matrix::from_raw(m.rows(), 1, (0..m.rows()).map(|i| m.get(i, i)).collect());
        self.push(v, Op::Diag(a), "diag")
    }

    /// Per-row log-sum-exp as an n×1 column; with `exclude_diagonal` the
    /// entry `(i, i)` is left out of row `i`.
    pub fn row_log_sum_exp(&mut self, a: Var, exclude_diagonal: bool) -> Result<Var> {
        let m = self.value(a);
        if exclude_diagonal && (m.rows() != m.cols() || m.cols() < 2) {
            return Err(Error::shape(
                "row_log_sum_exp",
                format!("diagonal exclusion needs square ≥2x2, got {:?}", m.shape()),
            ));
        }
        let vals = (0..m.rows())
            .map(|r| {
                let row = m.row(r);
                matrix::log_sum_exp(
                    row.iter()
                        .enumerate()
                        .filter(move |&(c, _)| !(exclude_diagonal && c == r))
                        .map(|(_, &x)| x),
                )
            })
            .collect();
        let v = Matrix::from_raw(m.rows(), 1, vals);
        self.push(v, Op::RowLogSumExp(a, exclude_diagonal), "row_log_sum_exp")
    }

    pub fn squared_distances(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = matrix::squared_distances(self.value(a), self.value(b))?;
        self.push(v, Op::SquaredDistances(a, b), "squared_distances")
    }

    /// `D^{-1/2} (A + I) D^{-1/2}` with `D` the row sums of `A + I`.
    pub fn gcn_normalize(&mut self, a: Var) -> Result<Var> {
        let v = matrix::normalized_adjacency(self.value(a))?;
        self.push(v, Op::GcnNormalize(a), "gcn_normalize")
    }

    /// Reverse pass from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            if g.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "reverse pass at node {idx} ({:?})",
                    node.op
                )));
            }
            for (input, contribution) in self.local_grads(node, &g)? {
                if !self.nodes[input.0].needs_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
            // Leaves keep their adjoint.
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn local_grads(&self, node: &Node, g: &Matrix) -> Result<Vec<(Var, Matrix)>> {
        let val = |v: Var| self.value(v);
        let out = &node.value;
        Ok(match node.op {
            Op::Leaf => vec![],
            Op::MatMul(a, b) => vec![
                (a, matrix::product_transposed(g, val(b))?),
                (b, matrix::matrix_product(&val(a).transpose(), g)?),
            ],
            Op::MatMulT(a, b) => vec![
                (a, matrix::matrix_product(g, val(b))?),
                (b, matrix::matrix_product(&g.transpose(), val(a))?),
            ],
            Op::Transpose(a) => vec![(a, g.transpose())],
            Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
            Op::Sub(a, b) => vec![(a, g.clone()), (b, g.map(|x| -x))],
            Op::Mul(a, b) => vec![
                (a, g.zip_map(val(b), |x, y| x * y)),
                (b, g.zip_map(val(a), |x, y| x * y)),
            ],
            Op::AddRow(a, bias) => {
                let mut gb = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (acc, x) in gb.data_mut().iter_mut().zip(g.row(r)) {
                        *acc += x;
                    }
                }
                vec![(a, g.clone()), (bias, gb)]
            }
            Op::Scale(a, f) => vec![(a, g.map(|x| x * f))],
            Op::AddScalar(a) => vec![(a, g.clone())],
            Op::Relu(a) => vec![(a, g.zip_map(val(a), |x, y| if y > 0.0 { x } else { 0.0 }))],
            Op::Clamp(a, lo, hi) => vec![(
                a,
                g.zip_map(val(a), |x, y| if y > lo && y < hi { x } else { 0.0 }),
            )],
            Op::RowL2Normalize(a) => {
                let src = val(a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    let norm = src.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm == 0.0 {
                        continue;
                    }
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = (gr[c] - y[c] * dot) / norm;
                    }
                }
                vec![(a, d)]
            }
            Op::RowSoftmax(a) => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = y[c] * (gr[c] - dot);
                    }
                }
                vec![(a, d)]
            }
            Op::RowLogSoftmax(a) => {
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let gsum: f64 = g.row(r).iter().sum();
                    let y = out.row(r);
                    let gr = g.row(r);
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = gr[c] - y[c].exp() * gsum;
                    }
                }
                vec![(a, d)]
            }
            Op::RowSumNormalize(a) => {
                let src = val(a);
                let mut d = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let s: f64 = src.row(r).iter().sum();
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        *dv = (gr[c] - dot) / s;
                    }
                }
                vec![(a, d)]
            }
            Op::Powf(a, e) => vec![(a, g.zip_map(val(a), |x, y| x * e * y.powf(e - 1.0)))],
            Op::Log(a) => vec![(a, g.zip_map(val(a), |x, y| x / y))],
            Op::Sum(a) => {
                let (r, c) = val(a).shape();
                vec![(a, Matrix::filled(r, c, g.data()[0]))]
            }
            Op::Diag(a) => {
                let n = val(a).rows();
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    d.set_unchecked(i, i, g.get(i, 0));
                }
                vec![(a, d)]
            }
            Op::RowLogSumExp(a, exclude) => {
                let src = val(a);
                let mut d = Matrix::zeros(src.rows(), src.cols());
                for r in 0..src.rows() {
                    let lse = out.get(r, 0);
                    let gr = g.get(r, 0);
                    for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
                        if exclude && c == r {
                            continue;
                        }
                        *dv = gr * (src.get(r, c) - lse).exp();
                    }
                }
                vec![(a, d)]
            }
            Op::SquaredDistances(a, b) => {
                let (am, bm) = (val(a), val(b));
                let mut da = Matrix::zeros(am.rows(), am.cols());
                let mut db = Matrix::zeros(bm.rows(), bm.cols());
                for i in 0..am.rows() {
                    for k in 0..bm.rows() {
                        let w = 2.0 * g.get(i, k);
                        if w == 0.0 {
                            continue;
                        }
                        for c in 0..am.cols() {
                            let diff = am.get(i, c) - bm.get(k, c);
                            da.data_mut()[i * am.cols() + c] += w * diff;
                            db.data_mut()[k * bm.cols() + c] -= w * diff;
                        }
                    }
                }
                vec![(a, da), (b, db)]
            }
            Op::GcnNormalize(a) => {
                let src = val(a);
                let n = src.rows();
                let degrees: Vec<f64> =
                    (0..n).map(|i| src.row(i).iter().sum::<f64>() + 1.0).collect();
                let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
                let mut g_deg = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        let t = g.get(i, j) * out.get(i, j);
                        g_deg[i] += t;
                        g_deg[j] += t;
                    }
                }
                for (gd, d) in g_deg.iter_mut().zip(&degrees) {
                    *gd *= -0.5 / d;
                }
                let mut d = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        d.set_unchecked(i, j, g.get(i, j) * inv_sqrt[i] * inv_sqrt[j] + g_deg[i]);
                    }
                }
                vec![(a, d)]
            }
        })
    }
}
