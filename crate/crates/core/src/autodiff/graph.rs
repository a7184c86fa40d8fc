//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! Every operation appends a node holding its forward value; [`Graph::backward`]
//! walks the tape in reverse and accumulates adjoints into every node that
//! depends on a differentiable leaf.

use crate::dcorr::DIST_SMOOTHING;
use crate::error::{Error, Result};
use crate::math::{gemm, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Sqrt(Var),
    SliceCols(Var, usize, usize),
    ConcatCols(Var, Var),
    Sum(Var),
    Softmax(Var),
    BceLogits(Var, Matrix),
    SoftmaxXent(Var, Vec<usize>),
    KlStdNormal(Var, Var),
    PairwiseDist(Var),
    DoubleCenter(Var),
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        row.iter_mut().for_each(|v| *v /= z);
    }
    out
}

/// Row-wise `log Σ exp` minus the entry at `label`.
pub(crate) fn xent_row(row: &[f64], label: usize) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[label]
}

pub(crate) fn bce_logit(logit: f64, target: f64) -> f64 {
    softplus(logit) - target * logit
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).as_scalar().expect("scalar node")
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let g = self.needs(a);
        self.push(value, op, g)
    }

    fn binary_same(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise shape mismatch in {op:?}");
        let value = self.value(a).zip_map(self.value(b), f);
        let g = self.needs(a) || self.needs(b);
        self.push(value, op, g)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b)).expect("matmul shape");
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::MatMul(a, b), g)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (r, c) = self.shape(a);
        assert_eq!(self.shape(bias), (1, c), "bias shape");
        let mut value = self.value(a).clone();
        let b = self.value(bias).data().to_vec();
        for i in 0..r {
            for (v, bb) in value.row_mut(i).iter_mut().zip(&b) {
                *v += bb;
            }
        }
        let g = self.needs(a) || self.needs(bias);
        self.push(value, Op::AddBias(a, bias), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary_same(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Op::Scale(a, s), |x| x * s)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), f64::sqrt)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let value = self.value(a).cols_range(start, end);
        let g = self.needs(a);
        self.push(value, Op::SliceCols(a, start, end), g)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).hconcat(self.value(b)).expect("concat rows");
        let g = self.needs(a) || self.needs(b);
        self.push(value, Op::ConcatCols(a, b), g)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let g = self.needs(a);
        self.push(value, Op::Sum(a), g)
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax_rows(self.value(a));
        let g = self.needs(a);
        self.push(value, Op::Softmax(a), g)
    }

    /// Summed Bernoulli cross-entropy of `logits` against targets in `[0, 1]`.
    pub fn bce_with_logits_sum(&mut self, logits: Var, targets: &Matrix) -> Var {
        assert_eq!(self.shape(logits), targets.shape(), "bce target shape");
        let total: f64 = self
            .value(logits)
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&l, &t)| bce_logit(l, t))
            .sum();
        let g = self.needs(logits);
        self.push(Matrix::scalar(total), Op::BceLogits(logits, targets.clone()), g)
    }

    /// Mean softmax cross-entropy of each row against its class label.
    pub fn softmax_xent_mean(&mut self, logits: Var, labels: &[usize]) -> Var {
        let (r, c) = self.shape(logits);
        assert_eq!(r, labels.len(), "label count");
        assert!(labels.iter().all(|&y| y < c), "label out of range");
        let v = self.value(logits);
        let total: f64 = (0..r).map(|i| xent_row(v.row(i), labels[i])).sum();
        let g = self.needs(logits);
        self.push(
            Matrix::scalar(total / r.max(1) as f64),
            Op::SoftmaxXent(logits, labels.to_vec()),
            g,
        )
    }

    /// `½ Σ (exp(lv) + mu² − 1 − lv)` over every entry.
    pub fn kl_std_normal_sum(&mut self, mu: Var, logvar: Var) -> Var {
        assert_eq!(self.shape(mu), self.shape(logvar), "kl shape");
        let total: f64 = self
            .value(mu)
            .data()
            .iter()
            .zip(self.value(logvar).data())
            .map(|(&m, &lv)| 0.5 * (lv.exp() + m * m - 1.0 - lv))
            .sum();
        let g = self.needs(mu) || self.needs(logvar);
        self.push(Matrix::scalar(total), Op::KlStdNormal(mu, logvar), g)
    }

    pub fn pairwise_dist(&mut self, a: Var) -> Var {
        let value = crate::dcorr::pairwise_dist(self.value(a));
        let g = self.needs(a);
        self.push(value, Op::PairwiseDist(a), g)
    }

    pub fn double_center(&mut self, a: Var) -> Var {
        let value = crate::dcorr::double_center(self.value(a)).expect("square");
        let g = self.needs(a);
        self.push(value, Op::DoubleCenter(a), g)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let mut grads: Vec<Option<Matrix>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        let mut acc = |v: Var, m: Matrix| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&m),
                slot @ None => *slot = Some(m),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    let mut ga = Matrix::zeros(av.rows(), av.cols());
                    gemm(g, false, bv, true, &mut ga, 0.0);
                    acc(*a, ga);
                }
                if self.needs(*b) {
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    gemm(av, true, g, false, &mut gb, 0.0);
                    acc(*b, gb);
                }
            }
            Op::AddBias(a, b) => {
                acc(*a, g.clone());
                if self.needs(*b) {
                    acc(*b, Matrix::row_vector(&g.col_sums()));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Div(a, b) => {
                let bv = self.value(*b);
                acc(*a, g.zip_map(bv, |x, y| x / y));
                if self.needs(*b) {
                    let t = g.zip_map(y, |x, q| x * q);
                    acc(*b, t.zip_map(bv, |x, d| -x / d));
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Relu(a) => acc(*a, g.zip_map(self.value(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
            Op::Tanh(a) => acc(*a, g.zip_map(y, |x, t| x * (1.0 - t * t))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(y, |x, s| x * s * (1.0 - s))),
            Op::Exp(a) => acc(*a, g.zip_map(y, |x, e| x * e)),
            Op::Sqrt(a) => acc(*a, g.zip_map(y, |x, s| x / (2.0 * s))),
            Op::SliceCols(a, start, end) => {
                let (r, c) = self.shape(*a);
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i)[*start..*end].copy_from_slice(g.row(i));
                }
                acc(*a, ga);
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                acc(*a, g.cols_range(0, ca));
                acc(*b, g.cols_range(ca, g.cols()));
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                acc(*a, Matrix::filled(r, c, g.data()[0]));
            }
            Op::Softmax(a) => {
                let mut ga = Matrix::zeros(y.rows(), y.cols());
                for i in 0..y.rows() {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                    for ((o, &gi), &yi) in ga.row_mut(i).iter_mut().zip(g.row(i)).zip(y.row(i)) {
                        *o = yi * (gi - dot);
                    }
                }
                acc(*a, ga);
            }
            Op::BceLogits(a, t) => {
                let s = g.data()[0];
                acc(*a, self.value(*a).zip_map(t, |l, t| s * (sigmoid(l) - t)));
            }
            Op::SoftmaxXent(a, labels) => {
                let n = labels.len().max(1) as f64;
                let mut p = softmax_rows(self.value(*a));
                let s = g.data()[0] / n;
                for (i, &yl) in labels.iter().enumerate() {
                    p[(i, yl)] -= 1.0;
                    p.row_mut(i).iter_mut().for_each(|v| *v *= s);
                }
                acc(*a, p);
            }
            Op::KlStdNormal(mu, lv) => {
                let s = g.data()[0];
                acc(*mu, self.value(*mu).scale(s));
                acc(*lv, self.value(*lv).map(|l| s * 0.5 * (l.exp() - 1.0)));
            }
            Op::PairwiseDist(a) => {
                let x = self.value(*a);
                let n = x.rows();
                // w_jk = (G_jk + G_kj) / sqrt(D_jk² + smoothing) off the diagonal
                let mut w = Matrix::zeros(n, n);
                for j in 0..n {
                    for k in 0..n {
                        if j != k {
                            let d = (y[(j, k)] * y[(j, k)] + DIST_SMOOTHING).sqrt();
                            w[(j, k)] = (g[(j, k)] + g[(k, j)]) / d;
                        }
                    }
                }
                let rs = w.row_sums();
                let mut ga = Matrix::zeros(x.rows(), x.cols());
                gemm(&w, false, x, false, &mut ga, 0.0);
                for j in 0..n {
                    for (o, &xv) in ga.row_mut(j).iter_mut().zip(x.row(j)) {
                        *o = rs[j] * xv - *o;
                    }
                }
                acc(*a, ga);
            }
            Op::DoubleCenter(a) => {
                // the centering operator is self-adjoint
                acc(*a, crate::dcorr::double_center(g).expect("square"));
            }
        }
    }
}

/// Adjoints from one reverse sweep.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zeros when the loss does not depend on it.
    pub fn wrt(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v).cloned().unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut g = Graph::new();
        let w = g.param(Matrix::identity(2));
        let c = g.constant(Matrix::scalar(3.0));
        let grads = g.backward(c).unwrap();
        assert_eq!(grads.wrt(w, (2, 2)), Matrix::zeros(2, 2));
    }

    #[test]
    fn quadratic_gradient_by_hand() {
        // L = ‖W x‖² at W = I, x = [1, 0]ᵀ: dL/dW = 2 (W x) xᵀ = [[2, 0], [0, 0]]
        let mut g = Graph::new();
        let w = g.param(Matrix::identity(2));
        let x = g.constant(Matrix::from_rows(&[[1.0], [0.0]]).unwrap());
        let wx = g.matmul(w, x);
        let sq = g.mul(wx, wx);
        let loss = g.sum(sq);
        assert_eq!(g.scalar(loss), 1.0);
        let gw = g.backward(loss).unwrap().wrt(w, (2, 2));
        assert_eq!(gw, Matrix::from_rows(&[[2.0, 0.0], [0.0, 0.0]]).unwrap());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let w = g.param(Matrix::identity(2));
        assert!(matches!(g.backward(w), Err(Error::NonScalarLoss { rows: 2, cols: 2 })));
    }

    #[test]
    fn constants_do_not_collect_gradients() {
        let mut g = Graph::new();
        let a = g.param(Matrix::scalar(2.0));
        let b = g.constant(Matrix::scalar(5.0));
        let p = g.mul(a, b);
        let grads = g.backward(p).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[5.0]);
        assert!(grads.get(b).is_none());
    }
}
