//! Tape-based reverse-mode differentiation over dense `f64` matrices.
//!
//! Nodes are appended to the tape in creation order, which is already a
//! topological order, so the backward pass is a single reverse sweep that
//! visits every node once. Shapes are checked when a node is recorded;
//! recording an op on incompatible shapes is a programming error and panics.

use ndarray::{concatenate, s, Array2, Axis};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

pub type Matrix = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Tanh(Var),
    Sum(Var),
    Mean(Var),
    ConcatCols(Vec<Var>),
    GradReverse(Var, f64),
}

#[derive(Clone, Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.dim(), (1, 1), "scalar() on a {:?} node", m.dim());
        m[[0, 0]]
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                self.needs(*a) || self.needs(*b)
            }
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Tanh(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::GradReverse(a, _) => self.needs(*a),
            Op::ConcatCols(parts) => parts.iter().any(|p| self.needs(*p)),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A differentiable input (parameter or anything we want a gradient for).
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A non-differentiable input; no gradient is accumulated for it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(
            va.ncols(),
            vb.nrows(),
            "matmul {:?} x {:?}",
            va.dim(),
            vb.dim()
        );
        let out = va.dot(vb);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("add", a, b);
        let out = self.value(a) + self.value(b);
        self.push(out, Op::Add(a, b))
    }

    /// `a` is n×m, `row` is 1×m and is added to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        assert!(
            vr.nrows() == 1 && vr.ncols() == va.ncols(),
            "add_row {:?} + {:?}",
            va.dim(),
            vr.dim()
        );
        let out = va + vr;
        self.push(out, Op::AddRow(a, row))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("sub", a, b);
        let out = self.value(a) - self.value(b);
        self.push(out, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.same_shape("mul", a, b);
        let out = self.value(a) * self.value(b);
        self.push(out, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a) * k;
        self.push(out, Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// Exact (erf-based) Gaussian error linear unit.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(softplus);
        self.push(out, Op::Softplus(a))
    }

    /// `ln σ(x) = -softplus(-x)`.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let neg = self.neg(a);
        let sp = self.softplus(neg);
        self.neg(sp)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::from_elem((1, 1), self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let n = v.len().max(1) as f64;
        let out = Matrix::from_elem((1, 1), v.sum() / n);
        self.push(out, Op::Mean(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).nrows();
        for p in parts {
            assert_eq!(self.value(*p).nrows(), rows, "concat_cols row mismatch");
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let out = concatenate(Axis(1), &views).expect("row counts checked");
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Identity on the forward pass; scales the incoming gradient by `-lambda`
    /// on the backward pass.
    pub fn grad_reverse(&mut self, a: Var, lambda: f64) -> Result<Var> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "gradient reversal strength must be finite and >= 0, got {lambda}"
            )));
        }
        let out = self.value(a).clone();
        Ok(self.push(out, Op::GradReverse(a, lambda)))
    }

    fn same_shape(&self, what: &str, a: Var, b: Var) {
        assert_eq!(
            self.value(a).dim(),
            self.value(b).dim(),
            "{what}: shape mismatch"
        );
    }

    /// Reverse sweep from a scalar `root`.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let root_dim = self.value(root).dim();
        if root_dim != (1, 1) {
            return Err(Error::shape(format!(
                "backward requires a scalar root, got a {}x{} node",
                root_dim.0, root_dim.1
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Matrix::ones((1, 1)));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.requires_grad {
                self.propagate(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }

        Ok(Gradients {
            shapes: self.nodes.iter().map(|n| n.value.dim()).collect(),
            grads,
        })
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let mut acc = |v: Var, contribution: Matrix| {
            if !self.needs(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &contribution,
                slot @ None => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    acc(*b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                if self.needs(*row) {
                    acc(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                if self.needs(*b) {
                    acc(*b, -g);
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    acc(*a, g * self.value(*b));
                }
                if self.needs(*b) {
                    acc(*b, g * self.value(*a));
                }
            }
            Op::Scale(a, k) => acc(*a, g * *k),
            Op::Gelu(a) => {
                let mut d = self.value(*a).mapv(gelu_derivative);
                d *= g;
                acc(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = node.value.mapv(|s| s * (1.0 - s));
                d *= g;
                acc(*a, d);
            }
            Op::Softplus(a) => {
                let mut d = self.value(*a).mapv(sigmoid);
                d *= g;
                acc(*a, d);
            }
            Op::Tanh(a) => {
                let mut d = node.value.mapv(|y| 1.0 - y * y);
                d *= g;
                acc(*a, d);
            }
            Op::Sum(a) => {
                let dim = self.value(*a).dim();
                acc(*a, Matrix::from_elem(dim, g[[0, 0]]));
            }
            Op::Mean(a) => {
                let v = self.value(*a);
                let n = v.len().max(1) as f64;
                acc(*a, Matrix::from_elem(v.dim(), g[[0, 0]] / n));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for p in parts {
                    let width = self.value(*p).ncols();
                    if self.needs(*p) {
                        acc(*p, g.slice(s![.., start..start + width]).to_owned());
                    }
                    start += width;
                }
            }
            Op::GradReverse(a, lambda) => {
                let lambda = *lambda;
                // A zero contribution is dropped rather than added so that
                // λ = 0 leaves upstream gradients bit-identical, signed zeros
                // included.
                if lambda != 0.0 {
                    acc(*a, g.mapv(|x| -lambda * x));
                }
            }
        }
    }
}

/// Result of [`Graph::backward`]: one gradient per reached node.
#[derive(Clone, Debug)]
pub struct Gradients {
    shapes: Vec<(usize, usize)>,
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient if the node was reached by the backward sweep.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient, zero-filled when `v` does not influence the root.
    pub fn wrt(&self, v: Var) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(self.shapes[v.0]))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

fn gelu_derivative(x: f64) -> f64 {
    let pdf = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
    normal_cdf(x) + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sum_of_leaf_has_unit_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(array![[1.0, -2.0], [3.0, 0.5]]);
        let y = g.sum(x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.wrt(x), Matrix::ones((2, 2)));
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut g = Graph::new();
        let x = g.leaf(array![[1.0, 2.0]]);
        assert!(matches!(g.backward(x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn sigmoid_of_dot_at_zero_weight() {
        // d/dw σ(w·x) at w = 0 is σ'(0)·x = x / 4
        let mut g = Graph::new();
        let w = g.leaf(Matrix::zeros((1, 3)));
        let x = g.constant(array![[0.4], [-1.2], [2.0]]);
        let wx = g.matmul(w, x);
        let s = g.sigmoid(wx);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.wrt(w), array![[0.1, -0.3, 0.5]]);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-4);
        assert!(gelu(-10.0).abs() < 1e-4);
    }

    #[test]
    fn grad_reverse_rejects_negative_strength() {
        let mut g = Graph::new();
        let x = g.leaf(array![[1.0]]);
        assert!(g.grad_reverse(x, -0.1).is_err());
        assert!(g.grad_reverse(x, f64::NAN).is_err());
    }

    #[test]
    fn grad_reverse_forward_is_identity_and_backward_negates() {
        let mut g = Graph::new();
        let x = g.leaf(array![[0.3, -0.7]]);
        let r = g.grad_reverse(x, 1.0).unwrap();
        assert_eq!(g.value(r), g.value(x));
        let sq = g.mul(r, r);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.wrt(x), array![[-0.6, 1.4]]);

        let mut g = Graph::new();
        let x = g.leaf(array![[0.3, -0.7]]);
        let r = g.grad_reverse(x, 0.0).unwrap();
        let sq = g.mul(r, r);
        let loss = g.sum(sq);
        let grads = g.backward(loss).unwrap();
        assert!(grads.wrt(x).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(array![[1.0]]);
        let b = g.leaf(array![[2.0, 3.0]]);
        let loss = g.sum(a);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.wrt(b), Matrix::zeros((1, 2)));
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    }
}
