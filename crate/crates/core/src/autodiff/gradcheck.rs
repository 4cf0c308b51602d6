//! Central finite-difference checks of reverse-mode gradients.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Matrix, Var};
use super::mlp::{Activation, Mlp, MlpSpec};
use crate::btl::{btl_nll, nll_on_graph, LabelledBatch};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error, so that gradients that vanish
/// are compared on an absolute scale.
pub const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Matmul,
    Add,
    AddRow,
    Sub,
    Mul,
    Scale,
    Neg,
    Gelu,
    Sigmoid,
    Softplus,
    LogSigmoid,
    Tanh,
    Sum,
    Mean,
    ConcatCols,
    GradReverse,
    MlpLoss,
    BtlNll,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::Matmul,
        OpKind::Add,
        OpKind::AddRow,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Scale,
        OpKind::Neg,
        OpKind::Gelu,
        OpKind::Sigmoid,
        OpKind::Softplus,
        OpKind::LogSigmoid,
        OpKind::Tanh,
        OpKind::Sum,
        OpKind::Mean,
        OpKind::ConcatCols,
        OpKind::GradReverse,
        OpKind::MlpLoss,
        OpKind::BtlNll,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub op: Option<OpKind>,
    pub max_relative_error: f64,
    pub entries: usize,
}

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares `analytic` with `scale ×` central differences of `loss` in every
/// coordinate of `inputs`.
pub fn finite_difference_check(
    inputs: &[Matrix],
    analytic: &[Matrix],
    scale: f64,
    loss: impl Fn(&[Matrix]) -> Result<f64>,
) -> Result<GradCheck> {
    if inputs.len() != analytic.len() {
        return Err(Error::shape("one analytic gradient per input"));
    }
    let mut work = inputs.to_vec();
    let (mut worst, mut entries) = (0.0f64, 0);
    for (k, g) in analytic.iter().enumerate() {
        if g.dim() != inputs[k].dim() {
            return Err(Error::shape(format!("gradient {k} has the wrong shape")));
        }
        for idx in 0..g.len() {
            let (r, c) = (idx / g.ncols(), idx % g.ncols());
            let x0 = work[k][[r, c]];
            work[k][[r, c]] = x0 + FD_STEP;
            let up = loss(&work)?;
            work[k][[r, c]] = x0 - FD_STEP;
            let down = loss(&work)?;
            work[k][[r, c]] = x0;
            let numeric = scale * (up - down) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(g[[r, c]], numeric));
            entries += 1;
        }
    }
    Ok(GradCheck {
        op: None,
        max_relative_error: worst,
        entries,
    })
}

/// Analytic gradients of a graph-built scalar with respect to `inputs`.
pub fn graph_gradients(
    inputs: &[Matrix],
    build: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<(f64, Vec<Matrix>)> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
    let root = build(&mut g, &vars)?;
    let grads = g.backward(root)?;
    Ok((g.scalar(root), vars.iter().map(|&v| grads.wrt(v)).collect()))
}

fn graph_value(
    inputs: &[Matrix],
    build: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.leaf(m.clone())).collect();
    let root = build(&mut g, &vars)?;
    Ok(g.scalar(root))
}

fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, sd: f64) -> Matrix {
    let normal = Normal::new(0.0, sd).expect("positive sd");
    Matrix::from_shape_fn((rows, cols), |_| normal.sample(rng))
}

/// Checks one op on random inputs drawn from `seed`. Non-scalar outputs are
/// reduced through a fixed random weighting so no coordinate cancels.
pub fn random_op_check(op: OpKind, seed: u64) -> Result<GradCheck> {
    let mut rng = rng_from_seed(seed);
    let (n, m, p) = (
        rng.random_range(1..=4),
        rng.random_range(1..=4),
        rng.random_range(1..=4),
    );
    let sd = 1.5;
    if op == OpKind::MlpLoss {
        return mlp_loss_check(seed);
    }
    let weight = random_matrix(&mut rng, n, m, 1.0);
    let reduce = move |g: &mut Graph, out: Var| -> Var {
        let w = g.constant(weight.clone());
        let prod = g.mul(out, w);
        g.sum(prod)
    };
    let lambda = rng.random_range(0.0..3.0);
    let k = rng.random_range(-2.0..2.0);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
    let inputs: Vec<Matrix> = match op {
        OpKind::Matmul => vec![
            random_matrix(&mut rng, n, p, sd),
            random_matrix(&mut rng, p, m, sd),
        ],
        OpKind::Add | OpKind::Sub | OpKind::Mul => {
            vec![
                random_matrix(&mut rng, n, m, sd),
                random_matrix(&mut rng, n, m, sd),
            ]
        }
        OpKind::AddRow => vec![
            random_matrix(&mut rng, n, m, sd),
            random_matrix(&mut rng, 1, m, sd),
        ],
        OpKind::ConcatCols => vec![
            random_matrix(&mut rng, n, p, sd),
            random_matrix(&mut rng, n, m, sd),
        ],
        OpKind::BtlNll => vec![
            random_matrix(&mut rng, n, 1, sd),
            random_matrix(&mut rng, n, 1, sd),
        ],
        _ => vec![random_matrix(&mut rng, n, m, sd)],
    };
    let concat_weight = random_matrix(&mut rng, n, p + m, 1.0);
    let build = move |g: &mut Graph, v: &[Var]| -> Result<Var> {
        let out = match op {
            OpKind::Matmul => g.matmul(v[0], v[1]),
            OpKind::Add => g.add(v[0], v[1]),
            OpKind::AddRow => g.add_row(v[0], v[1]),
            OpKind::Sub => g.sub(v[0], v[1]),
            OpKind::Mul => g.mul(v[0], v[1]),
            OpKind::Scale => g.scale(v[0], k),
            OpKind::Neg => g.neg(v[0]),
            OpKind::Gelu => g.gelu(v[0]),
            OpKind::Sigmoid => g.sigmoid(v[0]),
            OpKind::Softplus => g.softplus(v[0]),
            OpKind::LogSigmoid => g.log_sigmoid(v[0]),
            OpKind::Tanh => g.tanh(v[0]),
            OpKind::Sum => {
                let sq = g.mul(v[0], v[0]);
                return Ok(g.sum(sq));
            }
            OpKind::Mean => {
                let t = g.tanh(v[0]);
                return Ok(g.mean(t));
            }
            OpKind::ConcatCols => {
                let c = g.concat_cols(&[v[0], v[1]]);
                let w = g.constant(concat_weight.clone());
                let prod = g.mul(c, w);
                return Ok(g.sum(prod));
            }
            OpKind::GradReverse => g.grad_reverse(v[0], lambda)?,
            OpKind::BtlNll => return nll_on_graph(g, v[0], v[1], &labels),
            OpKind::MlpLoss => unreachable!("handled above"),
        };
        Ok(reduce(g, out))
    };
    let (_, analytic) = graph_gradients(&inputs, &build)?;
    // reversal is identity forward, so its finite difference is the
    // unreversed gradient
    let scale = if op == OpKind::GradReverse {
        -lambda
    } else {
        1.0
    };
    let mut check = finite_difference_check(&inputs, &analytic, scale, |x| graph_value(x, &build))?;
    check.op = Some(op);
    Ok(check)
}

/// Tape gradients of a GELU MLP's BTL loss against finite differences of the
/// plain forward pass.
fn mlp_loss_check(seed: u64) -> Result<GradCheck> {
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9);
    let (d, n) = (rng.random_range(2..=5), rng.random_range(2..=6));
    let spec = MlpSpec::new(
        vec![d, rng.random_range(2..=6), rng.random_range(1..=4), 1],
        Activation::Gelu,
        seed,
    );
    let mlp = Mlp::new(spec.clone())?;
    let x = random_matrix(&mut rng, n, d, 1.0);
    let xp = random_matrix(&mut rng, n, d, 1.0);
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();

    let mut g = Graph::new();
    let bound = mlp.bind(&mut g);
    let (vx, vxp) = (g.constant(x.clone()), g.constant(xp.clone()));
    let (r, rp) = (bound.forward(&mut g, vx), bound.forward(&mut g, vxp));
    let root = nll_on_graph(&mut g, r, rp, &labels)?;
    let grads = g.backward(root)?;
    let analytic: Vec<Matrix> = bound
        .parameter_vars()
        .iter()
        .map(|&v| grads.wrt(v))
        .collect();
    let params: Vec<Matrix> = mlp.parameters().into_iter().cloned().collect();

    let loss = |p: &[Matrix]| -> Result<f64> {
        let mut net = mlp.clone();
        for (dst, src) in net.parameters_mut().into_iter().zip(p) {
            dst.assign(src);
        }
        let (a, b) = (net.forward(&x), net.forward(&xp));
        btl_nll(&LabelledBatch::from_rewards(
            a.as_slice().expect("contiguous"),
            b.as_slice().expect("contiguous"),
            &labels,
        )?)
    };
    let mut check = finite_difference_check(&params, &analytic, 1.0, loss)?;
    check.op = Some(OpKind::MlpLoss);
    Ok(check)
}
