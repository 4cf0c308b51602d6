//! Multi-objective reward models over precomputed embeddings.
//!
//! * `Base`: one MLP on `[e; onehot(c)]`.
//! * `Multihead`: a shared trunk `ẑ = g(e)` and one head per objective.
//! * `Adversarial`: `Multihead` plus an adversary that predicts `c` from `ẑ`
//!   through a gradient-reversal layer, so a single descent step lowers the
//!   reward loss, raises the adversary's loss with respect to the trunk, and
//!   lowers it with respect to the adversary.

mod train;

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ndarray::s;
use serde::{Deserialize, Serialize};

use crate::autodiff::checkpoint::{read_tensors, write_tensors};
use crate::autodiff::{Activation, BoundMlp, Graph, Linear, Matrix, Mlp, MlpSpec, Var};
use crate::btl::{btl_nll, check_label, nll_on_graph, LabelledBatch};
use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::worlds::Dataset;

pub use train::{train, train_run, EpochRecord, TrainConfig, TrainedModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Base,
    Multihead,
    Adversarial,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Base, Variant::Multihead, Variant::Adversarial];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Base => "Base",
            Variant::Multihead => "Multihead",
            Variant::Adversarial => "Adversarial",
        }
    }
}

/// Network sizes for one architecture. Each head gets its own initial
/// weights, derived from `head.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardModelSpec {
    pub variant: Variant,
    /// Embedding width `d`.
    pub input_dim: usize,
    pub trunk: MlpSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head: Option<MlpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversary: Option<MlpSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// Hidden and latent widths of an architecture family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Widths {
    pub hidden: usize,
    pub latent: usize,
}

impl Widths {
    pub const DESK: Widths = Widths {
        hidden: 64,
        latent: 16,
    };
    pub const PAPER: Widths = Widths {
        hidden: 512,
        latent: 512,
    };
}

impl RewardModelSpec {
    pub fn new(variant: Variant, input_dim: usize, widths: Widths, lambda: f64) -> Self {
        let Widths { hidden, latent } = widths;
        let gelu = |w: Vec<usize>| MlpSpec::new(w, Activation::Gelu, 0);
        match variant {
            Variant::Base => Self {
                variant,
                input_dim,
                trunk: gelu(vec![input_dim + 2, hidden, latent, 1]),
                head: None,
                adversary: None,
                lambda: None,
            },
            Variant::Multihead | Variant::Adversarial => {
                let adversarial = variant == Variant::Adversarial;
                Self {
                    variant,
                    input_dim,
                    trunk: gelu(vec![input_dim, hidden, hidden, latent]),
                    head: Some(gelu(vec![latent, hidden, 1])),
                    adversary: adversarial.then(|| gelu(vec![latent, hidden, 1])),
                    lambda: adversarial.then_some(lambda),
                }
            }
        }
    }

    pub fn desk(variant: Variant, input_dim: usize) -> Self {
        Self::new(variant, input_dim, Widths::DESK, 1.0)
    }

    /// Re-derives every initialization seed from `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let root = SeedTree::new(seed).child("init");
        self.trunk.seed = root.child("trunk").seed();
        if let Some(h) = &mut self.head {
            h.seed = root.child("heads").seed();
        }
        if let Some(a) = &mut self.adversary {
            a.seed = root.child("adversary").seed();
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.trunk.validate()?;
        let fail = |msg: String| {
            Err(Error::Config(format!(
                "{} model: {msg}",
                self.variant.name()
            )))
        };
        match self.variant {
            Variant::Base => {
                if self.head.is_some() || self.adversary.is_some() {
                    return fail("a base model has no heads or adversary".into());
                }
                if self.trunk.input_width() != self.input_dim + 2 {
                    return fail(format!(
                        "network input must be embedding width + 2 = {}, got {}",
                        self.input_dim + 2,
                        self.trunk.input_width()
                    ));
                }
                if self.trunk.output_width() != 1 {
                    return fail("network must output a scalar".into());
                }
            }
            Variant::Multihead | Variant::Adversarial => {
                let Some(head) = &self.head else {
                    return fail("missing head spec".into());
                };
                head.validate()?;
                if self.trunk.input_width() != self.input_dim {
                    return fail(format!(
                        "trunk input must equal embedding width {}, got {}",
                        self.input_dim,
                        self.trunk.input_width()
                    ));
                }
                if head.input_width() != self.trunk.output_width() || head.output_width() != 1 {
                    return fail(format!(
                        "head must map the {}-wide latent to a scalar, got {:?}",
                        self.trunk.output_width(),
                        head.widths
                    ));
                }
                if self.variant == Variant::Multihead && self.adversary.is_some() {
                    return fail("a multihead model has no adversary".into());
                }
                if self.variant == Variant::Adversarial {
                    let Some(adv) = &self.adversary else {
                        return fail("missing adversary spec".into());
                    };
                    adv.validate()?;
                    if adv.input_width() != self.trunk.output_width() || adv.output_width() != 1 {
                        return fail(format!(
                            "adversary must map the latent to one logit, got {:?}",
                            adv.widths
                        ));
                    }
                    match self.lambda {
                        Some(l) if l >= 0.0 && l.is_finite() => {}
                        Some(l) => return fail(format!("lambda must be finite and >= 0, got {l}")),
                        None => return fail("lambda is unset".into()),
                    }
                }
            }
        }
        Ok(())
    }
}

/// Stacked comparisons ready for a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub e: Matrix,
    pub e_prime: Matrix,
    pub c: Vec<u8>,
    pub ell: Vec<u8>,
}

impl Batch {
    pub fn from_dataset(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        let d = dataset.embedding_dim();
        let mut e = Matrix::zeros((indices.len(), d));
        let mut e_prime = Matrix::zeros((indices.len(), d));
        let mut c = Vec::with_capacity(indices.len());
        let mut ell = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            let ex = &dataset.examples[i];
            if ex.e.len() != d || ex.e_prime.len() != d {
                return Err(Error::shape(format!(
                    "example {} has the wrong width",
                    ex.id
                )));
            }
            e.row_mut(row).assign(&ndarray::ArrayView1::from(&ex.e));
            e_prime
                .row_mut(row)
                .assign(&ndarray::ArrayView1::from(&ex.e_prime));
            c.push(ex.c);
            ell.push(ex.ell);
        }
        Ok(Self { e, e_prime, c, ell })
    }

    pub fn all(dataset: &Dataset) -> Result<Self> {
        Self::from_dataset(dataset, &(0..dataset.len()).collect::<Vec<_>>())
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Same comparisons with responses exchanged and labels flipped.
    pub fn swapped(&self) -> Self {
        Self {
            e: self.e_prime.clone(),
            e_prime: self.e.clone(),
            c: self.c.clone(),
            ell: self.ell.iter().map(|l| 1 - l).collect(),
        }
    }
}

/// Which part of the training objective to differentiate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossPart {
    /// `L_R + L_adv` with the adversary behind gradient reversal.
    Combined,
    /// `L_R` alone.
    Reward,
    /// `L_adv` alone, without reversal.
    Adversary,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    spec: RewardModelSpec,
    trunk: Mlp,
    heads: Option<[Mlp; 2]>,
    adversary: Option<Mlp>,
}

struct Bound {
    trunk: BoundMlp,
    heads: Option<[BoundMlp; 2]>,
    adversary: Option<BoundMlp>,
}

impl Bound {
    fn parameter_vars(&self) -> Vec<Var> {
        let mut vars = self.trunk.parameter_vars();
        if let Some([h0, h1]) = &self.heads {
            vars.extend(h0.parameter_vars());
            vars.extend(h1.parameter_vars());
        }
        if let Some(a) = &self.adversary {
            vars.extend(a.parameter_vars());
        }
        vars
    }
}

impl RewardModel {
    pub fn new(spec: RewardModelSpec) -> Result<Self> {
        spec.validate()?;
        let trunk = Mlp::new(spec.trunk.clone())?;
        let heads = match &spec.head {
            Some(h) => {
                let root = SeedTree::new(h.seed);
                let make = |k: u64| {
                    Mlp::new(MlpSpec {
                        seed: root.indexed("head", k).seed(),
                        ..h.clone()
                    })
                };
                Some([make(0)?, make(1)?])
            }
            None => None,
        };
        let adversary = spec.adversary.clone().map(Mlp::new).transpose()?;
        Ok(Self {
            spec,
            trunk,
            heads,
            adversary,
        })
    }

    pub fn spec(&self) -> &RewardModelSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn heads(&self) -> Option<&[Mlp; 2]> {
        self.heads.as_ref()
    }

    pub fn adversary(&self) -> Option<&Mlp> {
        self.adversary.as_ref()
    }

    pub fn heads_mut(&mut self) -> Option<&mut [Mlp; 2]> {
        self.heads.as_mut()
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn adversary_mut(&mut self) -> Option<&mut Mlp> {
        self.adversary.as_mut()
    }

    /// Trunk, head 0, head 1, adversary; weight then bias per layer.
    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut p = self.trunk.parameters();
        if let Some([h0, h1]) = &self.heads {
            p.extend(h0.parameters());
            p.extend(h1.parameters());
        }
        if let Some(a) = &self.adversary {
            p.extend(a.parameters());
        }
        p
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.trunk.parameters_mut();
        if let Some([h0, h1]) = &mut self.heads {
            p.extend(h0.parameters_mut());
            p.extend(h1.parameters_mut());
        }
        if let Some(a) = &mut self.adversary {
            p.extend(a.parameters_mut());
        }
        p
    }

    /// Number of trunk parameter tensors at the front of [`Self::parameters`].
    pub fn trunk_tensor_count(&self) -> usize {
        2 * self.trunk.layers().len()
    }

    /// Reward of one response under objective `c`.
    pub fn reward(&self, e: &[f64], c: u8) -> Result<f64> {
        let x = Matrix::from_shape_vec((1, e.len()), e.to_vec()).expect("row vector");
        Ok(self.rewards(&x, &[c])?[0])
    }

    /// Rewards of the rows of `e` (`n × d`) under objectives `c`.
    pub fn rewards(&self, e: &Matrix, c: &[u8]) -> Result<Vec<f64>> {
        self.check_inputs(e, c)?;
        let out = match &self.heads {
            None => self.trunk.forward(&base_input(e, c)),
            Some([h0, h1]) => {
                let z = self.trunk.forward(e);
                let (r0, r1) = (h0.forward(&z), h1.forward(&z));
                let mut r = Matrix::zeros((e.nrows(), 1));
                for (i, &ci) in c.iter().enumerate() {
                    r[[i, 0]] = if ci == 0 { r0[[i, 0]] } else { r1[[i, 0]] };
                }
                r
            }
        };
        Ok(out.column(0).to_vec())
    }

    /// Trunk output `ẑ = g(e)`; `None` for the base model.
    pub fn latent(&self, e: &Matrix) -> Result<Option<Matrix>> {
        if e.ncols() != self.spec.input_dim {
            return Err(self.width_error(e.ncols()));
        }
        Ok(self.heads.as_ref().map(|_| self.trunk.forward(e)))
    }

    /// Per-comparison rewards `(r, r')` of a batch.
    pub fn batch_rewards(&self, batch: &Batch) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.rewards(&batch.e, &batch.c)?,
            self.rewards(&batch.e_prime, &batch.c)?,
        ))
    }

    /// Summed `(L_R, L_adv)`. `L_adv` sums the adversary's binary
    /// cross-entropy against `c` over both responses of every comparison.
    pub fn adversarial_losses(&self, batch: &Batch) -> Result<(f64, f64)> {
        let Some(adv) = &self.adversary else {
            return Err(Error::Config(format!(
                "{} model has no adversary",
                self.variant().name()
            )));
        };
        let (r, rp) = self.batch_rewards(batch)?;
        let l_r = btl_nll(&LabelledBatch::from_rewards(&r, &rp, &batch.ell)?)?;
        let mut l_adv = 0.0;
        for e in [&batch.e, &batch.e_prime] {
            let logits = adv.forward(&self.trunk.forward(e));
            for (&a, &c) in logits.column(0).iter().zip(&batch.c) {
                l_adv += crate::autodiff::softplus(a) - f64::from(c) * a;
            }
        }
        Ok((l_r, l_adv))
    }

    /// Value and parameter gradients of `part / n` on one batch, in the
    /// order of [`Self::parameters`].
    pub fn loss_gradients(&self, batch: &Batch, part: LossPart) -> Result<(f64, Vec<Matrix>)> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let objective = self.objective(&mut g, &bound, batch, part)?;
        let grads = g.backward(objective)?;
        let value = g.scalar(objective);
        Ok((
            value,
            bound
                .parameter_vars()
                .into_iter()
                .map(|v| grads.wrt(v))
                .collect(),
        ))
    }

    fn bind(&self, g: &mut Graph) -> Bound {
        Bound {
            trunk: self.trunk.bind(g),
            heads: self.heads.as_ref().map(|[h0, h1]| [h0.bind(g), h1.bind(g)]),
            adversary: self.adversary.as_ref().map(|a| a.bind(g)),
        }
    }

    /// Records `part / n` on the graph.
    fn objective(
        &self,
        g: &mut Graph,
        bound: &Bound,
        batch: &Batch,
        part: LossPart,
    ) -> Result<Var> {
        self.check_inputs(&batch.e, &batch.c)?;
        self.check_inputs(&batch.e_prime, &batch.c)?;
        for &l in &batch.ell {
            check_label(l)?;
        }
        let n = batch.len();
        if n == 0 {
            return Err(Error::Empty("empty training batch".into()));
        }
        let (r, z) = self.forward_graph(g, bound, &batch.e, &batch.c);
        let (rp, zp) = self.forward_graph(g, bound, &batch.e_prime, &batch.c);
        let reward_nll = nll_on_graph(g, r, rp, &batch.ell)?;

        let want_adv = matches!(part, LossPart::Combined | LossPart::Adversary);
        let adversary_bce = match (&bound.adversary, want_adv) {
            (Some(adv), true) => {
                let lambda = self.spec.lambda.expect("validated");
                let reverse = part == LossPart::Combined;
                let bce = |g: &mut Graph, z: Var| -> Result<Var> {
                    let input = if reverse {
                        g.grad_reverse(z, lambda)?
                    } else {
                        z
                    };
                    let logits = adv.forward(g, input);
                    let targets = g.constant(Matrix::from_shape_fn((n, 1), |(i, _)| {
                        f64::from(batch.c[i])
                    }));
                    let sp = g.softplus(logits);
                    let yl = g.mul(targets, logits);
                    let per = g.sub(sp, yl);
                    Ok(g.sum(per))
                };
                let a = bce(g, z.expect("multihead latent"))?;
                let b = bce(g, zp.expect("multihead latent"))?;
                Some(g.add(a, b))
            }
            (None, true) if part == LossPart::Adversary => {
                return Err(Error::Config(format!(
                    "{} model has no adversary",
                    self.variant().name()
                )))
            }
            _ => None,
        };
        let summed = match (part, adversary_bce) {
            (LossPart::Reward, _) | (LossPart::Combined, None) => reward_nll,
            (LossPart::Combined, Some(adv)) => g.add(reward_nll, adv),
            (LossPart::Adversary, Some(adv)) => adv,
            (LossPart::Adversary, None) => unreachable!("checked above"),
        };
        Ok(g.scale(summed, 1.0 / n as f64))
    }

    /// Rewards (`n × 1`) and, for headed models, the latent `ẑ`.
    fn forward_graph(
        &self,
        g: &mut Graph,
        bound: &Bound,
        e: &Matrix,
        c: &[u8],
    ) -> (Var, Option<Var>) {
        match &bound.heads {
            None => {
                let x = g.constant(base_input(e, c));
                (bound.trunk.forward(g, x), None)
            }
            Some([h0, h1]) => {
                let x = g.constant(e.clone());
                let z = bound.trunk.forward(g, x);
                let r0 = h0.forward(g, z);
                let r1 = h1.forward(g, z);
                let n = e.nrows();
                let m0 = g.constant(Matrix::from_shape_fn((n, 1), |(i, _)| {
                    f64::from(u8::from(c[i] == 0))
                }));
                let m1 = g.constant(Matrix::from_shape_fn((n, 1), |(i, _)| f64::from(c[i])));
                let a = g.mul(r0, m0);
                let b = g.mul(r1, m1);
                (g.add(a, b), Some(z))
            }
        }
    }

    fn check_inputs(&self, e: &Matrix, c: &[u8]) -> Result<()> {
        if e.ncols() != self.spec.input_dim {
            return Err(self.width_error(e.ncols()));
        }
        if e.nrows() != c.len() {
            return Err(Error::shape(format!(
                "{} embeddings but {} objectives",
                e.nrows(),
                c.len()
            )));
        }
        if let Some(bad) = c.iter().find(|&&c| c > 1) {
            return Err(Error::invalid(format!(
                "objective must be 0 or 1, got {bad}"
            )));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(
                "embedding contains a non-finite value".into(),
            ));
        }
        Ok(())
    }

    fn width_error(&self, got: usize) -> Error {
        Error::shape(format!(
            "model expects {}-wide embeddings, got {got}",
            self.spec.input_dim
        ))
    }

    /// Writes the parameters to `path` and the `RewardModelSpec` plus `meta` to the
    /// sidecar returned by [`sidecar_path`].
    pub fn save<M: Serialize>(&self, path: impl AsRef<Path>, meta: &M) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::file(path, e))?;
        write_tensors(BufWriter::new(file), &self.parameters())?;
        let sidecar = sidecar_path(path);
        let doc = serde_json::json!({ "spec": self.spec, "meta": meta });
        let file = File::create(&sidecar).map_err(|e| Error::file(&sidecar, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer_pretty(&mut w, &doc)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }

    /// Loads a checkpoint and its sidecar metadata.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, serde_json::Value)> {
        let path = path.as_ref();
        let sidecar = sidecar_path(path);
        let file = File::open(&sidecar).map_err(|e| Error::file(&sidecar, e))?;
        let mut doc: serde_json::Value = serde_json::from_reader(BufReader::new(file))?;
        let spec: RewardModelSpec = serde_json::from_value(doc["spec"].take())
            .map_err(|e| Error::format("checkpoint sidecar", e.to_string()))?;
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let tensors = read_tensors(BufReader::new(file))?;
        let model = Self::from_tensors(spec, tensors)?;
        Ok((model, doc["meta"].take()))
    }

    pub fn from_tensors(spec: RewardModelSpec, tensors: Vec<Matrix>) -> Result<Self> {
        let mut model = Self::new(spec)?;
        let expected = model.parameters().len();
        if tensors.len() != expected {
            return Err(Error::format(
                "checkpoint",
                format!("spec needs {expected} tensors, file has {}", tensors.len()),
            ));
        }
        for (i, (slot, t)) in model.parameters_mut().into_iter().zip(tensors).enumerate() {
            if slot.dim() != t.dim() {
                return Err(Error::format(
                    "checkpoint",
                    format!("tensor {i}: expected {:?}, got {:?}", slot.dim(), t.dim()),
                ));
            }
            *slot = t;
        }
        Ok(model)
    }

    /// Rebuilds a network from explicit layers, for tests and tooling.
    pub fn with_layers(spec: RewardModelSpec, trunk: Vec<Linear>) -> Result<Self> {
        let mut model = Self::new(spec)?;
        model.trunk = Mlp::from_layers(model.spec.trunk.clone(), trunk)?;
        Ok(model)
    }
}

/// `checkpoint.bin` → `checkpoint.bin.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// `[e; onehot(c)]`.
fn base_input(e: &Matrix, c: &[u8]) -> Matrix {
    let (n, d) = e.dim();
    let mut x = Matrix::zeros((n, d + 2));
    x.slice_mut(s![.., ..d]).assign(e);
    for (i, &ci) in c.iter().enumerate() {
        x[[i, d + ci as usize]] = 1.0;
    }
    x
}

/// Fraction of rows where `[r < r'] == ℓ`.
pub fn pairwise_accuracy(r: &[f64], r_prime: &[f64], ell: &[u8]) -> f64 {
    let hits = r
        .iter()
        .zip(r_prime)
        .zip(ell)
        .filter(|((a, b), &l)| u8::from(a < b) == l)
        .count();
    hits as f64 / ell.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn batch(n: usize, d: usize, c: u8) -> Batch {
        let f = |k: f64| Array2::from_shape_fn((n, d), |(i, j)| ((i * d + j) as f64 * k).sin());
        Batch {
            e: f(0.37),
            e_prime: f(0.91),
            c: vec![c; n],
            ell: (0..n).map(|i| (i % 2) as u8).collect(),
        }
    }

    #[test]
    fn spec_validation() {
        for v in Variant::ALL {
            RewardModelSpec::desk(v, 8).validate().unwrap();
        }
        let mut s = RewardModelSpec::desk(Variant::Adversarial, 8);
        s.lambda = None;
        assert!(s.validate().is_err());
        s.lambda = Some(-1.0);
        assert!(s.validate().is_err());
        let mut s = RewardModelSpec::desk(Variant::Base, 8);
        s.head = RewardModelSpec::desk(Variant::Multihead, 8).head;
        assert!(s.validate().is_err());
    }

    #[test]
    fn objective_must_be_binary() {
        let m = RewardModel::new(RewardModelSpec::desk(Variant::Multihead, 4)).unwrap();
        assert!(m.reward(&[0.0; 4], 2).is_err());
        assert!(m.reward(&[0.0; 3], 0).is_err());
    }

    #[test]
    fn zero_heads_give_zero_reward() {
        let mut m = RewardModel::new(RewardModelSpec::desk(Variant::Multihead, 4)).unwrap();
        for h in m.heads_mut().unwrap() {
            h.zero_parameters();
        }
        assert_eq!(m.reward(&[0.3, -0.1, 2.0, 0.5], 0).unwrap(), 0.0);
        assert_eq!(m.reward(&[1.3, -0.1, 2.0, 0.5], 1).unwrap(), 0.0);
    }

    #[test]
    fn graph_and_plain_rewards_agree() {
        for v in Variant::ALL {
            let m = RewardModel::new(RewardModelSpec::desk(v, 5).with_seed(3)).unwrap();
            let b = batch(6, 5, 1);
            let (r, rp) = m.batch_rewards(&b).unwrap();
            let mut g = Graph::new();
            let bound = m.bind(&mut g);
            let (rv, _) = m.forward_graph(&mut g, &bound, &b.e, &b.c);
            let (rpv, _) = m.forward_graph(&mut g, &bound, &b.e_prime, &b.c);
            assert_eq!(g.value(rv).column(0).to_vec(), r);
            assert_eq!(g.value(rpv).column(0).to_vec(), rp);
            let (value, _) = m.loss_gradients(&b, LossPart::Reward).unwrap();
            let expected =
                btl_nll(&LabelledBatch::from_rewards(&r, &rp, &b.ell).unwrap()).unwrap() / 6.0;
            assert!((value - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn accuracy_counts_strict_preference() {
        assert_eq!(pairwise_accuracy(&[1.0, 0.0], &[0.0, 1.0], &[0, 1]), 1.0);
        assert_eq!(pairwise_accuracy(&[1.0, 0.0], &[0.0, 1.0], &[1, 0]), 0.0);
        assert_eq!(pairwise_accuracy(&[1.0], &[1.0], &[0]), 1.0);
    }
}
