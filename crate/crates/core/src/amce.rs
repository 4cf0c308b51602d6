//! Average marginal component effects over binary latent factors.
//!
//! `AMCE_k = Σ_z σ(r(z, z_k = 1) - r(z, z_k = 0)) · m(z)` where `z` ranges
//! over the other components. With a deterministic label rule the σ form is
//! an approximation of the preference probability; [`SIGMOID_NOTE`] is
//! attached to reported results.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::models::RewardModel;
use crate::rng::rng_from_seed;
use crate::worlds::{nonadditive_reward, Dataset, EmbeddingMap};

pub const SIGMOID_NOTE: &str = "AMCE uses sigma(r(z, 1) - r(z, 0)); for worlds labelled by the \
deterministic rule this approximates the preference probability";

/// Largest dimension [`amce_bruteforce`] enumerates.
pub const BRUTEFORCE_MAX_DIM: usize = 16;
/// Largest dimension [`amce_estimate`] enumerates under a uniform density;
/// above it the density is sampled.
pub const EXACT_MAX_DIM: usize = 20;

/// Reward over binary latent vectors, coordinates given as `0.0`/`1.0`.
pub trait LatentReward: Sync {
    fn dim(&self) -> usize;
    fn reward(&self, z: &[f64]) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearReward {
    pub weights: Vec<f64>,
    #[serde(default)]
    pub bias: f64,
}

impl LatentReward for LinearReward {
    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn reward(&self, z: &[f64]) -> Result<f64> {
        Ok(self.bias + self.weights.iter().zip(z).map(|(w, v)| w * v).sum::<f64>())
    }
}

/// The non-additive world with `z^X` as component 0 and `z^T ∈ [0, 1]`
/// discretized to `bits` binary components (`z^T = code / (2^bits - 1)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizedNonAdditive {
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
    pub bits: usize,
}

impl LatentReward for DiscretizedNonAdditive {
    fn dim(&self) -> usize {
        1 + self.bits
    }

    fn reward(&self, z: &[f64]) -> Result<f64> {
        let code = z[1..]
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | u64::from(b != 0.0));
        let top = ((1u64 << self.bits) - 1).max(1) as f64;
        Ok(nonadditive_reward(
            u8::from(z[0] != 0.0),
            code as f64 / top,
            self.beta,
            self.gamma,
        ))
    }
}

/// Closure over latent vectors.
pub struct FnReward<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> LatentReward for FnReward<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn reward(&self, z: &[f64]) -> Result<f64> {
        Ok((self.f)(z))
    }
}

/// A trained model on noise-free synthesized embeddings of controlled
/// latents. Both sides of a comparison share the nuisance draw `seed`.
pub struct ModelReward<'a> {
    pub model: &'a RewardModel,
    pub map: &'a EmbeddingMap,
    pub objective: u8,
    pub prompt_type: Option<u8>,
    pub seed: u64,
}

impl LatentReward for ModelReward<'_> {
    fn dim(&self) -> usize {
        self.map.latent_dim()
    }

    fn reward(&self, z: &[f64]) -> Result<f64> {
        if self.map.config().noise_sd != 0.0 {
            return Err(Error::invalid(
                "model AMCE needs a noise-free embedding map",
            ));
        }
        let e = self.map.embed(z, self.prompt_type, self.seed)?;
        self.model.reward(&e, self.objective)
    }
}

/// Density `m` over the components other than `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "cells")]
pub enum Density {
    Uniform,
    /// Normalized weights keyed by the other components as bits, in
    /// component order with `k` removed.
    Empirical(BTreeMap<u64, f64>),
}

impl Density {
    pub fn name(&self) -> &'static str {
        match self {
            Density::Uniform => "uniform",
            Density::Empirical(_) => "empirical",
        }
    }

    /// Normalized counts of the given latent rows with component `k` removed.
    pub fn from_rows<'a>(rows: impl IntoIterator<Item = &'a [f64]>, k: usize) -> Result<Self> {
        let mut counts: BTreeMap<u64, f64> = BTreeMap::new();
        let mut total = 0.0;
        for z in rows {
            if k >= z.len() {
                return Err(Error::invalid(format!(
                    "component {k} out of range for {} latents",
                    z.len()
                )));
            }
            if z.len() - 1 > 63 {
                return Err(Error::invalid("at most 64 binary components"));
            }
            let mut bits = 0u64;
            for (j, &v) in z.iter().enumerate() {
                let b = binary(v)?;
                if j == k {
                    continue;
                }
                let pos = if j < k { j } else { j - 1 };
                bits |= u64::from(b) << pos;
            }
            *counts.entry(bits).or_insert(0.0) += 1.0;
            total += 1.0;
        }
        if total == 0.0 {
            return Err(Error::Empty(
                "no latent rows for an empirical density".into(),
            ));
        }
        counts.values_mut().for_each(|v| *v /= total);
        Ok(Density::Empirical(counts))
    }

    /// Pools the latents of both responses of every comparison.
    pub fn from_dataset(dataset: &Dataset, k: usize) -> Result<Self> {
        if !dataset.has_ground_truth() {
            return Err(Error::invalid("dataset carries no ground-truth latents"));
        }
        Self::from_rows(
            dataset.examples.iter().flat_map(|ex| {
                [
                    ex.z.as_deref().expect("checked"),
                    ex.z_prime.as_deref().expect("checked"),
                ]
            }),
            k,
        )
    }

    fn validate(&self, others: usize) -> Result<()> {
        if let Density::Empirical(cells) = self {
            let total: f64 = cells.values().sum();
            if (total - 1.0).abs() > 1e-9 || cells.values().any(|w| !(*w >= 0.0)) {
                return Err(Error::invalid(format!("empirical density sums to {total}")));
            }
            if others < 64 && cells.keys().any(|&b| b >> others != 0) {
                return Err(Error::invalid(
                    "empirical density has cells outside the latent space",
                ));
            }
        }
        Ok(())
    }
}

fn binary(v: f64) -> Result<bool> {
    if v == 0.0 {
        Ok(false)
    } else if v == 1.0 {
        Ok(true)
    } else {
        Err(Error::invalid(format!("latent value {v} is not binary")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmceConfig {
    /// Component whose effect is measured.
    pub k: usize,
    pub density: Density,
    /// Measure `0` against `1` instead of `1` against `0`.
    #[serde(default)]
    pub reversed: bool,
    /// Draws used when a uniform density is too large to enumerate.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    200_000
}

impl AmceConfig {
    pub fn new(k: usize, density: Density) -> Self {
        Self {
            k,
            density,
            reversed: false,
            samples: default_samples(),
            seed: 0,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(Error::invalid("latent space is empty"));
        }
        if self.k >= dim {
            return Err(Error::invalid(format!(
                "component {} out of range for {dim} latents",
                self.k
            )));
        }
        self.density.validate(dim - 1)
    }

    /// Full latent vector from the other components' bits and `z_k`.
    fn assemble(&self, dim: usize, others: u64, zk: bool) -> Vec<f64> {
        let mut z = Vec::with_capacity(dim);
        let mut pos = 0;
        for j in 0..dim {
            if j == self.k {
                z.push(f64::from(u8::from(zk)));
            } else {
                z.push(((others >> pos) & 1) as f64);
                pos += 1;
            }
        }
        z
    }

    fn term<R: LatentReward + ?Sized>(&self, reward: &R, others: u64) -> Result<f64> {
        let dim = reward.dim();
        let hi = reward.reward(&self.assemble(dim, others, !self.reversed))?;
        let lo = reward.reward(&self.assemble(dim, others, self.reversed))?;
        Ok(sigmoid(hi - lo))
    }
}

/// AMCE by Gray-code traversal of the other components under a uniform
/// density (sampled above [`EXACT_MAX_DIM`]), or by summing over the support
/// of an empirical density.
pub fn amce_estimate<R: LatentReward + ?Sized>(reward: &R, cfg: &AmceConfig) -> Result<f64> {
    let dim = reward.dim();
    cfg.validate(dim)?;
    let others = dim - 1;
    match &cfg.density {
        Density::Empirical(cells) => {
            let mut total = 0.0;
            for (&bits, &w) in cells {
                if w > 0.0 {
                    total += w * cfg.term(reward, bits)?;
                }
            }
            Ok(total)
        }
        Density::Uniform if others <= EXACT_MAX_DIM => {
            let cells = 1u64 << others;
            let mut total = 0.0;
            for i in 0..cells {
                total += cfg.term(reward, i ^ (i >> 1))?;
            }
            Ok(total / cells as f64)
        }
        Density::Uniform => {
            if cfg.samples == 0 {
                return Err(Error::invalid("sampled AMCE needs at least one draw"));
            }
            let mut rng = rng_from_seed(cfg.seed);
            let mask = if others >= 64 {
                u64::MAX
            } else {
                (1u64 << others) - 1
            };
            let mut total = 0.0;
            for _ in 0..cfg.samples {
                total += cfg.term(reward, rng.random::<u64>() & mask)?;
            }
            Ok(total / cfg.samples as f64)
        }
    }
}

/// Exhaustive weighted sum over all `2^(dim-1)` cells in counting order.
pub fn amce_bruteforce<R: LatentReward + ?Sized>(reward: &R, cfg: &AmceConfig) -> Result<f64> {
    let dim = reward.dim();
    if dim > BRUTEFORCE_MAX_DIM {
        return Err(Error::invalid(format!(
            "brute force enumerates at most {BRUTEFORCE_MAX_DIM} components, got {dim}"
        )));
    }
    cfg.validate(dim)?;
    let cells = 1u64 << (dim - 1);
    let terms: Vec<f64> = (0..cells)
        .into_par_iter()
        .map(|bits| {
            let m = match &cfg.density {
                Density::Uniform => 1.0 / cells as f64,
                Density::Empirical(w) => w.get(&bits).copied().unwrap_or(0.0),
            };
            if m == 0.0 {
                Ok(0.0)
            } else {
                Ok(m * cfg.term(reward, bits)?)
            }
        })
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

/// One line of the AMCE output table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmceRow {
    pub k: usize,
    pub density: String,
    pub amce: f64,
    pub oracle: f64,
    pub gap: f64,
}

/// Estimate and brute force for every component.
pub fn amce_table<R: LatentReward + ?Sized>(
    reward: &R,
    density_for: impl Fn(usize) -> Result<Density>,
) -> Result<Vec<AmceRow>> {
    (0..reward.dim())
        .map(|k| {
            let cfg = AmceConfig::new(k, density_for(k)?);
            let amce = amce_estimate(reward, &cfg)?;
            let oracle = amce_bruteforce(reward, &cfg)?;
            Ok(AmceRow {
                k,
                density: cfg.density.name().into(),
                amce,
                oracle,
                gap: (amce - oracle).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_is_one_term() {
        let r = LinearReward {
            weights: vec![1.3],
            bias: 0.2,
        };
        let cfg = AmceConfig::new(0, Density::Uniform);
        assert_eq!(amce_bruteforce(&r, &cfg).unwrap(), sigmoid(1.3));
        assert_eq!(amce_estimate(&r, &cfg).unwrap(), sigmoid(1.3));
    }

    #[test]
    fn assembly_skips_the_measured_component() {
        let cfg = AmceConfig::new(1, Density::Uniform);
        assert_eq!(cfg.assemble(3, 0b10, true), vec![0.0, 1.0, 1.0]);
        assert_eq!(cfg.assemble(3, 0b01, false), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn density_bits_match_assembly() {
        let rows: Vec<Vec<f64>> = vec![vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]];
        let d = Density::from_rows(rows.iter().map(|r| r.as_slice()), 1).unwrap();
        assert_eq!(d, Density::Empirical(BTreeMap::from([(0b11, 1.0)])));
        assert!(Density::from_rows([[0.5, 1.0].as_slice()], 0).is_err());
    }
}
