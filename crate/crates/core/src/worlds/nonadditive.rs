//! World whose reward depends on a prompt artifact `z^X` and a response
//! treatment `z^T` through a per-type quadratic:
//! `R = β_{z^X}·(z^T - γ_{z^X})²`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingConfig, EmbeddingMap};
use super::{Dataset, DatasetHeader, LabelRule, PreferenceExample, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::SeedTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonAdditiveWorld {
    pub beta: [f64; 2],
    pub gamma: [f64; 2],
    /// When false the embedding carries no trace of `z^X`.
    pub reveal_prompt_type: bool,
    #[serde(default)]
    pub label_rule: LabelRule,
    pub embedding: EmbeddingConfig,
}

impl NonAdditiveWorld {
    pub fn new(beta: [f64; 2], gamma: [f64; 2], map_seed: u64) -> Self {
        Self {
            beta,
            gamma,
            reveal_prompt_type: true,
            label_rule: LabelRule::Deterministic,
            embedding: EmbeddingConfig {
                map_seed,
                ..EmbeddingConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma[0] > self.gamma[1]) {
            return Err(Error::invalid(format!(
                "the first prompt type's optimum must exceed the second's, got gamma = {:?}",
                self.gamma
            )));
        }
        if self.beta.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("quadratic coefficients".into()));
        }
        self.embedding.validate()
    }

    /// `z = [z^X, z^T]`.
    pub fn reward(&self, z: &[f64]) -> f64 {
        nonadditive_reward(z[0] as u8, z[1], self.beta, self.gamma)
    }

    pub fn embedding_map(&self) -> Result<EmbeddingMap> {
        EmbeddingMap::new(&self.embedding, vec![0.5], vec![(1.0f64 / 12.0).sqrt()])
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let root = SeedTree::new(seed);
        let map = self.embedding_map()?;
        let mut latents = root.child("latents").rng();
        let mut labels = root.child("labels").rng();
        let mut emb = root.child("examples").rng();
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let zx = u8::from(latents.random_bool(0.5));
            let z = [zx as f64, latents.random::<f64>()];
            let zp = [zx as f64, latents.random::<f64>()];
            let ell = self
                .label_rule
                .label(self.reward(&z), self.reward(&zp), &mut labels);
            let shown = self.reveal_prompt_type.then_some(zx);
            let e = map.embed(&z[1..], shown, emb.next_u64())?;
            let e_prime = map.embed(&zp[1..], shown, emb.next_u64())?;
            examples.push(PreferenceExample {
                id: i as u64,
                e,
                e_prime,
                c: 0,
                t: zx,
                ell,
                z: Some(z.to_vec()),
                z_prime: Some(zp.to_vec()),
            });
        }
        Ok(Dataset {
            header: DatasetHeader {
                world: WorldConfig::Nonadditive(self.clone()),
                seed,
            },
            examples,
        })
    }
}

pub fn nonadditive_reward(zx: u8, zt: f64, beta: [f64; 2], gamma: [f64; 2]) -> f64 {
    let k = usize::from(zx != 0);
    beta[k] * (zt - gamma[k]).powi(2)
}

/// Samples `n` comparisons with `z^X ~ Bernoulli(½)` and `z^T ~ U[0, 1]`.
pub fn nonadditive_world(
    n: usize,
    beta0: f64,
    beta1: f64,
    gamma0: f64,
    gamma1: f64,
    seed: u64,
) -> Result<Dataset> {
    let map_seed = SeedTree::new(seed).child("world").seed();
    NonAdditiveWorld::new([beta0, beta1], [gamma0, gamma1], map_seed).sample(n, seed)
}
