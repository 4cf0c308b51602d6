//! Two-objective world where the labeller's objective `c` also drives the
//! prompt type `t`: `P(t = c) = ρ`.
//!
//! Latents per response are `z = [z_help, z_harm]`. Objective 0 rewards
//! `z_help`, objective 1 rewards `z_harm`. Prompt type 0 is the
//! helpfulness-aligned type: its responses vary mostly along `z_help`.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingConfig, EmbeddingMap};
use super::{Dataset, DatasetHeader, LabelRule, PreferenceExample, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::SeedTree;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfoundedWorld {
    /// `P(t = c)`, in `[0.5, 1]`.
    pub rho: f64,
    /// Correlation of `z_help` and `z_harm` within a response.
    pub latent_corr: f64,
    /// Spread of the factor aligned with the prompt type.
    pub sigma_aligned: f64,
    /// Spread of the other factor.
    pub sigma_off: f64,
    #[serde(default)]
    pub label_rule: LabelRule,
    pub embedding: EmbeddingConfig,
}

impl ConfoundedWorld {
    pub fn new(rho: f64, map_seed: u64) -> Self {
        Self {
            rho,
            latent_corr: -0.5,
            sigma_aligned: 1.0,
            sigma_off: 0.2,
            label_rule: LabelRule::Deterministic,
            embedding: EmbeddingConfig {
                map_seed,
                ..EmbeddingConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.rho) {
            return Err(Error::invalid(format!(
                "confounding strength must lie in [0.5, 1], got {}",
                self.rho
            )));
        }
        if !(self.latent_corr.abs() < 1.0) {
            return Err(Error::invalid("latent correlation must lie in (-1, 1)"));
        }
        if !(self.sigma_aligned > 0.0 && self.sigma_off > 0.0)
            || !self.sigma_aligned.is_finite()
            || !self.sigma_off.is_finite()
        {
            return Err(Error::invalid("latent spreads must be positive and finite"));
        }
        self.embedding.validate()
    }

    pub fn embedding_map(&self) -> Result<EmbeddingMap> {
        EmbeddingMap::new(&self.embedding, vec![0.0, 0.0], vec![1.0, 1.0])
    }

    /// Latents of one response to a prompt of type `t`.
    pub fn draw_latents<R: Rng + ?Sized>(&self, t: u8, rng: &mut R) -> [f64; 2] {
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        let help = a;
        let harm = self.latent_corr * a + (1.0 - self.latent_corr.powi(2)).sqrt() * b;
        let (s_help, s_harm) = if t == 0 {
            (self.sigma_aligned, self.sigma_off)
        } else {
            (self.sigma_off, self.sigma_aligned)
        };
        [s_help * help, s_harm * harm]
    }

    /// `n / 2` examples per objective (the extra one goes to `c = 1` when
    /// `n` is odd), in shuffled order.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let root = SeedTree::new(seed);
        let mut objectives: Vec<u8> = (0..n).map(|i| u8::from(i >= n / 2)).collect();
        objectives.shuffle(&mut root.child("objectives").rng());

        let map = self.embedding_map()?;
        let mut assign = root.child("assignment").rng();
        let mut latents = root.child("latents").rng();
        let mut labels = root.child("labels").rng();
        let mut emb = root.child("examples").rng();
        let mut examples = Vec::with_capacity(n);
        for (i, &c) in objectives.iter().enumerate() {
            let t = if assign.random_bool(self.rho) {
                c
            } else {
                1 - c
            };
            let z = self.draw_latents(t, &mut latents);
            let zp = self.draw_latents(t, &mut latents);
            let ell = self.label_rule.label(
                objective_reward(&z, c),
                objective_reward(&zp, c),
                &mut labels,
            );
            let e = map.embed(&z, Some(t), emb.next_u64())?;
            let e_prime = map.embed(&zp, Some(t), emb.next_u64())?;
            examples.push(PreferenceExample {
                id: i as u64,
                e,
                e_prime,
                c,
                t,
                ell,
                z: Some(z.to_vec()),
                z_prime: Some(zp.to_vec()),
            });
        }
        Ok(Dataset {
            header: DatasetHeader {
                world: WorldConfig::Confounded(self.clone()),
                seed,
            },
            examples,
        })
    }
}

/// `r_c(z) = z[c]`: helpfulness for `c = 0`, harmlessness for `c = 1`.
pub fn objective_reward(z: &[f64], c: u8) -> f64 {
    z[c as usize]
}

/// Samples `n` comparisons with the default embedding map derived from `seed`.
pub fn sample_confounded_world(n: usize, rho: f64, seed: u64) -> Result<Dataset> {
    let map_seed = SeedTree::new(seed).child("world").seed();
    ConfoundedWorld::new(rho, map_seed).sample(n, seed)
}
