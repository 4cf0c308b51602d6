//! Synthetic preference worlds with fully known latent factors.
//!
//! Each world draws latent factors for the two responses of a comparison,
//! labels the comparison from its ground-truth reward, and synthesizes
//! embeddings through a fixed random feature map. The latents are stored
//! alongside each example but are never shown to a reward model.

mod confounded;
mod embedding;
pub mod io;
mod nonadditive;
mod splits;
mod ultrafeedback;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};

pub use confounded::{sample_confounded_world, ConfoundedWorld};
pub use embedding::{synth_embedding, EmbeddingConfig, EmbeddingMap};
pub use nonadditive::{nonadditive_reward, nonadditive_world, NonAdditiveWorld};
pub use splits::{make_splits, make_splits_by_count, SplitPreset, Splits};
pub use ultrafeedback::{
    sample_ultrafeedback_world, uf_reward, UltraFeedbackWorld, OOD_TEST_RHO, UF_TRAIN_GRID,
};

/// Grid of `P(type = objective)` values used by the confounding study.
pub const CONFOUNDING_GRID: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// One labelled comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceExample {
    pub id: u64,
    pub e: Vec<f64>,
    pub e_prime: Vec<f64>,
    /// Objective the labeller evaluated with.
    pub c: u8,
    /// Prompt type.
    pub t: u8,
    /// `0` when the first response won, `1` when the second did.
    pub ell: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z_prime: Option<Vec<f64>>,
}

impl PreferenceExample {
    pub fn is_consistent(&self) -> bool {
        self.t == self.c
    }

    /// Same comparison with the two responses presented in the other order.
    pub fn swapped(&self) -> Self {
        Self {
            id: self.id,
            e: self.e_prime.clone(),
            e_prime: self.e.clone(),
            c: self.c,
            t: self.t,
            ell: 1 - self.ell,
            z: self.z_prime.clone(),
            z_prime: self.z.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRule {
    /// Winner is the higher-reward response; exact ties are a fair coin.
    #[default]
    Deterministic,
    /// `ℓ = 0` with probability `σ(r - r')`.
    Btl,
}

impl LabelRule {
    pub fn label<R: Rng + ?Sized>(self, r: f64, r_prime: f64, rng: &mut R) -> u8 {
        match self {
            LabelRule::Deterministic => assign_label(r, r_prime, rng),
            LabelRule::Btl => {
                if rng.random_bool(sigmoid(r - r_prime)) {
                    0
                } else {
                    1
                }
            }
        }
    }
}

/// `0` if `r > r'`, `1` if `r < r'`, fair coin on a tie.
pub fn assign_label<R: Rng + ?Sized>(r: f64, r_prime: f64, rng: &mut R) -> u8 {
    if r > r_prime {
        0
    } else if r < r_prime {
        1
    } else {
        u8::from(rng.random_bool(0.5))
    }
}

/// Generator configuration, recorded in dataset headers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WorldConfig {
    Ultrafeedback(UltraFeedbackWorld),
    Confounded(ConfoundedWorld),
    Nonadditive(NonAdditiveWorld),
    /// Externally produced embeddings; no ground-truth latents.
    Imported {
        dim: usize,
    },
}

impl WorldConfig {
    pub fn embedding_dim(&self) -> usize {
        match self {
            WorldConfig::Ultrafeedback(w) => w.embedding.dim,
            WorldConfig::Confounded(w) => w.embedding.dim,
            WorldConfig::Nonadditive(w) => w.embedding.dim,
            WorldConfig::Imported { dim } => *dim,
        }
    }

    /// Ground-truth reward of one response under objective `c`, if known.
    pub fn reward(&self, z: &[f64], c: u8) -> Option<f64> {
        match self {
            WorldConfig::Ultrafeedback(w) => Some(uf_reward(z, w.alpha)),
            WorldConfig::Confounded(_) => Some(confounded::objective_reward(z, c)),
            WorldConfig::Nonadditive(w) => Some(w.reward(z)),
            WorldConfig::Imported { .. } => None,
        }
    }

    pub fn label_rule(&self) -> Option<LabelRule> {
        match self {
            WorldConfig::Ultrafeedback(w) => Some(w.label_rule),
            WorldConfig::Confounded(w) => Some(w.label_rule),
            WorldConfig::Nonadditive(w) => Some(w.label_rule),
            WorldConfig::Imported { .. } => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub world: WorldConfig,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub examples: Vec<PreferenceExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn embedding_dim(&self) -> usize {
        self.header.world.embedding_dim()
    }

    pub fn has_ground_truth(&self) -> bool {
        !matches!(self.header.world, WorldConfig::Imported { .. })
            && self
                .examples
                .iter()
                .all(|ex| ex.z.is_some() && ex.z_prime.is_some())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            header: self.header.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }

    pub fn filter(&self, keep: impl Fn(&PreferenceExample) -> bool) -> Dataset {
        Dataset {
            header: self.header.clone(),
            examples: self.examples.iter().filter(|e| keep(e)).cloned().collect(),
        }
    }

    /// Every example with its responses exchanged and its label flipped.
    pub fn swapped(&self) -> Dataset {
        Dataset {
            header: self.header.clone(),
            examples: self
                .examples
                .iter()
                .map(PreferenceExample::swapped)
                .collect(),
        }
    }

    /// Checks structural invariants: binary fields and embedding widths.
    pub fn validate(&self) -> Result<()> {
        let dim = self.embedding_dim();
        for ex in &self.examples {
            if ex.c > 1 || ex.t > 1 || ex.ell > 1 {
                return Err(Error::invalid(format!(
                    "example {}: c, t and ell must be binary (c={}, t={}, ell={})",
                    ex.id, ex.c, ex.t, ex.ell
                )));
            }
            if ex.e.len() != dim || ex.e_prime.len() != dim {
                return Err(Error::shape(format!(
                    "example {}: embeddings have widths {} and {}, world declares {dim}",
                    ex.id,
                    ex.e.len(),
                    ex.e_prime.len()
                )));
            }
        }
        Ok(())
    }

    /// Ids of examples whose label disagrees with the ground-truth reward.
    /// Tied comparisons are skipped. Returns `None` for imported data.
    pub fn label_mismatches(&self) -> Option<Vec<u64>> {
        if !self.has_ground_truth() {
            return None;
        }
        let world = &self.header.world;
        let mismatches = self
            .examples
            .iter()
            .filter(|ex| {
                let z = ex.z.as_deref().expect("checked");
                let zp = ex.z_prime.as_deref().expect("checked");
                let r = world.reward(z, ex.c).expect("ground truth");
                let rp = world.reward(zp, ex.c).expect("ground truth");
                (r > rp && ex.ell != 0) || (r < rp && ex.ell != 1)
            })
            .map(|ex| ex.id)
            .collect();
        Some(mismatches)
    }
}

pub(crate) fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn label_rule_cases() {
        let mut rng = rng_from_seed(1);
        assert_eq!(assign_label(3.0, 1.0, &mut rng), 0);
        assert_eq!(assign_label(1.0, 3.0, &mut rng), 1);
    }

    #[test]
    fn ties_are_a_fair_coin() {
        let mut rng = rng_from_seed(7);
        let n = 10_000;
        let ones: u32 = (0..n)
            .map(|_| assign_label(2.0, 2.0, &mut rng) as u32)
            .sum();
        let mean = ones as f64 / n as f64;
        assert!(mean > 0.48 && mean < 0.52, "tie-break mean {mean}");
    }

    #[test]
    fn btl_labels_follow_the_logistic() {
        let mut rng = rng_from_seed(3);
        let n = 20_000;
        let firsts = (0..n)
            .filter(|_| LabelRule::Btl.label(1.0, 0.0, &mut rng) == 0)
            .count();
        let p = firsts as f64 / n as f64;
        assert!((p - sigmoid(1.0)).abs() < 0.015, "{p}");
    }
}
