//! Two-factor world with scores in `[0, 5]` and reward `α·z₁ + (1-α)·z₂`.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::embedding::{EmbeddingConfig, EmbeddingMap};
use super::{pearson, Dataset, DatasetHeader, LabelRule, PreferenceExample, WorldConfig};
use crate::error::{Error, Result};
use crate::rng::SeedTree;

/// Training correlations of the latent-correlation study.
pub const UF_TRAIN_GRID: [f64; 4] = [0.0, 0.3, 0.6, 0.9];
/// Correlation of the out-of-distribution test set.
pub const OOD_TEST_RHO: f64 = -0.8;

const SCORE_MAX: f64 = 5.0;
const SCORE_MID: f64 = 2.5;
/// Below this size the copula is calibrated on a separate pilot sample.
const MIN_SELF_CALIBRATION: usize = 2_000;
const PILOT_SIZE: usize = 50_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UltraFeedbackWorld {
    pub alpha: f64,
    /// Target correlation of `z₁ - z₁'` and `z₂ - z₂'`.
    pub rho: f64,
    /// Spread of the scores around 2.5 before clipping.
    pub score_sd: f64,
    #[serde(default)]
    pub label_rule: LabelRule,
    pub embedding: EmbeddingConfig,
}

impl UltraFeedbackWorld {
    pub fn new(rho: f64, alpha: f64, map_seed: u64) -> Self {
        Self {
            alpha,
            rho,
            score_sd: 1.25,
            label_rule: LabelRule::Deterministic,
            embedding: EmbeddingConfig {
                map_seed,
                ..EmbeddingConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() <= 0.95) {
            return Err(Error::invalid(format!(
                "latent correlation target must lie in [-0.95, 0.95], got {}",
                self.rho
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.score_sd > 0.0 && self.score_sd.is_finite()) {
            return Err(Error::invalid("score spread must be positive"));
        }
        self.embedding.validate()
    }

    pub fn embedding_map(&self) -> Result<EmbeddingMap> {
        let s = self.score_sd;
        EmbeddingMap::new(&self.embedding, vec![SCORE_MID; 2], vec![s, s])
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("sample size must be positive"));
        }
        let root = SeedTree::new(seed);
        let draws = Draws::new(n, &mut root.child("latents").rng());
        let copula = if n >= MIN_SELF_CALIBRATION {
            solve_copula(&draws, self.score_sd, self.rho)?
        } else {
            let pilot = Draws::new(PILOT_SIZE, &mut root.child("copula").rng());
            solve_copula(&pilot, self.score_sd, self.rho)?
        };
        let (z, zp) = draws.scores(self.score_sd, copula);

        let map = self.embedding_map()?;
        let mut labels = root.child("labels").rng();
        let mut emb = root.child("examples").rng();
        let mut examples = Vec::with_capacity(n);
        for i in 0..n {
            let r = uf_reward(&z[i], self.alpha);
            let rp = uf_reward(&zp[i], self.alpha);
            let ell = self.label_rule.label(r, rp, &mut labels);
            let e = map.embed(&z[i], Some(0), emb.next_u64())?;
            let e_prime = map.embed(&zp[i], Some(0), emb.next_u64())?;
            examples.push(PreferenceExample {
                id: i as u64,
                e,
                e_prime,
                c: 0,
                t: 0,
                ell,
                z: Some(z[i].to_vec()),
                z_prime: Some(zp[i].to_vec()),
            });
        }
        Ok(Dataset {
            header: DatasetHeader {
                world: WorldConfig::Ultrafeedback(self.clone()),
                seed,
            },
            examples,
        })
    }
}

/// `α·z₁ + (1-α)·z₂`.
pub fn uf_reward(z: &[f64], alpha: f64) -> f64 {
    alpha * z[0] + (1.0 - alpha) * z[1]
}

/// Samples `n` comparisons with the default embedding map derived from `seed`.
pub fn sample_ultrafeedback_world(n: usize, rho: f64, alpha: f64, seed: u64) -> Result<Dataset> {
    let map_seed = SeedTree::new(seed).child("world").seed();
    UltraFeedbackWorld::new(rho, alpha, map_seed).sample(n, seed)
}

/// Standard normal draws `(u₁, u₂)` for each response of each comparison.
struct Draws {
    first: Vec<[f64; 2]>,
    second: Vec<[f64; 2]>,
}

impl Draws {
    fn new<R: Rng>(n: usize, rng: &mut R) -> Self {
        let mut pair = || [rng.sample(StandardNormal), rng.sample(StandardNormal)];
        let mut first = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        for _ in 0..n {
            first.push(pair());
            second.push(pair());
        }
        Self { first, second }
    }

    fn scores(&self, sd: f64, copula: f64) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let map = |u: &[f64; 2]| score_pair(u, sd, copula);
        (
            self.first.iter().map(map).collect(),
            self.second.iter().map(map).collect(),
        )
    }

    fn delta_corr(&self, sd: f64, copula: f64) -> f64 {
        let (z, zp) = self.scores(sd, copula);
        let d1: Vec<f64> = z.iter().zip(&zp).map(|(a, b)| a[0] - b[0]).collect();
        let d2: Vec<f64> = z.iter().zip(&zp).map(|(a, b)| a[1] - b[1]).collect();
        pearson(&d1, &d2)
    }
}

fn score_pair(u: &[f64; 2], sd: f64, copula: f64) -> [f64; 2] {
    let w2 = copula * u[0] + (1.0 - copula * copula).max(0.0).sqrt() * u[1];
    [
        (SCORE_MID + sd * u[0]).clamp(0.0, SCORE_MAX),
        (SCORE_MID + sd * w2).clamp(0.0, SCORE_MAX),
    ]
}

/// Bisection for the copula parameter whose post-clipping correlation of
/// score differences equals `target`, holding the draws fixed.
fn solve_copula(draws: &Draws, sd: f64, target: f64) -> Result<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    let (f_lo, f_hi) = (draws.delta_corr(sd, lo), draws.delta_corr(sd, hi));
    if !(f_lo <= target && target <= f_hi) {
        return Err(Error::Unattainable(format!(
            "correlation {target} is outside the attainable range [{f_lo:.4}, {f_hi:.4}] \
             for scores clipped to [0, {SCORE_MAX}] with spread {sd}"
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if draws.delta_corr(sd, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_example() {
        assert_eq!(uf_reward(&[4.0, 2.0], 0.25), 2.5);
    }

    #[test]
    fn out_of_range_targets_are_rejected() {
        assert!(sample_ultrafeedback_world(10, 0.96, 0.25, 0).is_err());
        assert!(sample_ultrafeedback_world(10, 0.0, 1.5, 0).is_err());
        assert!(sample_ultrafeedback_world(0, 0.0, 0.25, 0).is_err());
    }

    #[test]
    fn small_samples_are_supported() {
        let d = sample_ultrafeedback_world(3, 0.6, 0.25, 4).unwrap();
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn scores_stay_in_bounds() {
        let d = sample_ultrafeedback_world(2_000, -0.8, 0.25, 1).unwrap();
        for ex in &d.examples {
            for z in ex.z.iter().chain(ex.z_prime.iter()).flatten() {
                assert!((0.0..=5.0).contains(z));
            }
        }
    }
}
