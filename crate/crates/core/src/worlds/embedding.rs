use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Knobs of the random feature map `e = tanh(A·[z̃; g·onehot(t); η]) + ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub dim: usize,
    /// Standard deviation of the additive output noise ε.
    pub noise_sd: f64,
    /// Number of per-response nuisance coordinates η.
    pub nuisance: usize,
    /// Gain on the prompt-type one-hot.
    pub type_gain: f64,
    /// Entries of `A` are `N(0, weight_scale² / input_width)`.
    pub weight_scale: f64,
    /// Seed of the matrix `A`.
    pub map_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            noise_sd: 0.1,
            nuisance: 8,
            type_gain: 2.0,
            weight_scale: 1.0,
            map_seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::invalid(format!(
                "embedding noise must be finite and >= 0, got {}",
                self.noise_sd
            )));
        }
        if !self.type_gain.is_finite()
            || !(self.weight_scale > 0.0 && self.weight_scale.is_finite())
        {
            return Err(Error::invalid(
                "embedding gains must be finite, weight scale > 0",
            ));
        }
        Ok(())
    }
}

/// A world's fixed embedding map. Latents are standardized with per-coordinate
/// centers and scales before entering the map.
#[derive(Clone, Debug)]
pub struct EmbeddingMap {
    config: EmbeddingConfig,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// `dim × input_width`
    a: Array2<f64>,
}

impl EmbeddingMap {
    pub fn new(config: &EmbeddingConfig, center: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if center.len() != scale.len() || center.is_empty() {
            return Err(Error::shape(format!(
                "{} latent centers and {} scales",
                center.len(),
                scale.len()
            )));
        }
        if scale.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("latent scales must be positive"));
        }
        let input = center.len() + 2 + config.nuisance;
        let sd = config.weight_scale / (input as f64).sqrt();
        let mut rng = rng_from_seed(config.map_seed);
        let a = Array2::from_shape_simple_fn((config.dim, input), || {
            sd * rng.sample::<f64, _>(StandardNormal)
        });
        Ok(Self {
            config: config.clone(),
            center,
            scale,
            a,
        })
    }

    pub fn config(&self) -> &EmbeddingConfig {
        &self.config
    }

    pub fn latent_dim(&self) -> usize {
        self.center.len()
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    /// Embeds one response. `t = None` zeroes the type channel.
    pub fn embed(&self, z: &[f64], t: Option<u8>, seed: u64) -> Result<Vec<f64>> {
        if z.len() != self.latent_dim() {
            return Err(Error::shape(format!(
                "latent vector has {} coordinates, map expects {}",
                z.len(),
                self.latent_dim()
            )));
        }
        if matches!(t, Some(t) if t > 1) {
            return Err(Error::invalid(format!(
                "prompt type must be 0 or 1, got {t:?}"
            )));
        }
        let mut rng = rng_from_seed(seed);
        let mut u = Array1::zeros(self.a.ncols());
        for (i, ((&zi, &c), &s)) in z.iter().zip(&self.center).zip(&self.scale).enumerate() {
            u[i] = (zi - c) / s;
        }
        let k = self.latent_dim();
        if let Some(t) = t {
            u[k + t as usize] = self.config.type_gain;
        }
        for j in 0..self.config.nuisance {
            u[k + 2 + j] = rng.sample(StandardNormal);
        }
        let mut e = self.a.dot(&u);
        e.mapv_inplace(f64::tanh);
        if self.config.noise_sd > 0.0 {
            for v in e.iter_mut() {
                *v += self.config.noise_sd * rng.sample::<f64, _>(StandardNormal);
            }
        }
        Ok(e.to_vec())
    }
}

pub fn synth_embedding(map: &EmbeddingMap, z: &[f64], t: u8, seed: u64) -> Result<Vec<f64>> {
    map.embed(z, Some(t), seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(noise: f64) -> EmbeddingMap {
        let cfg = EmbeddingConfig {
            noise_sd: noise,
            ..EmbeddingConfig::default()
        };
        EmbeddingMap::new(&cfg, vec![2.5, 2.5], vec![1.25, 1.25]).unwrap()
    }

    #[test]
    fn deterministic_per_seed() {
        let m = map(0.0);
        let a = synth_embedding(&m, &[1.0, 4.0], 1, 42).unwrap();
        let b = synth_embedding(&m, &[1.0, 4.0], 1, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let c = synth_embedding(&m, &[1.0, 4.0], 1, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn wrong_latent_width_is_rejected() {
        let m = map(0.1);
        assert!(synth_embedding(&m, &[1.0], 0, 1).is_err());
        assert!(synth_embedding(&m, &[1.0, 2.0], 2, 1).is_err());
    }

    #[test]
    fn type_channel_changes_the_embedding() {
        let m = map(0.0);
        let a = m.embed(&[2.0, 2.0], Some(0), 5).unwrap();
        let b = m.embed(&[2.0, 2.0], Some(1), 5).unwrap();
        let c = m.embed(&[2.0, 2.0], None, 5).unwrap();
        assert_ne!(a, b);
        assert_ne!(a, c);
    }
}
