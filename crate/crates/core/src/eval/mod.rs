//! Accuracy over test slices and the aggregated experiment reports.

mod report;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Batch, RewardModel};
use crate::rng::rng_from_seed;
use crate::worlds::{Dataset, PreferenceExample};

pub use report::{
    aggregate, consistency_report, id_ood_report, Cell, ExperimentReport, ReportMeta, SeedResult,
    UNCERTAINTY_NOTE,
};

/// Named subset of a test set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SliceSpec {
    All,
    /// `t = c`
    Consistent,
    /// `t ≠ c`
    Inconsistent,
    Objective(u8),
    PromptType(u8),
}

impl SliceSpec {
    pub fn name(&self) -> String {
        match self {
            SliceSpec::All => "all".into(),
            SliceSpec::Consistent => "consistent".into(),
            SliceSpec::Inconsistent => "inconsistent".into(),
            SliceSpec::Objective(c) => format!("c={c}"),
            SliceSpec::PromptType(t) => format!("t={t}"),
        }
    }

    pub fn contains(&self, ex: &PreferenceExample) -> bool {
        match self {
            SliceSpec::All => true,
            SliceSpec::Consistent => ex.t == ex.c,
            SliceSpec::Inconsistent => ex.t != ex.c,
            SliceSpec::Objective(c) => ex.c == *c,
            SliceSpec::PromptType(t) => ex.t == *t,
        }
    }

    pub fn select(&self, dataset: &Dataset) -> Dataset {
        dataset.filter(|ex| self.contains(ex))
    }
}

/// Anything that assigns a reward to both responses of each comparison.
pub trait PairScorer {
    fn pair_rewards(&self, dataset: &Dataset) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl PairScorer for RewardModel {
    fn pair_rewards(&self, dataset: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        self.batch_rewards(&Batch::all(dataset)?)
    }
}

/// Scores responses with the generating world's reward.
#[derive(Clone, Copy, Debug, Default)]
pub struct GroundTruth;

impl PairScorer for GroundTruth {
    fn pair_rewards(&self, dataset: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        if !dataset.has_ground_truth() {
            return Err(Error::invalid("dataset carries no ground-truth latents"));
        }
        let world = &dataset.header.world;
        let reward = |z: &Option<Vec<f64>>, c| world.reward(z.as_deref().expect("checked"), c);
        Ok(dataset
            .examples
            .iter()
            .map(|ex| {
                (
                    reward(&ex.z, ex.c).expect("known world"),
                    reward(&ex.z_prime, ex.c).expect("known world"),
                )
            })
            .unzip())
    }
}

/// Independent uniform rewards, seeded.
#[derive(Clone, Copy, Debug)]
pub struct CoinFlip {
    pub seed: u64,
}

impl PairScorer for CoinFlip {
    fn pair_rewards(&self, dataset: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut rng = rng_from_seed(self.seed);
        Ok((0..dataset.len())
            .map(|_| (rng.next_u64() as f64, rng.next_u64() as f64))
            .unzip())
    }
}

/// Accuracy on one slice with its binomial standard error `√(p(1-p)/n)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Accuracy {
    pub fn from_hits(hits: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("accuracy of an empty slice".into()));
        }
        let p = hits as f64 / n as f64;
        Ok(Self {
            mean: p,
            stderr: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        })
    }
}

/// Prediction is "second response preferred" iff `r < r'`.
pub fn accuracy<S: PairScorer + ?Sized>(
    scorer: &S,
    dataset: &Dataset,
    slice: &SliceSpec,
) -> Result<Accuracy> {
    let subset = slice.select(dataset);
    if subset.is_empty() {
        return Err(Error::Empty(format!("slice '{}' is empty", slice.name())));
    }
    let (r, rp) = scorer.pair_rewards(&subset)?;
    let hits = subset
        .examples
        .iter()
        .zip(r.iter().zip(&rp))
        .filter(|(ex, (a, b))| u8::from(a < b) == ex.ell)
        .count();
    Accuracy::from_hits(hits, subset.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worlds::sample_confounded_world;

    #[test]
    fn slices_partition_the_test_set() {
        let d = sample_confounded_world(1_000, 0.7, 1).unwrap();
        let a = SliceSpec::Consistent.select(&d).len();
        let b = SliceSpec::Inconsistent.select(&d).len();
        assert_eq!(a + b, d.len());
    }

    #[test]
    fn empty_slice_is_rejected() {
        let d = sample_confounded_world(100, 1.0, 1).unwrap();
        assert!(matches!(
            accuracy(&GroundTruth, &d, &SliceSpec::Inconsistent),
            Err(Error::Empty(_))
        ));
    }

    #[test]
    fn stderr_is_binomial() {
        let a = Accuracy::from_hits(75, 100).unwrap();
        assert_eq!(a.mean, 0.75);
        assert!((a.stderr - (0.75f64 * 0.25 / 100.0).sqrt()).abs() < 1e-15);
    }
}
