use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

/// Split sizes by example count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitPreset {
    /// 10,000 train, 2,000 validation, 10,000 test.
    Desk,
    /// 30,000 train, 6,000 validation, the rest test.
    Paper,
}

impl SplitPreset {
    pub fn train(self) -> usize {
        match self {
            SplitPreset::Desk => 10_000,
            SplitPreset::Paper => 30_000,
        }
    }

    pub fn validation(self) -> usize {
        match self {
            SplitPreset::Desk => 2_000,
            SplitPreset::Paper => 6_000,
        }
    }

    /// Test size, `None` meaning "whatever remains".
    pub fn test(self) -> Option<usize> {
        match self {
            SplitPreset::Desk => Some(10_000),
            SplitPreset::Paper => None,
        }
    }

    pub fn apply(self, dataset: &Dataset, seed: u64) -> Result<Splits> {
        let needed = self.train() + self.validation() + self.test().unwrap_or(0);
        if dataset.len() < needed {
            return Err(Error::invalid(format!(
                "{self:?} split needs at least {needed} examples, dataset has {}",
                dataset.len()
            )));
        }
        let mut splits = make_splits_by_count(dataset, self.train(), self.validation(), seed)?;
        if let Some(test) = self.test() {
            splits.test.examples.truncate(test);
        }
        Ok(splits)
    }
}

/// Seeded disjoint, exhaustive partition. Sizes are `round(f·n)` for train
/// and validation; the test split takes the remainder.
pub fn make_splits(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
        return Err(Error::invalid(format!(
            "split fractions must lie in [0, 1], got {fractions:?}"
        )));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must sum to 1, got {fractions:?} (sum {total})"
        )));
    }
    let n = dataset.len();
    let train = ((fractions[0] * n as f64).round() as usize).min(n);
    let validation = ((fractions[1] * n as f64).round() as usize).min(n - train);
    make_splits_by_count(dataset, train, validation, seed)
}

pub fn make_splits_by_count(
    dataset: &Dataset,
    train: usize,
    validation: usize,
    seed: u64,
) -> Result<Splits> {
    let n = dataset.len();
    if train + validation > n {
        return Err(Error::invalid(format!(
            "{train} train + {validation} validation exceeds {n} examples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let (tr, rest) = order.split_at(train);
    let (va, te) = rest.split_at(validation);
    Ok(Splits {
        train: dataset.subset(tr),
        validation: dataset.subset(va),
        test: dataset.subset(te),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worlds::sample_ultrafeedback_world;

    #[test]
    fn degenerate_and_invalid_fractions() {
        let d = sample_ultrafeedback_world(50, 0.0, 0.25, 1).unwrap();
        let s = make_splits(&d, [1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(s.train.len(), 50);
        assert!(s.validation.is_empty() && s.test.is_empty());
        assert!(make_splits(&d, [0.5, 0.4, 0.2], 2).is_err());
        assert!(make_splits(&d, [1.2, -0.2, 0.0], 2).is_err());
    }

    #[test]
    fn preset_sizes() {
        assert_eq!(
            (SplitPreset::Paper.train(), SplitPreset::Paper.validation()),
            (30_000, 6_000)
        );
        assert_eq!(SplitPreset::Desk.test(), Some(10_000));
    }
}
