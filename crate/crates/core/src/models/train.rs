use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{pairwise_accuracy, Batch, LossPart, RewardModel, RewardModelSpec};
use crate::autodiff::{AdamConfig, AdamState, Matrix};
use crate::btl::{btl_nll, LabelledBatch};
use crate::error::{Error, Result};
use crate::rng::SeedTree;
use crate::worlds::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 64,
            learning_rate: 1e-4,
            seeds: vec![0, 1, 2],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean BTL NLL per comparison.
    pub train_nll: f64,
    pub train_accuracy: f64,
    pub val_nll: f64,
    pub val_accuracy: f64,
    /// Mean adversary cross-entropy per comparison (both responses).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_adversary_bce: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    /// Parameters from the epoch with the highest validation accuracy.
    pub model: RewardModel,
    pub seed: u64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }

    pub fn meta(&self) -> TrainingMeta {
        TrainingMeta {
            seed: self.seed,
            best_epoch: self.best_epoch,
            history: self.history.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.model.save(path, &self.meta())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (model, meta) = RewardModel::load(path)?;
        let meta: TrainingMeta = serde_json::from_value(meta)
            .map_err(|e| Error::format("checkpoint sidecar", e.to_string()))?;
        Ok(Self {
            model,
            seed: meta.seed,
            best_epoch: meta.best_epoch,
            history: meta.history,
        })
    }
}

/// One training run per configured seed.
pub fn train(
    spec: &RewardModelSpec,
    train_set: &Dataset,
    validation: &Dataset,
    cfg: &TrainConfig,
) -> Result<Vec<TrainedModel>> {
    cfg.validate()?;
    cfg.seeds
        .iter()
        .map(|&seed| train_run(spec, train_set, validation, cfg, seed))
        .collect()
}

/// Trains from initial weights derived from `seed` and returns the
/// checkpoint with the best validation accuracy; ties go to the earliest
/// epoch.
pub fn train_run(
    spec: &RewardModelSpec,
    train_set: &Dataset,
    validation: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::Empty(format!(
            "training needs non-empty splits, got {} train and {} validation examples",
            train_set.len(),
            validation.len()
        )));
    }
    let mut model = RewardModel::new(spec.clone().with_seed(seed))?;
    let mut adam = AdamState::new(
        AdamConfig::with_learning_rate(cfg.learning_rate),
        model.parameters(),
    );
    let train_all = Batch::all(train_set)?;
    let val_all = Batch::all(validation)?;
    let mut shuffle = SeedTree::new(seed).child("shuffle").rng();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, RewardModel)> = None;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = Batch::from_dataset(train_set, chunk)?;
            let (loss, grads) = step_gradients(&model, &batch)?;
            if !loss.is_finite() || grads.iter().any(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence {
                    epoch,
                    batch: b + 1,
                    loss,
                });
            }
            let mut params = model.parameters_mut();
            adam.step(&mut params, &grads)?;
        }

        let (train_nll, train_accuracy) = evaluate(&model, &train_all)?;
        let (val_nll, val_accuracy) = evaluate(&model, &val_all)?;
        let train_adversary_bce = match model.adversary() {
            Some(_) => Some(model.adversarial_losses(&train_all)?.1 / train_all.len() as f64),
            None => None,
        };
        if !train_nll.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: 0,
                loss: train_nll,
            });
        }
        history.push(EpochRecord {
            epoch,
            train_nll,
            train_accuracy,
            val_nll,
            val_accuracy,
            train_adversary_bce,
        });
        if best.as_ref().is_none_or(|(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, model.clone()));
        }
    }
    let (best_epoch, _, model) = best.expect("at least one epoch");
    Ok(TrainedModel {
        model,
        seed,
        best_epoch,
        history,
    })
}

fn step_gradients(model: &RewardModel, batch: &Batch) -> Result<(f64, Vec<Matrix>)> {
    model.loss_gradients(batch, LossPart::Combined)
}

/// Mean NLL per comparison and accuracy.
pub(crate) fn evaluate(model: &RewardModel, batch: &Batch) -> Result<(f64, f64)> {
    let (r, rp) = model.batch_rewards(batch)?;
    let nll = btl_nll(&LabelledBatch::from_rewards(&r, &rp, &batch.ell)?)? / batch.len() as f64;
    Ok((nll, pairwise_accuracy(&r, &rp, &batch.ell)))
}
