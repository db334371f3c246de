use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, OptimizerState};
use crate::autodiff::Graph;
use crate::data::{Dataset, RecordRef, Split};
use crate::error::ModelError;
use crate::evaluator::{accuracy, auc, predict_records, ACC_THRESHOLD};
use crate::network::{LossWeights, ModelConfig, SfktModel, TableSizes};
use crate::total_term::CountStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Global gradient-norm ceiling; non-positive disables clipping.
    pub grad_clip: f64,
    pub adam: AdamConfig,
    pub loss: LossWeights,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 24,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            grad_clip: 5.0,
            adam: AdamConfig::default(),
            loss: LossWeights::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(ModelError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(ModelError::Config("batch size and epoch count must be positive".into()));
        }
        self.loss.validate().map_err(ModelError::Config)?;
        self.model.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Record-weighted means over the epoch's completed batches.
    pub loss: f64,
    pub pred_loss: f64,
    pub cl_loss: f64,
    pub pert_loss: f64,
    pub lambda_cl: f64,
    pub lambda_pert: f64,
    pub batches: usize,
    pub val_auc: Option<f64>,
    pub val_acc: Option<f64>,
    pub improved: bool,
    /// Set when a non-finite gradient cut the epoch short.
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    /// Model from the best validation epoch (or the last epoch without a
    /// usable validation split).
    pub model: SfktModel,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_auc: Option<f64>,
}

/// Normalization statistics over the counts of every training target concept.
pub fn training_stats(dataset: &Dataset) -> CountStats {
    let refs = dataset.records(Split::Train);
    let pairs: Vec<_> = refs
        .iter()
        .flat_map(|&r| dataset.record(r).counts.0.iter().map(|(_, c)| *c))
        .collect();
    CountStats::from_pairs(pairs.iter())
}

fn validation_metrics(model: &SfktModel, dataset: &Dataset, val: &[RecordRef]) -> (Option<f64>, Option<f64>) {
    if val.is_empty() {
        return (None, None);
    }
    let preds = predict_records(model, dataset, val);
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    (auc(&scores, &labels), accuracy(&scores, &labels, ACC_THRESHOLD))
}

/// Trains a freshly initialized model. Every random choice (initialization,
/// shuffling, dropout) is drawn from one generator seeded by `config.seed`.
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<FitOutcome, ModelError> {
    fit_with(dataset, config, |_| {})
}

/// [`fit`] with a callback after every epoch.
pub fn fit_with(
    dataset: &Dataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<FitOutcome, ModelError> {
    config.validate()?;
    let retiled;
    let dataset = if dataset.options.max_len == config.model.max_len {
        dataset
    } else {
        retiled = dataset.with_max_len(config.model.max_len);
        &retiled
    };
    let mut order = dataset.records(Split::Train);
    if order.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let val = dataset.records(Split::Val);
    if val.is_empty() {
        log::warn!("validation split is empty; keeping the final epoch");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let stats = training_stats(dataset);
    let mut model = SfktModel::new(config.model, TableSizes::from_vocab(&dataset.vocab), stats, &mut rng)?;
    let mut opt = OptimizerState::new(&model.params, config.adam);

    let mut log = Vec::new();
    let mut best: Option<(SfktModel, usize, f64)> = None;
    let mut stale = 0usize;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let (mut seen, mut batches, mut aborted) = (0usize, 0usize, false);
        for chunk in order.chunks(config.batch_size) {
            let records: Vec<_> = chunk.iter().map(|&r| dataset.record(r)).collect();
            let (values, mut grads) = {
                let mut g = Graph::new(&model.params);
                let loss = model.batch_objective(&mut g, &records, &config.loss, &mut rng);
                let values = [
                    g.scalar(loss.total),
                    g.scalar(loss.prediction),
                    g.scalar(loss.contrastive),
                    g.scalar(loss.perturbation),
                ];
                (values, g.backward(loss.total))
            };
            if !grads.all_finite() || values.iter().any(|v| !v.is_finite()) {
                log::error!("epoch {epoch}, batch {}: non-finite loss or gradient; aborting epoch", batches + 1);
                aborted = true;
                break;
            }
            if config.grad_clip > 0.0 {
                grads.clip_global_norm(config.grad_clip);
            }
            opt.step(&mut model.params, &grads, config.learning_rate)?;
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v * chunk.len() as f64;
            }
            seen += chunk.len();
            batches += 1;
        }
        let mean = |s: f64| if seen == 0 { f64::NAN } else { s / seen as f64 };

        let (val_auc, val_acc) = validation_metrics(&model, dataset, &val);
        let improved = match (val_auc, &best) {
            (None, _) => false,
            (Some(a), None) => a.is_finite(),
            (Some(a), Some((_, _, b))) => a > *b,
        };
        if improved {
            best = Some((model.clone(), epoch, val_auc.unwrap()));
            stale = 0;
        } else if val_auc.is_some() {
            stale += 1;
        }
        let entry = EpochLog {
            epoch,
            loss: mean(sums[0]),
            pred_loss: mean(sums[1]),
            cl_loss: mean(sums[2]),
            pert_loss: mean(sums[3]),
            lambda_cl: config.loss.lambda_cl,
            lambda_pert: config.loss.lambda_pert,
            batches,
            val_auc,
            val_acc,
            improved,
            aborted,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (pred {:.5}, cl {:.5}, pert {:.5}), val auc {:?}",
            entry.loss,
            entry.pred_loss,
            entry.cl_loss,
            entry.pert_loss,
            entry.val_auc
        );
        on_epoch(&entry);
        log.push(entry);
        if stale > config.patience {
            break;
        }
    }

    Ok(match best {
        Some((model, best_epoch, auc)) => FitOutcome {
            model,
            log,
            best_epoch,
            best_val_auc: Some(auc),
        },
        None => {
            if !val.is_empty() {
                log::warn!("validation AUC undefined in every epoch; keeping the final epoch");
            }
            let best_epoch = log.len();
            FitOutcome {
                model,
                log,
                best_epoch,
                best_val_auc: None,
            }
        }
    })
}
