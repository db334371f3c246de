use approx::assert_abs_diff_eq;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sfkt::autodiff::Graph;
use sfkt::data::{Dataset, DatasetOptions, Split};
use sfkt::error::ModelError;
use sfkt::evaluator::{auc, predict_records};
use sfkt::network::{load_checkpoint_for, save_checkpoint, LossWeights, ModelConfig};
use sfkt::synthetic::{generate, SyntheticConfig};
use sfkt::trainer::{fit, AdamConfig, OptimizerState, TrainConfig};
use sfkt::verify::toy_setup;

fn small_dataset(students: usize) -> Dataset {
    let log = generate(&SyntheticConfig {
        students,
        seed: 21,
        ..SyntheticConfig::default()
    });
    Dataset::prepare(&log, DatasetOptions::default()).unwrap()
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        seed: 5,
        model: ModelConfig {
            buckets: 10,
            meta_numbers: 10,
            ..ModelConfig::with_dim(8)
        },
        ..TrainConfig::default()
    }
}

fn val_auc(model: &sfkt::network::SfktModel, ds: &Dataset) -> f64 {
    let refs = ds.records(Split::Val);
    let preds = predict_records(model, ds, &refs);
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let labels: Vec<u8> = preds.iter().map(|p| p.label).collect();
    auc(&scores, &labels).unwrap()
}

#[test]
fn training_loss_decreases_over_first_epochs() {
    let ds = small_dataset(80);
    let out = fit(&ds, &TrainConfig { patience: 10, ..small_config(3) }).unwrap();
    assert_eq!(out.log.len(), 3);
    assert!(out.log[0].loss > out.log[1].loss && out.log[1].loss > out.log[2].loss, "{:?}", out.log);
}

#[test]
fn same_seed_gives_identical_logs() {
    let ds = small_dataset(40);
    let a = fit(&ds, &small_config(2)).unwrap();
    let b = fit(&ds, &small_config(2)).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.params, b.model.params);
}

#[test]
fn patience_zero_stops_at_first_non_improvement() {
    let ds = small_dataset(40);
    let out = fit(&ds, &TrainConfig { patience: 0, ..small_config(30) }).unwrap();
    let first_flat = out.log.iter().position(|e| !e.improved);
    if let Some(k) = first_flat {
        assert_eq!(out.log.len(), k + 1);
    } else {
        assert_eq!(out.log.len(), 30);
    }
    assert!(out.log[out.best_epoch - 1].improved);
}

#[test]
fn zero_weights_are_logged() {
    let ds = small_dataset(20);
    let cfg = TrainConfig {
        loss: LossWeights {
            lambda_cl: 0.0,
            lambda_pert: 0.0,
            ..LossWeights::default()
        },
        ..small_config(1)
    };
    let out = fit(&ds, &cfg).unwrap();
    let e = &out.log[0];
    assert_eq!((e.lambda_cl, e.lambda_pert), (0.0, 0.0));
    assert_abs_diff_eq!(e.loss, e.pred_loss, epsilon = 1e-12);
}

#[test]
fn empty_validation_falls_back_to_final_epoch() {
    let log = generate(&SyntheticConfig {
        students: 10,
        seed: 1,
        ..SyntheticConfig::default()
    });
    let ds = Dataset::prepare(
        &log,
        DatasetOptions {
            val_frac: 0.0,
            ..DatasetOptions::default()
        },
    )
    .unwrap();
    assert!(ds.records(Split::Val).is_empty());
    let out = fit(&ds, &small_config(2)).unwrap();
    assert_eq!(out.log.len(), 2);
    assert_eq!(out.best_epoch, 2);
    assert_eq!(out.best_val_auc, None);
}

#[test]
fn empty_training_split_is_rejected() {
    let mut ds = small_dataset(5);
    for s in &mut ds.students {
        s.sizes.test += s.sizes.train;
        s.sizes.train = 0;
    }
    assert!(matches!(fit(&ds, &small_config(1)), Err(ModelError::EmptyTrainingSet)));
}

#[test]
fn checkpoint_round_trip_keeps_validation_auc() {
    let ds = small_dataset(30);
    let out = fit(&ds, &small_config(1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("best.ckpt");
    let hash = ds.vocab.content_hash();
    save_checkpoint(&path, &out.model, &hash, serde_json::Value::Null).unwrap();
    let (back, _) = load_checkpoint_for(&path, &hash).unwrap();
    assert_abs_diff_eq!(val_auc(&out.model, &ds), val_auc(&back, &ds), epsilon = 1e-12);
}

/// A small Adam step on a single record lowers that record's loss.
#[test]
fn single_record_descent() {
    let (model, ds) = toy_setup(2);
    let refs = ds.records(Split::Train);
    let weights = LossWeights::default();
    let mut failures = 0;
    for (i, &r) in refs.iter().step_by(refs.len() / 20).take(20).enumerate() {
        let rec = ds.record(r);
        let loss_of = |store: &sfkt::autodiff::ParamStore| {
            let mut g = Graph::new(store);
            let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
            let l = model.batch_objective(&mut g, &[rec], &weights, &mut rng);
            let v = g.scalar(l.total);
            (v, g.backward(l.total))
        };
        let mut store = model.params.clone();
        let (before, grads) = loss_of(&store);
        let mut opt = OptimizerState::new(&store, AdamConfig::default());
        opt.step(&mut store, &grads, 1e-4).unwrap();
        let (after, _) = loss_of(&store);
        if after >= before {
            failures += 1;
        }
    }
    assert!(failures <= 1, "{failures} of 20 records did not descend");
}

/// Every trainable tensor receives gradient from a batch that exercises all
/// pathways, except rows that need UNKNOWN keys.
#[test]
fn gradients_reach_every_tensor() {
    let (model, ds) = toy_setup(3);
    let refs = ds.records(Split::Train);
    let records: Vec<_> = refs.iter().take(24).map(|&r| ds.record(r)).collect();
    assert!(records.iter().any(|r| r.history.is_empty()));
    assert!(records.iter().any(|r| !r.history.is_empty()));
    let mut g = Graph::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let loss = model.batch_objective(&mut g, &records, &LossWeights::default(), &mut rng);
    let grads = g.backward(loss.total);
    for (id, p) in model.params.iter() {
        let norm: f64 = grads.get(id).map_or(0.0, |g| g.iter().map(|x| x * x).sum());
        assert!(norm > 0.0, "no gradient reached {}", p.name());
    }
}
