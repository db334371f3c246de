//! Self-checks runnable from the command line: gradient integrity of the full
//! objective, the count-feature oracle, contrastive closed forms, the
//! zero-dropout identity and normalization invariants.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{analytic_gradients, finite_difference_check, sample_coordinates, Graph, NodeId, OpKind};
use crate::data::{compute_prefix_counts, compute_target_counts, Dataset, DatasetOptions, Record, Split, Step, StudentSequence};
use crate::network::{contrastive_loss, LossWeights, ModelConfig, SfktModel, Similarity, TableSizes};
use crate::synthetic::{generate, SyntheticConfig};
use crate::total_term::{bucket_index, normalize_count, NormStats};
use crate::trainer::training_stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub grad_coordinates: usize,
    pub count_sequences: usize,
    /// Corrupt the backward rule of one operation, to prove the suite can fail.
    pub fault: Option<OpKind>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            grad_coordinates: 200,
            count_sequences: 1000,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run(options: &VerifyOptions) -> VerifyReport {
    let checks = vec![
        timed("gradient", || {
            let (err, worst) = gradient_check(options.seed, options.grad_coordinates, options.fault);
            (err < GRAD_TOLERANCE, format!("max relative error {err:.3e} at {worst}"))
        }),
        timed("count-oracle", || {
            let mismatches = count_oracle(options.seed, options.count_sequences, 500, 20);
            (mismatches == 0, format!("{mismatches} mismatching steps"))
        }),
        timed("contrastive", || {
            let [single, same, basis] = contrastive_closed_forms();
            let ok = single == 0.0 && same < 1e-9 && basis < 1e-9;
            (ok, format!("single {single:e}, identical {same:.2e}, basis {basis:.2e}"))
        }),
        timed("perturbation-identity", || {
            let differing = zero_dropout_mismatches(options.seed, 100);
            (differing == 0, format!("{differing} of 100 records differ"))
        }),
        timed("normalization", || {
            let (base, boundaries) = normalization_checks();
            (base < 1e-12 && boundaries, format!("log-base deviation {base:.2e}, boundaries exact: {boundaries}"))
        }),
    ];
    VerifyReport { checks }
}

pub const GRAD_TOLERANCE: f64 = 1e-3;

/// Small prepared dataset plus a model sized d = 8, B = M = 4, L = 5.
pub fn toy_setup(seed: u64) -> (SfktModel, Dataset) {
    let log = generate(&SyntheticConfig {
        students: 6,
        min_len: 10,
        max_len: 16,
        seed,
        ..SyntheticConfig::default()
    });
    let dataset = Dataset::prepare(
        &log,
        DatasetOptions {
            max_len: 5,
            ..DatasetOptions::default()
        },
    )
    .expect("toy data is well formed");
    let config = ModelConfig {
        buckets: 4,
        meta_numbers: 4,
        max_len: 5,
        ..ModelConfig::with_dim(8)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SfktModel::new(config, TableSizes::from_vocab(&dataset.vocab), training_stats(&dataset), &mut rng)
        .expect("valid toy config");
    (model, dataset)
}

/// Maximum relative error of the integrated objective over a batch of three
/// records, and a description of the worst coordinate.
pub fn gradient_check(seed: u64, coordinates: usize, fault: Option<OpKind>) -> (f64, String) {
    let (mut model, dataset) = toy_setup(seed);
    // Xavier leaves vectors at zero, which parks ReLUs fed by the null history
    // exactly on their kink; check at a generic point instead.
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(2));
    for id in model.params.ids().collect::<Vec<_>>() {
        for v in model.params.get_mut(id).data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let refs = dataset.records(Split::Train);
    // Empty, short and full histories.
    let picks = [0, 2, 4].map(|h| {
        *refs
            .iter()
            .find(|&&r| dataset.record(r).history.len() == h)
            .unwrap_or(&refs[0])
    });
    // The checker perturbs the store in place; the model keeps only its ids.
    let mut store = std::mem::take(&mut model.params);
    let loss = |graph: &mut Graph<'_>| -> NodeId {
        if let Some(kind) = fault {
            graph.inject_backward_fault(kind);
        }
        let records: Vec<Record<'_>> = picks.iter().map(|&r| dataset.record(r)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        model.batch_objective(graph, &records, &LossWeights::default(), &mut rng).total
    };
    let (_, grads) = analytic_gradients(&store, &loss).expect("finite toy loss");
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let coords = sample_coordinates(&store, &grads, coordinates, &mut rng);
    let report = finite_difference_check(&mut store, loss, &coords, 1e-6).expect("finite toy loss");
    let worst = report
        .worst()
        .map(|c| format!("{}[{}] analytic {:.6e} numeric {:.6e}", c.param, c.index, c.analytic, c.numeric))
        .unwrap_or_default();
    (report.max_rel_error, worst)
}

pub fn random_sequence<R: Rng + ?Sized>(rng: &mut R, max_len: usize, concepts: usize) -> StudentSequence {
    let len = rng.gen_range(1..=max_len);
    let steps = (0..len)
        .map(|_| {
            let k = rng.gen_range(1..=3.min(concepts));
            let mut cs: Vec<usize> = Vec::with_capacity(k);
            while cs.len() < k {
                let c = rng.gen_range(0..concepts);
                if !cs.contains(&c) {
                    cs.push(c);
                }
            }
            Step {
                question: rng.gen_range(0..50),
                concepts: cs,
                response: rng.gen_range(0..=1),
            }
        })
        .collect();
    StudentSequence { student: 0, steps }
}

/// Compares incremental prefix and target counts against a from-scratch
/// recount of every prefix; returns the number of steps where they disagree.
pub fn count_oracle(seed: u64, sequences: usize, max_len: usize, concepts: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for _ in 0..sequences {
        let seq = random_sequence(&mut rng, max_len, concepts);
        let prefix = compute_prefix_counts(&seq);
        let target = compute_target_counts(&seq);
        for (t, step) in seq.steps.iter().enumerate() {
            let mut brute = vec![(0u32, 0u32); concepts];
            for earlier in &seq.steps[..t] {
                for &k in &earlier.concepts {
                    if earlier.response == 1 {
                        brute[k].0 += 1;
                    } else {
                        brute[k].1 += 1;
                    }
                }
            }
            let snap = &prefix[t];
            let prefix_ok = (0..concepts).all(|k| {
                let c = snap.get(k);
                (c.success, c.failure) == brute[k]
            }) && snap.iter().all(|(_, c)| c.total() > 0);
            let target_ok = target[t].0.len() == step.concepts.len()
                && target[t]
                    .0
                    .iter()
                    .zip(&step.concepts)
                    .all(|((k, c), want)| k == want && (c.success, c.failure) == brute[*k]);
            if !(prefix_ok && target_ok) {
                mismatches += 1;
            }
        }
    }
    mismatches
}

fn contrastive_value(t: &[Vec<f64>], l: &[Vec<f64>]) -> f64 {
    let store = crate::autodiff::ParamStore::new();
    let mut g = Graph::new(&store);
    let t: Vec<NodeId> = t.iter().map(|v| g.input(v.clone())).collect();
    let l: Vec<NodeId> = l.iter().map(|v| g.input(v.clone())).collect();
    let out = contrastive_loss(&mut g, &t, &l, 1.0, Similarity::Dot);
    g.scalar(out)
}

/// `[Φ(batch of 1), |Φ − 2 ln 4|, |Φ − 2 ln(1 + e⁻¹)|]`.
pub fn contrastive_closed_forms() -> [f64; 3] {
    let single = contrastive_value(&[vec![0.7, -0.2, 1.3]], &[vec![0.1, 0.9, -0.4]]);
    let unit = vec![vec![0.6, 0.8]; 4];
    let same = (contrastive_value(&unit, &unit) - 2.0 * 4f64.ln()).abs();
    let basis = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let expect = 2.0 * (1.0 + (-1f64).exp()).ln();
    [single, same, (contrastive_value(&basis, &basis) - expect).abs()]
}

/// Number of records whose perturbed prediction at dropout 0 differs in any
/// bit from the clean prediction.
pub fn zero_dropout_mismatches(seed: u64, records: usize) -> usize {
    let (model, dataset) = toy_setup(seed);
    let refs = dataset.records(Split::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..records)
        .filter(|_| {
            let r = dataset.record(refs[rng.gen_range(0..refs.len())]);
            let mut g = Graph::new(&model.params);
            let out = model.forward_record(&mut g, &r, Some((0.0, &mut rng)));
            let clean = g.scalar(out.prob);
            let perturbed = g.scalar(out.perturbed.expect("requested"));
            clean.to_bits() != perturbed.to_bits()
        })
        .count()
}

/// Largest deviation of the normalization across log bases, and whether the
/// boundary values and bucket edges are exact.
pub fn normalization_checks() -> (f64, bool) {
    let stats = NormStats { min: 2, max: 350 };
    let mut worst = 0.0f64;
    for x in 0..=400u32 {
        let ours = normalize_count(x, stats);
        let c = f64::from(x.clamp(stats.min, stats.max));
        for base in [2.0f64, 10.0, 7.5] {
            let lg = |v: f64| (v + 1.0).log(base);
            let other = (lg(c) - lg(f64::from(stats.min))) / (lg(f64::from(stats.max)) - lg(f64::from(stats.min)));
            worst = worst.max((ours - other).abs());
        }
    }
    let boundaries = normalize_count(stats.min, stats) == 0.0
        && normalize_count(stats.max, stats) == 1.0
        && normalize_count(0, stats) == 0.0
        && normalize_count(10_000, stats) == 1.0
        && [2usize, 4, 100].iter().all(|&b| bucket_index(1.0, b) == b - 1 && bucket_index(0.0, b) == 0);
    (worst, boundaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_suite_passes_quickly() {
        let report = run(&VerifyOptions {
            grad_coordinates: 40,
            count_sequences: 50,
            ..Default::default()
        });
        for c in &report.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }

    #[test]
    fn corrupted_affine_backward_is_caught() {
        let (err, _) = gradient_check(0, 60, Some(OpKind::Affine));
        assert!(err > GRAD_TOLERANCE, "{err}");
    }
}
