use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::{json, Value};
use sfkt::autodiff::OpKind;
use sfkt::data::{ingest_file, read_cache, write_cache, CacheManifest, Dataset, Split};
use sfkt::evaluator::{bucketed_report, practice_number_similarity, predict_records, EvalReport, Metrics};
use sfkt::network::{load_checkpoint, load_checkpoint_for, save_checkpoint};
use sfkt::total_term::Side;
use sfkt::trainer::{fit_with, TrainConfig};
use sfkt::verify::{self, VerifyOptions};

use crate::config::RunConfig;

/// A check or metric gate failed; maps to exit code 1.
#[derive(Debug)]
pub struct CheckFailed(pub String);

impl fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

pub fn parse_op(name: &str) -> Result<OpKind> {
    Ok(match name {
        "affine" => OpKind::Affine,
        "dot" => OpKind::Dot,
        "sigmoid" => OpKind::Sigmoid,
        "relu" => OpKind::Relu,
        "softmax" => OpKind::Softmax,
        "gather" => OpKind::Gather,
        "mul" => OpKind::Mul,
        "add" => OpKind::Add,
        "concat" => OpKind::Concat,
        "log-sum-exp" => OpKind::LogSumExp,
        other => bail!("unknown operation `{other}`"),
    })
}

fn provenance(command: &str, config: &RunConfig, extra: Value) -> Value {
    let mut v = json!({
        "tool": "sfkt",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    if let (Value::Object(base), Value::Object(more)) = (&mut v, extra) {
        base.extend(more);
    }
    v
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn open_cache(config: &RunConfig) -> Result<(Dataset, CacheManifest)> {
    let dir = &config.paths.cache;
    if !dir.is_dir() {
        bail!("cache directory {} does not exist; run `sfkt prepare` first", dir.display());
    }
    read_cache(dir).with_context(|| format!("reading cache {}", dir.display()))
}

pub fn prepare(config: &RunConfig, allow_skipped: bool) -> Result<()> {
    let data = config
        .paths
        .data
        .as_ref()
        .ok_or_else(|| anyhow!("no input CSV: pass --data or set paths.data"))?;
    let report = ingest_file(data).with_context(|| format!("ingesting {}", data.display()))?;
    if !report.skipped.is_empty() {
        for issue in &report.skipped {
            eprintln!("line {}: {}", issue.line, issue.reason);
        }
        if !allow_skipped {
            bail!("{} malformed row(s); fix them or pass --allow-skipped", report.skipped.len());
        }
    }
    let dataset = Dataset::prepare(&report.log, config.data)?;
    let manifest = write_cache(&config.paths.cache, &dataset, report.skipped_rows())?;
    fs::write(config.paths.cache.join("run-config.toml"), config.to_toml()?)?;
    write_json(
        &config.paths.cache.join("prepare.json"),
        &provenance("prepare", config, json!({ "manifest": manifest })),
    )?;
    println!(
        "{} students, {} interactions, {} windows; records train/val/test {}/{}/{}",
        manifest.students,
        manifest.interactions,
        manifest.windows,
        manifest.records.train,
        manifest.records.val,
        manifest.records.test
    );
    println!("content hash {}", manifest.content_hash);
    Ok(())
}

fn seed_checkpoint(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed-{seed}.ckpt"))
}

pub fn train(config: &RunConfig) -> Result<()> {
    let (dataset, manifest) = open_cache(config)?;
    if manifest.options != config.data {
        bail!(
            "cache was prepared with {:?} but the configuration asks for {:?}; re-run `sfkt prepare`",
            manifest.options,
            config.data
        );
    }
    let dir = &config.paths.checkpoints;
    create_dir(dir)?;
    fs::write(dir.join("run-config.toml"), config.to_toml()?)?;
    let vocab_hash = dataset.vocab.content_hash();
    let mut summaries = Vec::new();
    for seed in config.seeds() {
        let mut tc: TrainConfig = config.train;
        tc.seed = seed;
        tc.model.max_len = config.data.max_len;
        let run = provenance(
            "train",
            config,
            json!({ "seed": seed, "cache_hash": manifest.content_hash, "vocab_hash": vocab_hash }),
        );
        let mut lines = vec![serde_json::to_string(&json!({ "provenance": run }))?];
        let outcome = fit_with(&dataset, &tc, |e| {
            println!(
                "seed {seed} epoch {:>3}: loss {:.5} (pred {:.5}, cl {:.5}, pert {:.5}) val AUC {} ACC {}{}",
                e.epoch,
                e.loss,
                e.pred_loss,
                e.cl_loss,
                e.pert_loss,
                e.val_auc.map_or("-".into(), |v| format!("{v:.4}")),
                e.val_acc.map_or("-".into(), |v| format!("{v:.4}")),
                if e.aborted { " [aborted]" } else { "" }
            );
            lines.push(serde_json::to_string(e).expect("epoch log serializes"));
        })?;
        let log_path = dir.join(format!("seed-{seed}.log.jsonl"));
        fs::write(&log_path, lines.join("\n") + "\n").with_context(|| format!("writing {}", log_path.display()))?;
        let summary = json!({
            "seed": seed,
            "best_epoch": outcome.best_epoch,
            "best_val_auc": outcome.best_val_auc,
            "epochs": outcome.log.len(),
        });
        let mut meta = run;
        meta["training"] = summary.clone();
        let ckpt = seed_checkpoint(dir, seed);
        save_checkpoint(&ckpt, &outcome.model, &vocab_hash, meta)?;
        println!(
            "seed {seed}: best epoch {} (val AUC {}), checkpoint {}",
            outcome.best_epoch,
            outcome.best_val_auc.map_or("-".into(), |v| format!("{v:.4}")),
            ckpt.display()
        );
        summaries.push(summary);
    }
    write_json(
        &dir.join("train-summary.json"),
        &provenance("train", config, json!({ "runs": summaries })),
    )
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean_metrics(items: &[&Metrics]) -> Metrics {
    Metrics {
        count: items[0].count,
        acc: mean_of(items.iter().map(|m| m.acc)),
        auc: mean_of(items.iter().map(|m| m.auc)),
    }
}

/// Per-field average over runs; counts are shared because every run scores
/// the same test records.
fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let overall = mean_metrics(&reports.iter().map(|r| &r.overall).collect::<Vec<_>>());
    let buckets = (0..reports[0].buckets.len())
        .map(|k| {
            let mut b = reports[0].buckets[k].clone();
            b.metrics = mean_metrics(&reports.iter().map(|r| &r.buckets[k].metrics).collect::<Vec<_>>());
            b
        })
        .collect();
    EvalReport { overall, buckets }
}

fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("seed-") && n.ends_with(".ckpt"))
        })
        .collect();
    found.sort();
    Ok(found)
}

pub fn evaluate(config: &RunConfig, explicit: &[PathBuf]) -> Result<()> {
    let (dataset, manifest) = open_cache(config)?;
    let test = dataset.records(Split::Test);
    if test.is_empty() {
        bail!("test split of {} is empty", config.paths.cache.display());
    }
    let checkpoints = if explicit.is_empty() {
        list_checkpoints(&config.paths.checkpoints)?
    } else {
        explicit.to_vec()
    };
    if checkpoints.is_empty() {
        bail!("no checkpoints found in {}", config.paths.checkpoints.display());
    }
    let vocab_hash = dataset.vocab.content_hash();
    let mut reports = Vec::new();
    let mut runs = Vec::new();
    for path in &checkpoints {
        let (model, header) =
            load_checkpoint_for(path, &vocab_hash).with_context(|| format!("loading {}", path.display()))?;
        let retiled;
        let ds = if model.config.max_len == dataset.options.max_len {
            &dataset
        } else {
            retiled = dataset.with_max_len(model.config.max_len);
            &retiled
        };
        let preds = predict_records(&model, ds, &test);
        let report = bucketed_report(&preds, &config.eval.bucket_edges);
        if checkpoints.len() > 1 {
            println!(
                "{}: AUC {} ACC {}",
                path.display(),
                report.overall.auc.map_or("-".into(), |v| format!("{v:.4}")),
                report.overall.acc.map_or("-".into(), |v| format!("{v:.4}"))
            );
        }
        runs.push(json!({
            "checkpoint": path,
            "model": header.config,
            "training": header.metadata.get("training"),
            "report": report,
        }));
        reports.push(report);
    }
    let mean = mean_report(&reports);
    print!("{mean}");
    create_dir(&config.paths.reports)?;
    let out = config.paths.reports.join("report.json");
    write_json(
        &out,
        &provenance(
            "evaluate",
            config,
            json!({
                "cache_hash": manifest.content_hash,
                "vocab_hash": vocab_hash,
                "runs": runs,
                "mean": mean,
            }),
        ),
    )?;
    println!("report written to {}", out.display());
    Ok(())
}

pub fn export_similarity(config: &RunConfig, checkpoint: &Path, sides: &[Side]) -> Result<()> {
    let (model, header) = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    create_dir(&config.paths.reports)?;
    let n = config.eval.similarity_max_count;
    let mut details = Vec::new();
    for &side in sides {
        let m = practice_number_similarity(&model, side, n);
        let name = match side {
            Side::Success => "success",
            Side::Failure => "failure",
        };
        let path = config.paths.reports.join(format!("similarity-{name}.csv"));
        let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut buf = std::io::BufWriter::new(file);
        m.write_csv(&mut buf)?;
        buf.flush()?;
        let trend = m.distance_trend();
        println!(
            "{name}: {} x {} matrix, spearman(|i-j|, similarity) {}, zero-norm counts {}, written to {}",
            m.size(),
            m.size(),
            trend.map_or("n/a".into(), |r| format!("{r:.4}")),
            m.zero_norm.len(),
            path.display()
        );
        details.push(json!({
            "side": side,
            "csv": path,
            "spearman_distance_similarity": trend,
            "zero_norm_counts": m.zero_norm,
            "max_asymmetry": m.max_asymmetry(),
            "max_diagonal_error": m.max_diagonal_error(),
        }));
    }
    write_json(
        &config.paths.reports.join("similarity.json"),
        &provenance(
            "export-similarity",
            config,
            json!({ "checkpoint": checkpoint, "vocab_hash": header.vocab_hash, "matrices": details }),
        ),
    )
}

pub fn verify(options: &VerifyOptions) -> Result<()> {
    let report = verify::run(options);
    for c in &report.checks {
        println!(
            "{} {:<22} {:>7.2}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        Err(CheckFailed(format!("verification failed: {}", failed.join(", "))).into())
    }
}
