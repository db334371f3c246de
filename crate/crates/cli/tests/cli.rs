use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sfkt::synthetic::{generate, write_csv, SyntheticConfig};

fn sfkt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfkt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn synthetic_csv(dir: &Path, students: usize, seed: u64) -> PathBuf {
    let path = dir.join(format!("log-{seed}.csv"));
    let log = generate(&SyntheticConfig {
        students,
        min_len: 8,
        max_len: 60,
        seed,
        ..SyntheticConfig::default()
    });
    write_csv(&log, fs::File::create(&path).unwrap()).unwrap();
    path
}

const SMALL: [&str; 6] = ["--dim", "8", "--buckets", "6", "--meta-numbers", "6"];

fn prepared(dir: &Path) -> PathBuf {
    let csv = synthetic_csv(dir, 30, 1);
    let cache = dir.join("cache");
    let out = sfkt(&["prepare", "--data", s(&csv), "--cache", s(&cache)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    cache
}

fn train(cache: &Path, ckpt: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--cache", s(cache), "--checkpoints", s(ckpt)];
    args.extend_from_slice(&SMALL);
    if !extra.contains(&"--epochs") {
        args.extend_from_slice(&["--epochs", "1"]);
    }
    args.extend_from_slice(extra);
    sfkt(&args)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn verify_passes_on_clean_build() {
    let out = sfkt(&["verify"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    assert_eq!(stdout(&out).matches("PASS").count(), 5);
}

#[test]
fn verify_fails_with_corrupted_backward_rule() {
    let out = sfkt(&["verify", "--inject-fault", "affine"]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL gradient"));
}

#[test]
fn missing_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sfkt(&["prepare", "--data", s(&dir.path().join("nope.csv")), "--cache", s(&dir.path().join("c"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn prepare_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let csv = synthetic_csv(dir.path(), 10, 2);
    for name in ["a", "b"] {
        let out = sfkt(&["prepare", "--data", s(&csv), "--cache", s(&dir.path().join(name))]);
        assert_eq!(code(&out), 0);
    }
    let a = json(&dir.path().join("a/manifest.json"));
    let b = json(&dir.path().join("b/manifest.json"));
    assert_eq!(a["content_hash"], b["content_hash"]);
}

#[test]
fn tiny_fixture_has_one_window() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("tiny.csv");
    fs::write(
        &csv,
        "student_id,question_id,concept_ids,correct,order\nu,q1,c1,1,1\nu,q2,c2,0,2\nu,q1,c1,1,3\nu,q3,c1;c2,0,4\nu,q2,c2,1,5\n",
    )
    .unwrap();
    let out = sfkt(&["prepare", "--data", s(&csv), "--cache", s(&dir.path().join("c"))]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&dir.path().join("c/manifest.json"))["windows"], 1);
}

#[test]
fn malformed_rows_need_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    fs::write(
        &csv,
        "student_id,question_id,concept_ids,correct,order\nu,q1,c1,1,1\nu,q2,c2,maybe,2\nu,q1,c1,0,3\n",
    )
    .unwrap();
    let cache = dir.path().join("c");
    let out = sfkt(&["prepare", "--data", s(&csv), "--cache", s(&cache)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    let out = sfkt(&["prepare", "--data", s(&csv), "--cache", s(&cache), "--allow-skipped"]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&cache.join("manifest.json"))["skipped_rows"], 1);
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let ckpt = dir.path().join("ckpt");
    let out = train(&cache, &ckpt, &["--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.join("seed-3.ckpt").is_file());
    assert!(stdout(&out).contains("seed 3 epoch   1"));

    let reports = dir.path().join("reports");
    let out = sfkt(&["evaluate", "--cache", s(&cache), "--checkpoints", s(&ckpt), "--reports", s(&reports)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&reports.join("report.json"));
    let buckets = report["mean"]["buckets"].as_array().unwrap();
    assert_eq!(buckets.len(), 5);
    let total: u64 = buckets.iter().map(|b| b["count"].as_u64().unwrap()).sum();
    assert_eq!(total, report["mean"]["overall"]["count"].as_u64().unwrap());
    assert_eq!(report["runs"][0]["model"]["dim"], 8);
    assert_eq!(report["tool"], "sfkt");

    let out = sfkt(&["export-similarity", "--checkpoint", s(&ckpt.join("seed-3.ckpt")), "--reports", s(&reports), "--max-count", "12"]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(reports.join("similarity-success.csv")).unwrap();
    assert!(csv.starts_with("count,0,1,2,"));
    assert_eq!(csv.lines().count(), 14);
    assert!(reports.join("similarity-failure.csv").is_file());
}

#[test]
fn same_seed_gives_byte_identical_logs() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&train(&cache, &a, &["--seed", "7", "--epochs", "2"])), 0);
    assert_eq!(code(&train(&cache, &b, &["--seed", "7", "--epochs", "2"])), 0);
    let la = fs::read(a.join("seed-7.log.jsonl")).unwrap();
    let lb = fs::read(b.join("seed-7.log.jsonl")).unwrap();
    // The provenance line names the checkpoint directory, so compare epochs only.
    let epochs = |bytes: &[u8]| String::from_utf8_lossy(bytes).lines().skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(epochs(&la), epochs(&lb));
    assert_eq!(epochs(&la).len(), 2);
}

#[test]
fn zero_lambdas_reach_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let ckpt = dir.path().join("ckpt");
    assert_eq!(code(&train(&cache, &ckpt, &["--lambda-cl", "0", "--lambda-pert", "0"])), 0);
    let text = fs::read_to_string(ckpt.join("seed-0.log.jsonl")).unwrap();
    let epoch: serde_json::Value = serde_json::from_str(text.lines().nth(1).unwrap()).unwrap();
    assert_eq!(epoch["lambda_cl"], 0.0);
    assert_eq!(epoch["lambda_pert"], 0.0);
    assert_eq!(epoch["loss"], epoch["pred_loss"]);
}

#[test]
fn multi_seed_reports_are_averaged() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let ckpt = dir.path().join("ckpt");
    assert_eq!(code(&train(&cache, &ckpt, &["--seeds", "1,2"])), 0);
    let reports = dir.path().join("r");
    let out = sfkt(&["evaluate", "--cache", s(&cache), "--checkpoints", s(&ckpt), "--reports", s(&reports)]);
    assert_eq!(code(&out), 0);
    let report = json(&reports.join("report.json"));
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    let mean = (runs[0]["report"]["overall"]["auc"].as_f64().unwrap() + runs[1]["report"]["overall"]["auc"].as_f64().unwrap()) / 2.0;
    assert!((report["mean"]["overall"]["auc"].as_f64().unwrap() - mean).abs() < 1e-12);
}

#[test]
fn vocabulary_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let ckpt = dir.path().join("ckpt");
    assert_eq!(code(&train(&cache, &ckpt, &[])), 0);
    let other_csv = dir.path().join("other.csv");
    fs::write(
        &other_csv,
        "student_id,question_id,concept_ids,correct,order\nx,z1,k1,1,1\nx,z2,k1,0,2\nx,z1,k1,1,3\nx,z1,k1,1,4\nx,z2,k1,0,5\n",
    )
    .unwrap();
    let other = dir.path().join("other");
    assert_eq!(code(&sfkt(&["prepare", "--data", s(&other_csv), "--cache", s(&other), "--train-frac", "0.6", "--val-frac", "0.2"])), 0);
    let out = sfkt(&["evaluate", "--cache", s(&other), "--checkpoints", s(&ckpt), "--reports", s(&dir.path().join("r"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("vocabulary"));
}

#[test]
fn empty_test_split_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("ten.csv");
    let rows: String = (1..=10).map(|t| format!("u,q{},c1,{},{t}\n", t % 3, t % 2)).collect();
    fs::write(&csv, format!("student_id,question_id,concept_ids,correct,order\n{rows}")).unwrap();
    let cache = dir.path().join("c");
    assert_eq!(code(&sfkt(&["prepare", "--data", s(&csv), "--cache", s(&cache), "--train-frac", "1", "--val-frac", "0.2"])), 0);
    assert_eq!(json(&cache.join("manifest.json"))["records"]["test"], 0);
    let ckpt = dir.path().join("ckpt");
    // Training reads the split fractions from the configuration, so pass them via a file.
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[data]\ntrain_frac = 1.0\nval_frac = 0.2\n").unwrap();
    let mut args = vec!["--config", s(&cfg), "train", "--cache", s(&cache), "--checkpoints", s(&ckpt), "--epochs", "1"];
    args.extend_from_slice(&SMALL);
    assert_eq!(code(&sfkt(&args)), 0);
    let out = sfkt(&["--config", s(&cfg), "evaluate", "--cache", s(&cache), "--checkpoints", s(&ckpt)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn cache_and_config_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "[data]\nmax_len = 50\n").unwrap();
    let ckpt = dir.path().join("k");
    let mut args = vec!["--config", s(&cfg), "train", "--cache", s(&cache), "--checkpoints", s(&ckpt), "--epochs", "1"];
    args.extend_from_slice(&SMALL);
    let out = sfkt(&args);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("re-run"));
}

#[test]
fn config_file_values_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cache = prepared(dir.path());
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "seeds = [4]\n[paths]\ncache = \"{}\"\ncheckpoints = \"{}\"\n[train]\nmax_epochs = 1\nbatch_size = 16\n[train.model]\ndim = 8\nstudent_dim = 8\nquestion_dim = 8\nconcept_dim = 8\nresponse_dim = 8\nbuckets = 5\nmeta_numbers = 5\n",
            s(&cache),
            s(&dir.path().join("from-file"))
        ),
    )
    .unwrap();
    let out = sfkt(&["--config", s(&cfg), "train", "--batch-size", "8"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = fs::read_to_string(dir.path().join("from-file/run-config.toml")).unwrap();
    assert!(resolved.contains("batch_size = 8"));
    assert!(dir.path().join("from-file/seed-4.ckpt").is_file());
}
