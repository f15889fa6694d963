//! End-to-end tests driving the compiled `hcr` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hcr_core::diffnet::load_checkpoint;

fn hcr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hcr"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("binary runs").status.code().expect("exit code")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&read(&dir.join("manifest.json"))).expect("manifest parses")
}

/// Writes a small blobs dataset and returns its CSV path.
fn generate_blobs(dir: &Path, classes: usize, per_class: usize, dim: usize, seed: u64) -> PathBuf {
    run_ok(hcr().args([
        "generate",
        "--kind",
        "blobs",
        "--classes",
        &classes.to_string(),
        "--dim",
        &dim.to_string(),
        "--per-class",
        &per_class.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]));
    dir.join("dataset.csv")
}

#[test]
fn generate_writes_the_expected_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(hcr().args([
        "generate",
        "--kind",
        "blobs",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote 1000 rows"));

    let csv = read(&tmp.path().join("dataset.csv"));
    assert_eq!(csv.lines().count(), 1001, "header plus 4 x 250 rows");
    assert!(csv.starts_with("f0,"));

    let m = manifest(tmp.path());
    assert_eq!(m["command"], "generate");
    assert_eq!(m["stats"]["rows"], 1000);
    assert_eq!(m["seeds"]["dataset"], 0);
    assert_eq!(m["artifacts"]["dataset"], "dataset.csv");
}

#[test]
fn generate_is_byte_identical_across_reruns() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    generate_blobs(a.path(), 3, 40, 16, 7);
    generate_blobs(b.path(), 3, 40, 16, 7);
    assert_eq!(
        read(&a.path().join("dataset.csv")),
        read(&b.path().join("dataset.csv"))
    );
}

#[test]
fn unknown_generator_kind_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hcr()
        .args(["generate", "--kind", "spirals", "--out", tmp.path().to_str().unwrap()])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("blobs") && stderr.contains("shells"), "{stderr}");
}

#[test]
fn out_dir_falls_back_to_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    run_ok(
        hcr()
            .args(["generate", "--kind", "shells", "--classes", "2", "--dim", "8", "--per-class", "10"])
            .env("HCR_OUT_DIR", tmp.path()),
    );
    assert!(tmp.path().join("dataset.csv").exists());
}

#[test]
fn weight_zero_training_writes_a_zero_hcr_column_and_a_loadable_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_blobs(tmp.path(), 4, 50, 8, 1);
    let run_dir = tmp.path().join("run");
    run_ok(hcr().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--hcr-weight",
        "0",
        "--unsup",
        "none",
        "--epochs",
        "2",
        "--batch-size",
        "32",
        "--out",
        run_dir.to_str().unwrap(),
    ]));

    let metrics = read(&run_dir.join("metrics.csv"));
    let mut lines = metrics.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,loss_s,loss_u,loss_hcr,loss_total,train_acc,test_acc,ks"
    );
    let mut rows = 0;
    for line in lines {
        let hcr_col: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert_eq!(hcr_col, 0.0, "disabled term must record exactly zero");
        rows += 1;
    }
    assert_eq!(rows, 2);

    let (net_cfg, _params) = load_checkpoint(&run_dir.join("checkpoint.json")).expect("loads");
    assert_eq!(net_cfg.num_classes, 4);
    assert_eq!(net_cfg.input_dim, 8);
}

#[test]
fn train_manifest_records_the_labeled_count() {
    let tmp = tempfile::tempdir().unwrap();
    let train_csv = generate_blobs(&tmp.path().join("train"), 4, 100, 8, 1);
    let test_csv = generate_blobs(&tmp.path().join("test"), 4, 25, 8, 2);
    let run_dir = tmp.path().join("run");
    run_ok(hcr().args([
        "train",
        "--data",
        train_csv.to_str().unwrap(),
        "--test-data",
        test_csv.to_str().unwrap(),
        "--label-proportion",
        "0.15",
        "--hcr-weight",
        "0",
        "--unsup",
        "none",
        "--epochs",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ]));

    let m = manifest(&run_dir);
    assert_eq!(m["stats"]["train_rows"], 400);
    assert_eq!(m["stats"]["test_rows"], 100);
    // 15% of each 100-example class, rounded: 15 per class, 4 classes.
    assert_eq!(m["stats"]["labeled_examples"], 60);
    assert_eq!(m["seeds"]["mask"], 3);
    assert!(
        m["seeds"].get("split").is_none(),
        "no split seed when --test-data is given"
    );
    assert_eq!(m["config"]["train_config"]["epochs"], 1);
}

#[test]
fn training_metrics_are_byte_identical_across_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_blobs(tmp.path(), 3, 30, 8, 3);
    let args = |dir: &Path| {
        vec![
            "train".to_string(),
            "--data".into(),
            data.to_str().unwrap().into(),
            "--epochs".into(),
            "2".into(),
            "--batch-size".into(),
            "32".into(),
            "--seed".into(),
            "11".into(),
            "--out".into(),
            dir.to_str().unwrap().into(),
        ]
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(hcr().args(args(&a)));
    run_ok(hcr().args(args(&b)));
    assert_eq!(read(&a.join("metrics.csv")), read(&b.join("metrics.csv")));
    assert_eq!(read(&a.join("checkpoint.json")), read(&b.join("checkpoint.json")));
}

#[test]
fn diagnose_writes_histograms_and_reports_ks() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_blobs(tmp.path(), 4, 50, 8, 4);
    let run_dir = tmp.path().join("run");
    run_ok(hcr().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--hcr-weight",
        "0",
        "--unsup",
        "none",
        "--epochs",
        "1",
        "--out",
        run_dir.to_str().unwrap(),
    ]));

    let diag_dir = tmp.path().join("diag");
    let out = run_ok(hcr().args([
        "diagnose",
        "--checkpoint",
        run_dir.join("checkpoint.json").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--batch",
        "64",
        "--out",
        diag_dir.to_str().unwrap(),
    ]));

    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("ks "), "{stdout}");
    let ks: f64 = stdout.trim().strip_prefix("ks ").unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&ks));

    for name in ["hist_g.csv", "hist_h.csv"] {
        let csv = read(&diag_dir.join(name));
        assert!(csv.starts_with("bin_lo,bin_hi,count\n"), "{name}");
        assert_eq!(csv.lines().count(), 51, "{name}: header plus 50 bins");
    }
    let report: serde_json::Value =
        serde_json::from_str(&read(&diag_dir.join("diagnose.json"))).unwrap();
    assert_eq!(report["rows"], 64);
    assert_eq!(report["ks_statistic"].as_f64().unwrap(), ks);
}

#[test]
fn diagnose_rejects_small_batches() {
    let tmp = tempfile::tempdir().unwrap();
    let code = exit_code(hcr().args([
        "diagnose",
        "--checkpoint",
        "missing.json",
        "--data",
        "missing.csv",
        "--batch",
        "4",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    assert_eq!(code, 2, "bad --batch is a usage error, checked before files");
}

#[test]
fn diagnose_rejects_tiny_datasets() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_blobs(tmp.path(), 2, 3, 8, 5);
    let run_dir = tmp.path().join("run");
    run_ok(hcr().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--hcr-weight",
        "0",
        "--unsup",
        "none",
        "--epochs",
        "1",
        "--batch-size",
        "4",
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    let out = hcr()
        .args([
            "diagnose",
            "--checkpoint",
            run_dir.join("checkpoint.json").to_str().unwrap(),
            "--data",
            data.to_str().unwrap(),
            "--out",
            tmp.path().join("diag").to_str().unwrap(),
        ])
        .output()
        .expect("binary runs");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least 8"));
}

#[test]
fn train_rejects_bad_test_fractions() {
    let tmp = tempfile::tempdir().unwrap();
    let data = generate_blobs(tmp.path(), 2, 10, 8, 6);
    let code = exit_code(hcr().args([
        "train",
        "--data",
        data.to_str().unwrap(),
        "--test-fraction",
        "1.5",
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]));
    assert_eq!(code, 2);
}

#[test]
fn verify_theory_only_runs_the_selected_check() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_ok(hcr().args([
        "verify-theory",
        "--only",
        "jl",
        "--seeds",
        "3",
        "--out",
        tmp.path().to_str().unwrap(),
    ]));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.trim(), "check jl: pass");

    let report: serde_json::Value =
        serde_json::from_str(&read(&tmp.path().join("theory_report.json"))).unwrap();
    assert_eq!(report["all_pass"], true);
    let checks = report["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["name"], "jl");
    assert_eq!(
        checks[0]["details"]["per_seed_max"].as_array().unwrap().len(),
        3
    );
}
