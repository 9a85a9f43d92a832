//! Exit codes and output contracts of the command-line interface.

use std::path::Path;
use std::process::{Command, Output};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deepbelief"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) {
    let config = serde_json::json!({
        "master_seed": 5,
        "dbn": {"kind": "classifier", "layer_sizes": [784, 20], "classes": 10},
        "data": {"format": "synthetic-digits", "synthetic_train": 120, "synthetic_test": 40},
        "train": {"epochs": 1, "batch_size": 40},
        "finetune": {"epochs": 1, "batch_size": 40},
        "output": {"dir": "out"}
    });
    std::fs::write(
        dir.join("run.json"),
        serde_json::to_string_pretty(&config).unwrap(),
    )
    .unwrap();
}

#[test]
fn unknown_subcommand_exits_two_with_usage() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn missing_config_file_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["train", "--config", "nope.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = run(
        dir.path(),
        &["train", "--config", "run.json", "--set", "tran.epochs=1"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("tran"), "stderr: {stderr}");
}

#[test]
fn eval_without_model_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = run(dir.path(), &["eval", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_prints_error_rate_as_last_line() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    assert_eq!(
        run(dir.path(), &["train", "--config", "run.json"])
            .status
            .code(),
        Some(0)
    );
    let out = run(dir.path(), &["eval", "--config", "run.json"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.lines().last().unwrap();
    let value: f64 = last.parse().expect("last line is a bare decimal");
    assert!((0.0..=1.0).contains(&value));
    assert_eq!(last.len(), 6, "four decimal places: {last}");
}

#[test]
fn snapshot_contains_expanded_defaults() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run(dir.path(), &["train", "--config", "run.json"]);
    let snapshot = std::fs::read_to_string(dir.path().join("out/resolved-config.json")).unwrap();
    let value: serde_json::Value = serde_json::from_str(&snapshot).unwrap();
    // Defaults absent from the input file appear fully expanded.
    assert_eq!(value["train"]["epsilon"], serde_json::json!(0.05));
    assert_eq!(value["train"]["sampler"]["kind"], serde_json::json!("cd"));
    assert_eq!(value["denoise"]["noise_variance"], serde_json::json!(0.02));
}

#[test]
fn inspect_prints_manifest() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run(dir.path(), &["train", "--config", "run.json"]);
    let out = run(dir.path(), &["inspect", "out/model.dbn"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("\"classifier\""));
    assert!(stdout.contains("layer0.weights"));
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["oracle-check"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("ok")).count() >= 7);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn threads_flag_validates() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    let out = run(
        dir.path(),
        &["train", "--config", "run.json", "--threads", "0"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn pgm_outputs_have_expected_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path());
    run(dir.path(), &["train", "--config", "run.json"]);
    let out = run(
        dir.path(),
        &[
            "generate",
            "--config",
            "run.json",
            "--set",
            "generate.count=9",
            "--set",
            "generate.k=2",
        ],
    );
    assert_eq!(out.status.code(), Some(0));
    let pgm = std::fs::read(dir.path().join("out/generated_k2.pgm")).unwrap();
    // 9 tiles of 28x28 in a 3x3 grid with 1-pixel separators.
    assert!(pgm.starts_with(b"P5\n86 86\n255\n"));
}
