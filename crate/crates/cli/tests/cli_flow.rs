//! End-to-end command-line flow: each subcommand is exercised through the
//! compiled binary exactly as a user would run it, against a small synthetic
//! dataset, checking artifacts, exit codes, and run-log contents.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_gamestock");

fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    let text = r#"
[synth]
n_stocks = 12
n_industries = 3
n_days = 160
seed = 11

[train]
max_epochs = 3
seed = 11

[output]
dir = "runs"
"#;
    fs::write(&path, text).unwrap();
    path
}

fn run(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary should launch");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Newest run directory under `runs/` whose name contains `cmd`.
fn newest_run(dir: &Path, cmd: &str) -> PathBuf {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().contains(cmd))
        .collect();
    dirs.sort();
    dirs.pop().expect("expected a run directory")
}

#[test]
fn generate_train_evaluate_produce_artifacts_and_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let cfg = config.to_str().unwrap();

    let (code, _, err) = run(tmp.path(), &["generate", "--config", cfg]);
    assert_eq!(code, 0, "generate failed: {err}");
    let gen = newest_run(tmp.path(), "generate");
    for f in [
        "data/panel.csv",
        "data/industry.csv",
        "data/holdings.csv",
        "data/events.csv",
        "data/oracle.json",
        "manifest.json",
        "run.log",
    ] {
        assert!(gen.join(f).is_file(), "missing {f} after generate");
    }

    let (code, _, err) = run(
        tmp.path(),
        &["train", "--config", cfg, "--set", "train.seed=7"],
    );
    assert_eq!(code, 0, "train failed: {err}");
    let train = newest_run(tmp.path(), "train");
    assert!(train.join("checkpoint.json").is_file());
    assert!(train.join("training_log.csv").is_file());
    let log = fs::read_to_string(train.join("run.log")).unwrap();
    assert!(
        log.contains("override: --set train.seed=7"),
        "override not echoed in run log:\n{log}"
    );
    let header = fs::read_to_string(train.join("training_log.csv")).unwrap();
    assert!(header.starts_with("epoch,train_loss,valid_loss,lr"));

    let (code, _, err) = run(tmp.path(), &["evaluate", "--config", cfg]);
    assert_eq!(code, 0, "evaluate failed: {err}");
    let eval = newest_run(tmp.path(), "evaluate");
    assert!(eval.join("report.json").is_file());
    assert!(eval.join("daily_series.csv").is_file());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("report.json")).unwrap()).unwrap();
    assert!(report["ic"].as_f64().unwrap().is_finite());
    assert!(report["days_used"].as_u64().unwrap() >= 2);

    // Manifest captures the post-defaults config, the seed, and input digests.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"].as_i64(), Some(7));
    assert_eq!(manifest["config"]["train"]["max_epochs"].as_i64(), Some(3));
    assert_eq!(manifest["config"]["model"]["lookback"].as_i64(), Some(20));
    let inputs = manifest["inputs"].as_object().unwrap();
    assert!(!inputs.is_empty(), "manifest should record input digests");
    for digest in inputs.values() {
        assert_eq!(digest.as_str().unwrap().len(), 64, "expected sha-256 hex");
    }

    let (code, _, err) = run(tmp.path(), &["predict", "--config", cfg]);
    assert_eq!(code, 0, "predict failed: {err}");
    let pred = newest_run(tmp.path(), "predict");
    let table = fs::read_to_string(pred.join("predictions.csv")).unwrap();
    let mut lines = table.lines();
    let head = lines.next().unwrap();
    assert!(head.starts_with("date,"));
    assert_eq!(head.split(',').count(), 13, "date column plus 12 stocks");
    assert!(lines.count() >= 2, "expected at least two prediction days");

    let (code, _, err) = run(tmp.path(), &["graph-stats", "--config", cfg]);
    assert_eq!(code, 0, "graph-stats failed: {err}");
    let gs = newest_run(tmp.path(), "graph-stats");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(gs.join("graph_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["stocks"].as_u64(), Some(12));
    assert_eq!(stats["industries"].as_u64(), Some(3));
}

#[test]
fn unknown_config_key_exits_two_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    fs::write(&path, "[wavelet]\nlvel = 2\n").unwrap();
    let (code, _, err) = run(tmp.path(), &["train", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2, "bad key should exit 2, stderr: {err}");
    assert!(err.contains("lvel"), "diagnostic should name the key: {err}");
}

#[test]
fn unknown_override_key_exits_two_and_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    let (code, _, err) = run(
        tmp.path(),
        &[
            "generate",
            "--config",
            config.to_str().unwrap(),
            "--set",
            "synth.n_stonks=9",
        ],
    );
    assert_eq!(code, 2, "bad override should exit 2, stderr: {err}");
    assert!(err.contains("n_stonks"), "diagnostic should name the key: {err}");
}

#[test]
fn missing_config_file_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, _, err) = run(tmp.path(), &["generate", "--config", "no_such_file.toml"]);
    assert_eq!(code, 2, "missing config should exit 2, stderr: {err}");
    assert!(
        err.contains("no_such_file.toml"),
        "diagnostic should name the file: {err}"
    );
}

#[test]
fn evaluate_without_any_dataset_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_config(tmp.path());
    // No generate ran, and the config points at no data directory.
    let (code, _, err) = run(tmp.path(), &["evaluate", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 2, "missing dataset should exit 2, stderr: {err}");
}
