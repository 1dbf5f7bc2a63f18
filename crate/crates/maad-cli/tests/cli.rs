//! End-to-end CLI checks: dataset collection, training reproducibility from
//! a resolved config, evaluation, verification, and plotting.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_maad"))
}

fn write_config(dir: &Path, algorithm: &str, out_dir: &Path, steps: u64) -> std::path::PathBuf {
    let cfg = format!(
        r#"[run]
dataset = "{}"
out_dir = "{}"
seeds = [0]

[env]
name = "linear_point"

[train]
algorithm = "{algorithm}"
max_env_steps = {steps}
eval_episodes = 3
"#,
        dir.join("data/expert.jsonl").display(),
        out_dir.display()
    );
    let path = dir.join(format!("{algorithm}.toml"));
    fs::write(&path, cfg).unwrap();
    path
}

#[test]
fn full_pipeline_collect_train_eval_verify_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    // collect-expert writes the dataset and its anchors
    let out = bin()
        .args([
            "collect-expert",
            "--env",
            "linear_point",
            "--trajectories",
            "6",
        ])
        .args(["--out", dir.join("data").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "collect-expert: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.join("data/expert.jsonl").exists());
    assert!(dir.join("data/expert.meta.json").exists());

    // train twice from the same config: metrics must be bit-identical
    let cfg = write_config(dir, "maad-ail", &dir.join("runs/a"), 2 * 2048);
    let out = bin()
        .args(["train", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let resolved = dir.join("runs/a/config.resolved.toml");
    assert!(resolved.exists(), "resolved config written next to outputs");
    let metrics_a = fs::read(dir.join("runs/a/seed_0/metrics.csv")).unwrap();

    let out = bin()
        .args(["train", "--config", cfg.to_str().unwrap()])
        .args(["--out-dir", dir.join("runs/b").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let metrics_b = fs::read(dir.join("runs/b/seed_0/metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b, "repeat runs must be bit-identical");

    // re-running from the resolved config reproduces the metrics too
    let out = bin()
        .args(["train", "--config", resolved.to_str().unwrap()])
        .args(["--out-dir", dir.join("runs/c").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "train from resolved: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let metrics_c = fs::read(dir.join("runs/c/seed_0/metrics.csv")).unwrap();
    assert_eq!(
        metrics_a, metrics_c,
        "resolved config must reproduce the run"
    );

    // eval prints return statistics and R²
    let out = bin()
        .args([
            "eval",
            "--checkpoint",
            dir.join("runs/a/seed_0/checkpoint.json").to_str().unwrap(),
        ])
        .args(["--dataset", dir.join("data/expert.jsonl").to_str().unwrap()])
        .args(["--episodes", "5"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "eval: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("normalized"), "eval output: {text}");
    assert!(text.contains("R²"), "eval output: {text}");

    // verify exits zero and writes the residual report
    let residuals = dir.join("residuals.csv");
    let out = bin()
        .args([
            "verify",
            "--instances",
            "20",
            "--out",
            residuals.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "verify: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(&residuals).unwrap();
    assert!(report.starts_with("instance,idd_residual,bound_residual"));
    assert_eq!(report.lines().count(), 21);

    // plot emits both SVGs from the metrics files alone
    let svg = dir.join("curves.svg");
    let median = dir.join("median.svg");
    let out = bin()
        .args(["plot", dir.join("runs/a").to_str().unwrap()])
        .args(["--out", svg.to_str().unwrap()])
        .args(["--median-out", median.to_str().unwrap()])
        .args(["--quantiles", "100"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "plot: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg_text = fs::read_to_string(&svg).unwrap();
    assert!(svg_text.starts_with("<svg"));
    assert!(svg_text.contains("maad-ail"));
    assert!(fs::read_to_string(&median).unwrap().contains("median"));
}

#[test]
fn baseline_config_echoes_forced_lambda() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::create_dir_all(dir.join("data")).unwrap();
    // dataset needed only at run time, not at resolution; use a tiny one
    let out = bin()
        .args([
            "collect-expert",
            "--env",
            "linear_point",
            "--trajectories",
            "2",
        ])
        .args(["--out", dir.join("data").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());

    let cfg = write_config(dir, "gaifo", &dir.join("runs/gaifo"), 2048);
    let out = bin()
        .args(["train", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("λ_reg = 0"), "config echo: {stdout}");
    let resolved = fs::read_to_string(dir.join("runs/gaifo/config.resolved.toml")).unwrap();
    assert!(
        resolved.contains("lambda_reg = 0.0"),
        "resolved: {resolved}"
    );
}

#[test]
fn unknown_subcommand_and_malformed_config_fail() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "this is not a config").unwrap();
    let out = bin()
        .args(["train", "--config", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn eval_defaults_to_fifty_episodes() {
    let out = bin().args(["eval", "--help"]).output().unwrap();
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("50"),
        "help should document the 50-episode default: {text}"
    );
}
