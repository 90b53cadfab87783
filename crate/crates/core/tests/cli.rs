use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use capex_core::manifest::RunManifest;

fn capex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capex"))
        .args(args)
        .env_remove("CAPEX_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Trains a tiny artifact and returns the checkpoint path.
fn quick_artifact(dir: &Path, profile: &str, episodes: &str) -> PathBuf {
    let out = capex(&["train", "--config", profile, "--episodes", episodes, "--out", p(dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    dir.join("checkpoint.json")
}

fn csv_body(path: &Path) -> Vec<String> {
    let content = fs::read_to_string(path).expect("csv exists");
    let mut lines = content.lines().map(str::to_string);
    let first = lines.next().unwrap_or_default();
    assert!(first.starts_with("# config_digest="), "{first}");
    lines.collect()
}

#[test]
fn train_smoke_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = capex(&["train", "--config", "price_only.cfg", "--episodes", "1000", "--seed", "7", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let mut names: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["checkpoint.json", "manifest.json", "training_log.csv"]);

    let manifest = RunManifest::load(&dir.path().join("manifest.json")).unwrap();
    assert!(manifest.verify().unwrap());
    assert_eq!(manifest.seed, 7);
    assert!(manifest.finished_at >= manifest.started_at);
    let log = fs::read_to_string(dir.path().join("training_log.csv")).unwrap();
    assert_eq!(log.lines().next().unwrap(), format!("# config_digest={}", manifest.config_digest));
    let body = csv_body(&dir.path().join("training_log.csv"));
    assert_eq!(body[0], "episode,epsilon,return,moving_avg_100,loss_mean,wall_ms");
    assert_eq!(body.len(), 1001);
}

#[test]
fn missing_required_key_exits_2_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[env]\nT = 2\nc_om = 300\nc_inv = 20\nmu1 = 0.05\nsigma1 = 0.1\np1 = 0.1\n").unwrap();
    let out = capex(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("`u`"), "{}", text(&out.stderr));
}

#[test]
fn bad_overrides_and_missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = p(dir.path());
    let out = capex(&["train", "--config", "price_only", "--set", "train.nonsense=1", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("nonsense"));
    let out = capex(&["train", "--config", "/nonexistent/x.cfg", "--out", o]);
    assert_eq!(out.status.code(), Some(2));
    let out = capex(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeated_training_logs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = capex(&["train", "--config", "price_demand", "--episodes", "1500", "--seed", "3", "--out", p(dir.path())]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["training_log.csv", "checkpoint.json"] {
        assert_eq!(fs::read(a.path().join(file)).unwrap(), fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn evaluate_single_replication_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = quick_artifact(&dir.path().join("run"), "price_demand", "50");
    let one = capex(&["evaluate", "--checkpoint", p(&ckpt), "--replications", "1", "--out", p(&dir.path().join("e1"))]);
    assert_eq!(one.status.code(), Some(0), "{}", text(&one.stderr));
    assert!(text(&one.stdout).contains("std_error: 0\n"), "{}", text(&one.stdout));

    let mut reports = Vec::new();
    for name in ["e2", "e3"] {
        let out_dir = dir.path().join(name);
        let out = capex(&["evaluate", "--checkpoint", p(&ckpt), "--replications", "5000", "--seed", "9", "--out", p(&out_dir)]);
        assert_eq!(out.status.code(), Some(0));
        reports.push((text(&out.stdout), fs::read(out_dir.join("eval_report.csv")).unwrap()));
    }
    assert_eq!(reports[0], reports[1]);
    assert!(csv_body(&dir.path().join("e2").join("eval_report.csv"))[0].starts_with("policy,"));
}

#[test]
fn corrupt_checkpoint_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"format\": \"capex-checkpoint\", \"version\": 1").unwrap();
    for cmd in ["evaluate", "compare"] {
        let out = capex(&[cmd, "--checkpoint", p(&bad), "--out", p(dir.path())]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(text(&out.stderr).contains("checkpoint"));
    }
    let out = capex(&["policy-map", "--checkpoint", p(&dir.path().join("missing.json")), "--stage", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = capex(&["oracle", "--config", "price_only", "--mode", "closed-form", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0));
    assert!(text(&out.stdout).contains("0.109589"), "{}", text(&out.stdout));
    let body = csv_body(&dir.path().join("thresholds.csv"));
    assert_eq!(body[0], "quantity,value");

    let out = capex(&["oracle", "--config", "price_demand", "--mode", "closed-form", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_dp_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = capex(&[
        "oracle",
        "--config",
        "price_demand_T3_K2",
        "--mode",
        "dp",
        "--set",
        "oracle.price_nodes=40",
        "--set",
        "oracle.demand_nodes=20",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let body = csv_body(&dir.path().join("dp_solution.csv"));
    assert_eq!(body[0], "t,price,demand,installed,decision,value");
    let stages: std::collections::BTreeSet<&str> = body[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(stages.into_iter().collect::<Vec<_>>(), ["1", "2", "3"]);
    // stage 1 is a single node; stages 2 and 3 are 40 x 20; three capacity levels each
    assert_eq!(body.len() - 1, 3 * (1 + 2 * 40 * 20));
}

#[test]
fn oracle_stage2_monte_carlo() {
    let dir = tempfile::tempdir().unwrap();
    let out = capex(&["oracle", "--config", "price_only_T3", "--mode", "stage2-mc", "--samples", "1000000", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let mc: f64 = stdout
        .lines()
        .find(|l| l.contains("Monte Carlo"))
        .and_then(|l| l.rsplit(' ').next())
        .and_then(|v| v.parse().ok())
        .expect("boundary printed");
    assert!((mc - 0.1061).abs() < 5e-4, "{mc}");

    let out = capex(&["oracle", "--config", "price_only_T3", "--mode", "stage2-mc", "--samples", "10", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn policy_map_examples() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = quick_artifact(&dir.path().join("run"), "price_demand", "20");

    let one = dir.path().join("one");
    let out = capex(&["policy-map", "--checkpoint", p(&ckpt), "--stage", "2", "--grid", "0.1:0.1:1,1:1:1", "--out", p(&one)]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let body = csv_body(&one.join("policy_map.csv"));
    assert_eq!(body.len(), 2);
    assert_eq!(body[0], "stage,installed,price,demand,decision");

    let full = dir.path().join("full");
    let out = capex(&["policy-map", "--checkpoint", p(&ckpt), "--stage", "3", "--installed", "2", "--out", p(&full)]);
    assert_eq!(out.status.code(), Some(0));
    let body = csv_body(&full.join("policy_map.csv"));
    assert!(body.len() > 100);
    assert!(body[1..].iter().all(|l| l.ends_with(",0")));

    for stage in ["0", "4"] {
        let out = capex(&["policy-map", "--checkpoint", p(&ckpt), "--stage", stage, "--out", p(&full)]);
        assert_eq!(out.status.code(), Some(2), "stage {stage}");
    }
    let out = capex(&["policy-map", "--checkpoint", p(&ckpt), "--stage", "2", "--grid", "1:2", "--out", p(&full)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_flags_untrained_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = quick_artifact(&dir.path().join("run"), "price_only_T3", "1");
    let out = capex(&[
        "compare",
        "--checkpoint",
        p(&ckpt),
        "--config",
        "price_only_T3",
        "--set",
        "oracle.price_nodes=100",
        "--replications",
        "5000",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    assert!(text(&out.stdout).contains("pass: false"), "{}", text(&out.stdout));
    let body = csv_body(&dir.path().join("compare_report.csv"));
    assert_eq!(body[0], "stage,demand,learned_threshold,optimal_threshold,abs_delta");
    assert!(body.last().unwrap().ends_with(",false"));

    let out = capex(&["compare", "--checkpoint", p(&ckpt), "--config", "price_only_T2", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_capex"))
        .args(["oracle", "--config", "price_only", "--mode", "closed-form"])
        .env("CAPEX_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("thresholds.csv").exists());
}

#[test]
fn divergence_exits_3_with_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = capex(&[
        "train",
        "--config",
        "price_demand",
        "--episodes",
        "2000",
        "--set",
        "train.optimizer=sgd",
        "--set",
        "train.learning_rate=10",
        "--set",
        "train.min_fill=64",
        "--out",
        p(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", text(&out.stderr));
    let stderr = text(&out.stderr);
    assert!(stderr.contains("last checkpoint") && stderr.contains("diverged"), "{stderr}");
    assert!(dir.path().join("checkpoint_diverged.json").exists());
    assert!(!dir.path().join("checkpoint.json").exists());
}
