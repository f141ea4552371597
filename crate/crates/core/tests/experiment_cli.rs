//! Run directories, reruns and the command-line verbs.

use std::path::Path;
use std::process::Command;

use cvarkit::experiment::{compare, run_config, ExperimentConfig, Manifest, RunOptions};

const TRAIN: &str = r#"{
    "schema_version": 1,
    "name": "chain_train",
    "model": {"family": "chain", "preset": "rare_loss"},
    "alpha": 0.1,
    "seeds": [1, 2],
    "experiment": {
        "kind": "train",
        "iterations": 30,
        "box": {"radius": 3.0},
        "step": {"kind": "harmonic", "scale": 10.0},
        "n_eval": 2000
    }
}"#;

fn run_in(text: &str, dir: &Path) -> cvarkit::experiment::RunOutcome {
    let opts = RunOptions {
        output_dir: Some(dir.to_path_buf()),
        seed: None,
    };
    run_config(ExperimentConfig::from_json(text).unwrap(), &opts).unwrap()
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(TRAIN, a.path());
    run_in(TRAIN, b.path());
    for name in [
        "train_seed1.csv",
        "train_seed2.csv",
        "histogram_seed1.csv",
        "theta_seed2.json",
        "config.json",
        "manifest.json",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name}");
    }
}

#[test]
fn training_csv_layout() {
    let d = tempfile::tempdir().unwrap();
    let out = run_in(TRAIN, d.path());
    assert!(out.passed());
    let csv = std::fs::read_to_string(d.path().join("train_seed1.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "iteration,mean_return,cvar_return,theta_0,var_used,tail_count,batch_size,omega"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 30);
    let first: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(first[0], "1");
    // 17 significant digits round-trip exactly.
    let theta: f64 = first[3].parse().unwrap();
    assert_eq!(format!("{theta:.16e}"), first[3]);
    let manifest = Manifest::load(d.path()).unwrap();
    assert_eq!(manifest.seeds, vec![1, 2]);
    assert_eq!(manifest.config_sha256.len(), 64);
    assert!(manifest.results[0].summary["exact_cvar"].is_f64());
}

#[test]
fn zero_iterations_writes_header_only() {
    let d = tempfile::tempdir().unwrap();
    let text = TRAIN.replace("\"iterations\": 30", "\"iterations\": 0");
    let out = run_in(&text, d.path());
    assert!(out.passed());
    let csv = std::fs::read_to_string(d.path().join("train_seed1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn comparing_a_run_with_itself_gives_zero_differences() {
    let d = tempfile::tempdir().unwrap();
    run_in(TRAIN, d.path());
    let c = compare(d.path(), d.path()).unwrap();
    for r in &c.rows {
        assert_eq!((r.mean_diff, r.cvar_diff), (0.0, 0.0));
        assert!(r.theta_diff.iter().all(|t| *t == 0.0));
    }
}

#[test]
fn cvar_run_beats_mean_run_on_cvar() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_in(TRAIN, a.path());
    let pg = TRAIN.replace("\"iterations\": 30", "\"estimator\": {\"kind\": \"plain_lr\"}, \"iterations\": 30");
    run_in(&pg, b.path());
    let c = compare(a.path(), b.path()).unwrap();
    for r in &c.rows {
        assert!(r.cvar_diff > 0.0 && r.mean_diff <= 0.0, "{r:?}");
    }
}

#[test]
fn oracle_check_and_study_kinds_run() {
    let d = tempfile::tempdir().unwrap();
    let oracle = r#"{
        "schema_version": 1,
        "model": {"family": "chain", "preset": "two_stage", "smoothing": 0.05},
        "alpha": 0.1,
        "seeds": [1],
        "experiment": {"kind": "oracle_check", "theta": [-1.0, -1.0], "n": 1000000}
    }"#;
    assert!(run_in(oracle, d.path()).passed());
    let variance = r#"{
        "schema_version": 1,
        "model": {"family": "gaussian"},
        "alpha": 0.01,
        "seeds": [1],
        "experiment": {"kind": "variance_comparison", "theta": [0.0], "n": 200, "replications": 50,
                       "saa": {"n_saa": 5000, "gd_steps": 50, "gd_rate": 1.0}}
    }"#;
    let out = run_in(variance, d.path());
    let ratio = out.manifest.results[0].summary["ratios"][0].as_f64().unwrap();
    assert!(ratio < 1.0, "{ratio}");
    let bias = r#"{
        "schema_version": 1,
        "model": {"family": "gaussian"},
        "alpha": 0.5,
        "seeds": [1],
        "experiment": {"kind": "bias_study", "theta": [0.0], "batch_sizes": [100, 1000], "replications": 20}
    }"#;
    run_in(bias, d.path());
    assert!(d.path().join("bias_seed1.csv").exists());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvarkit"))
}

#[test]
fn cli_verbs() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("train.json");
    std::fs::write(&cfg, TRAIN.replace("\"iterations\": 30", "\"iterations\": 5")).unwrap();
    let ok = bin().arg("validate-config").arg(&cfg).output().unwrap();
    assert!(ok.status.success());

    let bad = d.path().join("bad.json");
    std::fs::write(&bad, TRAIN.replace("\"schema_version\": 1", "\"schema_version\": 2")).unwrap();
    let out = bin().arg("validate-config").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));

    let run_dir = d.path().join("run");
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--out-dir", run_dir.to_str().unwrap(), "--seed", "7"])
        .env("CVARKIT_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run_dir.join("train_seed7.csv").exists());
    assert!(!run_dir.join("train_seed1.csv").exists());

    let out = bin()
        .args(["compare", run_dir.to_str().unwrap(), run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["cvar_diff_avg"].as_f64(), Some(0.0));
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 8);
}
