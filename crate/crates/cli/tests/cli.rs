use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cemlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cemlab"))
        .arg("--out-dir")
        .arg(dir.join("runs"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Runs a command expected to succeed and returns its run directory.
fn ok_run(dir: &Path, args: &[&str]) -> PathBuf {
    let out = cemlab(dir, args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    report.parent().unwrap().to_path_buf()
}

fn report(run: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(run.join("report.json")).unwrap()).unwrap()
}

fn only_report(dir: &Path) -> Value {
    let mut runs: Vec<_> = fs::read_dir(dir.join("runs")).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(runs.len(), 1);
    report(&runs.pop().unwrap())
}

fn read_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect()).collect()
}

const SMALL_CONFIG: &str = r#"{
  "seed": 3,
  "dim": 2,
  "t1": 0.01,
  "T": 10,
  "K": 50,
  "num_samples": 2000,
  "batch_size": 200,
  "num_epochs": 3,
  "target_kind": "COND_EXP_F",
  "hidden_layers": [8, 8],
  "distribution": { "kind": "line_gaussian" }
}"#;

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn train_writes_checkpoint_and_is_deterministic() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let run = ok_run(tmp.path(), &["train", "--config", &cfg]);
    let rep = report(&run);
    assert_eq!(rep["status"], "ok");
    assert_eq!(rep["summary"]["steps"], 30);
    for f in ["model.json", "loss.csv"] {
        assert!(fs::metadata(run.join(f)).unwrap().len() > 0);
        assert!(rep["manifest"][f].is_string());
    }
    let loss = read_rows(&run.join("loss.csv"));
    assert_eq!(loss.len(), 30);
    let first = fs::read(run.join("model.json")).unwrap();

    let again = ok_run(tmp.path(), &["train", "--config", &cfg]);
    assert_eq!(again, run);
    assert_eq!(fs::read(again.join("model.json")).unwrap(), first);

    let other = write_config(tmp.path(), &SMALL_CONFIG.replace("\"seed\": 3", "\"seed\": 4"));
    assert_ne!(ok_run(tmp.path(), &["train", "--config", &other]), run);
}

#[test]
fn malformed_config_fails_with_error_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{ \"seed\": 1,\n  \"dim\": }");
    let out = cemlab(tmp.path(), &["train", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let rep = only_report(tmp.path());
    assert_eq!(rep["status"], "error");
    assert!(rep["error"].as_str().unwrap().contains("line 2"));

    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &SMALL_CONFIG.replace("\"seed\"", "\"sede\""));
    let out = cemlab(tmp.path(), &["train", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("sede"));
}

#[test]
fn five_point_sampling_matches_uniform_frequencies() {
    let tmp = TempDir::new().unwrap();
    let run = ok_run(tmp.path(), &["sample", "--oracle", "five-point", "--n", "10000", "--seed", "1"]);
    let rows = read_rows(&run.join("frequencies.csv"));
    assert_eq!(rows.len(), 5);
    for r in &rows {
        assert!((r[3] - 0.2).abs() <= 0.03, "{rows:?}");
    }
    let rep = report(&run);
    assert!(rep["summary"]["unabsorbed_fraction"].as_f64().unwrap() < 0.01);
    assert_eq!(read_rows(&run.join("samples.csv")).len(), 10_000);
}

#[test]
fn gaussian_sampling_with_snapshots() {
    let tmp = TempDir::new().unwrap();
    let run = ok_run(
        tmp.path(),
        &["sample", "--oracle", "gaussian", "--mu", "1,2", "--sigma", "0.5", "--n", "10000", "--snapshots", "10,0.7518,0"],
    );
    let rep = report(&run);
    let mean = rep["summary"]["mean"].as_array().unwrap();
    let std = rep["summary"]["std"].as_array().unwrap();
    assert!((mean[0].as_f64().unwrap() - 1.0).abs() < 0.05);
    assert!((mean[1].as_f64().unwrap() - 2.0).abs() < 0.05);
    for s in std {
        assert!((s.as_f64().unwrap() - 0.5).abs() < 0.05);
    }
    let snaps = rep["summary"]["snapshots"].as_array().unwrap();
    assert_eq!(snaps.len(), 3);
    for s in snaps {
        assert!(run.join(s["file"].as_str().unwrap()).exists());
    }
}

#[test]
fn usage_errors() {
    let tmp = TempDir::new().unwrap();
    let out = cemlab(tmp.path(), &["sample", "--oracle", "gaussian", "--n", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cemlab(tmp.path(), &["t1-sweep", "--oracle", "twenty-point"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cemlab(tmp.path(), &["sample", "--n", "5"]);
    assert!(!out.status.success());
    assert_eq!(only_report(tmp.path())["status"], "error");
}

#[test]
fn singularity_mode() {
    let tmp = TempDir::new().unwrap();
    let out = cemlab(
        tmp.path(),
        &["eval", "--mode", "singularity", "--oracle", "gaussian", "--mu", "1,2", "--sigma", "0.5", "--x", "1,-0.1"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("full support"));
    assert_eq!(only_report(tmp.path())["status"], "error");

    let run = ok_run(tmp.path(), &["eval", "--mode", "singularity", "--oracle", "line", "--x", "1,-0.1", "--t1", "1e-5"]);
    for r in read_rows(&run.join("singularity.csv")) {
        if r[0] <= 0.01 {
            assert!(r[1] <= 2.0 * r[0]);
        }
    }
}

#[test]
fn lambda_mode_reports_fit() {
    let tmp = TempDir::new().unwrap();
    let run = ok_run(tmp.path(), &["eval", "--mode", "lambda", "--oracle", "five-point", "--n", "2000"]);
    let rep = report(&run);
    let q = rep["summary"]["fit_quality"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&q));
    assert!(rep["summary"]["fit_constant"].as_f64().unwrap() > 0.0);
    assert_eq!(read_rows(&run.join("lambda_true.csv")).len(), 30);
}

#[test]
fn pointwise_and_l2_against_a_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL_CONFIG);
    let trained = ok_run(tmp.path(), &["train", "--config", &cfg]);
    let ck = trained.join("model.json");
    let ck = ck.to_str().unwrap();
    let run = ok_run(
        tmp.path(),
        &["eval", "--mode", "pointwise", "--oracle", "line", "--checkpoint", ck, "--x", "1,-0.1", "--steps", "50"],
    );
    for f in ["pointwise_x1.csv", "pointwise_x2.csv", "pointwise_norm.csv"] {
        assert_eq!(read_rows(&run.join(f)).len(), 50);
    }
    let run = ok_run(
        tmp.path(),
        &["eval", "--mode", "l2", "--oracle", "line", "--checkpoint", ck, "--times", "0.1,1", "--n", "500"],
    );
    assert_eq!(read_rows(&run.join("l2.csv")).len(), 2);
    let out = cemlab(tmp.path(), &["eval", "--mode", "l2", "--oracle", "line"]);
    assert!(!out.status.success());
}

#[test]
fn t1_sweep_on_twenty_points() {
    let tmp = TempDir::new().unwrap();
    let run = ok_run(tmp.path(), &["t1-sweep", "--oracle", "twenty-point", "--t1", "0.1,0.01,0.001", "--n", "3000"]);
    let rep = report(&run);
    let fr: Vec<f64> = rep["summary"]["sweep"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["unabsorbed_fraction"].as_f64().unwrap())
        .collect();
    assert_eq!(fr.len(), 3);
    assert!(fr.windows(2).all(|w| w[1] <= w[0]), "{fr:?}");

    let out = cemlab(tmp.path(), &["t1-sweep", "--oracle", "twenty-point", "--t1", "0.1,10"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("[10.0]"));
}

#[test]
fn cloud_csv_oracle() {
    let tmp = TempDir::new().unwrap();
    let csv = tmp.path().join("cloud.csv");
    fs::write(&csv, "x1,x2,weight\n-1,0,1\n1,0,3\n").unwrap();
    let run = ok_run(tmp.path(), &["sample", "--oracle", "cloud", "--cloud", csv.to_str().unwrap(), "--n", "4000"]);
    let rows = read_rows(&run.join("frequencies.csv"));
    assert!((rows[1][3] - 0.75).abs() < 0.03, "{rows:?}");
}
