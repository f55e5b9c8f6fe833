use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use qbench::builtins;
use qbench::cv::device_attenuator;
use qbench::tensor::Operator;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbench")).args(args).output().expect("run qbench")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn write(dir: &Path, name: &str, v: &impl serde::Serialize) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn benchmark_output_is_deterministic() {
    let a = run(&["benchmark", "--builtin", "equator", "--dim", "4", "--seed", "7"]);
    let b = run(&["benchmark", "--builtin", "equator", "--dim", "4", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn csv_has_header_and_one_row() {
    let out = run(&["benchmark", "--builtin", "teleport:2", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(header.len(), row.len());
    let value = row[header.iter().position(|h| *h == "value").unwrap()].parse::<f64>().unwrap();
    assert!((value - 2.0 / 3.0).abs() < 1e-9);
    assert!(!header.contains(&"tau_min"));
}

#[test]
fn writes_to_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = run(&["benchmark", "--builtin", "chsh", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert!((v["value"].as_f64().unwrap() - 2f64.sqrt()).abs() < 1e-9);
}

#[test]
fn malformed_json_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"dims\": [2, 2],\n  \"re\": [1, 2,\n}").unwrap();
    let out = run(&["benchmark", "--omega", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["benchmark"]).status.code(), Some(1));
    assert_eq!(run(&["cv", "--format", "xml"]).status.code(), Some(1));
    assert_eq!(run(&["benchmark", "--builtin", "nope"]).status.code(), Some(1));
    assert_eq!(run(&["cv", "--lambda", "-1"]).status.code(), Some(1));
    assert_eq!(run(&["cv", "--device", "warp-drive"]).status.code(), Some(1));
}

#[test]
fn thread_variable_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_qbench"))
        .args(["benchmark", "--builtin", "chsh"])
        .env("QBENCH_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_qbench"))
        .args(["benchmark", "--builtin", "chsh"])
        .env("QBENCH_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn canonical_teleport_recipe() {
    let out = run(&["canonical", "--builtin", "teleport"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["residual"].as_f64().unwrap() < 1e-9);
    let re = v["input_state"]["re"].as_array().unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    assert!((re[0].as_f64().unwrap() - s).abs() < 1e-12 && (re[3].as_f64().unwrap() - s).abs() < 1e-12);
    assert!(v["self_check"]["abs_diff"].as_f64().unwrap() < 1e-9);
}

#[test]
fn canonical_from_probabilistic_file() {
    let dir = tempfile::tempdir().unwrap();
    let t = builtins::coherent(3).unwrap().prob_test().unwrap();
    let p = write(dir.path(), "t.json", &t);
    let out = run(&["canonical", "--test", &p, "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["self_check"]["channel"], "random trace-nonincreasing");
    assert!(v["self_check"]["abs_diff"].as_f64().unwrap() < 1e-9);
}

#[test]
fn rank_deficient_tau_is_diagnosed() {
    let dir = tempfile::tempdir().unwrap();
    let t = builtins::teleport(2).unwrap().prob_test().unwrap();
    let tp = write(dir.path(), "t.json", &t);
    let tau = write(dir.path(), "tau.json", &Operator::diag(&[1.0, 0.0]));
    let out = run(&["canonical", "--test", &tp, "--tau", &tau]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel vector"), "{err}");
}

#[test]
fn cv_identity_matches_oracle() {
    let out = run(&["cv", "--g", "1", "--lambda", "1", "--device", "identity"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["score"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(v["abs_diff"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["branch"], "pure_low_gain");
}

#[test]
fn cv_accepts_kraus_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "dev.json", &device_attenuator(0.8, 30).unwrap());
    let out = run(&["cv", "--cutoff", "30", "--device", &p, "--no-oracle"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let named = json(&run(&["cv", "--cutoff", "30", "--device", "attenuator:0.8", "--no-oracle"]));
    assert!((json(&out)["score"].as_f64().unwrap() - named["score"].as_f64().unwrap()).abs() < 1e-12);
    let wrong = run(&["cv", "--cutoff", "40", "--device", &p]);
    assert_eq!(wrong.status.code(), Some(1));
}

#[test]
fn cutoff_errors_surface_verbatim() {
    let out = run(&["cv", "--lambda", "0.05", "--cutoff", "20", "--device", "identity"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cutoff error") && err.contains("try n_max >="), "{err}");
}
