use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};
use stpca::score::Scenario;
use stpca::synth::LabeledTensorDataset;
use stpca::tensor::DenseTensor;

fn stpca(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stpca")).current_dir(dir).args(args).env_remove("STPCA_THREADS").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = stpca(dir, args);
    assert!(o.status.success(), "{:?}: {}", args, String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn sha(path: PathBuf) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

fn header(path: PathBuf) -> serde_json::Value {
    let bytes = std::fs::read(path).unwrap();
    let end = bytes.iter().position(|&b| b == b'\n').unwrap();
    serde_json::from_slice(&bytes[..end]).unwrap()
}

#[test]
fn generate_shapes_and_reproducible_bytes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "orbit", "--n", "3", "--seed", "7", "--out", "a.dtf"]);
    ok(p, &["generate", "orbit", "--n", "3", "--seed", "7", "--out", "b.dtf"]);
    assert_eq!(header(p.join("a.dtf"))["shape"], serde_json::json!([9, 41, 100]));
    assert_eq!(sha(p.join("a.dtf")), sha(p.join("b.dtf")));
    assert_eq!(sha(p.join("a.json")), sha(p.join("b.json")));
    ok(p, &["generate", "array", "--case", "1", "--seed", "7", "--out", "c.dtf"]);
    assert_eq!(header(p.join("c.dtf"))["shape"], serde_json::json!([10, 10, 800]));
    ok(p, &["generate", "array", "--case", "2", "--pattern", "vertical", "--seed", "7", "--out", "v.dtf"]);
    assert_eq!(json(p.join("v.json"))["true_features"].as_array().unwrap().len(), 5);
}

#[test]
fn one_sd_selects_the_orbit_signal_channels() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "orbit", "--n", "3", "--seed", "7", "--out", "o.dtf"]);
    ok(p, &["select", "--data", "o.dtf", "--method", "dp-1sd", "--lambda", "1", "--eta", "1", "--h", "3", "--out-dir", "sel"]);
    let sel = json(p.join("sel/selection.json"));
    let mut f: Vec<u64> = sel["features"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    f.sort_unstable();
    assert_eq!(f, vec![0, 1, 2]);
    let csv = std::fs::read_to_string(p.join("sel/scores.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("feature_index,score,rank"));
    assert_eq!(lines.count(), 9);
    // Slice-wise data get no heatmap.
    assert!(!p.join("sel/scoremap.pgm").exists());
}

#[test]
fn zero_tensor_scores_zero_and_ranks_by_index() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let t = DenseTensor::zeros(vec![3, 4, 6]).unwrap();
    let ds = LabeledTensorDataset::new(t, vec![1, 2, 1, 2, 1, 2], vec![], Scenario::TubeWise).unwrap();
    stpca::io::save_dataset(&p.join("z.dtf"), &ds, serde_json::Value::Null, None).unwrap();
    ok(p, &["select", "--data", "z.dtf", "--method", "mp-dir1", "--transform", "identity", "--h", "2", "--out-dir", "s"]);
    let csv = std::fs::read_to_string(p.join("s/scores.csv")).unwrap();
    for (j, line) in csv.lines().skip(1).enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0].parse::<usize>().unwrap(), j);
        assert_eq!(cols[1].parse::<f64>().unwrap(), 0.0);
        assert_eq!(cols[2].parse::<usize>().unwrap(), j + 1);
    }
    let pgm = std::fs::read(p.join("s/scoremap.pgm")).unwrap();
    assert_eq!(&pgm[..11], b"P5\n4 3\n255\n");
    assert!(pgm[11..].iter().all(|&b| b == 0));
}

#[test]
fn array_scoremap_matches_sample_dimensions() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "array", "--case", "2", "--pattern", "random", "--seed", "3", "--out", "a.dtf"]);
    ok(p, &["select", "--data", "a.dtf", "--method", "dp-2sd", "--lambda", "1", "--eta", "1", "--out-dir", "s"]);
    let pgm = std::fs::read(p.join("s/scoremap.pgm")).unwrap();
    assert_eq!(&pgm[..13], b"P5\n10 10\n255\n");
    assert_eq!(pgm.len(), 13 + 100);
    assert_eq!(*pgm[13..].iter().max().unwrap(), 255);
}

#[test]
fn complex_tube_wise_one_sd_is_warned_not_rejected() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "array", "--case", "1", "--seed", "1", "--samples", "40", "--out", "a.dtf"]);
    let o = stpca(p, &["select", "--data", "a.dtf", "--method", "dp-1sd", "--h", "4", "--out-dir", "s"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dp-1sd"));
    assert_eq!(json(p.join("s/selection.json"))["warnings"].as_array().unwrap().len(), 1);
}

#[test]
fn orbit_grid_report_carries_stability_metrics() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "orbit", "--n", "3", "--seed", "2", "--out", "o.dtf"]);
    ok(p, &["grid", "--data", "o.dtf", "--method", "dp-1sd", "--preset", "wide", "--no-cluster", "--out", "g.json"]);
    let g = json(p.join("g.json"));
    assert_eq!(g["report"]["g"], 81);
    assert_eq!(g["report"]["cells"].as_array().unwrap().len(), 81);
    assert!(g["report"]["poc"].as_f64().unwrap() > 0.5);
    assert!(g["report"]["potc"].is_number());
    assert!(g["build"].as_str().unwrap().starts_with("stpca "));
    assert_eq!(g["config"]["h"], 3);
    let table = ok(p, &["report", "g.json"]);
    assert!(table.contains("dp-1sd"));
    let csv = ok(p, &["report", "g.json", "--format", "csv"]);
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn array_grid_reports_clustering_mean_and_std() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "array", "--case", "1", "--seed", "4", "--samples", "200", "--out", "a.dtf"]);
    ok(p, &["grid", "--data", "a.dtf", "--method", "mp-dir1", "--h", "5", "--repetitions", "5", "--out", "g.json"]);
    let best = &json(p.join("g.json"))["report"]["best_acc"];
    for k in ["acc_mean", "acc_std", "nmi_mean", "nmi_std"] {
        assert!(best[k].is_number(), "{}", k);
    }
    let acc = best["acc_mean"].as_f64().unwrap();
    assert!((0.25..=1.0).contains(&acc));
}

#[test]
fn empty_grid_fails_validation_before_reading_data() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    std::fs::write(p.join("cfg.json"), r#"{"lambda_grid": [], "h": 3}"#).unwrap();
    let o = stpca(p, &["grid", "--config", "cfg.json", "--data", "missing.dtf", "--method", "dp-1sd", "--out", "g.json"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!p.join("g.json").exists());
}

#[test]
fn evaluate_truth_and_all_features() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "orbit", "--n", "4", "--seed", "1", "--out", "o.dtf"]);
    std::fs::write(p.join("truth.json"), r#"{"features": [3, 2, 1, 0]}"#).unwrap();
    ok(p, &["evaluate", "--data", "o.dtf", "--selection", "truth.json", "--no-cluster", "--out", "e.json"]);
    let e = json(p.join("e.json"));
    assert_eq!(e["poc"], 1.0);
    assert_eq!(e["potc"], 1.0);

    ok(p, &["generate", "array", "--case", "1", "--seed", "5", "--out", "a.dtf"]);
    let all: Vec<usize> = (0..100).collect();
    std::fs::write(p.join("all.json"), serde_json::json!({ "features": all }).to_string()).unwrap();
    ok(p, &["evaluate", "--data", "a.dtf", "--selection", "all.json", "--repetitions", "5", "--out", "e.json"]);
    let acc = json(p.join("e.json"))["clustering"]["acc_mean"].as_f64().unwrap();
    assert!((0.25..0.6).contains(&acc), "{}", acc);
}

#[test]
fn malformed_selection_reports_line() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "orbit", "--seed", "1", "--out", "o.dtf"]);
    std::fs::write(p.join("bad.json"), "{\n  \"features\": [0, 1,\n").unwrap();
    let o = stpca(p, &["evaluate", "--data", "o.dtf", "--selection", "bad.json"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn config_keys_are_checked_and_flags_win() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    ok(p, &["generate", "orbit", "--seed", "1", "--out", "o.dtf"]);
    std::fs::write(p.join("typo.json"), r#"{"lamda": 1.0}"#).unwrap();
    let o = stpca(p, &["select", "--config", "typo.json", "--data", "o.dtf", "--method", "dp-1sd", "--out-dir", "s"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("lamda"));

    std::fs::write(p.join("cfg.json"), r#"{"data": "o.dtf", "method": "dp-md", "lambda": 5.0, "out_dir": "s"}"#).unwrap();
    ok(p, &["select", "--config", "cfg.json", "--method", "dp-1sd", "--lambda", "2"]);
    let sel = json(p.join("s/selection.json"));
    assert_eq!(sel["method"], "dp-1sd");
    assert_eq!(sel["config"]["lambda"], 2.0);
    assert_eq!(sel["config"]["eta"], 1.0);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let o = stpca(p, &["select", "--data", "nope.dtf", "--method", "dp-1sd", "--out-dir", "s"]);
    assert_eq!(code(&o), 4);
    let o = stpca(p, &["select", "--data", "nope.dtf", "--method", "dp-9sd", "--out-dir", "s"]);
    assert_eq!(code(&o), 2);
    let o = stpca(p, &["generate", "orbit", "--n", "7", "--out", "x.dtf"]);
    assert_eq!(code(&o), 2);
    std::fs::write(p.join("junk.dtf"), b"not a tensor\n").unwrap();
    std::fs::write(p.join("junk.json"), b"{}").unwrap();
    let o = stpca(p, &["select", "--data", "junk.dtf", "--method", "dp-1sd", "--out-dir", "s"]);
    assert_eq!(code(&o), 2);
    let mut t = vec![stpca::linalg::cplx(1.0, 0.0); 12];
    t[5] = stpca::linalg::cplx(f64::NAN, 0.0);
    let ds = LabeledTensorDataset::new(DenseTensor::new(vec![3, 4], t).unwrap(), vec![1, 2, 1, 2], vec![], Scenario::SliceWise).unwrap();
    stpca::io::save_dataset(&p.join("nan.dtf"), &ds, serde_json::Value::Null, None).unwrap();
    let o = stpca(p, &["select", "--data", "nan.dtf", "--method", "dp-1sd", "--h", "1", "--out-dir", "s"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(env!("CARGO_BIN_EXE_stpca"))
        .current_dir(p)
        .args(["generate", "orbit", "--out", "o.dtf"])
        .env("STPCA_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
