use std::path::Path;
use std::process::{Command, Output};

fn delco(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_delco")).args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "delco {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen(dir: &Path, name: &str, process: &str, n: &str, seed: &str) -> String {
    let path = dir.join(name).to_string_lossy().into_owned();
    delco(&["gen", "--process", process, "--n", n, "--seed", seed, "--out", &path]);
    path
}

#[test]
fn gen_is_deterministic() {
    let a = delco(&["gen", "--process", "moons", "--n", "50", "--seed", "3"]).stdout;
    let b = delco(&["gen", "--process", "moons", "--n", "50", "--seed", "3"]).stdout;
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn train_then_evaluate_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "train.csv", "blobs", "400", "1");
    let test = gen(dir.path(), "test.csv", "blobs", "2000", "2");
    for method in ["delco", "independent-copula", "weighted-vote", "stacking", "classifier-selection", "centralized"] {
        let model = dir.path().join(format!("{method}.json")).to_string_lossy().into_owned();
        delco(&["train", "--data", &train, "--partition", "regions:blobs-2", "--method", method, "--out", &model]);
        let out = delco(&["evaluate", "--model", &model, "--data", &test]);
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["method"], method);
        let acc = v["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(v["ci_low"].as_f64().unwrap() <= acc && acc <= v["ci_high"].as_f64().unwrap());
        if method == "delco" {
            assert!(acc > 0.8, "delco accuracy {acc}");
        }
    }
}

#[test]
fn best_classifier_cannot_be_trained() {
    let dir = tempfile::tempdir().unwrap();
    let train = gen(dir.path(), "train.csv", "blobs", "200", "1");
    let model = dir.path().join("m.json");
    let out = Command::new(env!("CARGO_BIN_EXE_delco"))
        .args(["train", "--data", &train, "--partition", "regions:blobs-2", "--method", "best-classifier", "--out"])
        .arg(&model)
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(!model.exists());
}

#[test]
fn evaluate_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", "moons", "40", "1");
    let out = Command::new(env!("CARGO_BIN_EXE_delco")).args(["evaluate", "--model", &data, "--data", &data]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn simulate_reports_exact_load() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path(), "d.csv", "circles", "300", "5");
    let out = delco(&["simulate", "--data", &data, "--partition", "regions:circles-3", "--grid-points", "11"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let summary = &lines.last().unwrap()["summary"];
    // 3 nodes: 6 peer + 3 coordinator model shares, 9 confusion matrices, 3 class counts, 3 broadcasts, 3 grids
    assert_eq!(lines.len() - 1, 6 + 3 + 9 + 3 + 3 + 3);
    assert_eq!(summary["total_bytes"], summary["predicted_load"]);
    let summed: u64 = lines[..lines.len() - 1].iter().map(|l| l["payload_bytes"].as_u64().unwrap()).sum();
    assert_eq!(summed, summary["total_bytes"].as_u64().unwrap());
}

#[test]
fn reproduce_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("reports");
    let out_dir_s = out_dir.to_string_lossy().into_owned();
    delco(&[
        "reproduce", "table1", "--process", "moons", "--n-train", "200", "--repetitions", "2", "--methods",
        "delco,centralized", "--out-dir", &out_dir_s,
    ]);
    let csv = std::fs::read_to_string(out_dir.join("table1-moons-200.csv")).unwrap();
    assert!(csv.starts_with("method,mean,std,reps"));
    assert_eq!(csv.lines().count(), 3);
    let config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("table1-moons-200.config.json")).unwrap()).unwrap();
    assert_eq!(config["repetitions"], 2);

    let data = gen(dir.path(), "real.csv", "blobs", "600", "9");
    delco(&[
        "reproduce", "table3", "--data", &data, "--nodes", "3", "--shuffles", "1", "--methods", "delco", "--out-dir",
        &out_dir_s,
    ]);
    let csv = std::fs::read_to_string(out_dir.join("table3-real.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("delco,"));
    assert!(csv.lines().nth(1).unwrap().ends_with(",2"));

    delco(&[
        "reproduce", "table4", "--data", &data, "--shuffles", "1", "--methods", "delco,independent-copula",
        "--out-dir", &out_dir_s,
    ]);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("table4-real.json")).unwrap()).unwrap();
    assert!(report["diagnostics"]["lambda_larger_when_cloned"].is_u64());
}

#[test]
fn binarized_labels_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.csv");
    let mut text = String::from("a,b,score\n");
    for i in 0..200 {
        let s = i % 10;
        text.push_str(&format!("{},{},{}\n", s as f64 + 0.1 * (i % 7) as f64, (i % 3) as f64, s));
    }
    std::fs::write(&path, text).unwrap();
    let p = path.to_string_lossy().into_owned();
    let model = dir.path().join("m.json").to_string_lossy().into_owned();
    delco(&[
        "train", "--data", &p, "--label", "score", "--binarize", "threshold:score:5", "--partition", "pca:3", "--out",
        &model,
    ]);
    let out = delco(&["evaluate", "--model", &model, "--data", &p, "--label", "score", "--binarize", "threshold:score:5"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["n"], 200);
}
