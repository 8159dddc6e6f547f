use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_maskdiff");

const SMALL: &str = r#"{
  "schema_version": 1,
  "model": {"embed_dim": 16, "hidden_dim": 32, "n_layers": 2},
  "train": {"epochs": 2},
  "synthetic": {"n_train": 300, "n_test_nominal": 80, "n_test_anomalous": 80,
                "n_mc": 50, "n_trials": 100, "n_mean_views": 1000, "bound_sizes": [4]}
}"#;

fn run(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("cfg.json");
    if !cfg.exists() {
        std::fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(BIN)
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn error_line(out: &Output) -> serde_json::Value {
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().expect("no error line");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

fn pipeline(dir: &Path) {
    ok(dir, &["synth", "generate"]);
    ok(dir, &["train"]);
    for m in ["parametric", "kernel", "knn"] {
        ok(dir, &["score", "--method", m]);
    }
}

#[test]
fn synthetic_pipeline_emits_metrics() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    for m in ["parametric", "kernel", "knn"] {
        let stdout = ok(dir.path(), &["eval", "--method", m]);
        assert_eq!(stdout.lines().count(), 2, "{stdout}");
        let text = std::fs::read_to_string(dir.path().join(format!("metrics_{m}.json"))).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let auc = v["roc_auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert_eq!(v["n_test"], 160);
        assert_eq!(v["method"], m);
    }
    let trace = std::fs::read_to_string(dir.path().join("loss_trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 4);
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline(a.path());
    pipeline(b.path());
    for f in ["model.ckpt", "scores_parametric.csv", "scores_kernel.csv", "scores_knn.csv", "test.csv"] {
        let (x, y) = (
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
        );
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn seed_flag_changes_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(a.path(), &["synth", "generate"]);
    ok(b.path(), &["--seed", "9", "synth", "generate"]);
    let (x, y) = (
        std::fs::read(a.path().join("train.csv")).unwrap(),
        std::fs::read(b.path().join("train.csv")).unwrap(),
    );
    assert_ne!(x, y);
}

#[test]
fn mismatched_encoding_names_the_feature() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "generate"]);
    ok(d, &["train"]);
    let path = d.join("encoding.json");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    doc["features"][3]["cardinality"] = 3.into();
    let bad = d.join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let out = run(d, &["score", "--method", "parametric", "--encoding", bad.to_str().unwrap()]);
    let err = error_line(&out);
    assert_eq!(err["status"], "error");
    assert_eq!(err["command"], "score");
    assert!(err["error"].as_str().unwrap().contains("`x3`"), "{err}");
}

#[test]
fn missing_input_fails_with_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let err = error_line(&run(dir.path(), &["score", "--method", "kernel"]));
    assert!(err["error"].as_str().unwrap().contains("encoding.json"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.json"), r#"{"schema_version": 1, "trian": {}}"#).unwrap();
    let err = error_line(&run(dir.path(), &["synth", "generate"]));
    assert!(err["error"].as_str().unwrap().contains("trian"), "{err}");
}

#[test]
fn preprocess_then_score_raw_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut csv = String::from("colour,size,weight,label\n");
    for i in 0..80 {
        let label = u8::from(i % 10 == 0);
        let colour = if label == 1 { "purple" } else { ["red", "blue"][i % 2] };
        csv += &format!("{colour},{},{}.25,{label}\n", ["S", "M", "L"][i % 3], i % 5);
    }
    let raw = d.join("raw.csv");
    std::fs::write(&raw, csv).unwrap();
    let stdout = ok(d, &["preprocess", raw.to_str().unwrap()]);
    assert!(stdout.starts_with("preprocess: 80 rows, 3 features"), "{stdout}");
    ok(d, &["score", "--method", "kernel", "--threshold", "0.5"]);
    let scores = std::fs::read_to_string(d.join("scores_kernel.csv")).unwrap();
    assert!(scores.lines().skip(1).all(|l| l.ends_with(",0") || l.ends_with(",1")));
    ok(d, &["eval", "--method", "kernel"]);
}

#[test]
fn alpha_calibration_needs_held_out_rows() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "generate"]);
    let err = error_line(&run(d, &["score", "--method", "knn", "--alpha", "0.05"]));
    assert!(err["error"].as_str().unwrap().contains("--calibration"), "{err}");
    let train = d.join("train.csv");
    let stdout = ok(
        d,
        &["score", "--method", "knn", "--alpha", "0.05", "--calibration", train.to_str().unwrap()],
    );
    assert!(stdout.contains("threshold"), "{stdout}");
}

#[test]
fn synthetic_experiments_write_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "heatmap", "--estimator", "oracle"]);
    let heat = std::fs::read_to_string(d.join("heatmap_oracle.csv")).unwrap();
    // 11 mixture weights x 4 mask rates, plus the header.
    assert_eq!(heat.lines().count(), 45);
    let stdout = ok(d, &["synth", "bounds"]);
    assert!(stdout.contains("0 violations"), "{stdout}");
    assert!(d.join("bounds_L4.csv").exists());
}
