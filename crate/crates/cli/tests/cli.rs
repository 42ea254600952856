use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_grpboost");

fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic.cfg")
}

fn grpboost(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env("RUST_LOG", "warn").output().expect("spawn grpboost")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = grpboost(dir, args);
    assert!(out.status.success(), "grpboost {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn run_pipeline(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    std::fs::copy(repo_config(), dir.join("synthetic.cfg")).unwrap();
    ok(dir, &["synth-data", "--out", "raw", "--seed", "7"]);
    ok(dir, &["preprocess", "--config", "synthetic.cfg"]);
    let th = ok(dir, &["thresholds", "--config", "synthetic.cfg"]);
    assert!(String::from_utf8_lossy(&th.stdout).contains("q_prime"));
    ok(dir, &["fit", "--config", "synthetic.cfg"]);
    ok(
        dir,
        &[
            "evaluate",
            "--bundle",
            "out/bundle.json",
            "--data",
            "processed",
            "--test-range",
            "2014-01-01..2019-12-31",
            "--seed",
            "3",
            "--n-sim",
            "200",
            "--n-perm",
            "500",
            "--n-boot",
            "50",
            "--out",
            "eval",
        ],
    );
    ok(dir, &["explain", "--bundle", "out/bundle.json", "--data", "processed", "--submodel", "dep", "--out", "shap"]);
    ok(
        dir,
        &[
            "simulate",
            "--bundle",
            "out/bundle.json",
            "--data",
            "processed",
            "--day",
            "2016-07-01",
            "-n",
            "20",
            "--seed",
            "5",
            "--out",
            "sim.csv",
        ],
    );
    snapshot(dir)
}

#[test]
fn synthetic_pipeline_is_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    for name in [
        "processed/dataset.json",
        "out/thresholds.json",
        "out/bundle.json",
        "out/cv_occ.csv",
        "out/cv_dep.svg",
        "eval/summary.json",
        "eval/brier.csv",
        "eval/roc.csv",
        "eval/extremogram.svg",
        "shap/shap_map.csv",
        "sim.csv",
    ] {
        assert!(first.contains_key(Path::new(name)), "missing artifact {name}");
    }
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (path, bytes) in &first {
        assert!(bytes == &second[path], "{} differs between runs", path.display());
    }

    let summary: serde_json::Value = serde_json::from_slice(&first[Path::new("eval/summary.json")]).unwrap();
    let auc = summary["roc"]["auc"].as_f64().unwrap();
    assert!(auc > 0.5 && auc <= 1.0, "auc {auc}");
    let sim = String::from_utf8(first[Path::new("sim.csv")].clone()).unwrap();
    assert_eq!(sim.lines().count(), 21);
}

#[test]
fn commands_on_a_fitted_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::copy(repo_config(), d.join("synthetic.cfg")).unwrap();
    ok(d, &["synth-data", "--out", "raw", "--seed", "11"]);
    ok(d, &["preprocess", "--config", "synthetic.cfg"]);
    ok(d, &["fit", "--config", "synthetic.cfg"]);
    ok(
        d,
        &[
            "simulate",
            "--bundle",
            "out/bundle.json",
            "--data",
            "processed",
            "--day",
            "2016-07-01",
            "-n",
            "0",
            "--seed",
            "1",
            "--out",
            "empty.csv",
        ],
    );
    let text = std::fs::read_to_string(d.join("empty.csv")).unwrap();
    let header: Vec<String> =
        ["scenario", "risk"].iter().map(|s| s.to_string()).chain((0..40).map(|i| format!("y_{i}"))).collect();
    assert_eq!(text, header.join(",") + "\n");

    let pred = ok(d, &["predict", "--bundle", "out/bundle.json", "--data", "processed", "--day", "2016-07-01"]);
    let v: serde_json::Value = serde_json::from_slice(&pred.stdout).unwrap();
    assert_eq!(v["theta_int"].as_array().unwrap().len(), 40);
    let p = v["p_occ"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);

    // Negative upper-bound corrections make the predicted GPD scale negative.
    let mut bundle: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("out/bundle.json")).unwrap()).unwrap();
    for m in bundle["thresholds"]["m"].as_array_mut().unwrap() {
        *m = serde_json::json!(-1e6);
    }
    std::fs::write(d.join("broken.json"), serde_json::to_string(&bundle).unwrap()).unwrap();
    let out = grpboost(
        d,
        &[
            "simulate",
            "--bundle",
            "broken.json",
            "--data",
            "processed",
            "--day",
            "2016-07-01",
            "-n",
            "3",
            "--seed",
            "1",
            "--out",
            "x.csv",
        ],
    );
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"]["class"], "numeric");
    assert!(!d.join("x.csv").exists());
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.cfg"), "model.target_region = 0\nmodel.nonsense = 1\n").unwrap();
    let out = grpboost(d, &["fit", "--config", "a.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"]["class"], "config");
    assert!(err["error"]["message"].as_str().unwrap().contains("model.nonsense"));

    std::fs::write(d.join("b.cfg"), "seed = 0\n").unwrap();
    let out = grpboost(d, &["thresholds", "--config", "b.cfg"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("model.target_region"));

    let out = grpboost(d, &["simulate", "--bundle", "x.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["class"], "config");
}

#[test]
fn data_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = grpboost(d, &["predict", "--bundle", "missing.json", "--data", "nowhere", "--day", "2000-01-01"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["error"]["class"], "data");

    std::fs::write(d.join("c.cfg"), "model.target_region = 0\n").unwrap();
    let out = grpboost(d, &["preprocess", "--config", "c.cfg"]);
    assert_eq!(out.status.code(), Some(3));
}
