use std::path::Path;
use std::process::{Command, Output};

fn droughtcast(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_droughtcast"))
        .args(args)
        .env("DROUGHTCAST_OUT_DIR", out_dir)
        .current_dir(out_dir)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_then_train_persistence() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = droughtcast(tmp.path(), &["synth", "--counties", "3", "--weeks", "120", "--seed", "7", "--out", "d.csv", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("d.csv").exists());
    let o = droughtcast(tmp.path(), &["train", "--model", "persistence", "--input", "d.csv", "--window", "12", "--horizon", "4", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run = out.join("persistence_m12_n4");
    for f in ["metrics.json", "manifest.txt", "classification_report.csv", "category_analysis.csv", "county_metrics.csv", "horizon_drift.csv"] {
        assert!(run.join(f).exists(), "{f}");
    }
    let o = droughtcast(tmp.path(), &["report", run.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("macro F1"));
}

#[test]
fn environment_sets_default_out_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let o = droughtcast(tmp.path(), &["synth", "--counties", "1", "--weeks", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("synth.csv").exists());
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = droughtcast(tmp.path(), &["train", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(droughtcast(tmp.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn stage_errors_are_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = droughtcast(tmp.path(), &["train", "--input", "missing.csv"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["stage"], "ingest");
    assert!(v["error"].as_str().unwrap().contains("missing.csv"));

    let o = droughtcast(tmp.path(), &["train", "--set", "boost.max_depth=zero"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(v["stage"], "config");
}

#[test]
fn config_file_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.cfg");
    std::fs::write(&cfg, "# small run\nmodel = gradient_boost\nwindow = 6\nhorizon = 2\nsynth.counties = 2\nsynth.weeks = 120\nboost.n_estimators = 5\n").unwrap();
    let o = droughtcast(tmp.path(), &["--config", cfg.to_str().unwrap(), "train", "--horizon", "3", "--run", "r"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = std::fs::read_to_string(tmp.path().join("r/manifest.txt")).unwrap();
    assert!(manifest.contains("model = gradient_boost\n"));
    assert!(manifest.contains("horizon = 3\n"));
    assert!(tmp.path().join("r/model.txt").exists());

    // The manifest doubles as a config file.
    let o = droughtcast(tmp.path(), &["--config", "r/manifest.txt", "train", "--run", "r2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(tmp.path().join("r/metrics.json")).unwrap(), std::fs::read(tmp.path().join("r2/metrics.json")).unwrap());
}

#[test]
fn ingest_window_evaluate_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(droughtcast(tmp.path(), &["synth", "--counties", "2", "--weeks", "100", "--out", "d.csv"]).status.success());
    let o = droughtcast(tmp.path(), &["ingest", "--input", "d.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let weekly = std::fs::read_to_string(tmp.path().join("weekly.csv")).unwrap();
    assert_eq!(weekly.lines().count(), 1 + 2 * 100);

    let o = droughtcast(tmp.path(), &["window", "--input", "d.csv", "--window", "4", "--horizon", "2", "--split", "test"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let windows = std::fs::read_to_string(tmp.path().join("windows.csv")).unwrap();
    // 20 test weeks per county: 20 - 4 - 2 + 1 windows each.
    assert_eq!(windows.lines().count(), 1 + 2 * 15);

    let o = droughtcast(tmp.path(), &["train", "--model", "rf", "--input", "d.csv", "--window", "4", "--horizon", "2", "--set", "forest.n_trees=5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = droughtcast(tmp.path(), &["evaluate", "--run-dir", "random_forest_m4_n2", "--split", "validation"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("random_forest_m4_n2/eval_validation/metrics.json").exists());

    let o = droughtcast(tmp.path(), &["sweep", "--input", "d.csv", "--models", "persistence", "--windows", "4,6", "--horizons", "1,2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = droughtcast(tmp.path(), &["report", "sweep/sweep.csv"]);
    assert!(stdout(&o).contains("persistence macro F1"), "{}", stdout(&o));
}

#[test]
fn gradcheck_passes_for_every_network() {
    let tmp = tempfile::tempdir().unwrap();
    for model in ["lstm", "cnn", "dense"] {
        let o = droughtcast(tmp.path(), &["gradcheck", "--model", model]);
        assert_eq!(o.status.code(), Some(0), "{model}: {}{}", stdout(&o), stderr(&o));
        assert!(stdout(&o).contains("max relative error"));
    }
}
