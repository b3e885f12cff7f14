use std::fs;
use std::path::Path;

use droughtcast::formats::{parse_sweep_csv, FAILED};
use droughtcast::harness::{self, cell_dir, EvalSplit, SweepSpec};
use droughtcast::synth::SynthSpec;
use droughtcast::{ExperimentConfig, ModelKind};
use droughtcast_core::seed;
use droughtcast_core::WindowSpec;
use rand::Rng;

fn small(model: ModelKind, m: usize, n: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        model,
        spec: WindowSpec::new(m, n).unwrap(),
        synth: SynthSpec { n_counties: 3, n_weeks: 160, seed: 5, ..SynthSpec::default() },
        seed: 42,
        ..ExperimentConfig::default()
    };
    cfg.forest.n_trees = 12;
    cfg.boost.n_estimators = 15;
    cfg.lstm.layer1_units = 6;
    cfg.lstm.layer2_units = 4;
    cfg.cnn.filters = 4;
    cfg.cnn.dense_units = 5;
    cfg.train.epochs = 3;
    cfg.train.batch_size = 32;
    cfg
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_config_twice_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    for model in ModelKind::ALL {
        let cfg = small(model, 6, 3);
        let a = tmp.path().join(format!("{}_a", model.name()));
        let b = tmp.path().join(format!("{}_b", model.name()));
        harness::run_experiment(&cfg, &a).unwrap();
        harness::run_experiment(&cfg, &b).unwrap();
        let (fa, fb) = (read_dir_sorted(&a), read_dir_sorted(&b));
        assert!(fa.iter().any(|(n, _)| n == "manifest.txt") && fa.iter().any(|(n, _)| n == "metrics.json"));
        assert_eq!(fa, fb, "{}", model.name());
    }
}

#[test]
fn persistence_needs_no_training() {
    let tmp = tempfile::tempdir().unwrap();
    let out = harness::run_experiment(&small(ModelKind::Persistence, 8, 4), tmp.path()).unwrap();
    assert!(out.fitted.history.is_none());
    assert!(out.train_seconds < 0.05);
}

#[test]
fn degenerate_dynamics_give_perfect_persistence() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(ModelKind::Persistence, 4, 2);
    cfg.synth = SynthSpec { ar: 1.0, temp_coupling: 0.0, precip_coupling: 0.0, noise_scale: 0.0, ..cfg.synth };
    let out = harness::run_experiment(&cfg, tmp.path()).unwrap();
    assert_eq!(out.report.regression.mae, 0.0);
}

#[test]
fn manifest_reproduces_a_random_sweep_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let base = small(ModelKind::Persistence, 4, 2);
    let sweep = SweepSpec { models: vec![ModelKind::GradientBoost, ModelKind::Lstm], windows: vec![4, 8], horizons: vec![2, 3] };
    let rows = harness::run_sweep(&base, &sweep, tmp.path(), |_, e| assert!(e.is_none())).unwrap();
    assert_eq!(rows.len(), 8);

    let mut r = seed::rng(seed::derive(base.seed, &[0xce11]));
    let row = &rows[r.random_range(0..rows.len())];
    let dir = cell_dir(tmp.path(), row.model, row.window, row.horizon);
    let (cfg, _) = harness::read_manifest(&dir).unwrap();
    let again = tmp.path().join("rerun");
    harness::run_experiment(&cfg, &again).unwrap();
    assert_eq!(read_dir_sorted(&dir), read_dir_sorted(&again));
}

#[test]
fn sweep_rows_sorted_and_failures_marked() {
    let tmp = tempfile::tempdir().unwrap();
    let base = small(ModelKind::Persistence, 4, 2);
    let sweep = SweepSpec { models: vec![ModelKind::GradientBoost, ModelKind::Persistence], windows: vec![500, 6, 4], horizons: vec![3, 1] };
    let mut failures = 0;
    let rows = harness::run_sweep(&base, &sweep, tmp.path(), |_, e| failures += usize::from(e.is_some())).unwrap();
    assert_eq!(rows.len(), 12);
    assert_eq!(failures, 4);
    let keys: Vec<_> = rows.iter().map(|r| (r.model, r.horizon, r.window)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    let text = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "model,window,horizon,macro_f1,mse,mae,seconds");
    assert_eq!(text.lines().filter(|l| l.contains(FAILED)).count(), 4);
    let parsed = parse_sweep_csv(&text).unwrap();
    assert_eq!(parsed.len(), 12);
    for (a, b) in parsed.iter().zip(&rows) {
        assert_eq!((a.model, a.window, a.horizon), (b.model, b.window, b.horizon));
        assert_eq!(a.metrics, b.metrics);
        if let Some(m) = a.metrics {
            assert!(m.macro_f1.is_finite() && m.mse.is_finite() && m.mae.is_finite());
        }
    }
    assert!(cell_dir(tmp.path(), ModelKind::Persistence, 500, 1).join("error.txt").exists());
}

#[test]
fn single_cell_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let sweep = SweepSpec { models: vec![ModelKind::Persistence], windows: vec![12], horizons: vec![4] };
    assert_eq!(harness::run_sweep(&small(ModelKind::Persistence, 4, 2), &sweep, tmp.path(), |_, _| {}).unwrap().len(), 1);
    let empty = SweepSpec { models: vec![ModelKind::Persistence], windows: vec![], horizons: vec![4] };
    assert!(harness::run_sweep(&small(ModelKind::Persistence, 4, 2), &empty, tmp.path(), |_, _| {}).is_err());
}

#[test]
fn stored_models_re_evaluate_identically() {
    let tmp = tempfile::tempdir().unwrap();
    for model in ModelKind::ALL {
        let dir = tmp.path().join(model.name());
        harness::run_experiment(&small(model, 5, 2), &dir).unwrap();
        let eval = dir.join("eval");
        harness::evaluate_run(&dir, EvalSplit::Test, &eval).unwrap();
        for f in ["metrics.json", "classification_report.csv", "county_metrics.csv"] {
            assert_eq!(fs::read(dir.join(f)).unwrap(), fs::read(eval.join(f)).unwrap(), "{} {f}", model.name());
        }
    }
}

#[test]
fn changed_input_is_detected() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("d.csv");
    let mut cfg = small(ModelKind::Persistence, 4, 2);
    fs::write(&csv, droughtcast::synth::synth_generate(&cfg.synth).unwrap()).unwrap();
    cfg.data = droughtcast::DataSource::Csv(csv.clone());
    let dir = tmp.path().join("run");
    harness::run_experiment(&cfg, &dir).unwrap();
    fs::write(&csv, droughtcast::synth::synth_generate(&SynthSpec { seed: 6, ..cfg.synth }).unwrap()).unwrap();
    assert!(harness::evaluate_run(&dir, EvalSplit::Test, &dir.join("eval")).is_err());
}

#[test]
fn lstm_report_has_one_drift_row_per_week() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small(ModelKind::Lstm, 30, 12);
    cfg.synth.n_weeks = 260;
    cfg.train.epochs = 1;
    let out = harness::run_experiment(&cfg, tmp.path()).unwrap();
    assert_eq!(out.report.drift.len(), 12);
    let drift = fs::read_to_string(tmp.path().join("horizon_drift.csv")).unwrap();
    assert_eq!(drift.lines().count(), 13);
    let history = fs::read_to_string(tmp.path().join("training_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 2);
}

#[test]
fn boost_ranks_lagged_score_first() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig { model: ModelKind::GradientBoost, spec: WindowSpec::new(6, 2).unwrap(), ..ExperimentConfig::default() };
    cfg.synth = SynthSpec { n_counties: 10, n_weeks: 500, ..SynthSpec::default() };
    let out = harness::run_experiment(&cfg, tmp.path()).unwrap();
    let imp = out.fitted.importance.unwrap();
    assert_eq!(imp.ranked()[0].0, "score");
    let csv = fs::read_to_string(tmp.path().join("feature_importance.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("score,"));
}
