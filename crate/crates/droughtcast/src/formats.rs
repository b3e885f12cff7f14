//! Text file formats: CSV reports, metrics JSON, windowed datasets and the
//! git-style content hash used in manifests.
//!
//! Floats are written in Rust's shortest round-trip form so files are
//! byte-identical across runs and parse back to the same values.

use droughtcast_core::evaluation::{CategoryAnalysisRow, CountyBreakdown, DriftRow, EvaluationReport};
use droughtcast_core::features::FEATURE_NAMES;
use droughtcast_core::neural::TrainHistory;
use droughtcast_core::tree::FeatureImportance;
use droughtcast_core::{CountySeries, WindowSet};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::{Error, Result};

/// SHA-256 over `"blob <len>\0" + bytes`, as git computes object ids.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()));
    h.update(bytes);
    hex(&h.finalize())
}

/// Incremental form of [`content_hash`] for inputs too large to buffer.
pub struct ContentHasher {
    inner: Sha256,
    expected: u64,
    seen: u64,
}

impl ContentHasher {
    pub fn new(len: u64) -> Self {
        let mut inner = Sha256::new();
        inner.update(format!("blob {len}\0"));
        Self { inner, expected: len, seen: 0 }
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.seen += bytes.len() as u64;
        self.inner.update(bytes);
    }

    /// `None` if the byte count differs from the announced length.
    pub fn finish(self) -> Option<String> {
        (self.seen == self.expected).then(|| hex(&self.inner.finalize()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is UTF-8")
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn classification_report_csv(report: &EvaluationReport) -> String {
    let c = &report.classification;
    let total = c.classes[0].support + c.classes[1].support;
    let mut rows: Vec<Vec<String>> = c
        .classes
        .iter()
        .enumerate()
        .map(|(k, m)| vec![k.to_string(), num(m.precision), num(m.recall), num(m.f1), m.support.to_string()])
        .collect();
    let macro_p = (c.classes[0].precision + c.classes[1].precision) / 2.0;
    let macro_r = (c.classes[0].recall + c.classes[1].recall) / 2.0;
    rows.push(vec!["macro avg".into(), num(macro_p), num(macro_r), num(c.macro_f1), total.to_string()]);
    let w = |f: fn(&droughtcast_core::evaluation::ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            c.classes.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };
    rows.push(vec!["weighted avg".into(), num(w(|m| m.precision)), num(w(|m| m.recall)), num(c.weighted_f1), total.to_string()]);
    csv_text(&["class", "precision", "recall", "f1", "support"], rows)
}

pub fn category_analysis_csv(rows: &[CategoryAnalysisRow]) -> String {
    csv_text(
        &["category", "over_count", "over_pct", "under_count", "under_pct", "incorrect", "total", "accuracy", "negative_predictions"],
        rows.iter().map(|r| {
            vec![
                r.category.to_string(),
                r.over_count.to_string(),
                num(r.over_pct),
                r.under_count.to_string(),
                num(r.under_pct),
                r.incorrect.to_string(),
                r.total.to_string(),
                num(r.accuracy),
                r.negative_predictions.to_string(),
            ]
        }),
    )
}

/// One row per county in fips order, then the statewide row (fips 0).
pub fn county_metrics_csv(b: &CountyBreakdown) -> String {
    csv_text(
        &["fips", "macro_f1", "mae", "mse", "severe_ratio", "n_samples"],
        b.counties.iter().chain(std::iter::once(&b.statewide)).map(|c| {
            vec![c.fips.to_string(), num(c.macro_f1), num(c.mae), num(c.mse), num(c.severe_ratio), c.n_samples.to_string()]
        }),
    )
}

pub fn horizon_drift_csv(rows: &[DriftRow]) -> String {
    csv_text(
        &["step", "mean_actual", "mean_predicted", "mean_abs_discrepancy"],
        rows.iter().map(|r| vec![r.step.to_string(), num(r.mean_actual), num(r.mean_predicted), num(r.mean_abs_discrepancy)]),
    )
}

/// Features ranked by weight (ties by name).
pub fn feature_importance_csv(imp: &FeatureImportance) -> String {
    csv_text(&["feature", "weight"], imp.ranked().into_iter().map(|(name, w)| vec![name.to_string(), num(w)]))
}

pub fn training_history_csv(h: &TrainHistory) -> String {
    csv_text(
        &["epoch", "train_mae", "val_mae"],
        h.train_loss.iter().enumerate().map(|(i, t)| vec![(i + 1).to_string(), num(*t), h.val_loss.get(i).map_or_else(String::new, |v| num(*v))]),
    )
}

/// Pooled metrics, per-step errors and the run configuration.
pub fn metrics_json(report: &EvaluationReport, config: &ExperimentConfig, split: &str, n_samples: usize) -> String {
    let c = &report.classification;
    let class = |k: usize| {
        json!({
            "precision": c.classes[k].precision,
            "recall": c.classes[k].recall,
            "f1": c.classes[k].f1,
            "support": c.classes[k].support,
        })
    };
    let mut v = json!({
        "model": config.model.name(),
        "split": split,
        "window": config.spec.window(),
        "horizon": config.spec.horizon(),
        "seed": config.seed,
        "normalization": config.normalization_name(),
        "severe_threshold": config.eval.severe_threshold,
        "n_samples": n_samples,
        "mse": report.regression.mse,
        "mae": report.regression.mae,
        "macro_f1": c.macro_f1,
        "weighted_f1": c.weighted_f1,
        "classes": { "0": class(0), "1": class(1) },
        "severe_ratio_correlation": report.severe_ratio_correlation,
        "per_step": report.per_step.iter().enumerate().map(|(k, m)| json!({"step": k + 1, "mse": m.mse, "mae": m.mae})).collect::<Vec<_>>(),
        "config": Value::Object(config.to_pairs().into_iter().map(|(k, v)| (k.to_string(), Value::String(v))).collect()),
    });
    if config.model.is_neural() {
        v["training"] = json!({
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
            "learning_rate": config.train.learning_rate,
            "hyperparameter_source": if config.training_is_default() { "toolkit_default" } else { "configured" },
        });
    }
    let mut s = serde_json::to_string_pretty(&v).expect("metrics serialize");
    s.push('\n');
    s
}

/// Weekly records after ingestion, one row per county-week.
pub fn weekly_csv(series: &[CountySeries]) -> String {
    let mut header = vec!["fips", "week_index", "week_end", "score", "month", "latitude", "longitude"];
    header.extend(droughtcast_core::features::WEATHER_VARIABLES);
    csv_text(
        &header,
        series.iter().flat_map(|s| s.weeks.iter()).map(|w| {
            let mut r = vec![
                w.fips.to_string(),
                w.week_index.to_string(),
                w.week_end.to_string(),
                num(w.score),
                w.month.to_string(),
                num(w.latitude),
                num(w.longitude),
            ];
            r.extend(w.weather.iter().map(|v| num(*v)));
            r
        }),
    )
}

fn window_header(window: usize, n_features: usize, horizon: usize) -> Vec<String> {
    let mut h = vec!["fips".to_string(), "anchor".to_string()];
    for t in 0..window {
        for f in 0..n_features {
            let name = FEATURE_NAMES.get(f).map_or_else(|| format!("f{f}"), |n| (*n).to_string());
            h.push(format!("t{t:02}_{name}"));
        }
    }
    h.extend((1..=horizon).map(|k| format!("y{k:02}")));
    h
}

/// One row per sample: fips, anchor week, `window x F` features (oldest week
/// first, features in order within a week), then `horizon` labels.
pub fn windowed_csv(set: &WindowSet) -> String {
    let header = window_header(set.spec.window(), set.n_features, set.spec.horizon());
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_text(
        &refs,
        set.samples.iter().map(|s| {
            let mut r = vec![s.fips.to_string(), s.anchor.to_string()];
            r.extend(s.features.iter().chain(&s.labels).map(|v| num(*v)));
            r
        }),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowRow {
    pub fips: u32,
    pub anchor: u32,
    pub features: Vec<f64>,
    pub labels: Vec<f64>,
}

/// Parse [`windowed_csv`] output; the horizon is read from the `y..` columns.
pub fn parse_windowed_csv(text: &str) -> Result<Vec<WindowRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers()?.clone();
    let horizon = header.iter().filter(|h| h.starts_with('y')).count();
    let width = header.len().checked_sub(2 + horizon).ok_or_else(|| Error::Format("windowed CSV header too short".into()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let bad = |what: &str| Error::Format(format!("windowed CSV line {}: bad {what}", rec.position().map_or(0, csv::Position::line)));
        let vals: Vec<f64> = rec.iter().skip(2).map(str::parse).collect::<std::result::Result<_, _>>().map_err(|_| bad("number"))?;
        if vals.len() != width + horizon {
            return Err(bad("field count"));
        }
        out.push(WindowRow {
            fips: rec[0].parse().map_err(|_| bad("fips"))?,
            anchor: rec[1].parse().map_err(|_| bad("anchor"))?,
            features: vals[..width].to_vec(),
            labels: vals[width..].to_vec(),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMetrics {
    pub macro_f1: f64,
    pub mse: f64,
    pub mae: f64,
}

/// One sweep grid cell; `metrics` is `None` for a failed cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub model: ModelKind,
    pub window: usize,
    pub horizon: usize,
    pub metrics: Option<CellMetrics>,
    pub seconds: f64,
}

pub const FAILED: &str = "failed";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    csv_text(
        &["model", "window", "horizon", "macro_f1", "mse", "mae", "seconds"],
        rows.iter().map(|r| {
            let mut v = vec![r.model.name().to_string(), r.window.to_string(), r.horizon.to_string()];
            match r.metrics {
                Some(m) => v.extend([num(m.macro_f1), num(m.mse), num(m.mae)]),
                None => v.extend([FAILED.into(), FAILED.into(), FAILED.into()]),
            }
            v.push(format!("{:.3}", r.seconds));
            v
        }),
    )
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, csv::Position::line);
        let bad = |what: &str| Error::Format(format!("sweep CSV line {line}: bad {what}"));
        if rec.len() != 7 {
            return Err(bad("field count"));
        }
        let f = |i: usize| rec[i].parse::<f64>().map_err(|_| bad(&rec[i]));
        let metrics = if &rec[3] == FAILED { None } else { Some(CellMetrics { macro_f1: f(3)?, mse: f(4)?, mae: f(5)? }) };
        rows.push(SweepRow {
            model: rec[0].parse().map_err(|e: String| Error::Format(e))?,
            window: rec[1].parse().map_err(|_| bad("window"))?,
            horizon: rec[2].parse().map_err(|_| bad("horizon"))?,
            metrics,
            seconds: f(6)?,
        });
    }
    Ok(rows)
}

/// Macro-F1 tables per model: one row per horizon, one column per window.
/// Values are rounded for display only; `sweep.csv` keeps full precision.
pub fn sweep_pivot(rows: &[SweepRow]) -> String {
    use std::collections::{BTreeMap, BTreeSet};
    let mut models: BTreeMap<ModelKind, BTreeMap<(usize, usize), Option<f64>>> = BTreeMap::new();
    for r in rows {
        models.entry(r.model).or_default().insert((r.horizon, r.window), r.metrics.map(|m| m.macro_f1));
    }
    let mut s = String::new();
    for (model, cells) in &models {
        let windows: BTreeSet<usize> = cells.keys().map(|k| k.1).collect();
        let horizons: BTreeSet<usize> = cells.keys().map(|k| k.0).collect();
        s.push_str(&format!("{} macro F1\n{:>6}", model.name(), "n\\m"));
        for m in &windows {
            s.push_str(&format!(" {m:>6}"));
        }
        s.push('\n');
        for n in &horizons {
            s.push_str(&format!("{n:>6}"));
            for m in &windows {
                let cell = match cells.get(&(*n, *m)) {
                    Some(Some(f)) => format!("{f:.3}"),
                    Some(None) => FAILED.to_string(),
                    None => "-".to_string(),
                };
                s.push_str(&format!(" {cell:>6}"));
            }
            s.push('\n');
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn git_style_hash() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(content_hash(b"hello\n"), "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4");
        let mut h = ContentHasher::new(6);
        h.update(b"hel");
        h.update(b"lo\n");
        assert_eq!(h.finish().unwrap(), content_hash(b"hello\n"));
        assert!(ContentHasher::new(3).finish().is_none());
    }

    #[test]
    fn sweep_round_trip_with_failure() {
        let rows = vec![
            SweepRow { model: ModelKind::GradientBoost, window: 12, horizon: 4, metrics: Some(CellMetrics { macro_f1: 0.9, mse: 0.1, mae: 0.2 }), seconds: 1.5 },
            SweepRow { model: ModelKind::Lstm, window: 52, horizon: 16, metrics: None, seconds: 0.0 },
        ];
        let text = sweep_csv(&rows);
        assert!(text.starts_with("model,window,horizon,macro_f1,mse,mae,seconds\n"));
        assert!(text.contains("lstm,52,16,failed,failed,failed,0.000"));
        assert_eq!(parse_sweep_csv(&text).unwrap(), rows);
    }
}
