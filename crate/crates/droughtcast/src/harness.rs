//! End-to-end runs: ingest, split, normalize, window, train, evaluate and
//! write every artifact plus a manifest that reproduces the run.

use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::time::Instant;

use droughtcast_core::evaluation::{evaluate, EvaluationReport};
use droughtcast_core::features::{FEATURE_NAMES, N_FEATURES};
use droughtcast_core::neural::{checkpoint, train, CnnNet, LstmNet, Network, TrainConfig, TrainHistory};
use droughtcast_core::seed::derive;
use droughtcast_core::tree::{
    boost_feature_importance, boost_from_text, boost_to_text, fit_random_forest, forest_feature_importance, forest_from_text, forest_to_text,
    BoostConfig, BoostModel, FeatureImportance, ForestConfig,
};
use droughtcast_core::windowing::{prepare, temporal_split, PreparedData};
use droughtcast_core::{CountySeries, TrainedModel, WindowSet};

use crate::config::{DataSource, ExperimentConfig, ModelKind};
use crate::error::{Error, Result, Stage, StageExt};
use crate::formats::{self, CellMetrics, ContentHasher, SweepRow};
use crate::ingest::{self, CountyMeta};
use crate::synth::synth_generate;

/// Weekly series plus provenance of the input they came from.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub series: Vec<CountySeries>,
    pub input_sha256: String,
    pub input_bytes: u64,
    pub daily_rows: usize,
    pub dropped_partial_weeks: usize,
}

struct HashingReader<R> {
    inner: R,
    hasher: ContentHasher,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

fn county_table(config: &ExperimentConfig) -> Result<std::collections::BTreeMap<u32, CountyMeta>> {
    match &config.counties {
        None => Ok(ingest::california_counties()),
        Some(path) => Ok(ingest::read_county_meta(fs::File::open(path).map_err(|e| Error::io(path, e))?)?),
    }
}

/// Resolve the configured data source into weekly series.
pub fn load_data(config: &ExperimentConfig) -> Result<LoadedData> {
    let inner = || -> Result<LoadedData> {
        let meta = county_table(config)?;
        match &config.data {
            DataSource::Synth => {
                let bytes = synth_generate(&config.synth)?;
                let report = ingest::ingest_reader(bytes.as_slice(), &meta)?;
                Ok(LoadedData {
                    series: report.series,
                    input_sha256: formats::content_hash(&bytes),
                    input_bytes: bytes.len() as u64,
                    daily_rows: report.daily_rows,
                    dropped_partial_weeks: report.dropped_partial_weeks,
                })
            }
            DataSource::Csv(path) => {
                let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
                let mut reader = HashingReader { inner: BufReader::with_capacity(1 << 20, file), hasher: ContentHasher::new(len) };
                let report = ingest::ingest_reader(&mut reader, &meta)?;
                // Drain anything the CSV reader left unread so the hash covers the file.
                std::io::copy(&mut reader, &mut std::io::sink()).map_err(|e| Error::io(path, e))?;
                let input_sha256 = reader.hasher.finish().ok_or_else(|| Error::Format(format!("{} changed while reading", path.display())))?;
                Ok(LoadedData { series: report.series, input_sha256, input_bytes: len, daily_rows: report.daily_rows, dropped_partial_weeks: report.dropped_partial_weeks })
            }
        }
    };
    let data = inner().stage(Stage::Ingest)?;
    if data.series.is_empty() {
        return Err(Error::Format("no California counties in the input".into())).stage(Stage::Ingest);
    }
    Ok(data)
}

pub fn prepare_data(config: &ExperimentConfig, data: &LoadedData) -> Result<PreparedData> {
    let split = temporal_split(&data.series, &config.split).stage(Stage::Split)?;
    prepare(&split, config.spec, config.normalization).stage(Stage::Window)
}

/// Seeds of the stochastic components, derived from the master seed.
pub mod seeds {
    pub const FOREST: u64 = 1;
    pub const BOOST: u64 = 2;
    pub const NET_INIT: u64 = 3;
    pub const TRAINING: u64 = 4;
}

#[derive(Debug, Clone)]
pub struct Fitted {
    pub model: TrainedModel,
    pub history: Option<TrainHistory>,
    pub importance: Option<FeatureImportance>,
}

fn forest_config(config: &ExperimentConfig) -> ForestConfig {
    ForestConfig { seed: derive(config.seed, &[seeds::FOREST]), ..config.forest }
}

fn boost_config(config: &ExperimentConfig) -> BoostConfig {
    BoostConfig { seed: derive(config.seed, &[seeds::BOOST]), ..config.boost }
}

fn train_config(config: &ExperimentConfig) -> TrainConfig {
    TrainConfig { seed: derive(config.seed, &[seeds::TRAINING]), ..config.train }
}

fn train_net<N: Network>(net: &mut N, config: &ExperimentConfig, data: &PreparedData) -> Result<TrainHistory> {
    let (vx, vy) = (data.validation.design_matrix(), data.validation.label_matrix());
    Ok(train(net, &data.train.design_matrix(), &data.train.label_matrix(), Some((&vx, &vy)), &train_config(config))?)
}

pub fn fit(config: &ExperimentConfig, data: &PreparedData) -> Result<Fitted> {
    let inner = || -> Result<Fitted> {
        if data.train.is_empty() {
            return Err(droughtcast_core::Error::EmptyTraining.into());
        }
        let (x, y) = (data.train.design_matrix(), data.train.label_matrix());
        let init = derive(config.seed, &[seeds::NET_INIT]);
        Ok(match config.model {
            ModelKind::Persistence => Fitted { model: TrainedModel::Persistence { horizon: config.spec.horizon() }, history: None, importance: None },
            ModelKind::RandomForest => {
                let m = fit_random_forest(&x, &y, &forest_config(config))?;
                let importance = forest_feature_importance(&m, &FEATURE_NAMES).ok();
                Fitted { model: TrainedModel::Forest(m), history: None, importance }
            }
            ModelKind::GradientBoost => {
                let m = BoostModel::fit(&x, &y, &boost_config(config))?;
                let importance = boost_feature_importance(&m, &FEATURE_NAMES).ok();
                Fitted { model: TrainedModel::Boost(m), history: None, importance }
            }
            ModelKind::Lstm => {
                let mut net = LstmNet::new(config.lstm_config(N_FEATURES, init))?;
                let history = train_net(&mut net, config, data)?;
                Fitted { model: TrainedModel::Lstm(net), history: Some(history), importance: None }
            }
            ModelKind::Cnn => {
                let mut net = CnnNet::new(config.cnn_config(N_FEATURES, init))?;
                let history = train_net(&mut net, config, data)?;
                Fitted { model: TrainedModel::Cnn(net), history: Some(history), importance: None }
            }
        })
    };
    inner().stage(Stage::Train)
}

pub fn evaluate_on(model: &TrainedModel, set: &WindowSet, config: &ExperimentConfig) -> Result<EvaluationReport> {
    let inner = || -> Result<EvaluationReport> {
        let predicted = model.predict(&set.samples)?;
        Ok(evaluate(&set.label_matrix(), &predicted, &set.fips(), &config.eval)?)
    };
    inner().stage(Stage::Evaluate)
}

/// Files written into a run directory, with their content hashes.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).stage(Stage::Write)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e)).stage(Stage::Write)?;
        self.files.push((name.to_string(), formats::content_hash(bytes)));
        Ok(())
    }
}

fn write_evaluation(out: &mut Artifacts, report: &EvaluationReport, config: &ExperimentConfig, split: &str, n_samples: usize) -> Result<()> {
    out.write("metrics.json", formats::metrics_json(report, config, split, n_samples).as_bytes())?;
    out.write("classification_report.csv", formats::classification_report_csv(report).as_bytes())?;
    out.write("category_analysis.csv", formats::category_analysis_csv(&report.categories).as_bytes())?;
    out.write("county_metrics.csv", formats::county_metrics_csv(&report.counties).as_bytes())?;
    out.write("horizon_drift.csv", formats::horizon_drift_csv(&report.drift).as_bytes())
}

fn checkpoint_manifest(config: &ExperimentConfig, history: &TrainHistory) -> String {
    let mut s = String::from("# parameter checkpoint for model.bin\n");
    s.push_str(&config.to_text());
    s.push_str(&format!("manifest.init_seed = {}\n", derive(config.seed, &[seeds::NET_INIT])));
    s.push_str(&format!("manifest.training_seed = {}\n", derive(config.seed, &[seeds::TRAINING])));
    s.push_str(&format!("manifest.epochs_run = {}\n", history.train_loss.len()));
    s.push_str(&format!("manifest.best_epoch = {}\n", history.best_epoch + 1));
    s.push_str(&format!("manifest.stopped_early = {}\n", history.stopped_early));
    if let Some(v) = history.best_val_loss() {
        s.push_str(&format!("manifest.val_mae = {v}\n"));
    }
    s
}

fn write_model(out: &mut Artifacts, config: &ExperimentConfig, fitted: &Fitted) -> Result<()> {
    match &fitted.model {
        TrainedModel::Persistence { .. } => {}
        TrainedModel::Forest(m) => out.write("model.txt", forest_to_text(m).as_bytes())?,
        TrainedModel::Boost(m) => out.write("model.txt", boost_to_text(m).as_bytes())?,
        TrainedModel::Lstm(n) => out.write("model.bin", &checkpoint::encode(n.params()))?,
        TrainedModel::Cnn(n) => out.write("model.bin", &checkpoint::encode(n.params()))?,
    }
    if let Some(h) = &fitted.history {
        out.write("checkpoint.txt", checkpoint_manifest(config, h).as_bytes())?;
        out.write("training_history.csv", formats::training_history_csv(h).as_bytes())?;
    }
    if let Some(imp) = &fitted.importance {
        out.write("feature_importance.csv", formats::feature_importance_csv(imp).as_bytes())?;
    }
    Ok(())
}

/// Rebuild a trained model from a run directory.
pub fn load_model(config: &ExperimentConfig, dir: &Path) -> Result<TrainedModel> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read(&path).map_err(|e| Error::io(&path, e))
    };
    let text = |name: &str| -> Result<String> { String::from_utf8(read(name)?).map_err(|_| Error::Format(format!("{name} is not UTF-8"))) };
    let inner = || -> Result<TrainedModel> {
        Ok(match config.model {
            ModelKind::Persistence => TrainedModel::Persistence { horizon: config.spec.horizon() },
            ModelKind::RandomForest => TrainedModel::Forest(forest_from_text(&text("model.txt")?)?),
            ModelKind::GradientBoost => TrainedModel::Boost(boost_from_text(&text("model.txt")?)?),
            ModelKind::Lstm => TrainedModel::Lstm(LstmNet::from_params(config.lstm_config(N_FEATURES, 0), checkpoint::decode(&read("model.bin")?)?)?),
            ModelKind::Cnn => TrainedModel::Cnn(CnnNet::from_params(config.cnn_config(N_FEATURES, 0), checkpoint::decode(&read("model.bin")?)?)?),
        })
    };
    let model = inner().stage(Stage::Load)?;
    if model.horizon() != config.spec.horizon() {
        return Err(Error::Format("stored model horizon differs from the manifest".into())).stage(Stage::Load);
    }
    Ok(model)
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: EvaluationReport,
    pub fitted: Fitted,
    pub artifacts: Artifacts,
    pub train_seconds: f64,
    /// Window counts of the train, validation and test sets.
    pub windows: [usize; 3],
}

fn manifest_text(config: &ExperimentConfig, data: &LoadedData, windows: [usize; 3], files: &[(String, String)]) -> String {
    let mut s = String::from("# droughtcast run manifest; usable as a config file to reproduce this run\n");
    s.push_str(&config.to_text());
    s.push_str("manifest.version = 1\n");
    s.push_str(&format!("manifest.input_sha256 = {}\n", data.input_sha256));
    s.push_str(&format!("manifest.input_bytes = {}\n", data.input_bytes));
    s.push_str(&format!("manifest.daily_rows = {}\n", data.daily_rows));
    s.push_str(&format!("manifest.dropped_partial_weeks = {}\n", data.dropped_partial_weeks));
    s.push_str(&format!("manifest.counties = {}\n", data.series.len()));
    for (name, n) in ["train", "validation", "test"].iter().zip(windows) {
        s.push_str(&format!("manifest.{name}_windows = {n}\n"));
    }
    for (name, hash) in files {
        s.push_str(&format!("manifest.output.{name} = {hash}\n"));
    }
    s
}

/// Full run on already-loaded data; artifacts go to `out_dir`.
pub fn run_on(config: &ExperimentConfig, data: &LoadedData, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    let prepared = prepare_data(config, data)?;
    if prepared.test.is_empty() {
        return Err(Error::Format(format!(
            "test split has no windows for window {} + horizon {}",
            config.spec.window(),
            config.spec.horizon()
        )))
        .stage(Stage::Window);
    }
    let started = Instant::now();
    let fitted = fit(config, &prepared)?;
    let train_seconds = started.elapsed().as_secs_f64();
    let report = evaluate_on(&fitted.model, &prepared.test, config)?;
    let windows = [prepared.train.len(), prepared.validation.len(), prepared.test.len()];
    let mut out = Artifacts::new(out_dir)?;
    write_evaluation(&mut out, &report, config, "test", prepared.test.len())?;
    write_model(&mut out, config, &fitted)?;
    let manifest = manifest_text(config, data, windows, &out.files);
    out.write("manifest.txt", manifest.as_bytes())?;
    Ok(RunOutput { report, fitted, artifacts: out, train_seconds, windows })
}

pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    config.validate()?;
    run_on(config, &load_data(config)?, out_dir)
}

pub fn read_manifest(run_dir: &Path) -> Result<(ExperimentConfig, String)> {
    let path = run_dir.join("manifest.txt");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e)).stage(Stage::Load)?;
    let config = ExperimentConfig::from_text(&text)?;
    let hash = text
        .lines()
        .find_map(|l| l.strip_prefix("manifest.input_sha256").and_then(|r| r.trim().strip_prefix('=')).map(|h| h.trim().to_string()))
        .ok_or_else(|| Error::Format("manifest has no input hash".into()))
        .stage(Stage::Load)?;
    Ok((config, hash))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSplit {
    Validation,
    Test,
}

/// Re-evaluate a stored run on one of its splits, writing reports to `out_dir`.
pub fn evaluate_run(run_dir: &Path, split: EvalSplit, out_dir: &Path) -> Result<EvaluationReport> {
    let (config, hash) = read_manifest(run_dir)?;
    let data = load_data(&config)?;
    if data.input_sha256 != hash {
        return Err(Error::Format(format!("input hash {} differs from the manifest's {hash}", data.input_sha256))).stage(Stage::Load);
    }
    let prepared = prepare_data(&config, &data)?;
    let model = load_model(&config, run_dir)?;
    let (set, name) = match split {
        EvalSplit::Validation => (&prepared.validation, "validation"),
        EvalSplit::Test => (&prepared.test, "test"),
    };
    if set.is_empty() {
        return Err(Error::Format(format!("{name} split has no windows"))).stage(Stage::Window);
    }
    let report = evaluate_on(&model, set, &config)?;
    let mut out = Artifacts::new(out_dir)?;
    write_evaluation(&mut out, &report, &config, name, set.len())?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub models: Vec<ModelKind>,
    pub windows: Vec<usize>,
    pub horizons: Vec<usize>,
}

/// Seed of one grid cell.
pub fn cell_seed(master: u64, window: usize, horizon: usize) -> u64 {
    derive(master, &[window as u64, horizon as u64])
}

pub fn cell_dir(out_dir: &Path, model: ModelKind, window: usize, horizon: usize) -> PathBuf {
    out_dir.join(format!("{}_m{window}_n{horizon}", model.name()))
}

/// Every (model, horizon, window) cell on data loaded once. Rows are sorted by
/// model, then horizon, then window; `sweep.csv` is rewritten after each cell
/// so an interrupted sweep keeps its finished rows.
pub fn run_sweep(base: &ExperimentConfig, sweep: &SweepSpec, out_dir: &Path, mut on_row: impl FnMut(&SweepRow, Option<&Error>)) -> Result<Vec<SweepRow>> {
    if sweep.models.is_empty() || sweep.windows.is_empty() || sweep.horizons.is_empty() {
        return Err(Error::Config { line: 0, message: "sweep grid is empty".into() });
    }
    base.validate()?;
    let data = load_data(base)?;
    let mut models = sweep.models.clone();
    models.sort();
    models.dedup();
    let mut horizons = sweep.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let mut windows = sweep.windows.clone();
    windows.sort_unstable();
    windows.dedup();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e)).stage(Stage::Write)?;
    let mut rows = Vec::new();
    for &model in &models {
        for &n in &horizons {
            for &m in &windows {
                let started = Instant::now();
                let dir = cell_dir(out_dir, model, m, n);
                let result = droughtcast_core::WindowSpec::new(m, n).map_err(Error::from).and_then(|spec| {
                    let cfg = ExperimentConfig { model, spec, seed: cell_seed(base.seed, m, n), ..base.clone() };
                    run_on(&cfg, &data, &dir)
                });
                let seconds = started.elapsed().as_secs_f64();
                let (metrics, err) = match result {
                    Ok(r) => (
                        Some(CellMetrics { macro_f1: r.report.classification.macro_f1, mse: r.report.regression.mse, mae: r.report.regression.mae }),
                        None,
                    ),
                    Err(e) => {
                        let _ = fs::create_dir_all(&dir).and_then(|()| fs::write(dir.join("error.txt"), format!("{e}\n")));
                        (None, Some(e))
                    }
                };
                let row = SweepRow { model, window: m, horizon: n, metrics, seconds };
                on_row(&row, err.as_ref());
                rows.push(row);
                let path = out_dir.join("sweep.csv");
                fs::write(&path, formats::sweep_csv(&rows)).map_err(|e| Error::io(&path, e)).stage(Stage::Write)?;
            }
        }
    }
    Ok(rows)
}
