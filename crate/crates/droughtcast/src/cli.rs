//! The `droughtcast` command line.
//!
//! Settings are layered: built-in defaults, then `--config FILE`, then
//! `--set key=value` pairs, then the subcommand's own flags. Relative output
//! paths resolve under the output directory (`--out-dir`, else
//! `$DROUGHTCAST_OUT_DIR`, else `droughtcast-out`). Failures print one JSON
//! object, `{"error": ..., "stage": ...}`, to stderr; usage errors exit 2 and
//! everything else exits 1.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use droughtcast_core::neural::{gradient_check, random_problem, CnnConfig, CnnNet, DenseNet, GradCheckConfig, GradCheckReport, LstmConfig, LstmNet};
use droughtcast_core::seed;
use droughtcast_core::WindowSpec;

use crate::config::{DataSource, ExperimentConfig, ModelKind};
use crate::error::{Error, Result, Stage, StageExt};
use crate::formats;
use crate::harness::{self, EvalSplit, SweepSpec};
use crate::synth::write_synth_csv;

pub const OUT_DIR_ENV: &str = "DROUGHTCAST_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "droughtcast-out";

#[derive(Debug, Parser)]
#[command(name = "droughtcast", version, about = "Weekly drought-score forecasting: data prep, training, evaluation and sweeps")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; every stochastic component derives its stream from it
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config file (key = value lines)
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory that receives every output file
    #[arg(long, global = true, value_name = "DIR", env = OUT_DIR_ENV, default_value = DEFAULT_OUT_DIR)]
    pub out_dir: PathBuf,
    /// Override one config key; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Daily CSV to read; without it the synthetic generator supplies data
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// County centroid table (fips,name,latitude,longitude)
    #[arg(long, value_name = "CSV")]
    pub counties: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpecArgs {
    /// Window length m in weeks
    #[arg(long)]
    pub window: Option<usize>,
    /// Forecast horizon n in weeks
    #[arg(long)]
    pub horizon: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GradModel {
    Lstm,
    Cnn,
    Dense,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic daily CSV in the ingest schema
    Synth {
        /// Output CSV
        #[arg(long, default_value = "synth.csv")]
        out: PathBuf,
        /// Number of counties (at most 58)
        #[arg(long)]
        counties: Option<usize>,
        /// Number of weekly score releases per county
        #[arg(long)]
        weeks: Option<usize>,
    },
    /// Aggregate a daily CSV to weekly county series
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Output weekly CSV
        #[arg(long, default_value = "weekly.csv")]
        out: PathBuf,
    },
    /// Split, normalize and window the data, writing one split's samples
    Window {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecArgs,
        /// Which split to write
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        /// Output CSV
        #[arg(long, default_value = "windows.csv")]
        out: PathBuf,
    },
    /// Train one model and evaluate it on the test split
    Train {
        /// persistence, random_forest, gradient_boost, lstm or cnn
        #[arg(long)]
        model: Option<ModelKind>,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        spec: SpecArgs,
        /// Run directory name under the output directory [default: <model>_m<window>_n<horizon>]
        #[arg(long)]
        run: Option<PathBuf>,
    },
    /// Re-evaluate a stored run from its manifest and model files
    Evaluate {
        /// Directory written by `train`
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Where to write the reports [default: <run-dir>/eval_<split>]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every (model, window, horizon) cell
    Sweep {
        /// Comma-separated model list
        #[arg(long, value_delimiter = ',', default_value = "persistence,gradient_boost")]
        models: Vec<ModelKind>,
        /// Comma-separated window lengths
        #[arg(long, value_delimiter = ',', default_value = "12,24,30,36,40,48,52")]
        windows: Vec<usize>,
        /// Comma-separated horizons
        #[arg(long, value_delimiter = ',', default_value = "4,8,12,16")]
        horizons: Vec<usize>,
        #[command(flatten)]
        data: DataArgs,
        /// Sweep directory under the output directory
        #[arg(long, default_value = "sweep")]
        out: PathBuf,
    },
    /// Summarize a metrics.json, a run directory or a sweep.csv
    Report {
        path: PathBuf,
    },
    /// Compare analytic and finite-difference gradients on small random networks
    Gradcheck {
        #[arg(long, value_enum, default_value = "lstm")]
        model: GradModel,
        /// Number of random configurations
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Samples per batch
        #[arg(long, default_value_t = 3)]
        batch: usize,
    },
}

/// Run the command line and return the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let stage = e.stage().map(Stage::name);
            let body = serde_json::json!({ "error": e.root().to_string(), "stage": stage });
            let _ = writeln!(std::io::stderr(), "{body}");
            1
        }
    }
}

fn under(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}

/// Inputs resolve against the working directory first, then the output directory.
/// Existing paths are made absolute so manifests stay valid from any directory.
fn input_path(out_dir: &Path, path: &Path) -> PathBuf {
    let found = if path.is_absolute() || path.exists() { path.to_path_buf() } else { out_dir.join(path) };
    fs::canonicalize(&found).unwrap_or_else(|_| path.to_path_buf())
}

fn base_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e)).stage(Stage::Config)?;
            ExperimentConfig::from_text(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for pair in &common.set {
        let (k, v) = pair.split_once('=').ok_or_else(|| Error::Config { line: 0, message: format!("--set expects KEY=VALUE, got {pair:?}") })?;
        cfg.set(k.trim(), v.trim()).map_err(|message| Error::Config { line: 0, message: format!("--set {}: {message}", k.trim()) })?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut ExperimentConfig, data: &DataArgs, out_dir: &Path) {
    if let Some(p) = &data.input {
        cfg.data = DataSource::Csv(input_path(out_dir, p));
    }
    if let Some(p) = &data.counties {
        cfg.counties = Some(input_path(out_dir, p));
    }
}

fn apply_spec(cfg: &mut ExperimentConfig, spec: &SpecArgs) -> Result<()> {
    let window = spec.window.unwrap_or(cfg.spec.window());
    let horizon = spec.horizon.unwrap_or(cfg.spec.horizon());
    cfg.spec = WindowSpec::new(window, horizon).map_err(|e| Error::Config { line: 0, message: e.to_string() })?;
    Ok(())
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).stage(Stage::Write)?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e)).stage(Stage::Write)
}

fn run(cli: Cli) -> Result<i32> {
    let out_dir = cli.common.out_dir.clone();
    let mut cfg = base_config(&cli.common)?;
    match cli.command {
        Command::Synth { out, counties, weeks } => {
            if let Some(s) = cli.common.seed {
                cfg.synth.seed = s;
            }
            if let Some(c) = counties {
                cfg.synth.n_counties = c;
            }
            if let Some(w) = weeks {
                cfg.synth.n_weeks = w;
            }
            cfg.synth.validate().stage(Stage::Config)?;
            let path = under(&out_dir, &out);
            let mut bytes = Vec::new();
            write_synth_csv(&cfg.synth, &mut bytes).map_err(|e| Error::io(&path, e)).stage(Stage::Write)?;
            write_out(&path, &bytes)?;
            println!("wrote {} ({} counties, {} weeks, sha256 {})", path.display(), cfg.synth.n_counties, cfg.synth.n_weeks, formats::content_hash(&bytes));
        }
        Command::Ingest { data, out } => {
            apply_data(&mut cfg, &data, &out_dir);
            let loaded = harness::load_data(&cfg)?;
            let path = under(&out_dir, &out);
            write_out(&path, formats::weekly_csv(&loaded.series).as_bytes())?;
            let weeks: usize = loaded.series.iter().map(|s| s.weeks.len()).sum();
            println!(
                "wrote {}: {} counties, {} county-weeks from {} daily rows ({} partial weeks dropped)",
                path.display(),
                loaded.series.len(),
                weeks,
                loaded.daily_rows,
                loaded.dropped_partial_weeks
            );
        }
        Command::Window { data, spec, split, out } => {
            apply_data(&mut cfg, &data, &out_dir);
            apply_spec(&mut cfg, &spec)?;
            cfg.validate()?;
            let loaded = harness::load_data(&cfg)?;
            let prepared = harness::prepare_data(&cfg, &loaded)?;
            let set = match split {
                SplitArg::Train => &prepared.train,
                SplitArg::Validation => &prepared.validation,
                SplitArg::Test => &prepared.test,
            };
            let path = under(&out_dir, &out);
            write_out(&path, formats::windowed_csv(set).as_bytes())?;
            println!("wrote {}: {} windows of width {}", path.display(), set.len(), set.input_width());
        }
        Command::Train { model, data, spec, run } => {
            if let Some(m) = model {
                cfg.model = m;
            }
            apply_data(&mut cfg, &data, &out_dir);
            apply_spec(&mut cfg, &spec)?;
            let name = run.unwrap_or_else(|| format!("{}_m{}_n{}", cfg.model.name(), cfg.spec.window(), cfg.spec.horizon()).into());
            let dir = under(&out_dir, &name);
            let out = harness::run_experiment(&cfg, &dir)?;
            let r = &out.report;
            println!(
                "{} m={} n={}: macro F1 {:.4}, MSE {:.4}, MAE {:.4} ({} test windows, trained in {:.2}s)",
                cfg.model.name(),
                cfg.spec.window(),
                cfg.spec.horizon(),
                r.classification.macro_f1,
                r.regression.mse,
                r.regression.mae,
                out.windows[2],
                out.train_seconds
            );
            println!("artifacts in {}", dir.display());
        }
        Command::Evaluate { run_dir, split, out } => {
            let (split, name) = match split {
                SplitArg::Train => return Err(Error::Config { line: 0, message: "evaluate supports the validation and test splits".into() }),
                SplitArg::Validation => (EvalSplit::Validation, "validation"),
                SplitArg::Test => (EvalSplit::Test, "test"),
            };
            let run_dir = input_path(&out_dir, &run_dir);
            let dest = match out {
                Some(p) => under(&out_dir, &p),
                None => run_dir.join(format!("eval_{name}")),
            };
            let r = harness::evaluate_run(&run_dir, split, &dest)?;
            println!("{name}: macro F1 {:.4}, MSE {:.4}, MAE {:.4}; reports in {}", r.classification.macro_f1, r.regression.mse, r.regression.mae, dest.display());
        }
        Command::Sweep { models, windows, horizons, data, out } => {
            apply_data(&mut cfg, &data, &out_dir);
            let dir = under(&out_dir, &out);
            let sweep = SweepSpec { models, windows, horizons };
            let rows = harness::run_sweep(&cfg, &sweep, &dir, |row, err| match (&row.metrics, err) {
                (Some(m), _) => eprintln!("{} m={} n={}: macro F1 {:.4} MAE {:.4} ({:.1}s)", row.model.name(), row.window, row.horizon, m.macro_f1, m.mae, row.seconds),
                (None, e) => eprintln!("{} m={} n={}: failed: {}", row.model.name(), row.window, row.horizon, e.map(|e| e.to_string()).unwrap_or_default()),
            })?;
            let failed = rows.iter().filter(|r| r.metrics.is_none()).count();
            println!("wrote {} ({} rows, {failed} failed)", dir.join("sweep.csv").display(), rows.len());
            if failed > 0 {
                return Ok(1);
            }
        }
        Command::Report { path } => {
            let path = input_path(&out_dir, &path);
            print!("{}", report(&path)?);
        }
        Command::Gradcheck { model, trials, batch } => {
            let report = gradcheck(model, trials.max(1), batch.max(1), cfg.seed)?;
            println!("max relative error {:.3e} over {} parameters", report.max_rel_error, report.checked);
            return Ok(if report.max_rel_error < 1e-4 { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn report(path: &Path) -> Result<String> {
    let path = if path.is_dir() { path.join("metrics.json") } else { path.to_path_buf() };
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e)).stage(Stage::Load)?;
    if path.extension().is_some_and(|e| e == "csv") {
        let rows = formats::parse_sweep_csv(&text).stage(Stage::Load)?;
        return Ok(formats::sweep_pivot(&rows));
    }
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display()))).stage(Stage::Load)?;
    let num = |p: &str| v.pointer(p).and_then(serde_json::Value::as_f64).map_or("-".to_string(), |x| format!("{x:.4}"));
    let text_of = |p: &str| v.pointer(p).map_or("?".to_string(), |x| x.as_str().map_or(x.to_string(), str::to_string));
    let mut s = format!("model {} window {} horizon {} split {}\n", text_of("/model"), text_of("/window"), text_of("/horizon"), text_of("/split"));
    s.push_str(&format!("macro F1 {}  MSE {}  MAE {}\n", num("/macro_f1"), num("/mse"), num("/mae")));
    for k in ["0", "1"] {
        s.push_str(&format!(
            "class {k}: precision {} recall {} f1 {}\n",
            num(&format!("/classes/{k}/precision")),
            num(&format!("/classes/{k}/recall")),
            num(&format!("/classes/{k}/f1"))
        ));
    }
    Ok(s)
}

/// Worst gradient-check error over `trials` random small networks.
pub fn gradcheck(model: GradModel, trials: usize, batch: usize, master: u64) -> Result<GradCheckReport> {
    let mut worst: Option<GradCheckReport> = None;
    for t in 0..trials as u64 {
        let s = seed::derive(master, &[t]);
        let mut r = seed::rng(s);
        let (m, f, n) = (r.random_range(2..=6), r.random_range(1..=4), r.random_range(1..=3));
        let cfg = GradCheckConfig { seed: s, ..GradCheckConfig::default() };
        let rep = match model {
            GradModel::Dense => {
                let net = DenseNet::new(m, f, n, s);
                let (x, y) = random_problem(&net, batch, s);
                gradient_check(&net, &x, &y, batch, &cfg)?
            }
            GradModel::Lstm => {
                let net = LstmNet::new(LstmConfig {
                    layer1_units: r.random_range(1..=8),
                    layer2_units: r.random_range(1..=8),
                    dropout_rate: 0.0,
                    ..LstmConfig::new(m, f, n, s)
                })?;
                let (x, y) = random_problem(&net, batch, s);
                gradient_check(&net, &x, &y, batch, &cfg)?
            }
            GradModel::Cnn => {
                let kernel = r.random_range(1..=m.min(3));
                let net = CnnNet::new(CnnConfig {
                    filters: r.random_range(1..=8),
                    kernel_size: kernel,
                    pool_size: r.random_range(1..=2).min(m + 1 - kernel),
                    dense_units: r.random_range(1..=8),
                    dropout_rate: 0.0,
                    ..CnnConfig::new(m, f, n, s)
                })?;
                let (x, y) = random_problem(&net, batch, s);
                gradient_check(&net, &x, &y, batch, &cfg)?
            }
        };
        let checked = rep.checked + worst.as_ref().map_or(0, |w| w.checked);
        if worst.as_ref().is_none_or(|w| rep.max_rel_error > w.max_rel_error) {
            worst = Some(GradCheckReport { checked, ..rep });
        } else if let Some(w) = worst.as_mut() {
            w.checked = checked;
        }
    }
    Ok(worst.expect("at least one trial"))
}
