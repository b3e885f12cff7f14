//! Experiment configuration and its key=value text format.
//!
//! One `key = value` pair per line; `#` starts a comment. Keys are listed by
//! [`ExperimentConfig::to_text`], which always writes every key so a saved
//! config (or a run manifest) reproduces the run on its own. Keys under
//! `manifest.` are ignored when parsing.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use droughtcast_core::date::CivilDate;
use droughtcast_core::evaluation::EvalConfig;
use droughtcast_core::neural::{CnnConfig, LstmConfig, TrainConfig, ValidationUse};
use droughtcast_core::tree::{BoostConfig, ForestConfig};
use droughtcast_core::windowing::{NormalizationMode, SplitMode, SplitRatios};
use droughtcast_core::WindowSpec;

use crate::error::{Error, Result};
use crate::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelKind {
    Persistence,
    RandomForest,
    GradientBoost,
    Lstm,
    Cnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [Self::Persistence, Self::RandomForest, Self::GradientBoost, Self::Lstm, Self::Cnn];

    pub fn name(self) -> &'static str {
        match self {
            Self::Persistence => "persistence",
            Self::RandomForest => "random_forest",
            Self::GradientBoost => "gradient_boost",
            Self::Lstm => "lstm",
            Self::Cnn => "cnn",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, Self::Lstm | Self::Cnn)
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "persistence" => Ok(Self::Persistence),
            "random_forest" | "rf" | "forest" => Ok(Self::RandomForest),
            "gradient_boost" | "xgboost" | "boost" => Ok(Self::GradientBoost),
            "lstm" => Ok(Self::Lstm),
            "cnn" => Ok(Self::Cnn),
            _ => Err(format!("unknown model {s:?} (persistence, random_forest, gradient_boost, lstm, cnn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Csv(PathBuf),
    Synth,
}

/// Network shape knobs; window, features, horizon and seed come from the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmShape {
    pub layer1_units: usize,
    pub layer2_units: usize,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CnnShape {
    pub filters: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dense_units: usize,
    pub dropout_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub spec: WindowSpec,
    pub normalization: NormalizationMode,
    pub split: SplitMode,
    pub seed: u64,
    pub data: DataSource,
    /// County metadata CSV; `None` uses the bundled California table.
    pub counties: Option<PathBuf>,
    pub synth: SynthSpec,
    pub forest: ForestConfig,
    pub boost: BoostConfig,
    pub lstm: LstmShape,
    pub cnn: CnnShape,
    pub train: TrainConfig,
    /// Early-stopping patience, kept even while validation is only monitored.
    pub patience: usize,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let l = LstmConfig::new(1, 1, 1, 0);
        let c = CnnConfig::new(1, 1, 1, 0);
        Self {
            model: ModelKind::Persistence,
            spec: WindowSpec::default(),
            normalization: NormalizationMode::PerSplit,
            split: SplitMode::default(),
            seed: 0,
            data: DataSource::Synth,
            counties: None,
            synth: SynthSpec::default(),
            forest: ForestConfig::default(),
            boost: BoostConfig::default(),
            lstm: LstmShape { layer1_units: l.layer1_units, layer2_units: l.layer2_units, dropout_rate: l.dropout_rate },
            cnn: CnnShape { filters: c.filters, kernel_size: c.kernel_size, pool_size: c.pool_size, dense_units: c.dense_units, dropout_rate: c.dropout_rate },
            train: TrainConfig::default(),
            patience: 5,
            eval: EvalConfig::default(),
        }
    }
}

fn parse<T: FromStr>(value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("invalid value {value:?}"))
}

fn normalization_name(mode: NormalizationMode) -> &'static str {
    match mode {
        NormalizationMode::PerSplit => "per_split",
        NormalizationMode::TrainStatistics => "train_statistics",
    }
}

impl ExperimentConfig {
    pub fn normalization_name(&self) -> &'static str {
        normalization_name(self.normalization)
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let ratios = |split: &SplitMode| match split {
            SplitMode::Ratio(r) => *r,
            SplitMode::YearBoundary { .. } => SplitRatios::default(),
        };
        let years = |split: &SplitMode| match split {
            SplitMode::YearBoundary { train_end_year, validation_end_year } => (*train_end_year, *validation_end_year),
            SplitMode::Ratio(_) => (2014, 2016),
        };
        match key {
            "model" => self.model = value.parse()?,
            "window" => self.spec = WindowSpec::new(parse(value)?, self.spec.horizon()).map_err(|e| e.to_string())?,
            "horizon" => self.spec = WindowSpec::new(self.spec.window(), parse(value)?).map_err(|e| e.to_string())?,
            "seed" => self.seed = parse(value)?,
            "normalization" => {
                self.normalization = match value {
                    "per_split" => NormalizationMode::PerSplit,
                    "train_statistics" => NormalizationMode::TrainStatistics,
                    _ => return Err(format!("normalization must be per_split or train_statistics, got {value:?}")),
                }
            }
            "split" => {
                self.split = match value {
                    "ratio" => SplitMode::Ratio(ratios(&self.split)),
                    "years" => {
                        let (t, v) = years(&self.split);
                        SplitMode::YearBoundary { train_end_year: t, validation_end_year: v }
                    }
                    _ => return Err(format!("split must be ratio or years, got {value:?}")),
                }
            }
            "split.train" | "split.validation" | "split.test" => {
                let SplitMode::Ratio(r) = &mut self.split else { return Err("ratio keys need split = ratio".into()) };
                let v = parse(value)?;
                match key {
                    "split.train" => r.train = v,
                    "split.validation" => r.validation = v,
                    _ => r.test = v,
                }
            }
            "split.train_end_year" | "split.validation_end_year" => {
                let SplitMode::YearBoundary { train_end_year, validation_end_year } = &mut self.split else {
                    return Err("year keys need split = years".into());
                };
                if key == "split.train_end_year" {
                    *train_end_year = parse(value)?;
                } else {
                    *validation_end_year = parse(value)?;
                }
            }
            "data" => self.data = if value == "synth" { DataSource::Synth } else { DataSource::Csv(value.into()) },
            "counties" => self.counties = if value == "bundled" { None } else { Some(value.into()) },
            "synth.counties" => self.synth.n_counties = parse(value)?,
            "synth.weeks" => self.synth.n_weeks = parse(value)?,
            "synth.seed" => self.synth.seed = parse(value)?,
            "synth.ar" => self.synth.ar = parse(value)?,
            "synth.seasonal_amplitude" => self.synth.seasonal_amplitude = parse(value)?,
            "synth.level" => self.synth.level = parse(value)?,
            "synth.county_spread" => self.synth.county_spread = parse(value)?,
            "synth.temp_coupling" => self.synth.temp_coupling = parse(value)?,
            "synth.precip_coupling" => self.synth.precip_coupling = parse(value)?,
            "synth.anomaly_persistence" => self.synth.anomaly_persistence = parse(value)?,
            "synth.noise_scale" => self.synth.noise_scale = parse(value)?,
            "synth.start" => self.synth.start = value.parse::<CivilDate>().map_err(|()| format!("invalid date {value:?}"))?,
            "forest.n_trees" => self.forest.n_trees = parse(value)?,
            "forest.max_depth" => self.forest.max_depth = parse(value)?,
            "forest.min_leaf" => self.forest.min_leaf = parse(value)?,
            "forest.bootstrap_fraction" => self.forest.bootstrap_fraction = parse(value)?,
            "forest.feature_fraction" => self.forest.feature_fraction = parse(value)?,
            "boost.n_estimators" => self.boost.n_estimators = parse(value)?,
            "boost.max_depth" => self.boost.max_depth = parse(value)?,
            "boost.learning_rate" => self.boost.learning_rate = parse(value)?,
            "boost.leaf_penalty" => self.boost.leaf_penalty = parse(value)?,
            "boost.min_leaf" => self.boost.min_leaf = parse(value)?,
            "lstm.layer1_units" => self.lstm.layer1_units = parse(value)?,
            "lstm.layer2_units" => self.lstm.layer2_units = parse(value)?,
            "lstm.dropout_rate" => self.lstm.dropout_rate = parse(value)?,
            "cnn.filters" => self.cnn.filters = parse(value)?,
            "cnn.kernel_size" => self.cnn.kernel_size = parse(value)?,
            "cnn.pool_size" => self.cnn.pool_size = parse(value)?,
            "cnn.dense_units" => self.cnn.dense_units = parse(value)?,
            "cnn.dropout_rate" => self.cnn.dropout_rate = parse(value)?,
            "train.epochs" => self.train.epochs = parse(value)?,
            "train.batch_size" => self.train.batch_size = parse(value)?,
            "train.learning_rate" => self.train.learning_rate = parse(value)?,
            "train.validation" => {
                self.train.validation = match value {
                    "monitor" => ValidationUse::Monitor,
                    "early_stopping" => ValidationUse::EarlyStopping { patience: self.patience },
                    _ => return Err(format!("train.validation must be monitor or early_stopping, got {value:?}")),
                }
            }
            "train.patience" => {
                self.patience = parse(value)?;
                if let ValidationUse::EarlyStopping { patience } = &mut self.train.validation {
                    *patience = self.patience;
                }
            }
            "eval.severe_threshold" => self.eval.severe_threshold = parse(value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parse config text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.starts_with("manifest.") {
                continue;
            }
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            self.set(key, value).map_err(err)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: String| Error::Config { line: 0, message };
        self.eval.validate().map_err(|e| bad(e.to_string()))?;
        self.forest.validate().map_err(|e| bad(e.to_string()))?;
        self.boost.validate().map_err(|e| bad(e.to_string()))?;
        self.train.validate().map_err(|e| bad(e.to_string()))?;
        if let SplitMode::Ratio(r) = self.split {
            let sum = r.train + r.validation + r.test;
            if (sum - 1.0).abs() > 1e-9 || r.train < 0.0 || r.validation < 0.0 || r.test < 0.0 {
                return Err(bad(format!("split ratios must be non-negative and sum to 1, got {sum}")));
            }
        }
        if matches!(self.data, DataSource::Synth) {
            self.synth.validate().map_err(|e| bad(e.to_string()))?;
        }
        self.lstm_config(1, 0).validate().map_err(|e| bad(e.to_string()))?;
        self.cnn_config(1, 0).validate().map_err(|e| bad(e.to_string()))?;
        Ok(())
    }

    pub fn lstm_config(&self, n_features: usize, seed: u64) -> LstmConfig {
        LstmConfig {
            layer1_units: self.lstm.layer1_units,
            layer2_units: self.lstm.layer2_units,
            dropout_rate: self.lstm.dropout_rate,
            ..LstmConfig::new(self.spec.window(), n_features, self.spec.horizon(), seed)
        }
    }

    pub fn cnn_config(&self, n_features: usize, seed: u64) -> CnnConfig {
        CnnConfig {
            filters: self.cnn.filters,
            kernel_size: self.cnn.kernel_size,
            pool_size: self.cnn.pool_size,
            dense_units: self.cnn.dense_units,
            dropout_rate: self.cnn.dropout_rate,
            ..CnnConfig::new(self.spec.window(), n_features, self.spec.horizon(), seed)
        }
    }

    /// Every key in canonical order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut p: Vec<(&'static str, String)> = vec![
            ("model", self.model.name().into()),
            ("window", self.spec.window().to_string()),
            ("horizon", self.spec.horizon().to_string()),
            ("seed", self.seed.to_string()),
            ("normalization", self.normalization_name().into()),
        ];
        match self.split {
            SplitMode::Ratio(r) => {
                p.push(("split", "ratio".into()));
                p.push(("split.train", r.train.to_string()));
                p.push(("split.validation", r.validation.to_string()));
                p.push(("split.test", r.test.to_string()));
            }
            SplitMode::YearBoundary { train_end_year, validation_end_year } => {
                p.push(("split", "years".into()));
                p.push(("split.train_end_year", train_end_year.to_string()));
                p.push(("split.validation_end_year", validation_end_year.to_string()));
            }
        }
        p.push((
            "data",
            match &self.data {
                DataSource::Synth => "synth".into(),
                DataSource::Csv(path) => path.display().to_string(),
            },
        ));
        p.push(("counties", self.counties.as_ref().map_or_else(|| "bundled".into(), |c| c.display().to_string())));
        let s = &self.synth;
        p.extend([
            ("synth.counties", s.n_counties.to_string()),
            ("synth.weeks", s.n_weeks.to_string()),
            ("synth.seed", s.seed.to_string()),
            ("synth.ar", s.ar.to_string()),
            ("synth.seasonal_amplitude", s.seasonal_amplitude.to_string()),
            ("synth.level", s.level.to_string()),
            ("synth.county_spread", s.county_spread.to_string()),
            ("synth.temp_coupling", s.temp_coupling.to_string()),
            ("synth.precip_coupling", s.precip_coupling.to_string()),
            ("synth.anomaly_persistence", s.anomaly_persistence.to_string()),
            ("synth.noise_scale", s.noise_scale.to_string()),
            ("synth.start", s.start.to_string()),
            ("forest.n_trees", self.forest.n_trees.to_string()),
            ("forest.max_depth", self.forest.max_depth.to_string()),
            ("forest.min_leaf", self.forest.min_leaf.to_string()),
            ("forest.bootstrap_fraction", self.forest.bootstrap_fraction.to_string()),
            ("forest.feature_fraction", self.forest.feature_fraction.to_string()),
            ("boost.n_estimators", self.boost.n_estimators.to_string()),
            ("boost.max_depth", self.boost.max_depth.to_string()),
            ("boost.learning_rate", self.boost.learning_rate.to_string()),
            ("boost.leaf_penalty", self.boost.leaf_penalty.to_string()),
            ("boost.min_leaf", self.boost.min_leaf.to_string()),
            ("lstm.layer1_units", self.lstm.layer1_units.to_string()),
            ("lstm.layer2_units", self.lstm.layer2_units.to_string()),
            ("lstm.dropout_rate", self.lstm.dropout_rate.to_string()),
            ("cnn.filters", self.cnn.filters.to_string()),
            ("cnn.kernel_size", self.cnn.kernel_size.to_string()),
            ("cnn.pool_size", self.cnn.pool_size.to_string()),
            ("cnn.dense_units", self.cnn.dense_units.to_string()),
            ("cnn.dropout_rate", self.cnn.dropout_rate.to_string()),
            ("train.epochs", self.train.epochs.to_string()),
            ("train.batch_size", self.train.batch_size.to_string()),
            ("train.learning_rate", self.train.learning_rate.to_string()),
        ]);
        let policy = match self.train.validation {
            ValidationUse::Monitor => "monitor",
            ValidationUse::EarlyStopping { .. } => "early_stopping",
        };
        p.push(("train.validation", policy.into()));
        p.push(("train.patience", self.patience.to_string()));
        p.push(("eval.severe_threshold", self.eval.severe_threshold.to_string()));
        p
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// True when epochs, batch size, learning rate and validation policy are
    /// all toolkit defaults rather than user choices.
    pub fn training_is_default(&self) -> bool {
        let d = TrainConfig::default();
        self.train.epochs == d.epochs && self.train.batch_size == d.batch_size && self.train.learning_rate == d.learning_rate && self.train.validation == d.validation
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = ExperimentConfig::default();
        c.apply_text("model = lstm\nwindow = 24 # weeks\nhorizon = 4\nsplit = years\nsplit.train_end_year = 2013\ntrain.validation = early_stopping\ntrain.patience = 3\nboost.learning_rate = 0.1\n").unwrap();
        assert_eq!(c.model, ModelKind::Lstm);
        assert_eq!(c.train.validation, ValidationUse::EarlyStopping { patience: 3 });
        let back = ExperimentConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }

    #[test]
    fn patience_before_policy() {
        let c = ExperimentConfig::from_text("train.patience = 7\ntrain.validation = early_stopping\n").unwrap();
        assert_eq!(c.train.validation, ValidationUse::EarlyStopping { patience: 7 });
    }

    #[test]
    fn errors_carry_line_numbers() {
        match ExperimentConfig::from_text("model = lstm\n\nbogus = 1\n") {
            Err(Error::Config { line: 3, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(ExperimentConfig::from_text("window = 0\n").is_err());
        assert!(ExperimentConfig::from_text("seed = 1\nseed = 2\n").is_err());
        assert!(ExperimentConfig::from_text("split.train = 0.5\n").is_err());
        assert!(ExperimentConfig::from_text("manifest.anything = 3\n").is_ok());
    }
}
