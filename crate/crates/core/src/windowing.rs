//! Temporal split, normalization, and sliding windows.
//!
//! The pipeline order matters: weekly series are split by time first, each
//! split is normalized, and only then cut into windows, so no window ever
//! spans two splits.

use alloc::vec::Vec;

use crate::features::N_FEATURES;
use crate::matrix::Matrix;
use crate::record::CountySeries;
use crate::{Error, Result};

/// Window size `m` (weeks of input) and forecast horizon `n` (weeks of labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowSpec {
    window: usize,
    horizon: usize,
}

impl WindowSpec {
    pub fn new(window: usize, horizon: usize) -> Result<Self> {
        if window == 0 || horizon == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "window ({window}) and horizon ({horizon}) must both be at least 1"
            )));
        }
        Ok(Self { window, horizon })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of samples a gap-free series of `weeks` weeks yields.
    pub fn sample_count(&self, weeks: usize) -> usize {
        (weeks + 1).saturating_sub(self.window + self.horizon)
    }
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { window: 30, horizon: 12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.70, validation: 0.10, test: 0.20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitMode {
    /// Boundaries at `floor(train * T)` and `floor((train + validation) * T)`.
    Ratio(SplitRatios),
    /// Train covers weeks ending in years `<= train_end_year`, validation up to
    /// `validation_end_year`, test the rest.
    YearBoundary { train_end_year: i32, validation_end_year: i32 },
}

impl Default for SplitMode {
    fn default() -> Self {
        Self::Ratio(SplitRatios::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<CountySeries>,
    pub validation: Vec<CountySeries>,
    pub test: Vec<CountySeries>,
}

// Slack for products like 0.7 * 10 that land a hair under an integer.
const FLOOR_SLACK: f64 = 1e-9;

/// Train/validation/test sizes for `total` weeks.
pub fn split_sizes(total: usize, ratios: &SplitRatios) -> Result<(usize, usize, usize)> {
    let sum = ratios.train + ratios.validation + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || ratios.train < 0.0 || ratios.validation < 0.0 || ratios.test < 0.0 {
        return Err(Error::InvalidRatios { sum });
    }
    let t = total as f64;
    let first = libm::floor(ratios.train * t + FLOOR_SLACK) as usize;
    let second = (libm::floor((ratios.train + ratios.validation) * t + FLOOR_SLACK) as usize).min(total);
    let first = first.min(second);
    Ok((first, second - first, total - second))
}

/// Splits every county at the same week boundaries without shuffling.
pub fn temporal_split(series: &[CountySeries], mode: &SplitMode) -> Result<SplitDataset> {
    let first = series.first().ok_or(Error::DegenerateSplit { split: "train" })?;
    let range = first.week_range();
    for s in series {
        if s.week_range() != range || !s.is_contiguous() {
            return Err(Error::RaggedCounties { fips: s.fips });
        }
    }
    let total = first.len();
    let (n_train, n_val, n_test) = match mode {
        SplitMode::Ratio(r) => split_sizes(total, r)?,
        SplitMode::YearBoundary { train_end_year, validation_end_year } => {
            let train = first.weeks.iter().filter(|w| w.week_end.year <= *train_end_year).count();
            let upto = first.weeks.iter().filter(|w| w.week_end.year <= *validation_end_year).count();
            let upto = upto.max(train);
            (train, upto - train, total - upto)
        }
    };
    for (size, split) in [(n_train, "train"), (n_val, "validation"), (n_test, "test")] {
        if size == 0 {
            return Err(Error::DegenerateSplit { split });
        }
    }
    let cut = |lo: usize, hi: usize| -> Vec<CountySeries> {
        series
            .iter()
            .map(|s| CountySeries { fips: s.fips, weeks: s.weeks[lo..hi].to_vec() })
            .collect()
    };
    Ok(SplitDataset {
        train: cut(0, n_train),
        validation: cut(n_train, n_train + n_val),
        test: cut(n_train + n_val, total),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationMode {
    /// Each split is z-scored with its own statistics.
    #[default]
    PerSplit,
    /// Statistics are fit on the training split and reused for the others.
    TrainStatistics,
}

/// Per-feature population mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormalizationStats {
    /// Two-pass mean and population standard deviation over `rows`.
    pub fn from_rows<I>(width: usize, rows: I) -> Result<Self>
    where
        I: Iterator + Clone,
        I::Item: AsRef<[f64]>,
    {
        let mut mean = alloc::vec![0.0; width];
        let mut count = 0usize;
        for row in rows.clone() {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::DimensionMismatch { expected: width, found: row.len() });
            }
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
            count += 1;
        }
        if count == 0 {
            return Err(Error::EmptySplit);
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        let mut var = alloc::vec![0.0; width];
        for row in rows {
            for ((v, x), m) in var.iter_mut().zip(row.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| libm::sqrt(v / count as f64)).collect();
        Ok(Self { mean, std })
    }

    /// Z-scores `row` in place; zero-variance features become 0.
    pub fn normalize_row(&self, row: &mut [f64]) {
        for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
        }
    }
}

pub fn fit_normalizer(split: &[CountySeries]) -> Result<NormalizationStats> {
    let rows = split.iter().flat_map(|s| s.weeks.iter().map(|w| w.feature_row()));
    NormalizationStats::from_rows(N_FEATURES, rows)
}

/// A county series with z-scored inputs and raw scores kept alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedSeries {
    pub fips: u32,
    pub first_week: u32,
    pub n_features: usize,
    /// `len() * n_features` values, one row per week.
    pub features: Vec<f64>,
    /// Raw drought scores (0-5), used for labels and the persistence baseline.
    pub scores: Vec<f64>,
}

impl NormalizedSeries {
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

pub fn apply_normalizer(split: &[CountySeries], stats: &NormalizationStats) -> Vec<NormalizedSeries> {
    split
        .iter()
        .map(|s| {
            let mut features = Vec::with_capacity(s.len() * N_FEATURES);
            for w in &s.weeks {
                let mut row = w.feature_row();
                stats.normalize_row(&mut row);
                features.extend_from_slice(&row);
            }
            NormalizedSeries {
                fips: s.fips,
                first_week: s.weeks.first().map_or(0, |w| w.week_index),
                n_features: N_FEATURES,
                features,
                scores: s.weeks.iter().map(|w| w.score).collect(),
            }
        })
        .collect()
}

/// One supervised pair: `window` weeks of features, `horizon` weeks of labels.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub fips: u32,
    /// Week index of the last input week.
    pub anchor: u32,
    pub window: usize,
    pub n_features: usize,
    /// Row-major `window x n_features`, oldest week first.
    pub features: Vec<f64>,
    /// Raw scores of weeks `anchor + 1 ..= anchor + horizon`.
    pub labels: Vec<f64>,
    /// Raw scores of the input weeks.
    pub history: Vec<f64>,
}

impl WindowSample {
    pub fn week(&self, t: usize) -> &[f64] {
        &self.features[t * self.n_features..(t + 1) * self.n_features]
    }

    pub fn flat(&self) -> &[f64] {
        &self.features
    }
}

pub fn flatten(sample: &WindowSample) -> Vec<f64> {
    sample.features.clone()
}

/// Inverse of [`flatten`].
pub fn unflatten(flat: &[f64], window: usize, n_features: usize) -> Result<Vec<Vec<f64>>> {
    if flat.len() != window * n_features {
        return Err(Error::DimensionMismatch { expected: window * n_features, found: flat.len() });
    }
    Ok(flat.chunks_exact(n_features.max(1)).map(<[f64]>::to_vec).collect())
}

pub fn make_windows(series: &NormalizedSeries, spec: WindowSpec) -> Vec<WindowSample> {
    let (m, n, f) = (spec.window, spec.horizon, series.n_features);
    (0..spec.sample_count(series.len()))
        .map(|s| WindowSample {
            fips: series.fips,
            anchor: series.first_week + (s + m - 1) as u32,
            window: m,
            n_features: f,
            features: series.features[s * f..(s + m) * f].to_vec(),
            labels: series.scores[s + m..s + m + n].to_vec(),
            history: series.scores[s..s + m].to_vec(),
        })
        .collect()
}

/// Statewide sample set, ordered by county then anchor week.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    pub spec: WindowSpec,
    pub n_features: usize,
    pub samples: Vec<WindowSample>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.spec.window * self.n_features
    }

    /// One flattened window per row.
    pub fn design_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.input_width());
        for s in &self.samples {
            data.extend_from_slice(&s.features);
        }
        Matrix::from_vec(self.len(), self.input_width(), data).expect("uniform window shape")
    }

    pub fn label_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.len() * self.spec.horizon);
        for s in &self.samples {
            data.extend_from_slice(&s.labels);
        }
        Matrix::from_vec(self.len(), self.spec.horizon, data).expect("uniform label shape")
    }

    pub fn fips(&self) -> Vec<u32> {
        self.samples.iter().map(|s| s.fips).collect()
    }
}

pub fn consolidate(per_county: Vec<Vec<WindowSample>>, spec: WindowSpec, n_features: usize) -> WindowSet {
    let mut samples: Vec<WindowSample> = per_county.into_iter().flatten().collect();
    samples.sort_by_key(|s| (s.fips, s.anchor));
    WindowSet { spec, n_features, samples }
}

/// Windowed train/validation/test sets ready for modeling.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowSet,
    pub validation: WindowSet,
    pub test: WindowSet,
    pub mode: NormalizationMode,
    /// Statistics used for train, validation and test, in that order.
    pub stats: [NormalizationStats; 3],
}

/// Normalizes each split per `mode`, windows every county and consolidates.
pub fn prepare(split: &SplitDataset, spec: WindowSpec, mode: NormalizationMode) -> Result<PreparedData> {
    let train_stats = fit_normalizer(&split.train)?;
    let (val_stats, test_stats) = match mode {
        NormalizationMode::PerSplit => (fit_normalizer(&split.validation)?, fit_normalizer(&split.test)?),
        NormalizationMode::TrainStatistics => (train_stats.clone(), train_stats.clone()),
    };
    let window = |part: &[CountySeries], stats: &NormalizationStats| {
        let per_county = apply_normalizer(part, stats).iter().map(|s| make_windows(s, spec)).collect();
        consolidate(per_county, spec, N_FEATURES)
    };
    Ok(PreparedData {
        train: window(&split.train, &train_stats),
        validation: window(&split.validation, &val_stats),
        test: window(&split.test, &test_stats),
        mode,
        stats: [train_stats, val_stats, test_stats],
    })
}
