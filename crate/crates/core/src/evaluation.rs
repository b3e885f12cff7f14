//! Forecast evaluation: pooled regression errors, severe-drought
//! classification, integer-category over/under analysis, per-county
//! breakdowns and per-step horizon drift.
//!
//! Every horizon step of every sample is pooled into one flat evaluation
//! unless a function says otherwise.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Scores at or above this value are "severe" (USDM D2 and worse).
    pub severe_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { severe_threshold: 2.5 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.severe_threshold > 0.0 && self.severe_threshold < 5.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("severe threshold {} outside (0, 5)", self.severe_threshold)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub mae: f64,
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    if left == 0 {
        return Err(Error::Empty);
    }
    Ok(())
}

pub fn regression_metrics(actual: &[f64], predicted: &[f64]) -> Result<RegressionMetrics> {
    check_lengths(actual.len(), predicted.len())?;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, p) in actual.iter().zip(predicted) {
        let d = p - a;
        se += d * d;
        ae += d.abs();
    }
    let n = actual.len() as f64;
    Ok(RegressionMetrics { mse: se / n, mae: ae / n })
}

pub fn binarize_severe(scores: &[f64], config: &EvalConfig) -> Vec<bool> {
    scores.iter().map(|&s| s >= config.severe_threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Index 0 is the non-severe class, index 1 the severe class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationReport {
    pub classes: [ClassMetrics; 2],
    pub macro_f1: f64,
    pub weighted_f1: f64,
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Undefined precision, recall and F1 are reported as 0.
pub fn classification_report(actual: &[bool], predicted: &[bool]) -> Result<ClassificationReport> {
    check_lengths(actual.len(), predicted.len())?;
    // counts[actual][predicted]
    let mut counts = [[0usize; 2]; 2];
    for (&a, &p) in actual.iter().zip(predicted) {
        counts[usize::from(a)][usize::from(p)] += 1;
    }
    let class = |c: usize| {
        let tp = counts[c][c];
        let predicted_c = counts[0][c] + counts[1][c];
        let support = counts[c][0] + counts[c][1];
        let precision = ratio(tp, predicted_c);
        let recall = ratio(tp, support);
        ClassMetrics { precision, recall, f1: f1_score(precision, recall), support }
    };
    let classes = [class(0), class(1)];
    let total = actual.len() as f64;
    Ok(ClassificationReport {
        classes,
        macro_f1: (classes[0].f1 + classes[1].f1) / 2.0,
        weighted_f1: classes.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total,
    })
}

/// Integer drought category of a continuous score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Category {
    pub value: u8,
    /// The score was below zero before clamping.
    pub negative: bool,
}

/// Nearest integer with halves rounded up, clamped to 0..=5.
pub fn round_to_category(score: f64) -> Category {
    let negative = score < 0.0;
    let value = if score.is_nan() { 0.0 } else { libm::round(score).clamp(0.0, 5.0) };
    Category { value: value as u8, negative }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CategoryAnalysisRow {
    pub category: u8,
    pub over_count: usize,
    /// Share of incorrect predictions that were too high, in percent.
    pub over_pct: f64,
    pub under_count: usize,
    pub under_pct: f64,
    pub incorrect: usize,
    pub total: usize,
    /// `1 - incorrect / total`.
    pub accuracy: f64,
    /// Predictions below zero among this category's samples.
    pub negative_predictions: usize,
}

/// One row per actual category that occurs, in ascending order.
pub fn category_analysis(actual: &[f64], predicted: &[f64]) -> Result<Vec<CategoryAnalysisRow>> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch { left: actual.len(), right: predicted.len() });
    }
    // [total, over, under, negative] per category
    let mut tally = [[0usize; 4]; 6];
    for (&a, &p) in actual.iter().zip(predicted) {
        let a = round_to_category(a).value as usize;
        let p = round_to_category(p);
        let row = &mut tally[a];
        row[0] += 1;
        match (p.value as usize).cmp(&a) {
            core::cmp::Ordering::Greater => row[1] += 1,
            core::cmp::Ordering::Less => row[2] += 1,
            core::cmp::Ordering::Equal => {}
        }
        row[3] += usize::from(p.negative);
    }
    Ok(tally
        .iter()
        .enumerate()
        .filter(|(_, t)| t[0] > 0)
        .map(|(c, t)| {
            let incorrect = t[1] + t[2];
            CategoryAnalysisRow {
                category: c as u8,
                over_count: t[1],
                over_pct: 100.0 * ratio(t[1], incorrect),
                under_count: t[2],
                under_pct: 100.0 * ratio(t[2], incorrect),
                incorrect,
                total: t[0],
                accuracy: 1.0 - ratio(incorrect, t[0]),
                negative_predictions: t[3],
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountyMetrics {
    /// 0 for the statewide pooled row.
    pub fips: u32,
    pub macro_f1: f64,
    pub mae: f64,
    pub mse: f64,
    /// Severe actual label points over all label points.
    pub severe_ratio: f64,
    /// Label points (samples times horizon steps).
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountyBreakdown {
    pub counties: Vec<CountyMetrics>,
    pub statewide: CountyMetrics,
}

fn pooled_metrics(fips: u32, actual: &[f64], predicted: &[f64], config: &EvalConfig) -> Result<CountyMetrics> {
    let reg = regression_metrics(actual, predicted)?;
    let a = binarize_severe(actual, config);
    let report = classification_report(&a, &binarize_severe(predicted, config))?;
    Ok(CountyMetrics {
        fips,
        macro_f1: report.macro_f1,
        mae: reg.mae,
        mse: reg.mse,
        severe_ratio: ratio(a.iter().filter(|&&s| s).count(), a.len()),
        n_samples: a.len(),
    })
}

fn check_shapes(actual: &Matrix, predicted: &Matrix) -> Result<()> {
    if actual.rows() != predicted.rows() {
        return Err(Error::LengthMismatch { left: actual.rows(), right: predicted.rows() });
    }
    if actual.cols() != predicted.cols() {
        return Err(Error::DimensionMismatch { expected: actual.cols(), found: predicted.cols() });
    }
    Ok(())
}

/// Metrics per county (ascending fips) plus the statewide pool.
pub fn per_county_metrics(
    fips: &[u32],
    actual: &Matrix,
    predicted: &Matrix,
    config: &EvalConfig,
) -> Result<CountyBreakdown> {
    check_shapes(actual, predicted)?;
    if fips.len() != actual.rows() {
        return Err(Error::LengthMismatch { left: fips.len(), right: actual.rows() });
    }
    let mut groups: BTreeMap<u32, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, &f) in fips.iter().enumerate() {
        let g = groups.entry(f).or_default();
        g.0.extend_from_slice(actual.row(i));
        g.1.extend_from_slice(predicted.row(i));
    }
    let counties = groups
        .iter()
        .map(|(&f, (a, p))| pooled_metrics(f, a, p, config))
        .collect::<Result<Vec<_>>>()?;
    let statewide = pooled_metrics(0, actual.as_slice(), predicted.as_slice(), config)?;
    Ok(CountyBreakdown { counties, statewide })
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::DegenerateVariance);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Correlation between county macro F1 and county severe ratio.
pub fn severe_ratio_correlation(counties: &[CountyMetrics]) -> Result<f64> {
    let f1: Vec<f64> = counties.iter().map(|c| c.macro_f1).collect();
    let ratio: Vec<f64> = counties.iter().map(|c| c.severe_ratio).collect();
    pearson(&f1, &ratio)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftRow {
    /// 1-based horizon step.
    pub step: usize,
    pub mean_actual: f64,
    pub mean_predicted: f64,
    pub mean_abs_discrepancy: f64,
}

/// Per horizon step means over all samples.
pub fn horizon_drift_report(actual: &Matrix, predicted: &Matrix) -> Result<Vec<DriftRow>> {
    check_shapes(actual, predicted)?;
    if actual.rows() == 0 {
        return Err(Error::Empty);
    }
    let n = actual.rows() as f64;
    Ok((0..actual.cols())
        .map(|k| {
            let (mut sa, mut sp, mut sd) = (0.0, 0.0, 0.0);
            for i in 0..actual.rows() {
                let (a, p) = (actual.get(i, k), predicted.get(i, k));
                sa += a;
                sp += p;
                sd += (a - p).abs();
            }
            DriftRow { step: k + 1, mean_actual: sa / n, mean_predicted: sp / n, mean_abs_discrepancy: sd / n }
        })
        .collect())
}

/// Everything computed for one model on one evaluation split.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub regression: RegressionMetrics,
    pub classification: ClassificationReport,
    pub categories: Vec<CategoryAnalysisRow>,
    pub counties: CountyBreakdown,
    /// `None` when fewer than two counties have varying metrics.
    pub severe_ratio_correlation: Option<f64>,
    pub drift: Vec<DriftRow>,
    /// Regression metrics of each horizon step on its own.
    pub per_step: Vec<RegressionMetrics>,
}

pub fn evaluate(actual: &Matrix, predicted: &Matrix, fips: &[u32], config: &EvalConfig) -> Result<EvaluationReport> {
    config.validate()?;
    check_shapes(actual, predicted)?;
    let regression = regression_metrics(actual.as_slice(), predicted.as_slice())?;
    // Jensen: mean of squares >= square of mean
    assert!(
        regression.mse + 1e-12 >= regression.mae * regression.mae,
        "mse {} < mae^2 {}",
        regression.mse,
        regression.mae * regression.mae
    );
    let classification = classification_report(
        &binarize_severe(actual.as_slice(), config),
        &binarize_severe(predicted.as_slice(), config),
    )?;
    let counties = per_county_metrics(fips, actual, predicted, config)?;
    let per_step = (0..actual.cols())
        .map(|k| regression_metrics(&actual.column(k), &predicted.column(k)))
        .collect::<Result<_>>()?;
    Ok(EvaluationReport {
        regression,
        classification,
        categories: category_analysis(actual.as_slice(), predicted.as_slice())?,
        severe_ratio_correlation: severe_ratio_correlation(&counties.counties).ok(),
        counties,
        drift: horizon_drift_report(actual, predicted)?,
        per_step,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn regression_examples() {
        let m = regression_metrics(&[0.0], &[0.5]).unwrap();
        assert_eq!((m.mse, m.mae), (0.25, 0.5));
        let m = regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mse, m.mae), (0.0, 0.0));
        assert_eq!(regression_metrics(&[], &[]), Err(Error::Empty));
        assert!(matches!(regression_metrics(&[1.0], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn severe_boundary() {
        let c = EvalConfig::default();
        assert_eq!(binarize_severe(&[2.5, 2.499, 0.0, 5.0], &c), vec![true, false, false, true]);
        assert!(EvalConfig { severe_threshold: 5.0 }.validate().is_err());
    }

    #[test]
    fn classification_examples() {
        let r = classification_report(&[true, true, false, false], &[true, false, false, false]).unwrap();
        assert_eq!(r.classes[1].precision, 1.0);
        assert_eq!(r.classes[1].recall, 0.5);
        assert!((r.classes[1].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.classes[0].support + r.classes[1].support, 4);

        let perfect = classification_report(&[true, false], &[true, false]).unwrap();
        assert_eq!((perfect.macro_f1, perfect.weighted_f1), (1.0, 1.0));

        // no severe anywhere: class 1 is all-zero, macro F1 = F1_0 / 2
        let none = classification_report(&[false; 3], &[false; 3]).unwrap();
        assert_eq!(none.classes[1].f1, 0.0);
        assert_eq!(none.macro_f1, 0.5);
    }

    #[test]
    fn published_baseline_f1_rounds_to_066() {
        let f1 = f1_score(0.86, 0.53);
        assert!((f1 - 0.6558).abs() < 1e-4);
        assert_eq!(libm::round(f1 * 100.0) / 100.0, 0.66);
    }

    #[test]
    fn category_rounding() {
        assert_eq!(round_to_category(0.5).value, 1);
        assert_eq!(round_to_category(2.49).value, 2);
        assert_eq!(round_to_category(5.7).value, 5);
        assert_eq!(round_to_category(-0.2), Category { value: 0, negative: true });
    }

    #[test]
    fn category_rows() {
        let rows = category_analysis(&[4.0; 5], &[3.2; 5]).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].category, rows[0].under_count, rows[0].under_pct), (4, 5, 100.0));
        assert_eq!(rows[0].accuracy, 0.0);

        let exact = category_analysis(&[0.0, 1.2, 2.6, 3.9], &[0.0, 1.2, 2.6, 3.9]).unwrap();
        assert!(exact.iter().all(|r| r.incorrect == 0 && r.accuracy == 1.0));

        let neg = category_analysis(&[0.0, 1.0], &[-0.7, 0.2]).unwrap();
        assert_eq!(neg[0].negative_predictions, 1);
        assert_eq!(neg[1].under_count, 1);
    }

    #[test]
    fn pearson_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson(&x, &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&x, &[8.0, 6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&x, &[1.0; 4]), Err(Error::DegenerateVariance));
        assert_eq!(pearson(&[1.0], &[1.0]), Err(Error::DegenerateVariance));
    }

    #[test]
    fn single_county_equals_statewide() {
        let a = Matrix::from_vec(3, 2, vec![0.0, 1.0, 2.6, 3.0, 4.0, 1.0]).unwrap();
        let p = Matrix::from_vec(3, 2, vec![0.2, 1.0, 2.4, 3.1, 3.0, 1.5]).unwrap();
        let b = per_county_metrics(&[6001; 3], &a, &p, &EvalConfig::default()).unwrap();
        assert_eq!(b.counties.len(), 1);
        let (c, s) = (b.counties[0], b.statewide);
        assert_eq!((c.macro_f1, c.mae, c.mse, c.severe_ratio), (s.macro_f1, s.mae, s.mse, s.severe_ratio));
        assert_eq!(c.n_samples, 6);
    }

    #[test]
    fn drift_rows() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let p = Matrix::from_vec(2, 3, vec![1.0; 6]).unwrap();
        let d = horizon_drift_report(&a, &p).unwrap();
        assert_eq!(d.len(), 3);
        assert!(d.windows(2).all(|w| w[1].mean_abs_discrepancy > w[0].mean_abs_discrepancy));
        assert!(horizon_drift_report(&a, &a).unwrap().iter().all(|r| r.mean_abs_discrepancy == 0.0));
    }
}
