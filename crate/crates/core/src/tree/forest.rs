use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::cart::{grow, RegressionTree, SortedColumns, TreeParams};
use crate::matrix::Matrix;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Bootstrap draws per tree as a fraction of the training rows.
    pub bootstrap_fraction: f64,
    /// Fraction of features considered at each split.
    pub feature_fraction: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 300,
            max_depth: 4,
            min_leaf: 1,
            bootstrap_fraction: 1.0,
            feature_fraction: 1.0 / 3.0,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidConfig("n_trees must be at least 1".into()));
        }
        if !(self.bootstrap_fraction > 0.0) || !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(Error::InvalidConfig("forest fractions must lie in (0, 1]".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, n_features: usize) -> usize {
        (libm::round(n_features as f64 * self.feature_fraction) as usize).clamp(1, n_features.max(1))
    }
}

/// One bagged forest per horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub config: ForestConfig,
    pub n_inputs: usize,
    /// `steps[k]` holds the trees predicting horizon step `k`.
    pub steps: Vec<Vec<RegressionTree>>,
}

impl ForestModel {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        self.steps
            .iter()
            .map(|trees| trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / trees.len() as f64)
            .collect()
    }

    pub fn trees(&self) -> impl Iterator<Item = &RegressionTree> {
        self.steps.iter().flatten()
    }
}

/// Fits `targets.cols()` independent forests; tree `t` of step `k` uses seed
/// `derive(config.seed, [k, t])` for its bootstrap and feature subsets.
pub fn fit_random_forest(x: &Matrix, targets: &Matrix, config: &ForestConfig) -> Result<ForestModel> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    if targets.rows() != x.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: targets.rows() });
    }
    let sorted = SortedColumns::new(x);
    let params = TreeParams {
        max_features: Some(config.features_per_split(x.cols())),
        ..TreeParams::new(config.max_depth, config.min_leaf)
    };
    let n = x.rows();
    let draws = (libm::round(n as f64 * config.bootstrap_fraction) as usize).max(1);
    let mut weights = vec![0.0; n];
    let steps = (0..targets.cols())
        .map(|k| {
            let y = targets.column(k);
            (0..config.n_trees)
                .map(|t| {
                    let mut rng = seed::rng(seed::derive(config.seed, &[k as u64, t as u64]));
                    weights.iter_mut().for_each(|w| *w = 0.0);
                    for _ in 0..draws {
                        weights[rng.random_range(0..n)] += 1.0;
                    }
                    grow(x, &sorted, &y, &weights, &params, Some(&mut rng))
                })
                .collect()
        })
        .collect();
    Ok(ForestModel { config: *config, n_inputs: x.cols(), steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(seed: u64, n: usize) -> (Matrix, Matrix) {
        let mut rng = seed::rng(seed);
        let x: Vec<f64> = (0..n * 4).map(|_| rng.random::<f64>()).collect();
        let x = Matrix::from_vec(n, 4, x).unwrap();
        let mut y = Matrix::zeros(n, 2);
        for i in 0..n {
            y.set(i, 0, 3.0 * x.get(i, 0) + rng.random::<f64>() * 0.1);
            y.set(i, 1, 2.5 - x.get(i, 2));
        }
        (x, y)
    }

    #[test]
    fn constant_target_predicts_constant() {
        let (x, _) = data(1, 30);
        let y = Matrix::from_vec(30, 1, vec![1.75; 30]).unwrap();
        let f = fit_random_forest(&x, &y, &ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
        for r in x.iter_rows() {
            assert_eq!(f.predict_row(r), vec![1.75]);
        }
    }

    #[test]
    fn predictions_bounded_and_seeded() {
        let (x, y) = data(2, 80);
        let cfg = ForestConfig { n_trees: 25, seed: 9, ..Default::default() };
        let a = fit_random_forest(&x, &y, &cfg).unwrap();
        let b = fit_random_forest(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        for k in 0..2 {
            let col = y.column(k);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for r in x.iter_rows() {
                let p = a.predict_row(r)[k];
                assert!(p >= lo && p <= hi);
            }
        }
        let c = fit_random_forest(&x, &y, &ForestConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_input() {
        let x = Matrix::zeros(0, 3);
        let y = Matrix::zeros(0, 1);
        assert_eq!(fit_random_forest(&x, &y, &ForestConfig::default()), Err(Error::EmptyTraining));
        let bad = ForestConfig { n_trees: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
