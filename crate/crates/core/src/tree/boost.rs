use alloc::vec::Vec;

use super::cart::{grow, RegressionTree, SortedColumns, TreeParams};
use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    /// L2 penalty on leaf values; 0 gives plain squared-error boosting.
    pub leaf_penalty: f64,
    pub min_leaf: usize,
    /// Echoed for reproducibility; fitting itself draws no random numbers.
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self { n_estimators: 100, max_depth: 3, learning_rate: 0.15, leaf_penalty: 0.0, min_leaf: 1, seed: 0 }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::InvalidConfig("n_estimators must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::InvalidConfig("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.leaf_penalty >= 0.0) {
            return Err(Error::InvalidConfig("leaf_penalty must be non-negative".into()));
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams { leaf_penalty: self.leaf_penalty, ..TreeParams::new(self.max_depth, self.min_leaf) }
    }
}

/// Additive model for one horizon step: `base + lr * sum(trees)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedStep {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
    /// Training MSE after the base score (index 0) and after each tree.
    pub train_mse: Vec<f64>,
}

impl BoostedStep {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.predict_staged(x, self.trees.len())
    }

    /// Prediction using only the first `stages` trees.
    pub fn predict_staged(&self, x: &[f64], stages: usize) -> f64 {
        self.trees[..stages.min(self.trees.len())]
            .iter()
            .fold(self.base, |acc, t| acc + self.learning_rate * t.predict_row(x))
    }
}

/// Stagewise squared-error boosting on one target column.
pub fn fit_gradient_boost(x: &Matrix, y: &[f64], config: &BoostConfig) -> Result<BoostedStep> {
    config.validate()?;
    if x.rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    Ok(boost_step(x, &SortedColumns::new(x), y, config))
}

fn boost_step(x: &Matrix, sorted: &SortedColumns, y: &[f64], config: &BoostConfig) -> BoostedStep {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = alloc::vec![base; n];
    let weights = alloc::vec![1.0; n];
    let params = config.tree_params();
    let mse = |fitted: &[f64]| fitted.iter().zip(y).map(|(f, t)| (t - f) * (t - f)).sum::<f64>() / n as f64;
    let mut train_mse = Vec::with_capacity(config.n_estimators + 1);
    train_mse.push(mse(&fitted));
    let mut trees = Vec::with_capacity(config.n_estimators);
    let mut residual = alloc::vec![0.0; n];
    for _ in 0..config.n_estimators {
        for ((r, t), f) in residual.iter_mut().zip(y).zip(&fitted) {
            *r = t - f;
        }
        let tree = grow(x, sorted, &residual, &weights, &params, None);
        for (i, f) in fitted.iter_mut().enumerate() {
            *f += config.learning_rate * tree.predict_row(x.row(i));
        }
        train_mse.push(mse(&fitted));
        trees.push(tree);
    }
    BoostedStep { base, learning_rate: config.learning_rate, trees, train_mse }
}

/// One boosted model per horizon step.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostModel {
    pub config: BoostConfig,
    pub n_inputs: usize,
    pub steps: Vec<BoostedStep>,
}

impl BoostModel {
    pub fn fit(x: &Matrix, targets: &Matrix, config: &BoostConfig) -> Result<Self> {
        config.validate()?;
        if x.rows() == 0 {
            return Err(Error::EmptyTraining);
        }
        if targets.rows() != x.rows() {
            return Err(Error::LengthMismatch { left: x.rows(), right: targets.rows() });
        }
        let sorted = SortedColumns::new(x);
        let steps = (0..targets.cols()).map(|k| boost_step(x, &sorted, &targets.column(k), config)).collect();
        Ok(Self { config: *config, n_inputs: x.cols(), steps })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        self.steps.iter().map(|s| s.predict_row(x)).collect()
    }

    pub fn trees(&self) -> impl Iterator<Item = &RegressionTree> {
        self.steps.iter().flat_map(|s| s.trees.iter())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng as _;

    #[test]
    fn base_only_is_mean() {
        let x = Matrix::from_vec(4, 1, alloc::vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [1.0, 2.0, 4.0, 5.0];
        let m = fit_gradient_boost(&x, &y, &BoostConfig { n_estimators: 5, ..Default::default() }).unwrap();
        assert_eq!(m.base, 3.0);
        assert_eq!(m.predict_staged(x.row(0), 0), 3.0);
        assert_eq!(m.train_mse.len(), 6);
    }

    #[test]
    fn training_mse_never_increases() {
        let mut rng = seed::rng(4);
        let n = 60;
        let x: Vec<f64> = (0..n * 3).map(|_| rng.random::<f64>()).collect();
        let x = Matrix::from_vec(n, 3, x).unwrap();
        let y: Vec<f64> = (0..n).map(|i| libm::sin(6.0 * x.get(i, 0)) + x.get(i, 1) + rng.random::<f64>()).collect();
        let m = fit_gradient_boost(&x, &y, &BoostConfig::default()).unwrap();
        assert!(m.train_mse.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        assert!(m.train_mse.last().unwrap() < &m.train_mse[0]);
    }

    #[test]
    fn config_validation() {
        assert!(BoostConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
        assert!(BoostConfig { learning_rate: 1.5, ..Default::default() }.validate().is_err());
        assert!(BoostConfig { n_estimators: 0, ..Default::default() }.validate().is_err());
        let x = Matrix::zeros(0, 2);
        assert_eq!(fit_gradient_boost(&x, &[], &BoostConfig::default()), Err(Error::EmptyTraining));
    }
}
