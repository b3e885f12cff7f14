//! Tree-based forecasters and the persistence baseline.
//!
//! Multi-week forecasts use one independent model per horizon step.

mod boost;
mod cart;
mod forest;
mod importance;
mod serial;

pub use boost::{fit_gradient_boost, BoostConfig, BoostModel, BoostedStep};
pub use cart::{fit_tree, Node, RegressionTree, SortedColumns, TreeParams};
pub use forest::{fit_random_forest, ForestConfig, ForestModel};
pub use importance::{boost_feature_importance, forest_feature_importance, importance_from_trees, FeatureImportance};
pub use serial::{boost_from_text, boost_to_text, forest_from_text, forest_to_text};

use alloc::vec::Vec;

use crate::windowing::WindowSample;

/// Repeats the mean raw score of the input window for every horizon step.
pub fn persistence_forecast(sample: &WindowSample, horizon: usize) -> Vec<f64> {
    let mean = if sample.history.is_empty() {
        0.0
    } else {
        sample.history.iter().sum::<f64>() / sample.history.len() as f64
    };
    alloc::vec![mean; horizon]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sample(history: Vec<f64>) -> WindowSample {
        WindowSample { fips: 6001, anchor: 0, window: history.len(), n_features: 0, features: vec![], labels: vec![], history }
    }

    #[test]
    fn persistence_is_window_mean() {
        assert_eq!(persistence_forecast(&sample(vec![2.0; 30]), 12), vec![2.0; 12]);
        assert_eq!(persistence_forecast(&sample(vec![1.0, 2.0, 3.0]), 2), vec![2.0, 2.0]);
    }
}
