use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::boost::BoostModel;
use super::cart::RegressionTree;
use super::forest::ForestModel;
use crate::{Error, Result};

/// Normalized split gain per original variable, summed over lags.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImportance {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
}

impl FeatureImportance {
    pub fn weight(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.weights[i])
    }

    /// Variables by descending weight; ties keep variable order.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self.names.iter().map(String::as_str).zip(self.weights.iter().copied()).collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1));
        out
    }
}

/// Sums each split's SSE reduction onto variable `column % variables.len()`.
pub fn importance_from_trees<'a>(
    trees: impl IntoIterator<Item = &'a RegressionTree>,
    variables: &[&str],
) -> Result<FeatureImportance> {
    if variables.is_empty() {
        return Err(Error::InvalidConfig("no variable names".into()));
    }
    let mut weights = alloc::vec![0.0; variables.len()];
    for tree in trees {
        for (feature, gain) in tree.split_gains() {
            weights[feature % variables.len()] += gain.max(0.0);
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::UntrainedModel);
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(FeatureImportance { names: variables.iter().map(|s| s.to_string()).collect(), weights })
}

pub fn boost_feature_importance(model: &BoostModel, variables: &[&str]) -> Result<FeatureImportance> {
    importance_from_trees(model.trees(), variables)
}

pub fn forest_feature_importance(model: &ForestModel, variables: &[&str]) -> Result<FeatureImportance> {
    importance_from_trees(model.trees(), variables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::cart::Node;

    #[test]
    fn single_lagged_score_split() {
        // three variables per week, two weeks: column 4 is week 1's variable 1
        let tree = RegressionTree::from_nodes(
            alloc::vec![
                Node::Split { feature: 4, threshold: 0.5, left: 1, right: 2, gain: 3.0 },
                Node::Leaf { value: 0.0, weight: 1.0 },
                Node::Leaf { value: 1.0, weight: 1.0 },
            ],
            6,
        )
        .unwrap();
        let imp = importance_from_trees([&tree], &["a", "score", "c"]).unwrap();
        assert_eq!(imp.weight("score"), Some(1.0));
        assert_eq!(imp.ranked()[0].0, "score");
    }

    #[test]
    fn leaf_only_is_untrained() {
        let tree = RegressionTree::from_nodes(alloc::vec![Node::Leaf { value: 1.0, weight: 3.0 }], 2).unwrap();
        assert_eq!(importance_from_trees([&tree], &["a", "b"]), Err(Error::UntrainedModel));
    }
}
