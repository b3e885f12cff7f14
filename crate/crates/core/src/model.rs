use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::neural::{CnnNet, LstmNet, Network};
use crate::tree::{persistence_forecast, BoostModel, ForestModel};
use crate::windowing::WindowSample;
use crate::{Error, Result};

/// Any fitted forecaster, predicting `horizon` scores per sample.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Persistence { horizon: usize },
    Forest(ForestModel),
    Boost(BoostModel),
    Lstm(LstmNet),
    Cnn(CnnNet),
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Persistence { .. } => "persistence",
            Self::Forest(_) => "random_forest",
            Self::Boost(_) => "gradient_boost",
            Self::Lstm(_) => "lstm",
            Self::Cnn(_) => "cnn",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Self::Persistence { horizon } => *horizon,
            Self::Forest(m) => m.horizon(),
            Self::Boost(m) => m.horizon(),
            Self::Lstm(m) => m.horizon(),
            Self::Cnn(m) => m.horizon(),
        }
    }

    /// Flattened input width the model expects, `None` for persistence.
    pub fn input_width(&self) -> Option<usize> {
        match self {
            Self::Persistence { .. } => None,
            Self::Forest(m) => Some(m.n_inputs),
            Self::Boost(m) => Some(m.n_inputs),
            Self::Lstm(m) => Some(m.input_width()),
            Self::Cnn(m) => Some(m.input_width()),
        }
    }

    /// `samples.len() x horizon` predictions.
    pub fn predict(&self, samples: &[WindowSample]) -> Result<Matrix> {
        let horizon = self.horizon();
        if let Some(width) = self.input_width() {
            if let Some(bad) = samples.iter().find(|s| s.features.len() != width) {
                return Err(Error::DimensionMismatch { expected: width, found: bad.features.len() });
            }
        }
        let data: Vec<f64> = match self {
            Self::Persistence { .. } => samples.iter().flat_map(|s| persistence_forecast(s, horizon)).collect(),
            Self::Forest(m) => samples.iter().flat_map(|s| m.predict_row(s.flat())).collect(),
            Self::Boost(m) => samples.iter().flat_map(|s| m.predict_row(s.flat())).collect(),
            Self::Lstm(m) => predict_net(m, samples)?,
            Self::Cnn(m) => predict_net(m, samples)?,
        };
        Matrix::from_vec(samples.len(), horizon, data)
    }
}

fn predict_net<N: Network>(net: &N, samples: &[WindowSample]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len() * net.horizon());
    for chunk in samples.chunks(512) {
        let x: Vec<f64> = chunk.iter().flat_map(|s| s.features.iter().copied()).collect();
        out.extend(net.predict(&x, chunk.len())?);
    }
    Ok(out)
}
