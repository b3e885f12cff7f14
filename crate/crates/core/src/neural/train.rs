use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::mae_loss;
use super::nets::Network;
use super::param::Param;
use crate::matrix::Matrix;
use crate::seed;
use crate::{Error, Result};

/// How the validation split is used during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValidationUse {
    /// Record validation MAE per epoch; keep the final parameters.
    #[default]
    Monitor,
    /// Keep the best-validation parameters and stop after `patience` epochs
    /// without improvement.
    EarlyStopping { patience: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub validation: ValidationUse,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 50, batch_size: 256, learning_rate: 1e-3, seed: 0, validation: ValidationUse::Monitor }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    /// Mean training MAE per epoch (dropout active).
    pub train_loss: Vec<f64>,
    /// Validation MAE per epoch, empty when no validation set was given.
    pub val_loss: Vec<f64>,
    /// Zero-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.val_loss.get(self.best_epoch).copied()
    }
}

fn check_data<N: Network>(net: &N, x: &Matrix, y: &Matrix) -> Result<()> {
    if x.cols() != net.input_width() {
        return Err(Error::DimensionMismatch { expected: net.input_width(), found: x.cols() });
    }
    if y.cols() != net.horizon() {
        return Err(Error::DimensionMismatch { expected: net.horizon(), found: y.cols() });
    }
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.rows() });
    }
    Ok(())
}

/// Mean absolute error of inference-mode predictions, evaluated in chunks.
pub fn evaluate_mae<N: Network>(net: &N, x: &Matrix, y: &Matrix, chunk: usize) -> Result<f64> {
    check_data(net, x, y)?;
    if x.rows() == 0 {
        return Err(Error::Empty);
    }
    let chunk = chunk.max(1);
    let mut total = 0.0;
    let mut start = 0;
    while start < x.rows() {
        let end = (start + chunk).min(x.rows());
        let rows = end - start;
        let pred = net.predict(&x.as_slice()[start * x.cols()..end * x.cols()], rows)?;
        let target = &y.as_slice()[start * y.cols()..end * y.cols()];
        total += pred.iter().zip(target).map(|(p, t)| libm::fabs(p - t)).sum::<f64>();
        start = end;
    }
    Ok(total / (x.rows() * y.cols()) as f64)
}

/// Mini-batch Adam on MAE. Shuffling and dropout masks are drawn from
/// generators derived from `config.seed` and the epoch number.
pub fn train<N: Network>(
    net: &mut N,
    train_x: &Matrix,
    train_y: &Matrix,
    validation: Option<(&Matrix, &Matrix)>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    check_data(net, train_x, train_y)?;
    if train_x.rows() == 0 {
        return Err(Error::EmptyTraining);
    }
    let validation = validation.filter(|(vx, _)| vx.rows() > 0);
    if let Some((vx, vy)) = validation {
        check_data(net, vx, vy)?;
    }
    let mut adam = AdamState::new(net.params(), AdamConfig { learning_rate: config.learning_rate, ..AdamConfig::default() });
    let mut order: Vec<usize> = (0..train_x.rows()).collect();
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, Vec<Param>)> = None;
    let mut since_best = 0;
    let mut bx = Vec::new();
    let mut by = Vec::new();
    for epoch in 0..config.epochs {
        let mut shuffle = seed::rng(seed::derive(config.seed, &[epoch as u64, 0]));
        let mut dropout = seed::rng(seed::derive(config.seed, &[epoch as u64, 1]));
        order.sort_unstable();
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            bx.clear();
            by.clear();
            for &i in batch {
                bx.extend_from_slice(train_x.row(i));
                by.extend_from_slice(train_y.row(i));
            }
            let fwd = net.forward(&bx, batch.len(), Some(&mut dropout))?;
            let (loss, grad) = mae_loss(&fwd.output, &by)?;
            if !loss.is_finite() {
                return Err(Error::DivergedLoss { epoch });
            }
            loss_sum += loss * batch.len() as f64;
            let grads = net.backward(&fwd.cache, &grad);
            adam_step(net.params_mut(), &grads, &mut adam)?;
        }
        let epoch_loss = loss_sum / train_x.rows() as f64;
        history.train_loss.push(epoch_loss);
        if net.params().iter().any(|p| p.value.iter().any(|v| !v.is_finite())) {
            return Err(Error::DivergedLoss { epoch });
        }
        let Some((vx, vy)) = validation else {
            history.best_epoch = epoch;
            continue;
        };
        let val = evaluate_mae(net, vx, vy, config.batch_size.max(256))?;
        if !val.is_finite() {
            return Err(Error::DivergedLoss { epoch });
        }
        history.val_loss.push(val);
        match config.validation {
            ValidationUse::Monitor => history.best_epoch = epoch,
            ValidationUse::EarlyStopping { patience } => {
                if best.as_ref().is_none_or(|(b, _)| val < *b) {
                    best = Some((val, net.params().to_vec()));
                    history.best_epoch = epoch;
                    since_best = 0;
                } else {
                    since_best += 1;
                    if since_best > patience {
                        history.stopped_early = epoch + 1 < config.epochs;
                        break;
                    }
                }
            }
        }
    }
    if let Some((_, params)) = best {
        for (dst, src) in net.params_mut().iter_mut().zip(params) {
            *dst = src;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::nets::{CnnConfig, CnnNet, DenseNet, LstmConfig, LstmNet};

    fn toy(rows: usize, width: usize, horizon: usize) -> (Matrix, Matrix) {
        let x: Vec<f64> = (0..rows * width).map(|i| libm::sin(i as f64 * 0.37)).collect();
        let x = Matrix::from_vec(rows, width, x).unwrap();
        let mut y = Matrix::zeros(rows, horizon);
        for r in 0..rows {
            let s: f64 = x.row(r).iter().sum();
            for h in 0..horizon {
                y.set(r, h, 0.5 * s + h as f64 * 0.1);
            }
        }
        (x, y)
    }

    #[test]
    fn single_sample_memorized() {
        let (x, y) = toy(1, 12, 2);
        let cfg = LstmConfig { layer1_units: 8, layer2_units: 4, dropout_rate: 0.0, ..LstmConfig::new(4, 3, 2, 2) };
        let mut net = LstmNet::new(cfg).unwrap();
        let tc = TrainConfig { epochs: 200, batch_size: 1, learning_rate: 1e-2, ..TrainConfig::default() };
        train(&mut net, &x, &y, None, &tc).unwrap();
        assert!(evaluate_mae(&net, &x, &y, 8).unwrap() < 0.05);
    }

    #[test]
    fn dropout_history_is_seeded() {
        let (x, y) = toy(20, 12, 2);
        let cfg = CnnConfig { filters: 3, dense_units: 4, dropout_rate: 0.3, ..CnnConfig::new(4, 3, 2, 5) };
        let tc = TrainConfig { epochs: 5, batch_size: 6, seed: 9, ..TrainConfig::default() };
        let run = || {
            let mut net = CnnNet::new(cfg).unwrap();
            train(&mut net, &x, &y, Some((&x, &y)), &tc).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.train_loss.len(), 5);
        assert_eq!(a.val_loss.len(), 5);
    }

    #[test]
    fn early_stopping_keeps_best() {
        let (x, y) = toy(30, 6, 1);
        let (vx, vy) = toy(10, 6, 1);
        let mut net = DenseNet::new(2, 3, 1, 4);
        let tc = TrainConfig { epochs: 40, batch_size: 4, learning_rate: 0.5, validation: ValidationUse::EarlyStopping { patience: 2 }, ..TrainConfig::default() };
        let h = train(&mut net, &x, &y, Some((&vx, &vy)), &tc).unwrap();
        let best = h.best_val_loss().unwrap();
        assert!(h.val_loss.iter().all(|&v| v >= best));
        assert_eq!(evaluate_mae(&net, &vx, &vy, 3).unwrap(), best);
    }

    #[test]
    fn rejects_empty_and_bad_shapes() {
        let mut net = DenseNet::zeros(2, 3, 1);
        let x = Matrix::zeros(0, 6);
        let y = Matrix::zeros(0, 1);
        assert!(matches!(train(&mut net, &x, &y, None, &TrainConfig::default()), Err(Error::EmptyTraining)));
        let (x, y) = toy(3, 5, 1);
        assert!(matches!(train(&mut net, &x, &y, None, &TrainConfig::default()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn divergence_detected() {
        let (x, mut y) = toy(3, 6, 1);
        y.set(0, 0, f64::NAN);
        let mut net = DenseNet::zeros(2, 3, 1);
        assert!(matches!(train(&mut net, &x, &y, None, &TrainConfig::default()), Err(Error::DivergedLoss { epoch: 0 })));
    }
}
