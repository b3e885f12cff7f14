use alloc::vec::Vec;

use rand::Rng as _;

use super::loss::mae_loss;
use super::nets::Network;
use crate::seed;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Minimum distance from any |.| or ReLU/max hinge; closer points are
    /// resampled by jittering inputs and targets.
    pub kink_margin: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    pub max_resamples: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-5, kink_margin: 1e-4, floor: 1e-6, max_resamples: 50, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter tensor and flat index of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
    pub resamples: usize,
}

fn loss_at<N: Network>(net: &N, x: &[f64], y: &[f64], batch: usize) -> Result<f64> {
    Ok(mae_loss(&net.predict(x, batch)?, y)?.0)
}

/// Compare the analytic gradient of every parameter against central
/// differences of the inference-mode MAE.
pub fn gradient_check<N: Network + Clone>(net: &N, x: &[f64], y: &[f64], batch: usize, config: &GradCheckConfig) -> Result<GradCheckReport> {
    let mut x = x.to_vec();
    let mut y = y.to_vec();
    let mut rng = seed::rng(config.seed);
    let mut resamples = 0;
    let (grads, _) = loop {
        let fwd = net.forward(&x, batch, None)?;
        let (_, d_out) = mae_loss(&fwd.output, &y)?;
        let margin = fwd.output.iter().zip(&y).fold(net.kink_margin(&fwd.cache), |m, (p, t)| m.min(libm::fabs(p - t)));
        if margin >= config.kink_margin || resamples >= config.max_resamples {
            break (net.backward(&fwd.cache, &d_out), margin);
        }
        resamples += 1;
        for v in x.iter_mut().chain(y.iter_mut()) {
            *v += rng.random_range(-0.1..0.1);
        }
    };
    let mut probe = net.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: (0, 0), checked: 0, resamples };
    for (p, grad) in grads.iter().enumerate() {
        for (i, &analytic) in grad.iter().enumerate() {
            let original = probe.params()[p].value[i];
            probe.params_mut()[p].value[i] = original + config.eps;
            let plus = loss_at(&probe, &x, &y, batch)?;
            probe.params_mut()[p].value[i] = original - config.eps;
            let minus = loss_at(&probe, &x, &y, batch)?;
            probe.params_mut()[p].value[i] = original;
            let numeric = (plus - minus) / (2.0 * config.eps);
            let scale = libm::fabs(analytic).max(libm::fabs(numeric)).max(config.floor);
            let rel = libm::fabs(analytic - numeric) / scale;
            if rel > report.max_rel_error || rel.is_nan() {
                report.max_rel_error = rel;
                report.worst = (p, i);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

/// Random inputs and targets for a gradient check of `net`.
pub fn random_problem<N: Network>(net: &N, batch: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = crate::seed::rng(seed);
    let x = (0..batch * net.input_width()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..batch * net.horizon()).map(|_| rng.random_range(-1.0..1.0)).collect();
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::nets::{CnnConfig, CnnNet, DenseNet, LstmConfig, LstmNet};

    #[test]
    fn dense_gradients() {
        let net = DenseNet::new(3, 2, 2, 1);
        let (x, y) = random_problem(&net, 4, 2);
        let r = gradient_check(&net, &x, &y, 4, &GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_error < 1e-7, "{r:?}");
        assert_eq!(r.checked, 6 * 2 + 2);
    }

    #[test]
    fn lstm_gradients() {
        let cfg = LstmConfig { layer1_units: 5, layer2_units: 3, dropout_rate: 0.0, ..LstmConfig::new(4, 3, 2, 7) };
        let net = LstmNet::new(cfg).unwrap();
        let (x, y) = random_problem(&net, 3, 8);
        let r = gradient_check(&net, &x, &y, 3, &GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn cnn_gradients() {
        let cfg = CnnConfig { filters: 4, dense_units: 5, dropout_rate: 0.0, ..CnnConfig::new(6, 3, 2, 7) };
        let net = CnnNet::new(cfg).unwrap();
        let (x, y) = random_problem(&net, 3, 9);
        let r = gradient_check(&net, &x, &y, 3, &GradCheckConfig::default()).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
