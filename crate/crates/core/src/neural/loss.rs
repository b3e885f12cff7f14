use alloc::vec::Vec;

use crate::{Error, Result};

/// Mean absolute error and its gradient with respect to `pred`.
///
/// The subgradient at `pred == target` is taken as 0.
pub fn mae_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::DimensionMismatch { expected: target.len(), found: pred.len() });
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng as _;

    #[test]
    fn exact_and_unit_cases() {
        assert_eq!(mae_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, alloc::vec![0.0, 0.0]));
        assert_eq!(mae_loss(&[1.0], &[0.0]).unwrap(), (1.0, alloc::vec![1.0]));
        assert!(mae_loss(&[1.0], &[]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = seed::rng(21);
        let pred: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let target: Vec<f64> = (0..16).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, grad) = mae_loss(&pred, &target).unwrap();
        let eps = 1e-6;
        for i in 0..pred.len() {
            assert!((pred[i] - target[i]).abs() > 10.0 * eps);
            let mut hi = pred.clone();
            hi[i] += eps;
            let mut lo = pred.clone();
            lo[i] -= eps;
            let fd = (mae_loss(&hi, &target).unwrap().0 - mae_loss(&lo, &target).unwrap().0) / (2.0 * eps);
            assert!((fd - grad[i]).abs() < 1e-6, "{fd} vs {}", grad[i]);
        }
    }
}
