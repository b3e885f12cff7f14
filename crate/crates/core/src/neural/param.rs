use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::seed::Rng;

/// A named parameter tensor stored flat in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
}

impl Param {
    pub fn zeros(name: &str, shape: &[usize]) -> Self {
        Self { name: name.into(), shape: shape.to_vec(), value: alloc::vec![0.0; shape.iter().product()] }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn fan_in_uniform(name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(fan_in.max(1) as f64);
        let mut p = Self::zeros(name, shape);
        for v in &mut p.value {
            *v = rng.random_range(-bound..bound);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// One gradient buffer per parameter, in parameter order.
pub type Gradients = Vec<Vec<f64>>;

pub(crate) fn check_shapes(expected: &[Param], found: &[Param]) -> crate::Result<()> {
    if expected.len() != found.len() {
        return Err(crate::Error::DimensionMismatch { expected: expected.len(), found: found.len() });
    }
    for (index, (e, f)) in expected.iter().zip(found).enumerate() {
        if e.shape != f.shape || f.value.len() != f.shape.iter().product::<usize>() {
            return Err(crate::Error::ShapeMismatch { index, expected: e.len(), found: f.len() });
        }
    }
    Ok(())
}
