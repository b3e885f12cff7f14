use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("training set is empty")]
    EmptyTraining,
    #[error("split has no records")]
    EmptySplit,
    #[error("empty input")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch for parameter {index}: expected {expected} values, found {found}")]
    ShapeMismatch { index: usize, expected: usize, found: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("counties cover different week ranges (fips {fips})")]
    RaggedCounties { fips: u32 },
    #[error("split `{split}` would be empty")]
    DegenerateSplit { split: &'static str },
    #[error("split ratios must be non-negative and sum to 1 (sum = {sum})")]
    InvalidRatios { sum: f64 },
    #[error("series has zero variance or too few points for a correlation")]
    DegenerateVariance,
    #[error("model has no trained splits")]
    UntrainedModel,
    #[error("loss became non-finite at epoch {epoch}")]
    DivergedLoss { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
