//! Forecasting core for weekly drought-score series.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std` (only `alloc` is required):
//!
//! - [`windowing`]: temporal splits, z-score normalization, and the sliding
//!   window transform that turns weekly series into supervised samples.
//! - [`tree`]: persistence baseline, CART regression trees, random forests and
//!   stagewise gradient boosting, with gain-based feature importance.
//! - [`neural`]: dense, LSTM and 1-D convolution layers with hand-written
//!   backpropagation, MAE loss, Adam, a mini-batch trainer and a
//!   finite-difference gradient checker.
//! - [`evaluation`]: regression errors, severe-drought classification reports,
//!   integer-category analysis, per-county metrics and horizon drift.
//!
//! IO, file formats and the command line live in the `droughtcast` crate.
#![no_std]

extern crate alloc;

pub mod date;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod matrix;
pub mod model;
pub mod neural;
pub mod record;
pub mod seed;
pub mod tree;
pub mod windowing;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use model::TrainedModel;
pub use record::{CountySeries, WeeklyRecord};
pub use windowing::{WindowSample, WindowSet, WindowSpec};
