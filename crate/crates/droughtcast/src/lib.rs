//! Weekly drought-score forecasting toolkit.
//!
//! This crate adds the IO side to `droughtcast-core`: parsing the daily
//! weather/score CSV, a seeded synthetic data generator, experiment
//! configuration, report files, the experiment and sweep harness, and the
//! `droughtcast` command line.

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod harness;
pub mod ingest;
pub mod synth;

pub use config::{DataSource, ExperimentConfig, ModelKind};
pub use error::{Error, Result, Stage};
