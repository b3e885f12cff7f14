//! Neural forecasters with hand-written backpropagation.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod nets;
pub mod param;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, random_problem, GradCheckConfig, GradCheckReport};
pub use layers::{dropout_mask, lstm_cell, LstmCellParams};
pub use loss::mae_loss;
pub use nets::{CnnConfig, CnnNet, DenseNet, Forward, LstmConfig, LstmNet, Network};
pub use param::{Gradients, Param};
pub use train::{evaluate_mae, train, TrainConfig, TrainHistory, ValidationUse};
