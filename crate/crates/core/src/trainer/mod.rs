//! Initialization, Adam, and the epoch loop with validation-based selection.

mod adam;
mod fit;
mod init;

pub use adam::{AdamConfig, OptimizerState};
pub use fit::{fit, fit_with, training_stats, EpochLog, FitOutcome, TrainConfig};
pub use init::{xavier_bound, xavier_init};
