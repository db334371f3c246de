//! Knowledge tracing over both the full practice history and a truncated
//! window: count features through a learned auto-projector, attention over
//! recent practices, contrastive alignment of the two views and a
//! dropout-perturbed auxiliary prediction.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod evaluator;
pub mod long_term;
pub mod network;
pub mod synthetic;
pub mod total_term;
pub mod trainer;
pub mod verify;

pub use error::{DataError, ModelError};
