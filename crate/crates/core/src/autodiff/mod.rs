//! Minimal reverse-mode differentiation: a vector-valued tape over a borrowed
//! parameter store, plus a finite-difference checker.

mod gradcheck;
mod graph;
mod params;

pub use gradcheck::{
    analytic_gradients, check_random_coordinates, finite_difference_check, relative_error,
    sample_coordinates, CoordinateCheck, GradCheckReport, REL_ERROR_FLOOR,
};
pub use graph::{Graph, NodeId, OpKind, Value};
pub use params::{Gradients, ParamId, ParamStore, Parameter};
