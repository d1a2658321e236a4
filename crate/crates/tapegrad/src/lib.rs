//! Tape-based reverse-mode automatic differentiation over `f64` matrices.
//!
//! Values are eagerly computed `ndarray::Array2<f64>` matrices (vectors are
//! 1×n or n×1). A [`Tape`] records every operation; [`Tape::backward`] walks
//! the record in reverse and accumulates gradients for the parameters held in
//! a [`ParamSet`]. The op set is deliberately small: exactly what a gated
//! recurrent encoder, scaled dot-product attention, small convolutions, and
//! the usual classification losses need.

mod adam;
mod check;
mod init;
mod params;
mod tape;

pub use adam::Adam;
pub use check::{central_diff, rel_error, GradCheckReport};
pub use init::{identity, normal, standard_normal, xavier, zeros};
pub use params::{ParamId, ParamSet};
pub use tape::{Gradients, GraphError, NodeId, Tape};

/// Matrix type used throughout.
pub type Mat = ndarray::Array2<f64>;
