//! Hyperplane absolute game on [0,1]^d, explicit Alice strategies that force
//! the outcome into twisted non-recurrent sets of piecewise expanding maps,
//! and a 1-D IFS subsystem and dimension toolkit.

pub mod adversaries;
pub mod conformal;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod game;
pub mod geometry;
pub mod scalar;
pub mod strategies;
pub mod targets;

pub use error::{Error, Result};
pub use scalar::{NumericMode, Scalar};
