//! Simulation and verification toolkit for triangular-array max–sum
//! processes stopped at a renewal-type inverse.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod array;
pub mod conditions;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod limit;
pub mod marginal;
pub mod path;
pub mod quad;
pub mod runner;
pub mod sampler;
pub mod seed;

pub use error::{Error, Result};
pub use path::{CadlagPath, CoordFlag, Inverse, InverseStatus};
