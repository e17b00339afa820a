//! Solvers and verification instruments for singular parabolic and elliptic
//! problems driven by the fractional Laplacian on an interval.

// `!(x > 0.0)` style checks reject NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod grid;
pub mod field;
pub mod dense;
pub mod fraclap;
pub mod stationary;
pub mod evolution;
pub mod analysis;
pub mod catalog;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
pub use field::Field;
pub use fraclap::{EigenPair, FracOperator};
pub use grid::Grid;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
