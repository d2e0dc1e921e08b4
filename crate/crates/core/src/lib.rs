//! Estimates the counts of never takers, defiers, compliers and always
//! takers from the 2×2 cross-tabulation of a binary instrument and a binary
//! treatment, without assuming monotonicity.

pub mod baseline;
pub mod bootstrap;
pub mod cli_io;
pub mod error;
pub mod golden;
pub mod least_squares;
pub mod mle;
pub mod model;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{CountMatrix, DesignParams, GroupedData, LogProb, TypeVector};
