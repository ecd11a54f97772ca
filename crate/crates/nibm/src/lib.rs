//! Batch driver for `nibm-core`: command-line runs with CSV/JSON output and
//! the Monte-Carlo oracles the determinant formulas are validated against.

// `!(x > 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod grid;
pub mod montecarlo;
pub mod output;
pub mod validate;

pub use error::{CliError, Result};
