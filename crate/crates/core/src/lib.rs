//! Exact finite-N distributions of the maximum and argmax of the top path in
//! ensembles of non-intersecting Brownian bridges, excursions and reflected
//! bridges, together with their Airy-process limits.
//!
//! Every finite-N quantity reduces to an `N x N` determinant in the Hermite
//! eigenbasis: the operators involved are all of the form `K X K` with `K` a
//! rank-`N` spectral projection. The N -> infinity limits are evaluated by
//! Nyström discretization of Airy-kernel Fredholm determinants on the half line.
//!
//! The crate is `no_std` (it needs `alloc`); IO, sampling and the command line
//! live in the companion `nibm` crate.

#![no_std]
#![allow(clippy::needless_range_loop)]
#![allow(clippy::excessive_precision)]
// `!(x > 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod airy;
pub mod distributions;
mod error;
pub mod hermite;
pub mod kernels;
pub mod limit;
pub mod numerics;

pub use error::{Error, Result};
pub use kernels::ModelKind;
