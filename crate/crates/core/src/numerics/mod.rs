//! Numerical substrate: overflow-safe scalars, paired-limb arithmetic,
//! quadrature rules and small dense linear algebra.

mod ddouble;
mod linalg;
mod quadrature;
mod scaled;

pub use ddouble::DoubleDouble;
pub use linalg::{det_lu, solve, sym_eigen, tridiagonal_eigen, Lu, Scalar, SquareMatrix};
pub(crate) use quadrature::mapped_rule;
pub use quadrature::{
    adaptive_gauss_legendre, adaptive_gauss_legendre_vec, gauss_hermite, gauss_legendre, gauss_legendre_mapped,
    QuadratureKind, QuadratureRule,
};
pub use scaled::ScaledReal;
