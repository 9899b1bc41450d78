//! Learning the Q-matrix of a DINA cognitive diagnosis model from binary
//! response data.
//!
//! The crate is organised bottom-up:
//!
//! * [`qmatrix`]: Q-matrix algebra, equivalence classes and candidate enumeration;
//! * [`tmatrix`]: T-matrix variants, the guessing vector and the D-matrix;
//! * [`solver`]: least squares over the probability simplex;
//! * [`estimator`]: scores, Q-matrix search, slipping estimators and
//!   identifiability checks;
//! * [`simulator`]: seeded DINA cohorts and alpha-vectors.
//!
//! Matrix construction and the solver are generic over the scalar type;
//! the estimators work in `f64`.

pub mod error;
pub mod estimator;
pub mod qmatrix;
pub mod scalar;
pub mod simulator;
pub mod solver;
pub mod tmatrix;

pub use error::{Error, Result};
pub use qmatrix::{enumerate_candidates, AttributeProfile, ItemCombo, QMatrix};
pub use scalar::{Real, Scalar};
pub use tmatrix::{ComboOrder, Variant};

/// DINA parameters in double precision.
pub type DinaParams = tmatrix::DinaParams<f64>;
/// T-matrix in double precision.
pub type TMatrix = tmatrix::TMatrix<f64>;
/// D-matrix in double precision.
pub type DMatrix = tmatrix::DMatrix<f64>;
/// Simplex least-squares problem in double precision.
pub type LsqProblem = solver::LsqProblem<f64>;
/// Simplex least-squares solution in double precision.
pub type LsqSolution = solver::LsqSolution<f64>;
