//! Numerical laboratory for the Gaussian fluctuation structure of Tr f(X)A
//! over i.i.d. non-Hermitian random matrices.
//!
//! The pipeline: sample X (ensemble), build resolvent blocks of the
//! Hermitization of X - z (hermitize), integrate f against the (2,1) block
//! over a circular contour (contour, stats), and compare Monte Carlo
//! fluctuations against deterministic predictions (dyson, theory) under a
//! reproducible experiment harness (harness).

pub mod contour;
pub mod dyson;
pub mod ensemble;
pub mod functions;
pub mod harness;
pub mod hermitize;
pub mod linalg;
pub mod stats;
pub mod theory;
pub(crate) mod planar;
