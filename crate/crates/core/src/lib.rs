//! Eigenvalue spectra of the clamped Rayleigh quotient
//! `Phi(u) = <u^(n) u^(n)> / <u^(n-p) u^(n-p)>` on `[-1, 1]`, with exact
//! exponential-polynomial machinery for checking the stone, moment and bracket identities
//! satisfied by its eigenfunctions.

pub mod bracketing;
pub mod cli;
pub mod disjointness;
pub mod eigensolver;
pub mod error;
pub mod exppoly;
pub mod identity;
pub mod invariants;
pub mod linalg;
pub mod operator;
pub mod quadrature;
pub mod report;
pub mod ritz;
pub mod selftest;

pub use error::{Error, Result};
pub use exppoly::{ExpPoly, SigmaPolynomial, C64};
pub use operator::{Parity, ProblemSpec};
