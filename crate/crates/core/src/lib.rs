//! Chaos-expansion solvers for parabolic equations
//! `(∂_t - Δ) U + Q ◊ U = F`, `U(0) = G`, with random potentials `Q` that
//! may be singular in space.

pub mod chaos;
pub mod error;
pub mod grid;
pub mod harness;
pub mod hermite;
pub mod multiindex;
pub mod pde;
pub mod propagator;
pub mod quadrature;
pub mod regularize;
pub mod tridiag;
pub mod vws;

pub use error::{Error, Result};
