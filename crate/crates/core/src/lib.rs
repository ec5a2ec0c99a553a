//! Numerical laboratory for the Wonham filter of a finite Markov chain
//! observed in white noise.
//!
//! The crate simulates the signal and its observations exactly, integrates
//! the filter with a positivity-preserving splitting scheme, estimates the
//! top Lyapunov exponent and the stability index by Monte Carlo, and
//! evaluates the two-state closed forms by quadrature for comparison.

pub mod error;
pub mod model;
pub mod filter;
pub mod simulate;
pub mod lyapunov;
pub mod quad;
pub mod twostate;
pub mod bounds;

pub use error::{Error, Result};
