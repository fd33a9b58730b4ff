//! Phase-space solver and analysis toolkit for the driven Duffing oscillator
//! coupled to a diffusive environment.
//!
//! The solver integrates the Wigner-function master equation with a spectral
//! split-step scheme, tracks linear entropy and gradient-content diagnostics,
//! and ships the reference machinery (Gaussian moment oracle, classical
//! Lyapunov exponents, scaling-collapse experiments) needed to reproduce the
//! hbar^2/D entropy-production phenomenology.

pub mod chaos;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod oracle;
pub mod potentials;
pub mod propagator;
pub mod states;

pub use error::{Error, Result};
