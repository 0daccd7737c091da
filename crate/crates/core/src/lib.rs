//! Spectral and Bohmian simulation of a particle in the square box
//! `[-π/2, π/2]²` prepared in the antisymmetric two-mode state.
//!
//! The crate covers the exact mode-basis algebra (projectors, reduced
//! densities, two-time sign correlators), pilot-wave trajectories and
//! ensembles, and the measurement and bit-transmission experiments built on
//! top of them.

pub mod basis;
pub mod bohm;
pub mod error;
pub mod experiments;
pub mod field;
pub mod operators;
pub mod quadrature;
pub mod sampling;
pub mod state;
pub mod stats;

pub use basis::{mode_eval, Basis1D, Mode, Parity};
pub use error::{Error, Result};
pub use operators::{
    commutator_norm, correlation_analytic, operator_correlation, sigma_matrix, theta_matrix, Axis,
    OperatorKind, OperatorMatrix1D,
};
pub use state::{Amplitude, ReducedDensity, Side, StateMatrix};
