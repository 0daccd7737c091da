use thiserror::Error;

use crate::bohm::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("position {value} lies outside the interval [-π/2, π/2]")]
    Domain { value: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate collapse: branch probability {prob:.3e} is below 1e-12")]
    DegenerateCollapse { prob: f64 },

    #[error("velocity undefined near a node: |ψ|² = {density:.3e} at ({x1}, {x2})")]
    NodeProximity { density: f64, x1: f64, x2: f64 },

    #[error("trajectory integration failed at t = {t}: {reason}")]
    Integration {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("{failed} of {total} walkers failed to propagate (first failure: walker {first_index}: {first_reason})")]
    Propagation {
        failed: usize,
        total: usize,
        first_index: usize,
        first_reason: String,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
