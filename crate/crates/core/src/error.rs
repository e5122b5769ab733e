use thiserror::Error;

use crate::geodesic::Curve;

pub type Result<T> = std::result::Result<T, GeomError>;

#[derive(Debug, Error)]
pub enum GeomError {
    /// A point needed by an evaluator or stencil lies outside the chart domain.
    #[error("point {point:?} lies outside the domain of `{space}`")]
    Domain { space: String, point: Vec<f64> },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { point: Vec<f64>, min_eigenvalue: f64 },

    #[error("metric is not symmetric at {point:?} (asymmetry {asymmetry:e})")]
    NotSymmetric { point: Vec<f64>, asymmetry: f64 },

    #[error("singular operator (condition estimate {condition:e})")]
    Singular { condition: f64 },

    /// The integrated curve left the domain; `partial` holds every accepted step.
    #[error("curve left the domain at t = {t} (last valid point {last_point:?})")]
    DomainExit {
        t: f64,
        last_point: Vec<f64>,
        partial: Box<Curve>,
    },

    /// A ray of a geodesic fan could not be integrated to the requested radius.
    #[error("fan ray at angle {theta} failed before radius {radius}: {source}")]
    RayExit {
        theta: f64,
        radius: f64,
        source: Box<GeomError>,
    },

    /// Speed conservation broke down along an integrated geodesic, typically
    /// because the curve ran into the chart boundary to machine precision.
    #[error("geodesic speed drifted by {drift:e} (relative) by t = {t}; the metric is not resolved there")]
    SpeedDrift { t: f64, drift: f64 },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        best: Option<Box<Curve>>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl GeomError {
    pub fn argument(msg: impl Into<String>) -> Self {
        GeomError::Argument(msg.into())
    }

    /// True for failures caused by leaving the chart domain.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            GeomError::Domain { .. } | GeomError::DomainExit { .. } | GeomError::RayExit { .. }
        )
    }
}
