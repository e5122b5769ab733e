//! Riemannian geometry on a single global chart.
//!
//! Spaces are open subsets of `R^n` carrying a Gram-matrix field. Derivatives
//! are finite differences; nothing is symbolic.

pub mod calculus;
pub mod connection;
pub mod error;
pub mod forms;
pub mod gallery;
pub mod geodesic;
pub mod jacobi;
mod linalg;
pub mod metric;

pub use calculus::{ChartSpace, MapField, Operator, Point, StencilConfig, Vector};
pub use connection::ConnectionForm;
pub use error::{GeomError, Result};
pub use forms::{RForm, ValueKind};
pub use gallery::ModelSpace;
pub use geodesic::{Curve, Lift};
pub use jacobi::JacobiField;
pub use metric::{MetricField, RiemannTensor};
