//! Small dense solves shared by the geometry modules.

use log::warn;
use nalgebra::SymmetricEigen;

use crate::calculus::{Operator, Point};
use crate::error::{GeomError, Result};

const ILL_CONDITIONED: f64 = 1e12;
const SINGULAR: f64 = 1e14;

/// Solves `G X = B` for a symmetric positive-definite `G`.
///
/// Cholesky first; if it fails and `G` still has positive spectrum, a pivoted
/// LU solve is used with a warning.
pub(crate) fn spd_solve(gram: &Operator, rhs: &Operator, at: &Point) -> Result<Operator> {
    if let Some(chol) = gram.clone().cholesky() {
        let l = chol.l_dirty();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for i in 0..l.nrows() {
            let d = l[(i, i)].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        let condition = (hi / lo).powi(2);
        if condition > ILL_CONDITIONED {
            warn!("ill-conditioned metric at {:?}: condition estimate {condition:e}", at.as_slice());
        }
        return Ok(chol.solve(rhs));
    }
    let eig = SymmetricEigen::new(gram.clone());
    let min = eig.eigenvalues.min();
    if min <= 0.0 {
        return Err(GeomError::NotPositiveDefinite {
            point: at.iter().copied().collect(),
            min_eigenvalue: min,
        });
    }
    let condition = eig.eigenvalues.max() / min;
    warn!(
        "Cholesky failed at {:?}; falling back to pivoted LU (condition estimate {condition:e})",
        at.as_slice()
    );
    gram.clone()
        .lu()
        .solve(rhs)
        .ok_or(GeomError::Singular { condition })
}

/// Ratio of extreme singular values.
pub(crate) fn condition_number(m: &Operator) -> f64 {
    let sv = m.clone().singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// `M^{-1} B` for a general square `M`, failing on numerical singularity.
pub(crate) fn solve(m: &Operator, rhs: &Operator) -> Result<Operator> {
    let condition = condition_number(m);
    if !(condition < SINGULAR) {
        return Err(GeomError::Singular { condition });
    }
    m.clone()
        .lu()
        .solve(rhs)
        .ok_or(GeomError::Singular { condition })
}
