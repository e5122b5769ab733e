//! Jacobi fields along geodesics, geodesic circles, and the parallelism test
//! through second derivatives of `g(x, xi, eta)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::calculus::{kth_difference_quotient, Point, Vector};
use crate::connection::ConnectionForm;
use crate::error::{GeomError, Result};
use crate::geodesic::{integrate_geodesic, integrate_geodesic_through, speed_drift, Curve, Lift};
use crate::metric::{MetricField, RiemannTensor};

/// Rays whose speed drifts more than this are reported as failed.
const RAY_DRIFT: f64 = 1e-6;

/// `phi(t_i)` and `D_x' phi(t_i)` on the grid of a geodesic.
#[derive(Clone, Debug)]
pub struct JacobiField {
    values: Vec<Vector>,
    derivatives: Vec<Vector>,
}

impl JacobiField {
    pub fn new(curve: &Curve, values: Vec<Vector>, derivatives: Vec<Vector>) -> Result<Self> {
        if values.len() != curve.len() || derivatives.len() != curve.len() {
            return Err(GeomError::argument("Jacobi field is not aligned with its curve"));
        }
        Ok(Self { values, derivatives })
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    /// Covariant derivatives `D_x' phi`.
    pub fn derivatives(&self) -> &[Vector] {
        &self.derivatives
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_lift(&self, curve: &Curve) -> Result<Lift> {
        Lift::new(curve, self.values.clone())
    }
}

struct JacobiSystem {
    conn: ConnectionForm,
    riemann: RiemannTensor,
}

impl JacobiSystem {
    fn new(metric: &MetricField) -> Self {
        Self {
            conn: metric.levi_civita(),
            riemann: RiemannTensor::new(metric),
        }
    }

    /// `phi' = psi - A phi`, `psi' = R(x', phi) x' - A psi`.
    fn rhs(&self, curve: &Curve, t: f64, phi: &Vector, psi: &Vector) -> Result<(Vector, Vector)> {
        let (x, u) = curve.eval(t)?;
        let a = self.conn.eval(&x, &u)?;
        let r = self.riemann.operator(&x, &u, phi)?;
        Ok((psi - &a * phi, r * &u - &a * psi))
    }

    fn step(&self, curve: &Curve, t: f64, h: f64, phi: &Vector, psi: &Vector) -> Result<(Vector, Vector)> {
        let (a1, b1) = self.rhs(curve, t, phi, psi)?;
        let (a2, b2) = self.rhs(curve, t + h / 2.0, &(phi + &a1 * (h / 2.0)), &(psi + &b1 * (h / 2.0)))?;
        let (a3, b3) = self.rhs(curve, t + h / 2.0, &(phi + &a2 * (h / 2.0)), &(psi + &b2 * (h / 2.0)))?;
        let (a4, b4) = self.rhs(curve, t + h, &(phi + &a3 * h), &(psi + &b3 * h))?;
        Ok((
            phi + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0),
            psi + (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0),
        ))
    }
}

/// Solves `D^2 phi = R(x, x', phi) x'` along `curve` from data at grid node `index`.
pub fn integrate_jacobi_at(metric: &MetricField, curve: &Curve, index: usize, phi: &Vector, dphi: &Vector) -> Result<JacobiField> {
    if index >= curve.len() {
        return Err(GeomError::argument("Jacobi start index outside the curve grid"));
    }
    metric.space().check_dim(phi)?;
    metric.space().check_dim(dphi)?;
    let sys = JacobiSystem::new(metric);
    let n = curve.len();
    let t = curve.times();
    let h = curve.dt();
    let mut values = vec![DVector::zeros(phi.len()); n];
    let mut derivs = values.clone();
    values[index] = phi.clone();
    derivs[index] = dphi.clone();
    for i in index..n - 1 {
        let (p, q) = sys.step(curve, t[i], h, &values[i], &derivs[i])?;
        values[i + 1] = p;
        derivs[i + 1] = q;
    }
    for i in (1..=index).rev() {
        let (p, q) = sys.step(curve, t[i], -h, &values[i], &derivs[i])?;
        values[i - 1] = p;
        derivs[i - 1] = q;
    }
    JacobiField::new(curve, values, derivs)
}

/// Jacobi field with `phi(t_0) = phi0`, `D phi(t_0) = dphi0`.
pub fn integrate_jacobi(metric: &MetricField, curve: &Curve, phi0: &Vector, dphi0: &Vector) -> Result<JacobiField> {
    integrate_jacobi_at(metric, curve, 0, phi0, dphi0)
}

/// The variation field `d x_theta / d theta` at `theta = 0`, by a centered
/// difference over the family. Returns the `theta = 0` curve with the field.
pub fn jacobi_from_variation(
    metric: &MetricField,
    family: impl Fn(f64) -> Result<Curve>,
    dtheta: f64,
) -> Result<(Curve, JacobiField)> {
    if !(dtheta > 0.0 && dtheta.is_finite()) {
        return Err(GeomError::argument("variation step must be positive"));
    }
    let base = family(0.0)?;
    let plus = family(dtheta)?;
    let minus = family(-dtheta)?;
    if plus.len() != base.len() || minus.len() != base.len() {
        return Err(GeomError::argument("family members must share one grid"));
    }
    let conn = metric.levi_civita();
    let mut values = Vec::with_capacity(base.len());
    let mut derivs = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let phi = (&plus.points()[i] - &minus.points()[i]) / (2.0 * dtheta);
        let dphi = (&plus.velocities()[i] - &minus.velocities()[i]) / (2.0 * dtheta);
        let psi = dphi + conn.apply(&base.points()[i], &base.velocities()[i], &phi)?;
        values.push(phi);
        derivs.push(psi);
    }
    let field = JacobiField::new(&base, values, derivs)?;
    Ok((base, field))
}

/// Interior-node residual of the Jacobi system: the larger of
/// `|D psi - R(x, x', phi) x'|` and `|psi - D phi|`, derivatives by centered differences.
pub fn jacobi_residual(metric: &MetricField, curve: &Curve, field: &JacobiField) -> Result<f64> {
    let sys = JacobiSystem::new(metric);
    let dt = curve.dt();
    let (phi, psi) = (field.values(), field.derivatives());
    let mut worst = 0.0f64;
    for i in 1..curve.len() - 1 {
        let (x, u) = (&curve.points()[i], &curve.velocities()[i]);
        let a = sys.conn.eval(x, u)?;
        let d_phi = (&phi[i + 1] - &phi[i - 1]) / (2.0 * dt) + &a * &phi[i];
        let d_psi = (&psi[i + 1] - &psi[i - 1]) / (2.0 * dt) + &a * &psi[i];
        let r = sys.riemann.operator(x, u, &phi[i])? * u;
        worst = worst.max((d_psi - r).amax()).max((d_phi - &psi[i]).amax());
    }
    Ok(worst)
}

fn check_orthonormal(metric: &MetricField, v: &Point, xi: &Vector, eta: &Vector) -> Result<()> {
    let (a, b, c) = (metric.inner(v, xi, xi)?, metric.inner(v, eta, eta)?, metric.inner(v, xi, eta)?);
    if (a - 1.0).abs() > 1e-8 || (b - 1.0).abs() > 1e-8 || c.abs() > 1e-8 {
        return Err(GeomError::argument(format!(
            "plane basis is not orthonormal: g(xi,xi) = {a}, g(eta,eta) = {b}, g(xi,eta) = {c}"
        )));
    }
    Ok(())
}

/// Settings for geodesic fans.
#[derive(Clone, Debug)]
pub struct FanOptions {
    pub n_theta: usize,
    pub dt: f64,
    /// Angular offset for the difference quotient in `theta`.
    pub dtheta: f64,
}

impl Default for FanOptions {
    fn default() -> Self {
        Self {
            n_theta: 256,
            dt: 1e-3,
            dtheta: 1e-3,
        }
    }
}

/// Length of `theta -> e(r cos theta, r sin theta)`, where `e` shoots geodesics
/// from `v` with initial velocity `cos theta xi + sin theta eta`.
///
/// `d e / d theta` uses a fourth-order difference over rays at
/// `theta +- dtheta, theta +- 2 dtheta`; the angular integral is the periodic
/// trapezoid rule.
pub fn geodesic_circle_length(
    metric: &MetricField,
    v: &Point,
    xi: &Vector,
    eta: &Vector,
    r: f64,
    opts: &FanOptions,
) -> Result<f64> {
    metric.space().check(v)?;
    check_orthonormal(metric, v, xi, eta)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(GeomError::argument("radius must be positive"));
    }
    if opts.n_theta < 3 || !(opts.dtheta > 0.0) {
        return Err(GeomError::argument("fan needs at least three angles and a positive offset"));
    }
    let conn = metric.levi_civita();
    let ray = |theta: f64| -> Result<Point> {
        let dir = xi * theta.cos() + eta * theta.sin();
        let fail = |e| GeomError::RayExit {
            theta,
            radius: r,
            source: Box::new(e),
        };
        let curve = integrate_geodesic(&conn, v, &dir, 0.0, r, opts.dt).map_err(fail)?;
        let drift = speed_drift(metric, &curve)?;
        if drift > RAY_DRIFT {
            return Err(fail(GeomError::SpeedDrift { t: r, drift }));
        }
        Ok(curve.last().clone())
    };
    let d = opts.dtheta;
    let speeds = (0..opts.n_theta)
        .into_par_iter()
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / opts.n_theta as f64;
            let e0 = ray(theta)?;
            let de = (ray(theta - 2.0 * d)? - ray(theta + 2.0 * d)? + (ray(theta + d)? - ray(theta - d)?) * 8.0) / (12.0 * d);
            metric.norm(&e0, &de)
        })
        .collect::<Vec<Result<f64>>>();
    let mut total = 0.0;
    for s in speeds {
        total += s?;
    }
    Ok(total * 2.0 * PI / opts.n_theta as f64)
}

/// Least-squares slope of `1 - L / (2 pi r)` against `r^2 / 6`, with intercept.
pub fn curvature_from_circle_lengths(radii: &[f64], lengths: &[f64]) -> Result<f64> {
    if radii.len() != lengths.len() || radii.len() < 2 {
        return Err(GeomError::argument("need at least two (radius, length) pairs"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) {
        return Err(GeomError::argument("radii must be positive"));
    }
    let xs: Vec<f64> = radii.iter().map(|r| r * r / 6.0).collect();
    let ys: Vec<f64> = radii.iter().zip(lengths).map(|(r, l)| 1.0 - l / (2.0 * PI * r)).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 1e-14 * mx.max(1e-300).powi(2)) {
        return Err(GeomError::argument("radii must not all coincide"));
    }
    Ok(sxy / sxx)
}

#[derive(Clone, Copy, Debug)]
pub struct HExpansion {
    /// `g(phi(r), phi(r))` for the Jacobi field with `phi(0) = 0`, `D phi(0) = eta`.
    pub h: f64,
    /// Sectional curvature of the plane at `v`.
    pub k: f64,
    /// `|h - r^2 (1 - K r^2 / 3)| / r^4`.
    pub defect: f64,
}

/// Compares `h(r)` along the ray with velocity `xi` against `r^2 (1 - K r^2 / 3)`.
pub fn h_expansion_check(metric: &MetricField, v: &Point, xi: &Vector, eta: &Vector, r: f64, dt: f64) -> Result<HExpansion> {
    check_orthonormal(metric, v, xi, eta)?;
    if !(r > 0.0) {
        return Err(GeomError::argument("radius must be positive"));
    }
    let k = metric.sectional_curvature(v, xi, eta)?;
    let curve = integrate_geodesic(&metric.levi_civita(), v, xi, 0.0, r, dt)?;
    let field = integrate_jacobi(metric, &curve, &DVector::zeros(v.len()), eta)?;
    let end = field.values().last().expect("non-empty");
    let h = metric.inner(curve.last(), end, end)?;
    let defect = (h - r * r * (1.0 - k * r * r / 3.0)).abs() / r.powi(4);
    Ok(HExpansion { h, k, defect })
}

/// A `g`-orthonormal basis at `v`, from the Cholesky factor of `G(v)`.
pub fn orthonormal_frame(metric: &MetricField, v: &Point) -> Result<Vec<Vector>> {
    let g = metric.gram(v)?;
    let chol = g.clone().cholesky().ok_or_else(|| GeomError::NotPositiveDefinite {
        point: v.iter().copied().collect(),
        min_eigenvalue: g.clone().symmetric_eigenvalues().min(),
    })?;
    // G = L L^T, so the columns of L^{-T} are orthonormal.
    let n = g.nrows();
    let inv_lt = chol
        .l()
        .transpose()
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or(GeomError::Singular { condition: f64::INFINITY })?;
    Ok((0..n).map(|j| inv_lt.column(j).into_owned()).collect())
}

/// Jacobi fields vanishing at grid node `tau_index` with `D phi(tau) = w_k`
/// for a `g`-orthonormal frame `w_k`, obtained by differentiating geodesic
/// fans through `x(tau)`. The curve must be a geodesic integrated on its grid.
pub fn vanishing_jacobi_family(metric: &MetricField, curve: &Curve, tau_index: usize, dtheta: f64) -> Result<Vec<JacobiField>> {
    if tau_index >= curve.len() {
        return Err(GeomError::argument("tau index outside the curve grid"));
    }
    let conn = metric.levi_civita();
    let (x, u) = (&curve.points()[tau_index], &curve.velocities()[tau_index]);
    let tau = curve.times()[tau_index];
    let frame = orthonormal_frame(metric, x)?;
    frame
        .into_par_iter()
        .map(|w| {
            let family = |theta: f64| -> Result<Curve> {
                if theta == 0.0 {
                    return Ok(curve.clone());
                }
                integrate_geodesic_through(&conn, x, &(u + &w * theta), tau, curve.start(), curve.end(), curve.dt())
            };
            jacobi_from_variation(metric, family, dtheta).map(|(_, f)| f)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ParallelismOptions {
    /// Bound on `|d^2/dt^2 g(x, xi, eta)(tau)| / |D eta(tau)|_g` for a parallel verdict.
    pub tol: f64,
    /// Bound on `|D xi(tau)|` for the direct verdict.
    pub direct_tol: f64,
    /// Difference step in grid intervals.
    pub sigma_steps: usize,
}

impl Default for ParallelismOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            direct_tol: 1e-6,
            sigma_steps: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParallelismReport {
    pub parallel: bool,
    /// One normalized second derivative per Jacobi field.
    pub defects: Vec<f64>,
    /// `|D xi(tau)|`, from a five-point difference of the lift.
    pub direct: f64,
    pub direct_parallel: bool,
}

impl ParallelismReport {
    pub fn agrees(&self) -> bool {
        self.parallel == self.direct_parallel
    }
}

/// Decides whether `xi` is parallel at `tau` from `d^2/dt^2 g(x, xi, eta)` over
/// Jacobi fields `eta` vanishing at `tau`, and cross-checks against the
/// covariant derivative itself.
///
/// The second derivative is the order-2 difference quotient at steps `sigma`
/// and `2 sigma`, combined by Richardson extrapolation.
pub fn parallelism_criterion(
    metric: &MetricField,
    curve: &Curve,
    xi: &Lift,
    tau_index: usize,
    family: &[JacobiField],
    opts: &ParallelismOptions,
) -> Result<ParallelismReport> {
    let n = metric.dim();
    let m = opts.sigma_steps.max(1);
    if xi.len() != curve.len() || family.iter().any(|f| f.len() != curve.len()) {
        return Err(GeomError::argument("lift and Jacobi fields must share the curve grid"));
    }
    if tau_index < 2 * m || tau_index + 2 * m >= curve.len() {
        return Err(GeomError::argument("tau is too close to the curve ends for the stencil"));
    }
    let x_tau = &curve.points()[tau_index];
    let mut spans = DMatrix::zeros(n, family.len());
    for (j, f) in family.iter().enumerate() {
        let scale = f.derivatives()[tau_index].amax().max(1e-300);
        if f.values()[tau_index].amax() > 1e-8 * scale.max(1.0) {
            return Err(GeomError::argument(format!("Jacobi field {j} does not vanish at tau")));
        }
        spans.set_column(j, &f.derivatives()[tau_index]);
    }
    let rank = if family.is_empty() { 0 } else { spans.rank(1e-8 * spans.amax()) };
    if rank < n {
        return Err(GeomError::argument(format!(
            "Jacobi family spans rank {rank}, needs {n}"
        )));
    }

    let dt = curve.dt();
    let sigma = m as f64 * dt;
    let mut defects = Vec::with_capacity(family.len());
    for f in family {
        let h_at = |i: usize| metric.inner(&curve.points()[i], &xi.values()[i], &f.values()[i]);
        let h = |s: f64| -> Result<f64> {
            let i = (tau_index as f64 + s / dt).round() as usize;
            h_at(i)
        };
        let coarse = kth_difference_quotient(&h, -2.0 * sigma, 2.0 * sigma, 2)?;
        let fine = kth_difference_quotient(&h, -sigma, sigma, 2)?;
        let second = (4.0 * fine - coarse) / 3.0;
        let norm = metric.norm(x_tau, &f.derivatives()[tau_index])?;
        defects.push(second.abs() / norm);
    }
    let parallel = defects.iter().all(|d| *d <= opts.tol);

    let conn = metric.levi_civita();
    let v = xi.values();
    let i = tau_index;
    let dxi = (&v[i - 2] - &v[i - 1] * 8.0 + &v[i + 1] * 8.0 - &v[i + 2]) / (12.0 * dt);
    let cov = dxi + conn.apply(x_tau, &curve.velocities()[i], &v[i])?;
    let direct = cov.amax();
    Ok(ParallelismReport {
        parallel,
        defects,
        direct,
        direct_parallel: direct <= opts.direct_tol,
    })
}
