//! Curves, parallel lifts, geodesics and the energy functional.
//!
//! All integrators are fixed-step classical Runge-Kutta. Along a stored
//! curve, off-grid positions and velocities come from cubic Hermite
//! interpolation of the stored points and velocities.

use log::warn;
use nalgebra::DVector;

use crate::calculus::{jacobian, MapField, Point, Vector};
use crate::connection::ConnectionForm;
use crate::error::{GeomError, Result};
use crate::metric::MetricField;

const GRID_TOL: f64 = 1e-9;

/// A path sampled on a uniform time grid, with velocities.
#[derive(Clone, Debug)]
pub struct Curve {
    times: Vec<f64>,
    points: Vec<Point>,
    velocities: Vec<Vector>,
}

impl Curve {
    pub fn new(times: Vec<f64>, points: Vec<Point>, velocities: Vec<Vector>) -> Result<Self> {
        if times.len() < 2 {
            return Err(GeomError::argument("a curve needs at least two samples"));
        }
        if points.len() != times.len() || velocities.len() != times.len() {
            return Err(GeomError::argument("curve times, points and velocities differ in length"));
        }
        let dim = points[0].len();
        if points.iter().chain(velocities.iter()).any(|p| p.len() != dim) {
            return Err(GeomError::argument("curve samples have inconsistent dimension"));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(GeomError::argument("curve grid must be strictly increasing"));
        }
        for (i, t) in times.iter().enumerate() {
            let expected = times[0] + i as f64 * dt;
            if (t - expected).abs() > GRID_TOL * dt.max(1.0) * (i as f64 + 1.0) {
                return Err(GeomError::argument("curve grid must be uniform"));
            }
        }
        Ok(Self {
            times,
            points,
            velocities,
        })
    }

    /// Velocities by centered differences; second-order one-sided at the ends.
    pub fn from_points(times: Vec<f64>, points: Vec<Point>) -> Result<Self> {
        if points.len() < 2 || points.len() != times.len() {
            return Err(GeomError::argument("a curve needs at least two samples on its grid"));
        }
        let n = points.len();
        let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
        let velocities = (0..n)
            .map(|i| {
                if n == 2 {
                    (&points[1] - &points[0]) / dt
                } else if i == 0 {
                    (&points[1] * 4.0 - &points[0] * 3.0 - &points[2]) / (2.0 * dt)
                } else if i == n - 1 {
                    (&points[n - 1] * 3.0 - &points[n - 2] * 4.0 + &points[n - 3]) / (2.0 * dt)
                } else {
                    (&points[i + 1] - &points[i - 1]) / (2.0 * dt)
                }
            })
            .collect();
        Self::new(times, points, velocities)
    }

    /// Samples `t -> (x(t), x'(t))` at `segments + 1` uniform nodes of `[t0, t1]`.
    pub fn from_fn(t0: f64, t1: f64, segments: usize, f: impl Fn(f64) -> (Point, Vector)) -> Result<Self> {
        let times = uniform_grid(t0, t1, segments)?;
        let (points, velocities) = times.iter().map(|&t| f(t)).unzip();
        Self::new(times, points, velocities)
    }

    /// Samples `t -> x(t)` and differences it for velocities.
    pub fn sample(t0: f64, t1: f64, segments: usize, f: impl Fn(f64) -> Point) -> Result<Self> {
        let times = uniform_grid(t0, t1, segments)?;
        let points = times.iter().map(|&t| f(t)).collect();
        Self::from_points(times, points)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of grid intervals.
    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn velocities(&self) -> &[Vector] {
        &self.velocities
    }

    pub fn dt(&self) -> f64 {
        (self.end() - self.start()) / self.segments() as f64
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn first(&self) -> &Point {
        &self.points[0]
    }

    pub fn last(&self) -> &Point {
        &self.points[self.points.len() - 1]
    }

    /// Grid index whose time equals `t` up to rounding.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let s = (t - self.start()) / self.dt();
        let i = s.round();
        if (s - i).abs() < 1e-7 && i >= 0.0 && (i as usize) < self.len() {
            Some(i as usize)
        } else {
            None
        }
    }

    pub fn check_domain(&self, space: &crate::calculus::ChartSpace) -> Result<()> {
        self.points.iter().try_for_each(|p| space.check(p))
    }

    /// Position and velocity at any `t` in the grid span (cubic Hermite).
    pub fn eval(&self, t: f64) -> Result<(Point, Vector)> {
        let (t0, t1) = (self.start(), self.end());
        let slack = GRID_TOL * self.dt();
        if t < t0 - slack || t > t1 + slack {
            return Err(GeomError::argument(format!("t = {t} outside the curve span [{t0}, {t1}]")));
        }
        let h = self.dt();
        let i = (((t - t0) / h).floor() as usize).min(self.segments() - 1);
        let s = ((t - self.times[i]) / h).clamp(0.0, 1.0);
        let (p0, p1) = (&self.points[i], &self.points[i + 1]);
        let (m0, m1) = (&self.velocities[i], &self.velocities[i + 1]);
        let (s2, s3) = (s * s, s * s * s);
        let x = p0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + m0 * (h * (s3 - 2.0 * s2 + s))
            + p1 * (-2.0 * s3 + 3.0 * s2)
            + m1 * (h * (s3 - s2));
        let u = p0 * ((6.0 * s2 - 6.0 * s) / h)
            + m0 * (3.0 * s2 - 4.0 * s + 1.0)
            + p1 * ((-6.0 * s2 + 6.0 * s) / h)
            + m1 * (3.0 * s2 - 2.0 * s);
        Ok((x, u))
    }
}

fn uniform_grid(t0: f64, t1: f64, segments: usize) -> Result<Vec<f64>> {
    if segments == 0 || !(t1 > t0) {
        return Err(GeomError::argument("grid needs t1 > t0 and at least one segment"));
    }
    let h = (t1 - t0) / segments as f64;
    Ok((0..=segments).map(|i| if i == segments { t1 } else { t0 + i as f64 * h }).collect())
}

/// Vectors attached to each node of a curve grid.
#[derive(Clone, Debug)]
pub struct Lift {
    values: Vec<Vector>,
}

impl Lift {
    pub fn new(curve: &Curve, values: Vec<Vector>) -> Result<Self> {
        if values.len() != curve.len() {
            return Err(GeomError::argument(format!(
                "lift has {} samples but the curve has {}",
                values.len(),
                curve.len()
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[Vector] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn steps_for(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(GeomError::argument(format!("time step must be positive, got {dt}")));
    }
    Ok(((span.abs() / dt) - 1e-9).ceil().max(1.0) as usize)
}

type State = (Point, Vector);

fn geodesic_rhs(conn: &ConnectionForm, x: &Point, u: &Vector) -> Result<State> {
    conn.space().check(x)?;
    let acc = -conn.apply(x, u, u)?;
    Ok((u.clone(), acc))
}

fn rk4_geodesic_step(conn: &ConnectionForm, x: &Point, u: &Vector, h: f64) -> Result<State> {
    let (k1x, k1u) = geodesic_rhs(conn, x, u)?;
    let (k2x, k2u) = geodesic_rhs(conn, &(x + &k1x * (h / 2.0)), &(u + &k1u * (h / 2.0)))?;
    let (k3x, k3u) = geodesic_rhs(conn, &(x + &k2x * (h / 2.0)), &(u + &k2u * (h / 2.0)))?;
    let (k4x, k4u) = geodesic_rhs(conn, &(x + &k3x * h), &(u + &k3u * h))?;
    let x1 = x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
    let u1 = u + (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
    Ok((x1, u1))
}

/// Runs `steps` RK4 steps of signed size `h`; on a domain failure returns the
/// accepted states and the error.
fn run_geodesic(
    conn: &ConnectionForm,
    v0: &Point,
    xi0: &Vector,
    h: f64,
    steps: usize,
) -> std::result::Result<Vec<State>, (Vec<State>, GeomError)> {
    let mut states = vec![(v0.clone(), xi0.clone())];
    for _ in 0..steps {
        let (x, u) = states.last().expect("non-empty");
        match rk4_geodesic_step(conn, x, u, h) {
            Ok((x1, u1)) if conn.space().contains(&x1) => states.push((x1, u1)),
            Ok((x1, _)) => {
                let err = conn.space().domain_error(&x1);
                return Err((states, err));
            }
            Err(e) => return Err((states, e)),
        }
    }
    Ok(states)
}

fn states_to_curve(times: Vec<f64>, states: Vec<State>) -> Result<Curve> {
    let (points, velocities) = states.into_iter().unzip();
    Curve::new(times, points, velocities)
}

fn exit_error(t0: f64, h: f64, states: Vec<State>, cause: GeomError) -> GeomError {
    if !cause.is_domain() {
        return cause;
    }
    let n = states.len();
    let last = states[n - 1].0.iter().copied().collect();
    let t_last = t0 + h * (n - 1) as f64;
    let partial = if n >= 2 {
        let mut times: Vec<f64> = (0..n).map(|i| t0 + h * i as f64).collect();
        let mut states = states;
        if h < 0.0 {
            times.reverse();
            states.reverse();
        }
        states_to_curve(times, states).ok()
    } else {
        None
    };
    match partial {
        Some(curve) => GeomError::DomainExit {
            t: t_last,
            last_point: last,
            partial: Box::new(curve),
        },
        None => cause,
    }
}

/// Solves `x'' + A(x, x') x' = 0` from `x(t0) = v0`, `x'(t0) = xi0` on `[t0, t1]`.
///
/// The step is the largest `<= dt` that divides the span evenly.
pub fn integrate_geodesic(conn: &ConnectionForm, v0: &Point, xi0: &Vector, t0: f64, t1: f64, dt: f64) -> Result<Curve> {
    conn.space().check(v0)?;
    conn.space().check_dim(xi0)?;
    if !(t1 > t0) {
        return Err(GeomError::argument("geodesic span needs t1 > t0"));
    }
    let steps = steps_for(t1 - t0, dt)?;
    let h = (t1 - t0) / steps as f64;
    match run_geodesic(conn, v0, xi0, h, steps) {
        Ok(states) => states_to_curve(uniform_grid(t0, t1, steps)?, states),
        Err((states, cause)) => Err(exit_error(t0, h, states, cause)),
    }
}

/// Geodesic with `x(tau) = v`, `x'(tau) = xi`, integrated both ways to cover
/// `[t0, t1]` on a grid of step `dt` through `tau`.
pub fn integrate_geodesic_through(
    conn: &ConnectionForm,
    v: &Point,
    xi: &Vector,
    tau: f64,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Curve> {
    conn.space().check(v)?;
    if !(t0 <= tau && tau <= t1 && t1 > t0) {
        return Err(GeomError::argument("need t0 <= tau <= t1 and t1 > t0"));
    }
    if !(dt > 0.0) {
        return Err(GeomError::argument("time step must be positive"));
    }
    let back = ((tau - t0) / dt).round() as usize;
    let fwd = ((t1 - tau) / dt).round() as usize;
    let mut backward = match run_geodesic(conn, v, xi, -dt, back) {
        Ok(s) => s,
        Err((s, e)) => return Err(exit_error(tau, -dt, s, e)),
    };
    let forward = match run_geodesic(conn, v, xi, dt, fwd) {
        Ok(s) => s,
        Err((s, e)) => return Err(exit_error(tau, dt, s, e)),
    };
    backward.reverse();
    backward.pop();
    backward.extend(forward);
    let start = tau - back as f64 * dt;
    let times = (0..backward.len()).map(|i| start + i as f64 * dt).collect();
    states_to_curve(times, backward)
}

/// `max_i |x''(t_i) + A(x_i, x'_i) x'_i|` at interior nodes, with `x''` from
/// centered differences of the stored velocities.
pub fn geodesic_residual(conn: &ConnectionForm, curve: &Curve) -> Result<f64> {
    let dt = curve.dt();
    let (x, u) = (curve.points(), curve.velocities());
    let mut worst = 0.0f64;
    for i in 1..curve.len() - 1 {
        let acc = (&u[i + 1] - &u[i - 1]) / (2.0 * dt);
        let r = acc + conn.apply(&x[i], &u[i], &u[i])?;
        worst = worst.max(r.amax());
    }
    Ok(worst)
}

/// `max |g(x', x')(t) - g(x', x')(t_0)|`, relative to the initial value when nonzero.
pub fn speed_drift(metric: &MetricField, curve: &Curve) -> Result<f64> {
    let s0 = metric.inner(curve.first(), &curve.velocities()[0], &curve.velocities()[0])?;
    let scale = if s0 > 0.0 { s0 } else { 1.0 };
    let mut worst = 0.0f64;
    for (x, u) in curve.points().iter().zip(curve.velocities()) {
        worst = worst.max((metric.inner(x, u, u)? - s0).abs() / scale);
    }
    Ok(worst)
}

/// Geodesic of a metric through its Levi-Civita connection, warning on speed drift.
pub fn metric_geodesic(metric: &MetricField, v0: &Point, xi0: &Vector, t0: f64, t1: f64, dt: f64) -> Result<Curve> {
    let curve = integrate_geodesic(&metric.levi_civita(), v0, xi0, t0, t1, dt)?;
    let drift = speed_drift(metric, &curve)?;
    if drift > 1e-6 {
        warn!("geodesic speed drifted by {drift:e}; the step {dt} may be too large");
    }
    Ok(curve)
}

fn transport_rhs(conn: &ConnectionForm, curve: &Curve, t: f64, xi: &Vector) -> Result<Vector> {
    let (x, u) = curve.eval(t)?;
    Ok(-conn.apply(&x, &u, xi)?)
}

fn rk4_transport(conn: &ConnectionForm, curve: &Curve, xi0: &Vector, t0: f64, t1: f64) -> Result<Vec<Vector>> {
    let steps = steps_for(t1 - t0, curve.dt())?;
    let h = (t1 - t0) / steps as f64;
    let mut out = Vec::with_capacity(steps + 1);
    let mut xi = xi0.clone();
    out.push(xi.clone());
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let k1 = transport_rhs(conn, curve, t, &xi)?;
        let k2 = transport_rhs(conn, curve, t + h / 2.0, &(&xi + &k1 * (h / 2.0)))?;
        let k3 = transport_rhs(conn, curve, t + h / 2.0, &(&xi + &k2 * (h / 2.0)))?;
        let k4 = transport_rhs(conn, curve, t + h, &(&xi + &k3 * h))?;
        xi += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(xi.clone());
    }
    Ok(out)
}

/// Parallel transport of `xi0` from `x(t0)` to `x(t1)`: solves `xi' + A(x, x') xi = 0`.
pub fn parallel_transport(conn: &ConnectionForm, curve: &Curve, xi0: &Vector, t0: f64, t1: f64) -> Result<Vector> {
    if xi0.len() != conn.fiber_dim() {
        return Err(GeomError::Dimension {
            expected: conn.fiber_dim(),
            got: xi0.len(),
        });
    }
    if t0 == t1 {
        return Ok(xi0.clone());
    }
    Ok(rk4_transport(conn, curve, xi0, t0, t1)?.pop().expect("non-empty"))
}

/// The parallel lift through `xi0` at grid node `index`, sampled on the whole grid.
pub fn parallel_lift(conn: &ConnectionForm, curve: &Curve, xi0: &Vector, index: usize) -> Result<Lift> {
    if index >= curve.len() {
        return Err(GeomError::argument("lift start index outside the curve grid"));
    }
    let t = curve.times();
    let mut values = if index > 0 {
        let mut back = rk4_transport(conn, curve, xi0, t[index], t[0])?;
        back.reverse();
        back.pop();
        back
    } else {
        Vec::new()
    };
    if index + 1 < curve.len() {
        values.extend(rk4_transport(conn, curve, xi0, t[index], t[curve.len() - 1])?);
    } else {
        values.push(xi0.clone());
    }
    Lift::new(curve, values)
}

/// Residuals of `xi|_a^b + int_a^b A(x, x') xi = 0` for a family of lifts.
#[derive(Clone, Debug)]
pub struct LiftLimitReport {
    /// Identity evaluated with each member's own curve.
    pub on_member: Vec<f64>,
    /// Identity evaluated with the limit curve and each member's lift.
    pub on_limit: Vec<f64>,
}

fn integral_identity_defect(conn: &ConnectionForm, curve: &Curve, lift: &Lift) -> Result<f64> {
    let dt = curve.dt();
    let integrand = curve
        .points()
        .iter()
        .zip(curve.velocities())
        .zip(lift.values())
        .map(|((x, u), xi)| conn.apply(x, u, xi))
        .collect::<Result<Vec<_>>>()?;
    let xi = lift.values();
    let mut acc = DVector::zeros(xi[0].len());
    let mut worst = 0.0f64;
    for i in 1..curve.len() {
        acc += (&integrand[i - 1] + &integrand[i]) * (dt / 2.0);
        worst = worst.max((&xi[i] - &xi[0] + &acc).amax());
    }
    Ok(worst)
}

/// Checks that lifts along curves converging to `limit` satisfy the parallel-lift
/// integral identity on the limit data. All members share the limit's grid.
pub fn lift_limit_check(conn: &ConnectionForm, limit: &Curve, family: &[(Curve, Lift)]) -> Result<LiftLimitReport> {
    let mut report = LiftLimitReport {
        on_member: Vec::with_capacity(family.len()),
        on_limit: Vec::with_capacity(family.len()),
    };
    for (curve, lift) in family {
        if curve.len() != limit.len() || lift.len() != limit.len() {
            return Err(GeomError::argument("family members must share the limit curve's grid"));
        }
        report.on_member.push(integral_identity_defect(conn, curve, lift)?);
        report.on_limit.push(integral_identity_defect(conn, limit, lift)?);
    }
    Ok(report)
}

fn trapezoid(values: &[f64], dt: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    dt * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1]))
}

/// `E(x) = 1/2 int g(x, x', x') dt` by the composite trapezoid rule.
pub fn energy(metric: &MetricField, curve: &Curve) -> Result<f64> {
    let f = curve
        .points()
        .iter()
        .zip(curve.velocities())
        .map(|(x, u)| Ok(0.5 * metric.inner(x, u, u)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(trapezoid(&f, curve.dt()))
}

/// `dE(x, y) = int g(x, y' + A(x, x') y, x') dt` for a variation vanishing at both ends.
pub fn energy_differential(metric: &MetricField, conn: &ConnectionForm, curve: &Curve, variation: &Lift) -> Result<f64> {
    let y = variation.values();
    if y.len() != curve.len() {
        return Err(GeomError::argument("variation is not aligned with the curve grid"));
    }
    let n = y.len();
    let scale = y.iter().map(|v| v.amax()).fold(1.0, f64::max);
    if y[0].amax() > 1e-9 * scale || y[n - 1].amax() > 1e-9 * scale {
        return Err(GeomError::argument("variation must vanish at both endpoints"));
    }
    let dt = curve.dt();
    let mut f = Vec::with_capacity(n);
    for i in 0..n {
        // One-sided slopes at the ends keep piecewise-linear variations exact.
        let dy = if i == 0 {
            (&y[1] - &y[0]) / dt
        } else if i == n - 1 {
            (&y[n - 1] - &y[n - 2]) / dt
        } else {
            (&y[i + 1] - &y[i - 1]) / (2.0 * dt)
        };
        let (x, u) = (&curve.points()[i], &curve.velocities()[i]);
        let w = dy + conn.apply(x, u, &y[i])?;
        f.push(metric.inner(x, &w, u)?);
    }
    Ok(trapezoid(&f, dt))
}

#[derive(Clone, Debug)]
pub struct EnergyOptions {
    /// Stop when the sup-norm of the discrete gradient falls below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateRecord {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
}

#[derive(Clone, Debug)]
pub struct EnergyMinimization {
    pub curve: Curve,
    pub energy: f64,
    pub gradient_norm: f64,
    pub history: Vec<IterateRecord>,
}

/// Discrete energy `sum_i dt/2 g(m_i, s_i, s_i)` with segment midpoints `m_i`
/// and slopes `s_i`, and its gradient with respect to the interior nodes.
///
/// The gradient is the first variation `int g(x, y' + A(x, x') y, x')` along
/// nodal hat functions `y`, with midpoint quadrature on each segment.
pub fn discrete_energy(
    metric: &MetricField,
    conn: &ConnectionForm,
    nodes: &[Point],
    dt: f64,
    with_gradient: bool,
) -> Result<(f64, Vec<Vector>)> {
    let n = nodes.len() - 1;
    let dim = nodes[0].len();
    let mut energy = 0.0;
    let mut momentum = Vec::with_capacity(n);
    let mut force = Vec::with_capacity(n);
    for i in 0..n {
        let m = (&nodes[i] + &nodes[i + 1]) * 0.5;
        let s = (&nodes[i + 1] - &nodes[i]) / dt;
        let g = metric.gram(&m)?;
        let gs = &g * &s;
        energy += 0.5 * dt * s.dot(&gs);
        if with_gradient {
            force.push(conn.eval(&m, &s)?.transpose() * &gs);
            momentum.push(gs);
        }
    }
    let mut grad = vec![DVector::zeros(dim); n + 1];
    if with_gradient {
        for j in 1..n {
            grad[j] = &momentum[j - 1] - &momentum[j] + (&force[j - 1] + &force[j]) * (dt / 2.0);
        }
    }
    Ok((energy, grad))
}

/// `max_j |G(x_j)^{-1} grad_j| / dt`: the discrete Euler-Lagrange residual of a node path.
pub fn discrete_geodesic_residual(metric: &MetricField, curve: &Curve) -> Result<f64> {
    let conn = metric.levi_civita();
    let dt = curve.dt();
    let (_, grad) = discrete_energy(metric, &conn, curve.points(), dt, true)?;
    let mut worst = 0.0f64;
    for j in 1..curve.len() - 1 {
        let g = metric.gram(&curve.points()[j])?;
        let r = g
            .lu()
            .solve(&grad[j])
            .ok_or(GeomError::Singular { condition: f64::INFINITY })?;
        worst = worst.max(r.amax() / dt);
    }
    Ok(worst)
}

/// Solves the tridiagonal system `tridiag(-1, 2, -1) z = r` per coordinate.
fn laplacian_solve(rhs: &[Vector]) -> Vec<Vector> {
    let m = rhs.len();
    if m == 0 {
        return Vec::new();
    }
    let dim = rhs[0].len();
    let mut c = vec![0.0; m];
    let mut d: Vec<Vector> = Vec::with_capacity(m);
    c[0] = -0.5;
    d.push(&rhs[0] / 2.0);
    for i in 1..m {
        let denom = 2.0 + c[i - 1];
        c[i] = -1.0 / denom;
        d.push((&rhs[i] + &d[i - 1]) / denom);
    }
    let mut z = vec![DVector::zeros(dim); m];
    z[m - 1] = d[m - 1].clone();
    for i in (0..m - 1).rev() {
        z[i] = &d[i] - &z[i + 1] * c[i];
    }
    z
}

/// Critical point of the discrete energy among node paths from `a` to `b`.
///
/// `init` is resampled to `segments + 1` nodes. Descent directions are the
/// gradient preconditioned by the discrete Laplacian, with backtracking on
/// the discrete energy; steps leaving the domain are rejected and shortened.
pub fn minimize_energy(
    metric: &MetricField,
    a: &Point,
    b: &Point,
    segments: usize,
    init: &Curve,
    opts: &EnergyOptions,
) -> Result<EnergyMinimization> {
    let space = metric.space().clone();
    space.check(a)?;
    space.check(b)?;
    if segments < 2 {
        return Err(GeomError::argument("energy descent needs at least two segments"));
    }
    let scale = a.amax().max(b.amax()).max(1.0);
    if (init.first() - a).amax() > 1e-9 * scale || (init.last() - b).amax() > 1e-9 * scale {
        return Err(GeomError::argument("initial curve does not connect a to b"));
    }
    let conn = metric.levi_civita();
    let times = uniform_grid(init.start(), init.end(), segments)?;
    let dt = (init.end() - init.start()) / segments as f64;
    let mut nodes = times
        .iter()
        .map(|&t| init.eval(t).map(|(x, _)| x))
        .collect::<Result<Vec<_>>>()?;
    nodes[0] = a.clone();
    nodes[segments] = b.clone();
    for p in &nodes {
        space.check(p)?;
    }

    let sup = |g: &[Vector]| g.iter().map(|v| v.amax()).fold(0.0, f64::max);
    let (mut energy, mut grad) = discrete_energy(metric, &conn, &nodes, dt, true)?;
    let mut gnorm = sup(&grad);
    let mut history = vec![IterateRecord {
        iteration: 0,
        energy,
        gradient_norm: gnorm,
    }];

    let mut iteration = 0;
    while gnorm > opts.tol {
        if iteration >= opts.max_iter {
            let best = Curve::from_points(times.clone(), nodes)?;
            return Err(GeomError::NoConvergence {
                iterations: iteration,
                residual: gnorm,
                best: Some(Box::new(best)),
            });
        }
        iteration += 1;
        let interior: Vec<Vector> = grad[1..segments].iter().map(|g| g * dt).collect();
        let direction = laplacian_solve(&interior);
        let slope: f64 = -direction
            .iter()
            .zip(&grad[1..segments])
            .map(|(d, g)| d.dot(g))
            .sum::<f64>();

        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let trial: Vec<Point> = nodes
                .iter()
                .enumerate()
                .map(|(j, p)| if j == 0 || j == segments { p.clone() } else { p - &direction[j - 1] * alpha })
                .collect();
            let inside = trial.iter().all(|p| space.contains(p))
                && trial.windows(2).all(|w| space.contains(&((&w[0] + &w[1]) * 0.5)));
            if inside {
                if let Ok((e, _)) = discrete_energy(metric, &conn, &trial, dt, false) {
                    // Allow roundoff-level increases once the decrease is below machine precision.
                    let roundoff = 8.0 * f64::EPSILON * energy.abs();
                    if e <= energy + 1e-4 * alpha * slope + roundoff {
                        accepted = Some(trial);
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        let Some(trial) = accepted else {
            let best = Curve::from_points(times.clone(), nodes)?;
            return Err(GeomError::NoConvergence {
                iterations: iteration,
                residual: gnorm,
                best: Some(Box::new(best)),
            });
        };
        nodes = trial;
        (energy, grad) = discrete_energy(metric, &conn, &nodes, dt, true)?;
        gnorm = sup(&grad);
        history.push(IterateRecord {
            iteration,
            energy,
            gradient_norm: gnorm,
        });
    }

    Ok(EnergyMinimization {
        curve: Curve::from_points(times, nodes)?,
        energy,
        gradient_norm: gnorm,
        history,
    })
}

#[derive(Clone, Debug)]
pub struct ShootingOptions {
    pub tol: f64,
    pub dt: f64,
    pub max_iter: usize,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            dt: 1e-3,
            max_iter: 50,
        }
    }
}

/// Geodesic on `[0, 1]` from `a` to `b` by Newton iteration on the initial
/// velocity, with a difference Jacobian of the endpoint map.
pub fn shoot_bvp(conn: &ConnectionForm, a: &Point, b: &Point, opts: &ShootingOptions) -> Result<Curve> {
    let space = conn.space();
    space.check(a)?;
    space.check(b)?;
    let n = a.len();
    let shoot = |xi: &Vector| -> Result<(Curve, Vector)> {
        let c = integrate_geodesic(conn, a, xi, 0.0, 1.0, opts.dt)?;
        let miss = c.last() - b;
        Ok((c, miss))
    };

    let mut xi = b - a;
    let (mut curve, mut miss) = shoot(&xi)?;
    let mut best = miss.amax();
    for _ in 0..opts.max_iter {
        if best <= opts.tol {
            return Ok(curve);
        }
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        let h = 1e-6 * xi.amax().max(1.0);
        for k in 0..n {
            let mut step = xi.clone();
            step[k] += h;
            let (_, m) = shoot(&step)?;
            jac.set_column(k, &((m - &miss) / h));
        }
        let delta = jac
            .lu()
            .solve(&miss)
            .ok_or(GeomError::Singular { condition: f64::INFINITY })?;
        let mut lambda = 1.0;
        let mut improved = false;
        while lambda > 1e-6 {
            let trial = &xi - &delta * lambda;
            if let Ok((c, m)) = shoot(&trial) {
                if m.amax() < best {
                    xi = trial;
                    curve = c;
                    miss = m;
                    best = miss.amax();
                    improved = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if best <= opts.tol {
        return Ok(curve);
    }
    Err(GeomError::NoConvergence {
        iterations: opts.max_iter,
        residual: best,
        best: Some(Box::new(curve)),
    })
}

/// Pushes a curve (and optionally a lift along it) forward by `map`.
pub fn map_curve(map: &MapField<Vector>, curve: &Curve, lift: Option<&Lift>) -> Result<(Curve, Option<Lift>)> {
    let mut points = Vec::with_capacity(curve.len());
    let mut velocities = Vec::with_capacity(curve.len());
    let mut lifted = lift.map(|l| Vec::with_capacity(l.len()));
    for i in 0..curve.len() {
        let x = &curve.points()[i];
        let j = jacobian(map, x)?;
        points.push(map.eval(x)?);
        velocities.push(&j * &curve.velocities()[i]);
        if let (Some(out), Some(l)) = (lifted.as_mut(), lift) {
            out.push(&j * &l.values()[i]);
        }
    }
    let mapped = Curve::new(curve.times().to_vec(), points, velocities)?;
    let mapped_lift = match lifted {
        Some(values) => Some(Lift::new(&mapped, values)?),
        None => None,
    };
    Ok((mapped, mapped_lift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::ChartSpace;
    use nalgebra::DMatrix;

    fn euclid() -> MetricField {
        MetricField::new(ChartSpace::full("E2", 2).unwrap(), |_| DMatrix::identity(2, 2))
    }

    fn v2(a: f64, b: f64) -> Vector {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn straight_line() {
        let g = euclid();
        let c = integrate_geodesic(&g.levi_civita(), &v2(0.0, 0.0), &v2(1.0, 2.0), 0.0, 1.0, 1e-2).unwrap();
        assert!((c.last() - v2(1.0, 2.0)).amax() < 1e-12);
        assert_eq!(c.len(), 101);
    }

    #[test]
    fn rejects_bad_steps() {
        let g = euclid();
        assert!(integrate_geodesic(&g.levi_civita(), &v2(0.0, 0.0), &v2(1.0, 0.0), 0.0, 1.0, 0.0).is_err());
        assert!(integrate_geodesic(&g.levi_civita(), &v2(0.0, 0.0), &v2(1.0, 0.0), 1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn domain_exit_keeps_partial_curve() {
        let space = ChartSpace::new("x<0.5", 2, |v| v[0] < 0.5).unwrap();
        let g = MetricField::new(space, |_| DMatrix::identity(2, 2));
        let err = integrate_geodesic(&g.levi_civita(), &v2(0.0, 0.0), &v2(1.0, 0.0), 0.0, 1.0, 0.01).unwrap_err();
        match err {
            GeomError::DomainExit { partial, t, .. } => {
                assert!(t < 0.5 && t > 0.45);
                assert!(partial.last()[0] < 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn hermite_is_exact_for_cubics() {
        let c = Curve::from_fn(0.0, 1.0, 4, |t| (v2(t * t * t, t), v2(3.0 * t * t, 1.0))).unwrap();
        let (x, u) = c.eval(0.37).unwrap();
        assert!((x[0] - 0.37f64.powi(3)).abs() < 1e-14);
        assert!((u[0] - 3.0 * 0.37 * 0.37).abs() < 1e-13);
        assert!(c.eval(1.5).is_err());
    }

    #[test]
    fn curve_validation() {
        let p = vec![v2(0.0, 0.0), v2(1.0, 0.0), v2(2.0, 0.0)];
        assert!(Curve::new(vec![0.0, 0.1, 0.3], p.clone(), p.clone()).is_err());
        assert!(Curve::new(vec![0.0], vec![p[0].clone()], vec![p[0].clone()]).is_err());
        let c = Curve::from_points(vec![0.0, 0.5, 1.0], p).unwrap();
        assert!((&c.velocities()[0] - v2(2.0, 0.0)).amax() < 1e-14);
    }

    #[test]
    fn flat_transport_is_identity() {
        let g = euclid();
        let c = Curve::sample(0.0, 1.0, 50, |t| v2(t.cos(), t.sin() * 2.0)).unwrap();
        let xi = v2(0.3, -0.7);
        let got = parallel_transport(&g.levi_civita(), &c, &xi, 0.1, 0.9).unwrap();
        assert!((got - &xi).amax() < 1e-14);
        let lift = parallel_lift(&g.levi_civita(), &c, &xi, 20).unwrap();
        assert!(lift.values().iter().all(|v| (v - &xi).amax() < 1e-14));
    }

    #[test]
    fn energies() {
        let g = euclid();
        let line = Curve::sample(0.0, 1.0, 10, |t| v2(3.0 * t, 4.0 * t)).unwrap();
        assert!((energy(&g, &line).unwrap() - 12.5).abs() < 1e-12);
        let still = Curve::sample(0.0, 1.0, 10, |_| v2(1.0, 1.0)).unwrap();
        assert_eq!(energy(&g, &still).unwrap(), 0.0);
    }

    #[test]
    fn parabola_first_variation() {
        let g = euclid();
        let n = 1000;
        let c = Curve::from_fn(0.0, 1.0, n, |t| (v2(t, t * t), v2(1.0, 2.0 * t))).unwrap();
        let y = Lift::new(&c, c.times().iter().map(|&t| v2(0.0, t * (1.0 - t))).collect()).unwrap();
        let de = energy_differential(&g, &g.levi_civita(), &c, &y).unwrap();
        assert!((de + 1.0 / 3.0).abs() < 1e-6, "{de}");
        let bad = Lift::new(&c, c.times().iter().map(|&t| v2(0.0, t)).collect()).unwrap();
        assert!(energy_differential(&g, &g.levi_civita(), &c, &bad).is_err());
    }

    #[test]
    fn euclidean_minimization_is_immediate() {
        let g = euclid();
        let (a, b) = (v2(0.0, 0.0), v2(1.0, 3.0));
        let init = Curve::sample(0.0, 1.0, 8, |t| &a + (&b - &a) * t).unwrap();
        let res = minimize_energy(&g, &a, &b, 16, &init, &EnergyOptions::default()).unwrap();
        assert_eq!(res.history.len(), 1);
        let res = minimize_energy(&g, &a, &a, 16, &Curve::sample(0.0, 1.0, 2, |_| a.clone()).unwrap(), &EnergyOptions::default()).unwrap();
        assert_eq!(res.energy, 0.0);
    }

    #[test]
    fn bent_start_relaxes_to_chord() {
        let g = euclid();
        let (a, b) = (v2(0.0, 0.0), v2(2.0, 0.0));
        let init = Curve::sample(0.0, 1.0, 8, |t| v2(2.0 * t, (std::f64::consts::PI * t).sin())).unwrap();
        let res = minimize_energy(&g, &a, &b, 32, &init, &EnergyOptions::default()).unwrap();
        assert!(res.curve.points().iter().all(|p| p[1].abs() < 1e-8));
        assert!((res.energy - 2.0).abs() < 1e-10);
    }

    #[test]
    fn shooting_in_flat_space() {
        let g = euclid();
        let (a, b) = (v2(0.5, -1.0), v2(2.0, 1.0));
        let c = shoot_bvp(&g.levi_civita(), &a, &b, &ShootingOptions::default()).unwrap();
        assert!((&c.velocities()[0] - (&b - &a)).amax() < 1e-12);
        let c = shoot_bvp(&g.levi_civita(), &a, &a, &ShootingOptions::default()).unwrap();
        assert!(c.velocities()[0].amax() == 0.0);
    }

    #[test]
    fn identity_map_keeps_curve() {
        let g = euclid();
        let id = MapField::new(g.space().clone(), |v: &Point| v.clone());
        let c = Curve::sample(0.0, 1.0, 10, |t| v2(t, t * t)).unwrap();
        let (m, _) = map_curve(&id, &c, None).unwrap();
        for (p, q) in m.points().iter().zip(c.points()) {
            assert!((p - q).amax() < 1e-14);
        }
        for (p, q) in m.velocities().iter().zip(c.velocities()) {
            assert!((p - q).amax() < 1e-9);
        }
    }
}
