//! Python bindings: gallery spaces, curvature, geodesics, transport and circle lengths.

use chartgeom::gallery::{self, brioschi_curvature};
use chartgeom::geodesic::{self, EnergyOptions, ShootingOptions};
use chartgeom::jacobi::{self, FanOptions};
use chartgeom::{GeomError, ModelSpace, Point, Vector};
use nalgebra::DVector;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

pyo3::create_exception!(pychartgeom, GeometryError, PyException, "A geometric computation failed.");
pyo3::create_exception!(pychartgeom, DomainError, GeometryError, "A point or curve left the chart domain.");
pyo3::create_exception!(pychartgeom, ConvergenceError, GeometryError, "An iterative solver did not converge.");

fn py_err(e: GeomError) -> PyErr {
    let msg = e.to_string();
    match e {
        GeomError::Argument(_) | GeomError::Dimension { .. } => PyValueError::new_err(msg),
        e if e.is_domain() => DomainError::new_err(msg),
        GeomError::NoConvergence { .. } => ConvergenceError::new_err(msg),
        _ => GeometryError::new_err(msg),
    }
}

fn vec_of(x: Vec<f64>) -> Vector {
    DVector::from_vec(x)
}

fn list_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

/// A uniformly sampled curve with stored velocities.
#[pyclass(name = "Curve", frozen)]
struct PyCurve {
    inner: geodesic::Curve,
}

#[pymethods]
impl PyCurve {
    /// Builds a curve from uniformly spaced samples; velocities come from differences.
    #[staticmethod]
    fn from_points(times: Vec<f64>, points: Vec<Vec<f64>>) -> PyResult<Self> {
        let points = points.into_iter().map(vec_of).collect();
        let inner = geodesic::Curve::from_points(times, points).map_err(py_err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times().to_vec()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.points().iter().map(list_of).collect()
    }

    #[getter]
    fn velocities(&self) -> Vec<Vec<f64>> {
        self.inner.velocities().iter().map(list_of).collect()
    }

    /// `(point, velocity)` at `t`, by cubic Hermite interpolation.
    fn eval(&self, t: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let (x, u) = self.inner.eval(t).map_err(py_err)?;
        Ok((list_of(&x), list_of(&u)))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Curve(t=[{}, {}], nodes={}, dim={})",
            self.inner.start(),
            self.inner.end(),
            self.inner.len(),
            self.inner.dim()
        )
    }
}

/// A gallery model space, looked up by name (`sphere`, `halfplane`, `disc`,
/// `euclidean<n>`, `toy<n>`).
#[pyclass(name = "Space", frozen)]
struct PySpace {
    model: ModelSpace,
}

impl PySpace {
    fn point(&self, p: Vec<f64>) -> PyResult<Point> {
        let v = vec_of(p);
        self.model.space().check(&v).map_err(py_err)?;
        Ok(v)
    }

    fn vector(&self, x: Vec<f64>) -> PyResult<Vector> {
        let v = vec_of(x);
        self.model.space().check_dim(&v).map_err(py_err)?;
        Ok(v)
    }

    fn plane(&self, v: &Point, plane: Option<(Vec<f64>, Vec<f64>)>) -> PyResult<(Vector, Vector)> {
        let metric = &self.model.metric;
        match plane {
            Some((a, b)) => metric.orthonormalize(v, &self.vector(a)?, &self.vector(b)?).map_err(py_err),
            None => {
                let f = jacobi::orthonormal_frame(metric, v).map_err(py_err)?;
                if f.len() < 2 {
                    return Err(PyValueError::new_err("a plane needs at least two dimensions"));
                }
                Ok((f[0].clone(), f[1].clone()))
            }
        }
    }
}

#[pymethods]
impl PySpace {
    #[new]
    fn new(name: &str) -> PyResult<Self> {
        let model = gallery::registry(name).map_err(py_err)?;
        Ok(Self { model })
    }

    #[getter]
    fn name(&self) -> String {
        self.model.name.clone()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.dim()
    }

    /// Constant sectional curvature, when known in closed form.
    #[getter]
    fn known_k(&self) -> Option<f64> {
        self.model.known_k
    }

    /// Labels of the closed-form isometries attached to the space.
    #[getter]
    fn isometries(&self) -> Vec<String> {
        self.model.isometries.iter().map(|m| m.label.clone()).collect()
    }

    fn contains(&self, point: Vec<f64>) -> bool {
        self.model.space().contains(&vec_of(point))
    }

    fn gram(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let g = self.model.metric.gram(&self.point(point)?).map_err(py_err)?;
        Ok(g.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    fn inner(&self, point: Vec<f64>, xi: Vec<f64>, eta: Vec<f64>) -> PyResult<f64> {
        let v = self.point(point)?;
        self.model
            .metric
            .inner(&v, &self.vector(xi)?, &self.vector(eta)?)
            .map_err(py_err)
    }

    /// `A(v, xi) w` for the Levi-Civita connection.
    fn connection(&self, point: Vec<f64>, xi: Vec<f64>, w: Vec<f64>) -> PyResult<Vec<f64>> {
        let v = self.point(point)?;
        let r = self
            .model
            .metric
            .levi_civita()
            .apply(&v, &self.vector(xi)?, &self.vector(w)?)
            .map_err(py_err)?;
        Ok(list_of(&r))
    }

    /// `g(R(xi, eta) zeta, theta)` at `point`.
    fn riemann(&self, point: Vec<f64>, xi: Vec<f64>, eta: Vec<f64>, zeta: Vec<f64>, theta: Vec<f64>) -> PyResult<f64> {
        let v = self.point(point)?;
        let (a, b, c, d) = (self.vector(xi)?, self.vector(eta)?, self.vector(zeta)?, self.vector(theta)?);
        self.model.metric.riemann_tensor(&v, &a, &b, &c, &d).map_err(py_err)
    }

    fn sectional_curvature(&self, point: Vec<f64>, xi: Vec<f64>, eta: Vec<f64>) -> PyResult<f64> {
        let v = self.point(point)?;
        self.model
            .metric
            .sectional_curvature(&v, &self.vector(xi)?, &self.vector(eta)?)
            .map_err(py_err)
    }

    /// Gaussian curvature from the classical Brioschi formula (2-D spaces only).
    fn brioschi(&self, point: Vec<f64>) -> PyResult<f64> {
        brioschi_curvature(&self.model.metric, &self.point(point)?).map_err(py_err)
    }

    #[pyo3(signature = (v0, xi0, t = 1.0, dt = 1e-3))]
    fn geodesic(&self, py: Python<'_>, v0: Vec<f64>, xi0: Vec<f64>, t: f64, dt: f64) -> PyResult<PyCurve> {
        let (v, xi) = (self.point(v0)?, self.vector(xi0)?);
        let conn = self.model.metric.levi_civita();
        let inner = py
            .detach(|| geodesic::integrate_geodesic(&conn, &v, &xi, 0.0, t, dt))
            .map_err(py_err)?;
        Ok(PyCurve { inner })
    }

    /// Closed-form geodesic point and velocity at `t`, or `None` without an oracle.
    fn oracle_geodesic(&self, v0: Vec<f64>, xi0: Vec<f64>, t: f64) -> PyResult<Option<(Vec<f64>, Vec<f64>)>> {
        if self.model.geodesic_oracle.is_none() {
            return Ok(None);
        }
        let (x, u) = self
            .model
            .oracle_geodesic(&self.point(v0)?, &self.vector(xi0)?, t)
            .map_err(py_err)?;
        Ok(Some((list_of(&x), list_of(&u))))
    }

    /// Parallel lift of `xi0` along `curve`, starting at its first node.
    fn parallel_transport(&self, curve: &PyCurve, xi0: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let conn = self.model.metric.levi_civita();
        let lift = geodesic::parallel_lift(&conn, &curve.inner, &self.vector(xi0)?, 0).map_err(py_err)?;
        Ok(lift.values().iter().map(list_of).collect())
    }

    fn energy(&self, curve: &PyCurve) -> PyResult<f64> {
        geodesic::energy(&self.model.metric, &curve.inner).map_err(py_err)
    }

    /// Critical curve of the discrete energy from `a` to `b`, started from the chord.
    #[pyo3(signature = (a, b, n = 64, tol = 1e-8, max_iter = 100_000))]
    fn minimize_energy(&self, py: Python<'_>, a: Vec<f64>, b: Vec<f64>, n: usize, tol: f64, max_iter: usize) -> PyResult<PyCurve> {
        let (a, b) = (self.point(a)?, self.point(b)?);
        let init = geodesic::Curve::sample(0.0, 1.0, n.max(1), |t| &a + (&b - &a) * t).map_err(py_err)?;
        let opts = EnergyOptions { tol, max_iter };
        let metric = &self.model.metric;
        let res = py
            .detach(|| geodesic::minimize_energy(metric, &a, &b, n, &init, &opts))
            .map_err(py_err)?;
        Ok(PyCurve { inner: res.curve })
    }

    /// Geodesic on `[0, 1]` from `a` to `b` by shooting.
    #[pyo3(signature = (a, b, tol = 1e-10, dt = 1e-3))]
    fn shoot(&self, py: Python<'_>, a: Vec<f64>, b: Vec<f64>, tol: f64, dt: f64) -> PyResult<PyCurve> {
        let (a, b) = (self.point(a)?, self.point(b)?);
        let conn = self.model.metric.levi_civita();
        let opts = ShootingOptions {
            tol,
            dt,
            ..ShootingOptions::default()
        };
        let inner = py.detach(|| geodesic::shoot_bvp(&conn, &a, &b, &opts)).map_err(py_err)?;
        Ok(PyCurve { inner })
    }

    /// Length of the geodesic circle of radius `r` about `center` in `plane`
    /// (orthonormalized; defaults to the first two coordinate directions).
    #[pyo3(signature = (center, r, plane = None, n_theta = 256, dt = 1e-3))]
    fn circle_length(
        &self,
        py: Python<'_>,
        center: Vec<f64>,
        r: f64,
        plane: Option<(Vec<f64>, Vec<f64>)>,
        n_theta: usize,
        dt: f64,
    ) -> PyResult<f64> {
        let v = self.point(center)?;
        let (xi, eta) = self.plane(&v, plane)?;
        let opts = FanOptions {
            n_theta,
            dt,
            ..FanOptions::default()
        };
        let metric = &self.model.metric;
        py.detach(|| jacobi::geodesic_circle_length(metric, &v, &xi, &eta, r, &opts))
            .map_err(py_err)
    }

    /// Jacobi field along a geodesic `curve` with initial value and covariant derivative.
    fn jacobi(&self, curve: &PyCurve, phi0: Vec<f64>, dphi0: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let field = jacobi::integrate_jacobi(&self.model.metric, &curve.inner, &self.vector(phi0)?, &self.vector(dphi0)?)
            .map_err(py_err)?;
        Ok(field.values().iter().map(list_of).collect())
    }

    fn __repr__(&self) -> String {
        format!("Space({:?}, dim={})", self.model.name, self.model.dim())
    }
}

/// Least-squares curvature from geodesic circle lengths.
#[pyfunction]
fn curvature_from_circle_lengths(radii: Vec<f64>, lengths: Vec<f64>) -> PyResult<f64> {
    jacobi::curvature_from_circle_lengths(&radii, &lengths).map_err(py_err)
}

/// Names accepted by `Space(...)`.
#[pyfunction]
fn registry_names() -> Vec<&'static str> {
    gallery::registry_names()
}

#[pymodule]
fn pychartgeom(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpace>()?;
    m.add_class::<PyCurve>()?;
    m.add_function(wrap_pyfunction!(curvature_from_circle_lengths, m)?)?;
    m.add_function(wrap_pyfunction!(registry_names, m)?)?;
    let py = m.py();
    m.add("GeometryError", py.get_type::<GeometryError>())?;
    m.add("DomainError", py.get_type::<DomainError>())?;
    m.add("ConvergenceError", py.get_type::<ConvergenceError>())?;
    Ok(())
}
