//! Riemannian metrics in a chart, their Levi-Civita connection and curvature.

use nalgebra::{DMatrix, DVector};

use crate::calculus::{jacobian, jacobian_field, ChartSpace, MapField, Operator, Point, StencilConfig, Vector};
use crate::connection::ConnectionForm;
use crate::error::{GeomError, Result};
use crate::forms::{RForm, ValueKind};
use crate::linalg;

const SYMMETRY_TOL: f64 = 1e-12;
const DEGENERATE_PLANE: f64 = 1e-12;

/// `g(v, xi, eta) = xi^T G(v) eta` for a symmetric positive-definite Gram field `G`.
#[derive(Clone)]
pub struct MetricField {
    gram: MapField<Operator>,
}

impl MetricField {
    pub fn new(space: ChartSpace, gram: impl Fn(&Point) -> Operator + Send + Sync + 'static) -> Self {
        Self {
            gram: MapField::new(space, gram),
        }
    }

    pub fn from_field(gram: MapField<Operator>) -> Self {
        Self { gram }
    }

    pub fn with_stencil(self, stencil: StencilConfig) -> Self {
        Self {
            gram: self.gram.with_stencil(stencil),
        }
    }

    pub fn space(&self) -> &ChartSpace {
        self.gram.space()
    }

    pub fn dim(&self) -> usize {
        self.space().dim()
    }

    pub fn gram_field(&self) -> &MapField<Operator> {
        &self.gram
    }

    /// `G(v)`, checked for shape and symmetry.
    pub fn gram(&self, v: &Point) -> Result<Operator> {
        let g = self.gram.eval(v)?;
        let n = self.dim();
        if g.nrows() != n || g.ncols() != n {
            return Err(GeomError::Dimension { expected: n, got: g.nrows() });
        }
        let asymmetry = (&g - g.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * g.amax().max(1.0) {
            return Err(GeomError::NotSymmetric {
                point: v.iter().copied().collect(),
                asymmetry,
            });
        }
        Ok(g)
    }

    /// Fails unless `G(v)` admits a Cholesky factorization.
    pub fn check_positive(&self, v: &Point) -> Result<()> {
        let g = self.gram(v)?;
        if g.clone().cholesky().is_some() {
            return Ok(());
        }
        let min = nalgebra::SymmetricEigen::new(g).eigenvalues.min();
        Err(GeomError::NotPositiveDefinite {
            point: v.iter().copied().collect(),
            min_eigenvalue: min,
        })
    }

    pub fn inner(&self, v: &Point, xi: &Vector, eta: &Vector) -> Result<f64> {
        let g = self.gram(v)?;
        self.space().check_dim(xi)?;
        self.space().check_dim(eta)?;
        Ok(xi.dot(&(g * eta)))
    }

    /// `|xi|_v`.
    pub fn norm(&self, v: &Point, xi: &Vector) -> Result<f64> {
        Ok(self.inner(v, xi, xi)?.max(0.0).sqrt())
    }

    /// The Levi-Civita connection form.
    ///
    /// For constant fields, `2 g(A(xi)eta, zeta) = xi g(eta,zeta) + eta g(xi,zeta) - zeta g(xi,eta)`,
    /// the unique solution of the cyclic compatibility equations once torsion
    /// symmetry is imposed. Coordinate derivatives of `G` are contracted with
    /// `xi`, so `A(xi)eta = A(eta)xi` holds to solver roundoff.
    pub fn levi_civita(&self) -> ConnectionForm {
        let metric = self.clone();
        let n = self.dim();
        let form = RForm::from_fallible(
            self.space().clone(),
            1,
            ValueKind::Operator(n, n),
            self.gram.depth() + 1,
            move |v, xs| metric.connection_at(v, &xs[0]),
        )
        .with_stencil(self.gram.stencil());
        ConnectionForm::new(form).expect("square operator-valued 1-form")
    }

    /// `d_k G(v)` for each coordinate direction.
    pub fn gram_derivatives(&self, v: &Point) -> Result<Vec<Operator>> {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let mut e = DVector::zeros(n);
                e[k] = 1.0;
                self.gram.directional_derivative(v, &e)
            })
            .collect()
    }

    fn connection_at(&self, v: &Point, xi: &Vector) -> Result<Operator> {
        let n = self.dim();
        let g = self.gram(v)?;
        let dg = self.gram_derivatives(v)?;
        let mut d_xi = DMatrix::zeros(n, n);
        for (k, dk) in dg.iter().enumerate() {
            d_xi += dk * xi[k];
        }
        // q[:, j] = (d_j G) xi
        let q = DMatrix::from_columns(&dg.iter().map(|dj| dj * xi).collect::<Vec<_>>());
        let rhs = (d_xi.transpose() + &q - q.transpose()) * 0.5;
        linalg::spd_solve(&g, &rhs, v)
    }

    /// Curvature 2-form of the Levi-Civita connection.
    pub fn curvature(&self) -> RForm<Operator> {
        self.levi_civita().curvature_form()
    }

    /// `R(v, xi, eta, zeta, theta) = g(v, R(v, xi, eta) zeta, theta)`.
    pub fn riemann_tensor(&self, v: &Point, xi: &Vector, eta: &Vector, zeta: &Vector, theta: &Vector) -> Result<f64> {
        RiemannTensor::new(self).eval(v, xi, eta, zeta, theta)
    }

    /// `g_v`-orthonormal basis of `span{xi, eta}` by modified Gram-Schmidt.
    pub fn orthonormalize(&self, v: &Point, xi: &Vector, eta: &Vector) -> Result<(Vector, Vector)> {
        let g = self.gram(v)?;
        self.space().check_dim(xi)?;
        self.space().check_dim(eta)?;
        let ip = |a: &Vector, b: &Vector| a.dot(&(&g * b));
        let (xx, yy, xy) = (ip(xi, xi), ip(eta, eta), ip(xi, eta));
        let det = xx * yy - xy * xy;
        if !(det > DEGENERATE_PLANE * xx * yy) || xx <= 0.0 {
            return Err(GeomError::argument(format!(
                "vectors span a degenerate plane (Gram determinant {det:e})"
            )));
        }
        let e1 = xi / xx.sqrt();
        let rest = eta - &e1 * ip(eta, &e1);
        let e2 = &rest / ip(&rest, &rest).sqrt();
        Ok((e1, e2))
    }

    /// Sectional curvature of the plane spanned by `xi`, `eta` at `v`.
    pub fn sectional_curvature(&self, v: &Point, xi: &Vector, eta: &Vector) -> Result<f64> {
        let (e1, e2) = self.orthonormalize(v, xi, eta)?;
        self.riemann_tensor(v, &e1, &e2, &e2, &e1)
    }
}

/// The Riemann tensor of a metric, holding its curvature form for repeated evaluation.
#[derive(Clone)]
pub struct RiemannTensor {
    metric: MetricField,
    curvature: RForm<Operator>,
}

impl RiemannTensor {
    pub fn new(metric: &MetricField) -> Self {
        Self {
            metric: metric.clone(),
            curvature: metric.curvature(),
        }
    }

    pub fn curvature_form(&self) -> &RForm<Operator> {
        &self.curvature
    }

    /// `R(v, xi, eta)` as an operator.
    pub fn operator(&self, v: &Point, xi: &Vector, eta: &Vector) -> Result<Operator> {
        self.curvature.eval(v, &[xi.clone(), eta.clone()])
    }

    pub fn eval(&self, v: &Point, xi: &Vector, eta: &Vector, zeta: &Vector, theta: &Vector) -> Result<f64> {
        let r = self.operator(v, xi, eta)?;
        self.metric.inner(v, &(r * zeta), theta)
    }

    pub fn sectional(&self, v: &Point, xi: &Vector, eta: &Vector) -> Result<f64> {
        let (e1, e2) = self.metric.orthonormalize(v, xi, eta)?;
        self.eval(v, &e1, &e2, &e2, &e1)
    }
}

/// A map `F: source -> target` that is meant to be an isometry.
#[derive(Clone)]
pub struct IsometryCandidate {
    pub map: MapField<Vector>,
    pub source: MetricField,
    pub target: MetricField,
}

/// A sample point with three tangent vectors at it.
#[derive(Clone, Debug)]
pub struct IsometrySample {
    pub point: Point,
    pub xi: Vector,
    pub eta: Vector,
    pub zeta: Vector,
}

#[derive(Clone, Debug, Default)]
pub struct IsometryReport {
    /// `max | |F_* xi|'_{F(v)} - |xi|_v |` over the sample vectors.
    pub metric_defect: f64,
    /// `max |F_*^{-1} A'(F(v), F_* xi) F_* + F_*^{-1} (xi F_*) - A(v, xi)|`.
    pub connection_defect: f64,
    /// `max |R'(F(v), F_* xi, F_* eta) F_* zeta - F_*(R(v, xi, eta) zeta)|`.
    pub curvature_defect: f64,
    /// Samples where `F_*` was numerically singular.
    pub singular: Vec<usize>,
}

impl IsometryCandidate {
    pub fn new(map: MapField<Vector>, source: MetricField, target: MetricField) -> Self {
        Self { map, source, target }
    }

    /// Transformation-law residuals for the connection and curvature forms.
    pub fn residual(&self, samples: &[IsometrySample]) -> Result<IsometryReport> {
        let a_src = self.source.levi_civita();
        let a_tgt = self.target.levi_civita();
        let r_src = self.source.curvature();
        let r_tgt = self.target.curvature();
        let jac_field = jacobian_field(&self.map);

        let mut report = IsometryReport::default();
        for (idx, s) in samples.iter().enumerate() {
            let v = &s.point;
            let image = self.map.eval(v)?;
            let j = jacobian(&self.map, v)?;
            let push = |x: &Vector| &j * x;

            for x in [&s.xi, &s.eta, &s.zeta] {
                let d = (self.target.norm(&image, &push(x))? - self.source.norm(v, x)?).abs();
                report.metric_defect = report.metric_defect.max(d);
            }

            if !(linalg::condition_number(&j) < 1e12) {
                report.singular.push(idx);
                continue;
            }
            let dj = jac_field.directional_derivative(v, &s.xi)?;
            let lhs_num = a_tgt.eval(&image, &push(&s.xi))? * &j + dj;
            let lhs = linalg::solve(&j, &lhs_num)?;
            let conn = (lhs - a_src.eval(v, &s.xi)?).amax();
            report.connection_defect = report.connection_defect.max(conn);

            let r_image = r_tgt.eval(&image, &[push(&s.xi), push(&s.eta)])? * push(&s.zeta);
            let r_pushed = push(&(r_src.eval(v, &[s.xi.clone(), s.eta.clone()])? * &s.zeta));
            report.curvature_defect = report.curvature_defect.max((r_image - r_pushed).amax());
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclidean(n: usize) -> MetricField {
        MetricField::new(ChartSpace::full("E", n).unwrap(), move |_| DMatrix::identity(n, n))
    }

    fn halfplane() -> MetricField {
        let space = ChartSpace::new("H", 2, |v| v[1] > 0.0).unwrap();
        MetricField::new(space, |v| DMatrix::identity(2, 2) / (v[1] * v[1]))
    }

    fn e(i: usize) -> Vector {
        let mut v = DVector::zeros(2);
        v[i] = 1.0;
        v
    }

    #[test]
    fn flat_connection_vanishes() {
        let a = euclidean(3).levi_civita();
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let got = a.eval(&v, &DVector::from_vec(vec![0.3, 0.1, -0.9])).unwrap();
        assert!(got.amax() < 1e-12);
    }

    #[test]
    fn halfplane_christoffels() {
        let a = halfplane().levi_civita();
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let a1 = a.eval(&v, &e(0)).unwrap();
        let a2 = a.eval(&v, &e(1)).unwrap();
        assert!((&a1 * e(0) - DVector::from_vec(vec![0.0, 1.0])).amax() < 1e-8);
        assert!((&a1 * e(1) - DVector::from_vec(vec![-1.0, 0.0])).amax() < 1e-8);
        assert!((&a2 * e(1) - DVector::from_vec(vec![0.0, -1.0])).amax() < 1e-8);
        // torsion symmetry to roundoff
        assert!((&a1 * e(1) - &a2 * e(0)).amax() < 1e-12);
    }

    #[test]
    fn stereographic_connection_vanishes_at_origin() {
        let m = MetricField::new(ChartSpace::full("S", 2).unwrap(), |v: &Point| {
            DMatrix::identity(2, 2) * (4.0 / (1.0 + v.norm_squared()).powi(2))
        });
        let a = m.levi_civita().eval(&DVector::zeros(2), &DVector::from_vec(vec![0.6, -0.8])).unwrap();
        assert!(a.amax() < 1e-9);
    }

    #[test]
    fn indefinite_gram_is_rejected() {
        let m = MetricField::new(ChartSpace::full("L", 2).unwrap(), |_| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
        });
        let err = m.levi_civita().eval(&DVector::zeros(2), &e(0)).unwrap_err();
        assert!(matches!(err, GeomError::NotPositiveDefinite { .. }));
        assert!(m.check_positive(&DVector::zeros(2)).is_err());
    }

    #[test]
    fn asymmetric_gram_is_rejected() {
        let m = MetricField::new(ChartSpace::full("A", 2).unwrap(), |_| {
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0])
        });
        assert!(matches!(m.gram(&DVector::zeros(2)), Err(GeomError::NotSymmetric { .. })));
    }

    #[test]
    fn euclidean_curvature_is_zero() {
        let m = euclidean(2);
        let v = DVector::from_vec(vec![0.5, 0.5]);
        assert!(m.sectional_curvature(&v, &e(0), &e(1)).unwrap().abs() < 1e-9);
    }

    #[test]
    fn halfplane_riemann_value() {
        let m = halfplane();
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let r = m.riemann_tensor(&v, &e(0), &e(1), &e(1), &e(0)).unwrap();
        assert!((r + 1.0).abs() < 1e-5, "{r}");
        let xi = DVector::from_vec(vec![0.3, 0.7]);
        let r = m.riemann_tensor(&v, &xi, &xi, &e(0), &e(1)).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn degenerate_plane_is_rejected() {
        let m = halfplane();
        let v = DVector::from_vec(vec![0.0, 1.0]);
        let xi = DVector::from_vec(vec![1.0, 2.0]);
        assert!(m.sectional_curvature(&v, &xi, &(&xi * 3.0)).is_err());
    }

    #[test]
    fn identity_isometry() {
        let m = halfplane();
        let id = MapField::new(m.space().clone(), |v: &Point| v.clone());
        let c = IsometryCandidate::new(id, m.clone(), m);
        let s = IsometrySample {
            point: DVector::from_vec(vec![0.2, 1.3]),
            xi: e(0),
            eta: e(1),
            zeta: DVector::from_vec(vec![0.5, -0.5]),
        };
        let r = c.residual(&[s]).unwrap();
        assert!(r.metric_defect < 1e-12);
        assert!(r.connection_defect < 1e-6, "{r:?}");
        assert!(r.curvature_defect < 1e-5, "{r:?}");
    }

    #[test]
    fn doubling_is_not_an_isometry() {
        let m = euclidean(2);
        let double = MapField::new(m.space().clone(), |v: &Point| v * 2.0);
        let c = IsometryCandidate::new(double, m.clone(), m);
        let s = IsometrySample {
            point: DVector::zeros(2),
            xi: e(0),
            eta: e(1),
            zeta: DVector::from_vec(vec![0.6, 0.8]),
        };
        let r = c.residual(&[s]).unwrap();
        assert!((r.metric_defect - 1.0).abs() < 1e-9);
    }
}
