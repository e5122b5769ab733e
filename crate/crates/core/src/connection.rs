//! Connections `D = d + A` on the trivial bundle `Omega x R^m`.

use nalgebra::DMatrix;

use crate::calculus::{ChartSpace, MapField, Operator, Point, Vector};
use crate::error::{GeomError, Result};
use crate::forms::{exterior_derivative, pullback, wedge_1forms, RForm, ValueKind};
use crate::linalg;

/// The connection form `A`, an `m x m` operator-valued 1-form.
#[derive(Clone)]
pub struct ConnectionForm {
    form: RForm<Operator>,
    fiber_dim: usize,
}

impl ConnectionForm {
    pub fn new(form: RForm<Operator>) -> Result<Self> {
        if form.degree() != 1 {
            return Err(GeomError::argument("a connection form has degree 1"));
        }
        match form.kind() {
            ValueKind::Operator(r, c) if r == c => Ok(Self { form, fiber_dim: r }),
            other => Err(GeomError::argument(format!(
                "a connection form takes square operator values, got {other:?}"
            ))),
        }
    }

    /// From `(v, xi) -> A(v, xi)`; the closure must be linear in `xi`.
    pub fn from_fn(
        space: ChartSpace,
        fiber_dim: usize,
        f: impl Fn(&Point, &Vector) -> Operator + Send + Sync + 'static,
    ) -> Self {
        let form = RForm::new(space, 1, ValueKind::Operator(fiber_dim, fiber_dim), move |v, xs| f(v, &xs[0]));
        Self { form, fiber_dim }
    }

    pub fn zero(space: ChartSpace, fiber_dim: usize) -> Self {
        Self::from_fn(space, fiber_dim, move |_, _| DMatrix::zeros(fiber_dim, fiber_dim))
    }

    pub fn form(&self) -> &RForm<Operator> {
        &self.form
    }

    pub fn space(&self) -> &ChartSpace {
        self.form.space()
    }

    pub fn fiber_dim(&self) -> usize {
        self.fiber_dim
    }

    /// `A(v, xi)`.
    pub fn eval(&self, v: &Point, xi: &Vector) -> Result<Operator> {
        self.form.eval(v, std::slice::from_ref(xi))
    }

    /// `A(v, xi) w`.
    pub fn apply(&self, v: &Point, xi: &Vector, w: &Vector) -> Result<Vector> {
        let a = self.eval(v, xi)?;
        if w.len() != self.fiber_dim {
            return Err(GeomError::Dimension {
                expected: self.fiber_dim,
                got: w.len(),
            });
        }
        Ok(a * w)
    }

    /// `D phi (v, xi) = d phi(v, xi) + A(v, xi) phi(v)`.
    pub fn covariant_derivative(&self, section: &MapField<Vector>, v: &Point, xi: &Vector) -> Result<Vector> {
        let d = section.directional_derivative(v, xi)?;
        Ok(d + self.apply(v, xi, &section.eval(v)?)?)
    }

    /// The section `v -> D_xi phi (v)` for a constant direction `xi`.
    pub fn covariant_derivative_field(&self, section: &MapField<Vector>, xi: Vector) -> MapField<Vector> {
        let (conn, phi) = (self.clone(), section.clone());
        let depth = (section.depth() + 1).max(self.form.depth());
        MapField::from_fallible(section.space().clone(), depth, move |v| {
            conn.covariant_derivative(&phi, v, &xi)
        })
        .with_stencil(section.stencil())
    }

    /// `R = dA + A ^ A`.
    pub fn curvature_form(&self) -> RForm<Operator> {
        let da = exterior_derivative(&self.form);
        let aa = wedge_1forms(&self.form, &self.form).expect("square operator values compose");
        da.add(&aa).expect("same degree and kind")
    }

    /// `D_xi D_eta phi - D_eta D_xi phi` at `v`, with `xi`, `eta` constant fields.
    pub fn curvature_commutator(
        &self,
        section: &MapField<Vector>,
        v: &Point,
        xi: &Vector,
        eta: &Vector,
    ) -> Result<Vector> {
        let d_eta = self.covariant_derivative_field(section, eta.clone());
        let d_xi = self.covariant_derivative_field(section, xi.clone());
        let first = self.covariant_derivative(&d_eta, v, xi)?;
        let second = self.covariant_derivative(&d_xi, v, eta)?;
        Ok(first - second)
    }

    /// `A^gamma = gamma^{-1} d gamma + gamma^{-1} A gamma`, the connection
    /// `D^gamma_xi phi = gamma^{-1} D_xi (gamma phi)`.
    pub fn gauge_transform(&self, gamma: &MapField<Operator>) -> Result<ConnectionForm> {
        let m = self.fiber_dim;
        let (conn, g) = (self.clone(), gamma.clone());
        let depth = self.form.depth().max(gamma.depth() + 1);
        let form = RForm::from_fallible(self.space().clone(), 1, ValueKind::Operator(m, m), depth, move |v, xs| {
            let xi = &xs[0];
            let gv = g.eval(v)?;
            if gv.nrows() != m || gv.ncols() != m {
                return Err(GeomError::Dimension {
                    expected: m,
                    got: gv.nrows(),
                });
            }
            let rhs = g.directional_derivative(v, xi)? + conn.eval(v, xi)? * &gv;
            linalg::solve(&gv, &rhs)
        })
        .with_stencil(gamma.stencil());
        ConnectionForm::new(form)
    }

    /// `A^F = F* A` on the domain of `map`.
    pub fn pullback_connection(&self, map: &MapField<Vector>) -> ConnectionForm {
        ConnectionForm {
            form: pullback(map, &self.form),
            fiber_dim: self.fiber_dim,
        }
    }
}
