//! Directional-derivative calculus on an open set of a coordinate space.
//!
//! Every smooth object in the crate is a pure evaluator over a [`ChartSpace`].
//! Derivatives are realized by difference stencils whose step is chosen from
//! a [`StencilConfig`] and from the *depth* of the field being differentiated:
//! a field whose evaluator already differentiates something internally has
//! depth 1, and so on. Deeper fields are differentiated with wider steps so
//! that cancellation noise from the inner stencil is not amplified.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeomError, Result};

pub type Point = DVector<f64>;
pub type Vector = DVector<f64>;
pub type Operator = DMatrix<f64>;

type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

/// The ambient coordinate space together with the open set the geometry lives on.
#[derive(Clone)]
pub struct ChartSpace {
    dim: usize,
    name: String,
    domain: Predicate,
}

impl ChartSpace {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        domain: impl Fn(&[f64]) -> bool + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(GeomError::argument("chart dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            name: name.into(),
            domain: Arc::new(domain),
        })
    }

    /// The whole coordinate space.
    pub fn full(name: impl Into<String>, dim: usize) -> Result<Self> {
        Self::new(name, dim, |_| true)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn contains(&self, v: &Point) -> bool {
        v.len() == self.dim && v.iter().all(|x| x.is_finite()) && (self.domain)(v.as_slice())
    }

    pub fn check_dim(&self, v: &Vector) -> Result<()> {
        if v.len() != self.dim {
            return Err(GeomError::Dimension {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    pub fn check(&self, v: &Point) -> Result<()> {
        self.check_dim(v)?;
        if !self.contains(v) {
            return Err(self.domain_error(v));
        }
        Ok(())
    }

    pub(crate) fn domain_error(&self, v: &Point) -> GeomError {
        GeomError::Domain {
            space: self.name.clone(),
            point: v.iter().copied().collect(),
        }
    }
}

impl fmt::Debug for ChartSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChartSpace")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Central,
    Forward,
}

/// Difference-stencil settings attached to a field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StencilConfig {
    pub scheme: Scheme,
    /// Fixed step in chart units. `None` selects the automatic rule
    /// `eps^(1/(k+2)) * max(1, |v|_inf)` for a `k`-th derivative.
    pub step: Option<f64>,
    /// Accuracy order; 2 for central, 1 or 2 for forward.
    pub order: u32,
}

impl Default for StencilConfig {
    fn default() -> Self {
        Self::central()
    }
}

impl StencilConfig {
    pub fn central() -> Self {
        Self {
            scheme: Scheme::Central,
            step: None,
            order: 2,
        }
    }

    pub fn forward(order: u32) -> Result<Self> {
        if order != 1 && order != 2 {
            return Err(GeomError::argument("forward stencils support order 1 or 2"));
        }
        Ok(Self {
            scheme: Scheme::Forward,
            step: None,
            order,
        })
    }

    pub fn with_step(mut self, step: f64) -> Result<Self> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(GeomError::argument(format!("stencil step must be positive, got {step}")));
        }
        self.step = Some(step);
        Ok(self)
    }

    /// Step for an effective derivative order `k` (nesting depth + 1 for
    /// first derivatives of derived fields).
    pub fn step_at(&self, v: &Point, k: u32) -> f64 {
        match self.step {
            Some(h) => h,
            None => {
                let scale = v.amax().max(1.0);
                f64::EPSILON.powf(1.0 / (k as f64 + 2.0)) * scale
            }
        }
    }
}

/// Values a field may take: scalars, vectors, or dense operators.
pub trait FieldValue: Clone + Send + Sync + 'static {
    fn zeros_like(&self) -> Self;
    /// `self += alpha * other`
    fn add_scaled(&mut self, alpha: f64, other: &Self);
    /// Largest absolute entry.
    fn max_abs(&self) -> f64;

    fn scaled(&self, alpha: f64) -> Self {
        let mut out = self.zeros_like();
        out.add_scaled(alpha, self);
        out
    }
}

impl FieldValue for f64 {
    fn zeros_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        *self += alpha * other;
    }
    fn max_abs(&self) -> f64 {
        self.abs()
    }
}

impl FieldValue for DVector<f64> {
    fn zeros_like(&self) -> Self {
        DVector::zeros(self.len())
    }
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        self.axpy(alpha, other, 1.0);
    }
    fn max_abs(&self) -> f64 {
        self.amax()
    }
}

impl FieldValue for DMatrix<f64> {
    fn zeros_like(&self) -> Self {
        DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, alpha: f64, other: &Self) {
        *self += other * alpha;
    }
    fn max_abs(&self) -> f64 {
        self.amax()
    }
}

pub(crate) type Evaluator<T> = Arc<dyn Fn(&Point) -> Result<T> + Send + Sync>;

/// A smooth map on a chart domain, evaluated pointwise.
#[derive(Clone)]
pub struct MapField<T> {
    space: ChartSpace,
    stencil: StencilConfig,
    depth: u32,
    eval: Evaluator<T>,
}

impl<T: FieldValue> MapField<T> {
    /// Wraps a pure evaluator. The evaluator is only called on domain points.
    pub fn new(space: ChartSpace, f: impl Fn(&Point) -> T + Send + Sync + 'static) -> Self {
        Self {
            space,
            stencil: StencilConfig::default(),
            depth: 0,
            eval: Arc::new(move |v| Ok(f(v))),
        }
    }

    /// Wraps a fallible evaluator that internally applies `depth` nested stencils.
    pub fn from_fallible(
        space: ChartSpace,
        depth: u32,
        f: impl Fn(&Point) -> Result<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            space,
            stencil: StencilConfig::default(),
            depth,
            eval: Arc::new(f),
        }
    }

    pub fn with_stencil(mut self, stencil: StencilConfig) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn space(&self) -> &ChartSpace {
        &self.space
    }

    pub fn stencil(&self) -> StencilConfig {
        self.stencil
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn eval(&self, v: &Point) -> Result<T> {
        self.space.check(v)?;
        (self.eval)(v)
    }

    /// `df(v, xi)`.
    pub fn directional_derivative(&self, v: &Point, xi: &Vector) -> Result<T> {
        directional_derivative(self, v, xi)
    }

    /// The field `v -> df(v, xi)` for a constant direction `xi`.
    pub fn derivative_field(&self, xi: Vector) -> MapField<T> {
        let inner = self.clone();
        MapField::from_fallible(self.space.clone(), self.depth + 1, move |v| {
            inner.directional_derivative(v, &xi)
        })
        .with_stencil(self.stencil)
    }
}

/// Difference approximation of `df(v, xi)`.
///
/// Central `(f(v+h xi) - f(v-h xi)) / 2h` where both samples lie in the
/// domain; otherwise a second-order one-sided stencil on whichever side is
/// available.
pub fn directional_derivative<T: FieldValue>(f: &MapField<T>, v: &Point, xi: &Vector) -> Result<T> {
    derivative_along(&f.space, f.stencil, f.depth, &|w| f.eval(w), v, xi)
}

pub(crate) fn derivative_along<T: FieldValue>(
    space: &ChartSpace,
    stencil: StencilConfig,
    depth: u32,
    f: &dyn Fn(&Point) -> Result<T>,
    v: &Point,
    xi: &Vector,
) -> Result<T> {
    space.check(v)?;
    space.check_dim(xi)?;
    let size = xi.amax();
    if size == 0.0 {
        return Ok(f(v)?.zeros_like());
    }
    // Normalizing by |xi| keeps the spatial step independent of the argument size.
    let t = stencil.step_at(v, depth + 1) / size;
    let at = |s: f64| -> Point { v + xi * s };

    if stencil.scheme == Scheme::Central {
        let (plus, minus) = (at(t), at(-t));
        if space.contains(&plus) && space.contains(&minus) {
            let mut out = f(&plus)?;
            out.add_scaled(-1.0, &f(&minus)?);
            return Ok(out.scaled(0.5 / t));
        }
    } else if stencil.order == 1 {
        let plus = at(t);
        if !space.contains(&plus) {
            return Err(space.domain_error(&plus));
        }
        let mut out = f(&plus)?;
        out.add_scaled(-1.0, &f(v)?);
        return Ok(out.scaled(1.0 / t));
    }
    one_sided(space, f, v, &at, t)
}

fn one_sided<T: FieldValue>(
    space: &ChartSpace,
    f: &dyn Fn(&Point) -> Result<T>,
    v: &Point,
    at: &dyn Fn(f64) -> Point,
    t: f64,
) -> Result<T> {
    for dir in [1.0, -1.0] {
        let (p1, p2) = (at(dir * t), at(2.0 * dir * t));
        if space.contains(&p1) && space.contains(&p2) {
            let mut out = f(v)?.scaled(-3.0);
            out.add_scaled(4.0, &f(&p1)?);
            out.add_scaled(-1.0, &f(&p2)?);
            return Ok(out.scaled(dir * 0.5 / t));
        }
    }
    Err(space.domain_error(&at(t)))
}

/// The Jacobian `F_*|_v` with columns `dF(v, e_k)`.
pub fn jacobian(f: &MapField<Vector>, v: &Point) -> Result<Operator> {
    let n = f.space().dim();
    let mut cols = Vec::with_capacity(n);
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        cols.push(f.directional_derivative(v, &e)?);
    }
    Ok(DMatrix::from_columns(&cols))
}

/// `v -> F_*|_v` as an operator-valued field.
pub fn jacobian_field(f: &MapField<Vector>) -> MapField<Operator> {
    let inner = f.clone();
    MapField::from_fallible(f.space().clone(), f.depth() + 1, move |v| jacobian(&inner, v)).with_stencil(f.stencil())
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `sum_j (-1)^(k-j) C(k,j) h(tau + j sigma) / sigma^k`, the `k`-th forward
/// difference quotient of a function of one real variable.
pub fn kth_difference_quotient<T: FieldValue>(
    h: &dyn Fn(f64) -> Result<T>,
    tau: f64,
    sigma: f64,
    k: u32,
) -> Result<T> {
    if sigma == 0.0 || !sigma.is_finite() {
        return Err(GeomError::argument("difference quotient step must be nonzero"));
    }
    if k == 0 {
        return Err(GeomError::argument("difference order must be positive"));
    }
    let mut acc: Option<T> = None;
    for j in 0..=k {
        let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
        let value = h(tau + j as f64 * sigma)?;
        let weight = sign * binomial(k, j);
        match acc.as_mut() {
            Some(a) => a.add_scaled(weight, &value),
            None => acc = Some(value.scaled(weight)),
        }
    }
    Ok(acc.expect("k >= 1").scaled(sigma.powi(-(k as i32))))
}

/// Nodes and coefficients that recover a polynomial of total degree `<= k`
/// in `dim` variables from its values on the nodes.
#[derive(Clone, Debug)]
pub struct ReconstructionNodes {
    dim: usize,
    order: u32,
    /// Monomial exponents, also used as the node coordinates (simplex grid).
    exponents: Vec<Vec<u32>>,
    /// `coeffs[(monomial, node)]`: coefficient of `t^monomial` contributed by `p(node)`.
    coeffs: DMatrix<f64>,
}

impl ReconstructionNodes {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn node(&self, i: usize) -> Point {
        DVector::from_iterator(self.dim, self.exponents[i].iter().map(|&e| e as f64))
    }

    pub fn nodes(&self) -> Vec<Point> {
        (0..self.len()).map(|i| self.node(i)).collect()
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    fn monomial_index(&self, alpha: &[u32]) -> Option<usize> {
        self.exponents.iter().position(|e| e.as_slice() == alpha)
    }

    /// `a_alpha(rho_node)`.
    pub fn coefficient(&self, alpha: &[u32], node: usize) -> Option<f64> {
        self.monomial_index(alpha).map(|m| self.coeffs[(m, node)])
    }

    /// Monomial coefficients of the interpolating polynomial, ordered as [`Self::monomials`].
    pub fn reconstruct(&self, values: &[f64]) -> Result<Vec<f64>> {
        if values.len() != self.len() {
            return Err(GeomError::Dimension {
                expected: self.len(),
                got: values.len(),
            });
        }
        let v = DVector::from_column_slice(values);
        Ok((&self.coeffs * v).iter().copied().collect())
    }

    /// Evaluates `sum_alpha sum_rho a_alpha(rho) p(rho) t^alpha`.
    pub fn interpolate(&self, values: &[f64], t: &[f64]) -> Result<f64> {
        let c = self.reconstruct(values)?;
        Ok(self
            .exponents
            .iter()
            .zip(c.iter())
            .map(|(e, ci)| ci * monomial(e, t))
            .sum())
    }
}

fn monomial(exponents: &[u32], t: &[f64]) -> f64 {
    exponents
        .iter()
        .zip(t)
        .map(|(&e, &x)| x.powi(e as i32))
        .product()
}

fn multi_indices(dim: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, dim: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == dim {
            out.push(prefix.clone());
            return;
        }
        for e in 0..=remaining {
            prefix.push(e);
            rec(prefix, dim, remaining - e, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::with_capacity(dim), dim, max_degree, &mut out);
    out.sort_by_key(|e| e.iter().sum::<u32>());
    out
}

/// Simplex-grid nodes `{rho in {0..k}^dim : |rho| <= k}` with coefficients from
/// the monomial Vandermonde solve, verified on the monomial basis.
pub fn build_reconstruction_nodes(dim: usize, order: u32) -> Result<ReconstructionNodes> {
    if dim == 0 || order == 0 {
        return Err(GeomError::argument("reconstruction needs dim >= 1 and order >= 1"));
    }
    let exponents = multi_indices(dim, order);
    let m = exponents.len();
    let vandermonde = DMatrix::from_fn(m, m, |node, mono| {
        let rho: Vec<f64> = exponents[node].iter().map(|&e| e as f64).collect();
        monomial(&exponents[mono], &rho)
    });
    let coeffs = vandermonde
        .clone()
        .try_inverse()
        .ok_or_else(|| GeomError::Internal("interpolation system on the simplex grid is singular".into()))?;

    let nodes = ReconstructionNodes {
        dim,
        order,
        exponents,
        coeffs,
    };
    // Reproduce every monomial from its node values.
    let check = &nodes.coeffs * &vandermonde;
    let defect = (check - DMatrix::identity(m, m)).amax();
    if defect > 1e-8 {
        return Err(GeomError::Internal(format!(
            "reconstruction failed the monomial check (defect {defect:e})"
        )));
    }
    Ok(nodes)
}

/// Mixed partial `d_1^j1 ... d_n^jn u(v)` rebuilt from `k`-th directional
/// derivatives along the reconstruction nodes.
///
/// Each `d_rho^k u(v)` is a centered `k`-th difference quotient of
/// `t -> u(v + t rho)`. Since `d_rho^k u = sum_alpha (k!/alpha!) rho^alpha d^alpha u`,
/// the node combination returns `(k!/alpha!) d^alpha u` and is rescaled.
pub fn mixed_partial_from_directional<T: FieldValue>(
    u: &MapField<T>,
    v: &Point,
    alpha: &[u32],
    nodes: &ReconstructionNodes,
) -> Result<T> {
    let space = u.space();
    space.check(v)?;
    if alpha.len() != space.dim() || nodes.dim() != space.dim() {
        return Err(GeomError::Dimension {
            expected: space.dim(),
            got: alpha.len(),
        });
    }
    let k: u32 = alpha.iter().sum();
    if k != nodes.order() {
        return Err(GeomError::argument(format!(
            "multi-index has order {k} but the nodes were built for order {}",
            nodes.order()
        )));
    }
    let mono = nodes
        .monomial_index(alpha)
        .ok_or_else(|| GeomError::Internal("multi-index missing from node table".into()))?;

    let mut acc = u.eval(v)?.zeros_like();
    for i in 0..nodes.len() {
        let a = nodes.coeffs[(mono, i)];
        let rho = nodes.node(i);
        let size = rho.amax();
        if a == 0.0 || size == 0.0 {
            continue;
        }
        let sigma = u.stencil().step_at(v, k + u.depth()) / size;
        let along = |t: f64| u.eval(&(v + &rho * t));
        let d = kth_difference_quotient(&along, -(k as f64) * sigma / 2.0, sigma, k)?;
        acc.add_scaled(a, &d);
    }
    let alpha_factorial: f64 = alpha.iter().map(|&j| factorial(j)).product();
    Ok(acc.scaled(alpha_factorial / factorial(k)))
}
