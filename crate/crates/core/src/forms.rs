//! Alternating forms on a chart domain with vector or operator values.

use std::sync::Arc;

use crate::calculus::{derivative_along, ChartSpace, FieldValue, MapField, Operator, Point, StencilConfig, Vector};
use crate::error::{GeomError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ValueKind {
    Scalar,
    Vector(usize),
    /// `rows x cols` operator in the chart basis.
    Operator(usize, usize),
}

type FormEvaluator<T> = Arc<dyn Fn(&Point, &[Vector]) -> Result<T> + Send + Sync>;

/// A degree-`r` form `(v, xi_1..xi_r) -> value`, alternating and multilinear in the `xi`.
#[derive(Clone)]
pub struct RForm<T> {
    degree: usize,
    kind: ValueKind,
    space: ChartSpace,
    stencil: StencilConfig,
    depth: u32,
    eval: FormEvaluator<T>,
}

impl<T: FieldValue> RForm<T> {
    pub fn new(
        space: ChartSpace,
        degree: usize,
        kind: ValueKind,
        f: impl Fn(&Point, &[Vector]) -> T + Send + Sync + 'static,
    ) -> Self {
        Self::from_fallible(space, degree, kind, 0, move |v, xs| Ok(f(v, xs)))
    }

    pub fn from_fallible(
        space: ChartSpace,
        degree: usize,
        kind: ValueKind,
        depth: u32,
        f: impl Fn(&Point, &[Vector]) -> Result<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            degree,
            kind,
            space,
            stencil: StencilConfig::default(),
            depth,
            eval: Arc::new(f),
        }
    }

    /// The 0-form given by a field.
    pub fn from_field(field: &MapField<T>, kind: ValueKind) -> Self {
        let f = field.clone();
        Self::from_fallible(field.space().clone(), 0, kind, field.depth(), move |v, _| f.eval(v))
            .with_stencil(field.stencil())
    }

    pub fn with_stencil(mut self, stencil: StencilConfig) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
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

    pub fn eval(&self, v: &Point, args: &[Vector]) -> Result<T> {
        if args.len() != self.degree {
            return Err(GeomError::argument(format!(
                "{}-form evaluated on {} arguments",
                self.degree,
                args.len()
            )));
        }
        self.space.check(v)?;
        for a in args {
            self.space.check_dim(a)?;
        }
        (self.eval)(v, args)
    }

    /// `dA(., xi_0..xi_r) = sum_j (-1)^j xi_j A(., xi_0..^xi_j..xi_r)`.
    pub fn exterior_derivative(&self) -> RForm<T> {
        exterior_derivative(self)
    }

    pub fn pullback(&self, map: &MapField<Vector>) -> RForm<T> {
        pullback(map, self)
    }

    pub fn add(&self, other: &RForm<T>) -> Result<RForm<T>> {
        if self.degree != other.degree || self.kind != other.kind {
            return Err(GeomError::argument("forms of different degree or value kind cannot be added"));
        }
        let (a, b) = (self.clone(), other.clone());
        Ok(RForm::from_fallible(
            self.space.clone(),
            self.degree,
            self.kind,
            self.depth.max(other.depth),
            move |v, xs| {
                let mut out = a.eval(v, xs)?;
                out.add_scaled(1.0, &b.eval(v, xs)?);
                Ok(out)
            },
        )
        .with_stencil(self.stencil))
    }
}

pub fn exterior_derivative<T: FieldValue>(form: &RForm<T>) -> RForm<T> {
    let inner = form.clone();
    let (space, stencil, depth) = (form.space.clone(), form.stencil, form.depth);
    let degree = form.degree;
    let space_for_eval = space.clone();
    RForm::from_fallible(space, degree + 1, form.kind, depth + 1, move |v, xs| {
        let mut rest: Vec<Vector> = Vec::with_capacity(degree);
        let mut acc: Option<T> = None;
        for j in 0..=degree {
            rest.clear();
            rest.extend(xs.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| x.clone()));
            let along = |w: &Point| inner.eval(w, &rest);
            let d = derivative_along(&space_for_eval, stencil, depth, &along, v, &xs[j])?;
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            match acc.as_mut() {
                Some(a) => a.add_scaled(sign, &d),
                None => acc = Some(d.scaled(sign)),
            }
        }
        Ok(acc.expect("at least one term"))
    })
    .with_stencil(stencil)
}

/// `(F*B)(v, xi_1..) = B(F(v), F_* xi_1, ..)` on the domain of `map`.
pub fn pullback<T: FieldValue>(map: &MapField<Vector>, form: &RForm<T>) -> RForm<T> {
    let (f, b) = (map.clone(), form.clone());
    RForm::from_fallible(
        map.space().clone(),
        form.degree,
        form.kind,
        form.depth.max(map.depth() + 1),
        move |v, xs| {
            let image = f.eval(v)?;
            b.space().check(&image)?;
            let pushed = xs
                .iter()
                .map(|x| f.directional_derivative(v, x))
                .collect::<Result<Vec<_>>>()?;
            b.eval(&image, &pushed)
        },
    )
    .with_stencil(map.stencil())
}

/// `(A ^ B)(v, xi, eta) = A(v,xi) B(v,eta) - A(v,eta) B(v,xi)`.
pub fn wedge_1forms(a: &RForm<Operator>, b: &RForm<Operator>) -> Result<RForm<Operator>> {
    if a.degree != 1 || b.degree != 1 {
        return Err(GeomError::argument("wedge is defined for pairs of 1-forms"));
    }
    let kind = match (a.kind, b.kind) {
        (ValueKind::Operator(ar, ac), ValueKind::Operator(br, bc)) => {
            if ac != br {
                return Err(GeomError::argument(format!(
                    "cannot compose {ar}x{ac} with {br}x{bc} operator values"
                )));
            }
            ValueKind::Operator(ar, bc)
        }
        _ => return Err(GeomError::argument("wedge requires operator-valued forms")),
    };
    if a.space.dim() != b.space.dim() {
        return Err(GeomError::Dimension {
            expected: a.space.dim(),
            got: b.space.dim(),
        });
    }
    let (fa, fb) = (a.clone(), b.clone());
    Ok(RForm::from_fallible(
        a.space.clone(),
        2,
        kind,
        a.depth.max(b.depth),
        move |v, xs| {
            let (xi, eta) = (std::slice::from_ref(&xs[0]), std::slice::from_ref(&xs[1]));
            let ab = fa.eval(v, xi)? * fb.eval(v, eta)?;
            let ba = fa.eval(v, eta)? * fb.eval(v, xi)?;
            Ok(ab - ba)
        },
    )
    .with_stencil(a.stencil))
}
