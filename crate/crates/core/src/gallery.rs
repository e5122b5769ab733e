//! Model geometries with closed-form data, and the Brioschi curvature formula.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};
use rand::Rng;

use crate::calculus::{ChartSpace, MapField, Point, Vector};
use crate::error::{GeomError, Result};
use crate::metric::MetricField;

/// `(v0, xi0, t) -> (x(t), x'(t))` for the geodesic with `x(0) = v0`, `x'(0) = xi0`.
pub type GeodesicOracle = Arc<dyn Fn(&Point, &Vector, f64) -> Result<(Point, Vector)> + Send + Sync>;

#[derive(Clone)]
pub struct LabeledMap {
    pub label: String,
    pub map: MapField<Vector>,
}

/// A metric together with whatever is known about it in closed form.
#[derive(Clone)]
pub struct ModelSpace {
    pub name: String,
    pub metric: MetricField,
    pub known_k: Option<f64>,
    pub geodesic_oracle: Option<GeodesicOracle>,
    pub isometries: Vec<LabeledMap>,
    /// Box that random sample points are drawn from (rejected if outside the domain).
    pub sample_box: Vec<(f64, f64)>,
}

impl fmt::Debug for ModelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelSpace")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("known_k", &self.known_k)
            .field("isometries", &self.isometries.iter().map(|m| &m.label).collect::<Vec<_>>())
            .finish()
    }
}

impl ModelSpace {
    pub fn space(&self) -> &ChartSpace {
        self.metric.space()
    }

    pub fn dim(&self) -> usize {
        self.metric.dim()
    }

    pub fn oracle_geodesic(&self, v0: &Point, xi0: &Vector, t: f64) -> Result<(Point, Vector)> {
        match &self.geodesic_oracle {
            Some(f) => f(v0, xi0, t),
            None => Err(GeomError::argument(format!("{} has no closed-form geodesics", self.name))),
        }
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        loop {
            let v = DVector::from_iterator(self.dim(), self.sample_box.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)));
            if self.space().contains(&v) {
                return v;
            }
        }
    }

    /// A random vector with entries uniform in `[-1, 1)`.
    pub fn sample_vector<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| rng.gen_range(-1.0..1.0)))
    }
}

fn v2(a: f64, b: f64) -> Vector {
    DVector::from_vec(vec![a, b])
}

pub fn euclidean(n: usize) -> Result<ModelSpace> {
    let space = ChartSpace::full(format!("euclidean{n}"), n)?;
    let metric = MetricField::new(space.clone(), move |_| DMatrix::identity(n, n));
    let shift = DVector::from_iterator(n, (0..n).map(|i| 0.5 - 0.25 * i as f64));
    let translation = MapField::new(space.clone(), move |v: &Point| v + &shift);
    let rotation = MapField::new(space, move |v: &Point| {
        let mut w = v.clone();
        if n >= 2 {
            let (c, s) = (0.6, 0.8);
            w[0] = c * v[0] - s * v[1];
            w[1] = s * v[0] + c * v[1];
        }
        w
    });
    Ok(ModelSpace {
        name: format!("euclidean{n}"),
        metric,
        known_k: Some(0.0),
        geodesic_oracle: Some(Arc::new(|v, xi, t| Ok((v + xi * t, xi.clone())))),
        isometries: vec![
            LabeledMap {
                label: "translation".into(),
                map: translation,
            },
            LabeledMap {
                label: "rotation".into(),
                map: rotation,
            },
        ],
        sample_box: vec![(-2.0, 2.0); n],
    })
}

/// Inverse stereographic projection onto the unit sphere, from the north pole.
fn sphere_embed(u: &Point) -> [f64; 3] {
    let r2 = u.norm_squared();
    let d = 1.0 + r2;
    [2.0 * u[0] / d, 2.0 * u[1] / d, (r2 - 1.0) / d]
}

fn sphere_push(u: &Point, xi: &Vector) -> [f64; 3] {
    let r2 = u.norm_squared();
    let d = 1.0 + r2;
    let dr2 = 2.0 * u.dot(xi);
    [
        2.0 * xi[0] / d - 2.0 * u[0] * dr2 / (d * d),
        2.0 * xi[1] / d - 2.0 * u[1] * dr2 / (d * d),
        2.0 * dr2 / (d * d),
    ]
}

/// `G = 4 I / (1 + |v|^2)^2` on the plane: the round unit sphere minus a pole.
pub fn sphere_stereographic() -> ModelSpace {
    let space = ChartSpace::full("sphere", 2).expect("dimension 2");
    let metric = MetricField::new(space.clone(), |v: &Point| {
        DMatrix::identity(2, 2) * (4.0 / (1.0 + v.norm_squared()).powi(2))
    });
    let oracle: GeodesicOracle = Arc::new(|v, xi, t| {
        let p = sphere_embed(v);
        let w = sphere_push(v, xi);
        let s = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if s == 0.0 {
            return Ok((v.clone(), xi.clone()));
        }
        let (c, sn) = ((s * t).cos(), (s * t).sin());
        let q: [f64; 3] = std::array::from_fn(|i| p[i] * c + w[i] / s * sn);
        let dq: [f64; 3] = std::array::from_fn(|i| -p[i] * s * sn + w[i] * c);
        let den = 1.0 - q[2];
        if den <= 1e-14 {
            return Err(GeomError::Domain {
                space: "sphere".into(),
                point: vec![f64::INFINITY, f64::INFINITY],
            });
        }
        let x = v2(q[0] / den, q[1] / den);
        let u = v2(
            (dq[0] * den + q[0] * dq[2]) / (den * den),
            (dq[1] * den + q[1] * dq[2]) / (den * den),
        );
        Ok((x, u))
    });
    let (c, s) = (0.8f64, 0.6f64);
    let rotation = MapField::new(space, move |v: &Point| v2(c * v[0] - s * v[1], s * v[0] + c * v[1]));
    ModelSpace {
        name: "sphere".into(),
        metric,
        known_k: Some(1.0),
        geodesic_oracle: Some(oracle),
        isometries: vec![LabeledMap {
            label: "rotation".into(),
            map: rotation,
        }],
        sample_box: vec![(-1.5, 1.5); 2],
    }
}

/// `G = I / y^2` on `y > 0`.
pub fn hyperbolic_halfplane() -> ModelSpace {
    let space = ChartSpace::new("halfplane", 2, |v| v[1] > 0.0).expect("dimension 2");
    let metric = MetricField::new(space, |v: &Point| DMatrix::identity(2, 2) / (v[1] * v[1]));
    let oracle: GeodesicOracle = Arc::new(|v, xi, t| {
        let (x0, y0) = (v[0], v[1]);
        let norm = xi.norm();
        if norm == 0.0 {
            return Ok((v.clone(), xi.clone()));
        }
        let s = norm / y0;
        if xi[0].abs() <= 1e-14 * norm {
            let sign = xi[1].signum();
            let y = y0 * (sign * s * t).exp();
            return Ok((v2(x0, y), v2(0.0, sign * s * y)));
        }
        // Semicircle centred on the boundary, parametrized by hyperbolic arc length.
        let c = x0 + y0 * xi[1] / xi[0];
        let r = ((x0 - c).powi(2) + y0 * y0).sqrt();
        let w0 = ((x0 - c) / r).atanh();
        let sigma = xi[0].signum();
        let w = w0 + sigma * s * t;
        let (th, sh) = (w.tanh(), 1.0 / w.cosh());
        let x = v2(c + r * th, r * sh);
        let u = v2(r * sh * sh, -r * sh * th) * (sigma * s);
        Ok((x, u))
    });
    let isometries = [
        ("translation", MobiusKind::Translation(1.0)),
        ("dilation", MobiusKind::Dilation(SQRT_2)),
        ("inversion", MobiusKind::Inversion),
    ]
    .into_iter()
    .map(|(label, kind)| LabeledMap {
        label: label.into(),
        map: mobius_isometries(kind).expect("valid group element"),
    })
    .collect();
    ModelSpace {
        name: "halfplane".into(),
        metric,
        known_k: Some(-1.0),
        geodesic_oracle: Some(oracle),
        isometries,
        sample_box: vec![(-2.0, 2.0), (0.3, 3.0)],
    }
}

/// `G = 4 I / (1 - |v|^2)^2` on the unit disc.
pub fn poincare_disc() -> ModelSpace {
    let space = ChartSpace::new("disc", 2, |v| v[0] * v[0] + v[1] * v[1] < 1.0).expect("dimension 2");
    let metric = MetricField::new(space, |v: &Point| {
        DMatrix::identity(2, 2) * (4.0 / (1.0 - v.norm_squared()).powi(2))
    });
    // Geodesics through the hyperboloid model p = (2u, 1 + |u|^2) / (1 - |u|^2).
    let oracle: GeodesicOracle = Arc::new(|v, xi, t| {
        let r2 = v.norm_squared();
        let d = 1.0 - r2;
        let dr2 = 2.0 * v.dot(xi);
        let p = [2.0 * v[0] / d, 2.0 * v[1] / d, (1.0 + r2) / d];
        let w = [
            2.0 * xi[0] / d + 2.0 * v[0] * dr2 / (d * d),
            2.0 * xi[1] / d + 2.0 * v[1] * dr2 / (d * d),
            2.0 * dr2 / (d * d),
        ];
        let s2 = w[0] * w[0] + w[1] * w[1] - w[2] * w[2];
        if s2 <= 0.0 {
            return Ok((v.clone(), xi.clone()));
        }
        let s = s2.sqrt();
        let (ch, sh) = ((s * t).cosh(), (s * t).sinh());
        let q: [f64; 3] = std::array::from_fn(|i| p[i] * ch + w[i] / s * sh);
        let dq: [f64; 3] = std::array::from_fn(|i| p[i] * s * sh + w[i] * ch);
        let den = 1.0 + q[2];
        let x = v2(q[0] / den, q[1] / den);
        let u = v2(
            (dq[0] * den - q[0] * dq[2]) / (den * den),
            (dq[1] * den - q[1] * dq[2]) / (den * den),
        );
        Ok((x, u))
    });
    ModelSpace {
        name: "disc".into(),
        metric,
        known_k: Some(-1.0),
        geodesic_oracle: Some(oracle),
        isometries: vec![LabeledMap {
            label: "rotation".into(),
            map: mobius_isometries(MobiusKind::DiscRotation(0.7)).expect("rotation"),
        }],
        sample_box: vec![(-0.6, 0.6); 2],
    }
}

/// `G = lambda(v)^2 I` on a planar domain.
pub fn conformal2d(
    name: impl Into<String>,
    space: ChartSpace,
    lambda: impl Fn(&Point) -> f64 + Send + Sync + 'static,
) -> Result<ModelSpace> {
    if space.dim() != 2 {
        return Err(GeomError::Dimension {
            expected: 2,
            got: space.dim(),
        });
    }
    let lambda = Arc::new(lambda);
    let l = lambda.clone();
    let metric = MetricField::from_field(MapField::from_fallible(space.clone(), 0, move |v: &Point| {
        let s = l(v);
        if !(s > 0.0 && s.is_finite()) {
            return Err(GeomError::NotPositiveDefinite {
                point: v.iter().copied().collect(),
                min_eigenvalue: s * s.abs(),
            });
        }
        Ok(DMatrix::identity(2, 2) * (s * s))
    }));
    Ok(ModelSpace {
        name: name.into(),
        metric,
        known_k: None,
        geodesic_oracle: None,
        isometries: Vec::new(),
        sample_box: vec![(-1.0, 1.0); 2],
    })
}

/// Points are samples `phi` of a function on `n` nodes, with
/// `g_phi(xi, eta) = sum_i xi_i eta_i w(phi_i) / n`.
pub fn function_space_toy(n: usize, w: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<ModelSpace> {
    let space = ChartSpace::full(format!("toy{n}"), n)?;
    let w = Arc::new(w);
    let wf = w.clone();
    let metric = MetricField::new(space, move |v: &Point| {
        DMatrix::from_diagonal(&DVector::from_iterator(n, v.iter().map(|&s| wf(s) / n as f64)))
    });
    Ok(ModelSpace {
        name: format!("toy{n}"),
        metric,
        known_k: None,
        geodesic_oracle: None,
        isometries: Vec::new(),
        sample_box: vec![(-1.0, 1.0); n],
    })
}

/// The toy with weight `e^s`. Each coordinate has its own 1-D metric, so
/// `psi_i = 2 sqrt(1/n) e^(phi_i / 2)` are flat coordinates and geodesics are
/// straight lines in `psi`.
pub fn function_space_toy_exp(n: usize) -> Result<ModelSpace> {
    let mut toy = function_space_toy(n, f64::exp)?;
    let k = 2.0 / (n as f64).sqrt();
    toy.geodesic_oracle = Some(Arc::new(move |v, xi, t| {
        let mut x = v.clone();
        let mut u = xi.clone();
        for i in 0..v.len() {
            let psi0 = k * (v[i] / 2.0).exp();
            let dpsi = k * (v[i] / 2.0).exp() * xi[i] / 2.0;
            let psi = psi0 + dpsi * t;
            if psi <= 0.0 {
                return Err(GeomError::Domain {
                    space: format!("toy{n}"),
                    point: vec![f64::NEG_INFINITY; v.len()],
                });
            }
            x[i] = 2.0 * (psi / k).ln();
            u[i] = 2.0 * dpsi / psi;
        }
        Ok((x, u))
    }));
    Ok(toy)
}

/// Adds `c` to every coordinate of the toy; rescales the exponential-weight metric by `e^c`.
pub fn toy_shift(n: usize, c: f64) -> Result<MapField<Vector>> {
    let space = ChartSpace::full(format!("toy{n}"), n)?;
    Ok(MapField::new(space, move |v: &Point| v.add_scalar(c)))
}

/// Gaussian curvature of a 2-D metric from `E, F, G` and their first and
/// second coordinate derivatives (Brioschi's determinant formula).
pub fn brioschi_curvature(metric: &MetricField, v: &Point) -> Result<f64> {
    if metric.dim() != 2 {
        return Err(GeomError::Dimension {
            expected: 2,
            got: metric.dim(),
        });
    }
    metric.space().check(v)?;
    let scale = v.amax().max(1.0);
    let h1 = f64::EPSILON.powf(1.0 / 3.0) * scale;
    let h2 = f64::EPSILON.powf(1.0 / 4.0) * scale;
    let coeffs = |du: f64, dv: f64| -> Result<[f64; 3]> {
        let g = metric.gram(&v2(v[0] + du, v[1] + dv))?;
        Ok([g[(0, 0)], g[(0, 1)], g[(1, 1)]])
    };
    let c = coeffs(0.0, 0.0)?;
    let (pu, mu) = (coeffs(h1, 0.0)?, coeffs(-h1, 0.0)?);
    let (pv, mv) = (coeffs(0.0, h1)?, coeffs(0.0, -h1)?);
    let d_u: [f64; 3] = std::array::from_fn(|i| (pu[i] - mu[i]) / (2.0 * h1));
    let d_v: [f64; 3] = std::array::from_fn(|i| (pv[i] - mv[i]) / (2.0 * h1));
    let (pu2, mu2) = (coeffs(h2, 0.0)?, coeffs(-h2, 0.0)?);
    let (pv2, mv2) = (coeffs(0.0, h2)?, coeffs(0.0, -h2)?);
    let g_uu = (pu2[2] - 2.0 * c[2] + mu2[2]) / (h2 * h2);
    let e_vv = (pv2[0] - 2.0 * c[0] + mv2[0]) / (h2 * h2);
    let f_uv = (coeffs(h2, h2)?[1] - coeffs(h2, -h2)?[1] - coeffs(-h2, h2)?[1] + coeffs(-h2, -h2)?[1]) / (4.0 * h2 * h2);

    let [e, f, g] = c;
    let [e_u, f_u, g_u] = d_u;
    let [e_v, f_v, g_v] = d_v;
    let m1 = Matrix3::new(
        -0.5 * e_vv + f_uv - 0.5 * g_uu,
        0.5 * e_u,
        f_u - 0.5 * e_v,
        f_v - 0.5 * g_u,
        e,
        f,
        0.5 * g_v,
        f,
        g,
    );
    let m2 = Matrix3::new(0.0, 0.5 * e_v, 0.5 * g_u, 0.5 * e_v, e, f, 0.5 * g_u, f, g);
    let w = e * g - f * f;
    Ok((m1.determinant() - m2.determinant()) / (w * w))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MobiusKind {
    /// `z -> z + b`
    Translation(f64),
    /// `z -> a^2 z`, i.e. `a z / (1/a)`
    Dilation(f64),
    /// `z -> -1 / z`
    Inversion,
    /// `z -> (a z + b) / (c z + d)` with `ad - bc = 1`
    General { a: f64, b: f64, c: f64, d: f64 },
    /// Rotation of the Poincare disc by an angle.
    DiscRotation(f64),
}

/// The chart map of a Mobius isometry of the half-plane, or a rotation of the disc.
pub fn mobius_isometries(kind: MobiusKind) -> Result<MapField<Vector>> {
    let (a, b, c, d) = match kind {
        MobiusKind::Translation(b) => (1.0, b, 0.0, 1.0),
        MobiusKind::Dilation(a) => {
            if !(a.is_finite() && a != 0.0) {
                return Err(GeomError::argument("dilation needs a nonzero finite factor"));
            }
            (a, 0.0, 0.0, 1.0 / a)
        }
        MobiusKind::Inversion => (0.0, -1.0, 1.0, 0.0),
        MobiusKind::General { a, b, c, d } => (a, b, c, d),
        MobiusKind::DiscRotation(angle) => {
            let space = ChartSpace::new("disc", 2, |v| v[0] * v[0] + v[1] * v[1] < 1.0)?;
            let (cs, sn) = (angle.cos(), angle.sin());
            return Ok(MapField::new(space, move |v: &Point| {
                v2(cs * v[0] - sn * v[1], sn * v[0] + cs * v[1])
            }));
        }
    };
    if ((a * d - b * c) - 1.0).abs() > 1e-12 {
        return Err(GeomError::argument(format!(
            "Mobius coefficients must satisfy ad - bc = 1, got {}",
            a * d - b * c
        )));
    }
    let space = ChartSpace::new("halfplane", 2, |v| v[1] > 0.0)?;
    let sp = space.clone();
    Ok(MapField::from_fallible(space, 0, move |v: &Point| {
        let (x, y) = (v[0], v[1]);
        let (nr, ni) = (a * x + b, a * y);
        let (dr, di) = (c * x + d, c * y);
        let den = dr * dr + di * di;
        if den == 0.0 {
            return Err(sp.domain_error(v));
        }
        Ok(v2((nr * dr + ni * di) / den, (ni * dr - nr * di) / den))
    }))
}

/// Names accepted by [`registry`].
pub fn registry_names() -> Vec<&'static str> {
    vec!["euclidean2", "euclidean3", "euclidean<n>", "sphere", "halfplane", "disc", "toy<n>"]
}

/// Looks up a model space by name.
pub fn registry(name: &str) -> Result<ModelSpace> {
    let unknown = || {
        GeomError::argument(format!(
            "unknown space `{name}`; known spaces: {}",
            registry_names().join(", ")
        ))
    };
    let count = |rest: &str| -> Result<usize> {
        match rest.parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(unknown()),
        }
    };
    match name {
        "sphere" => Ok(sphere_stereographic()),
        "halfplane" => Ok(hyperbolic_halfplane()),
        "disc" => Ok(poincare_disc()),
        _ => {
            if let Some(rest) = name.strip_prefix("euclidean") {
                euclidean(count(rest)?)
            } else if let Some(rest) = name.strip_prefix("toy") {
                function_space_toy_exp(count(rest)?)
            } else {
                Err(unknown())
            }
        }
    }
}
