use std::f64::consts::PI;

use chartgeom::gallery::brioschi_curvature;
use chartgeom::geodesic::{discrete_geodesic_residual, integrate_geodesic, minimize_energy, speed_drift, EnergyOptions};
use chartgeom::jacobi::{curvature_from_circle_lengths, geodesic_circle_length, orthonormal_frame, FanOptions};
use chartgeom::{Curve, GeomError, ModelSpace, Point, Vector};
use clap::Args;
use nalgebra::DVector;
use serde::Serialize;

use crate::output::{Cell, Report, Status};
use crate::{space, CliError, Coords, SpaceArg};

type Outcome = Result<(Report, Option<GeomError>), CliError>;

#[derive(Args, Debug, Serialize)]
pub struct CurvatureArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub space: SpaceArg,
    /// Base point, e.g. `0,1`.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Coords,
    /// Plane as two basis names (`e1,e2`) or two vectors (`1,0;0,1`).
    #[arg(long, default_value = "e1,e2", allow_hyphen_values = true)]
    pub plane: String,
}

#[derive(Args, Debug, Serialize)]
pub struct GeodesicArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub space: SpaceArg,
    /// Initial point.
    #[arg(long, allow_hyphen_values = true)]
    pub v0: Coords,
    /// Initial velocity.
    #[arg(long, allow_hyphen_values = true)]
    pub xi0: Coords,
    /// Final time.
    #[arg(long = "t", default_value_t = 1.0, allow_hyphen_values = true)]
    pub t: f64,
    /// Step size.
    #[arg(long, default_value_t = 1e-3, allow_hyphen_values = true)]
    pub dt: f64,
    /// Emit every k-th step (the final step is always emitted).
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct CircleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub space: SpaceArg,
    /// Center of the geodesic circles.
    #[arg(long, allow_hyphen_values = true)]
    pub center: Coords,
    /// Radii, e.g. `0.05,0.1,0.15,0.2`.
    #[arg(long, default_value = "0.05,0.1,0.15,0.2")]
    pub radii: Coords,
    /// Plane of the circles; orthonormalized at the center. Defaults to the first two coordinate directions.
    #[arg(long, allow_hyphen_values = true)]
    pub plane: Option<String>,
    /// Angular samples.
    #[arg(long, default_value_t = 256)]
    pub n_theta: usize,
    /// Step size along each ray.
    #[arg(long, default_value_t = 1e-3, allow_hyphen_values = true)]
    pub dt: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct EnergyMinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub space: SpaceArg,
    /// Start point.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Coords,
    /// End point.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Coords,
    /// Number of segments.
    #[arg(long = "n", default_value_t = 64)]
    pub n: usize,
    /// Gradient sup-norm tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
}

fn params(args: &impl Serialize) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn point_in(model: &ModelSpace, c: &Coords, what: &str) -> Result<Point, CliError> {
    let v = DVector::from_vec(c.0.clone());
    if v.len() != model.dim() {
        return Err(CliError::Usage(format!(
            "{what} has {} coordinates but `{}` is {}-dimensional",
            v.len(),
            model.name,
            model.dim()
        )));
    }
    if !model.space().contains(&v) {
        return Err(CliError::Usage(format!("{what} {:?} lies outside the domain of `{}`", c.0, model.name)));
    }
    Ok(v)
}

fn vector_of(model: &ModelSpace, c: &Coords, what: &str) -> Result<Vector, CliError> {
    if c.0.len() != model.dim() {
        return Err(CliError::Usage(format!(
            "{what} has {} components but `{}` is {}-dimensional",
            c.0.len(),
            model.name,
            model.dim()
        )));
    }
    Ok(DVector::from_vec(c.0.clone()))
}

/// `e1,e2` style basis names, or two `;`-separated coordinate lists.
fn parse_plane(s: &str, dim: usize) -> Result<(Vector, Vector), CliError> {
    let bad = |why: String| CliError::Usage(format!("bad plane `{s}`: {why}"));
    let vectors: Vec<Vector> = if s.contains(';') {
        s.split(';')
            .map(|part| part.parse::<Coords>().map(|c| DVector::from_vec(c.0)).map_err(bad))
            .collect::<Result<_, _>>()?
    } else {
        s.split(',')
            .map(|tok| {
                let k: usize = tok
                    .trim()
                    .strip_prefix('e')
                    .and_then(|n| n.parse().ok())
                    .ok_or_else(|| bad(format!("`{tok}` is not a basis name like e1")))?;
                if k == 0 || k > dim {
                    return Err(bad(format!("basis index {k} outside 1..={dim}")));
                }
                let mut e = DVector::zeros(dim);
                e[k - 1] = 1.0;
                Ok(e)
            })
            .collect::<Result<_, _>>()?
    };
    match <[Vector; 2]>::try_from(vectors) {
        Ok([a, b]) if a.len() == dim && b.len() == dim => Ok((a, b)),
        Ok(_) => Err(bad(format!("vectors must have {dim} components"))),
        Err(v) => Err(bad(format!("expected two vectors, got {}", v.len()))),
    }
}

pub fn curvature(args: &CurvatureArgs) -> Outcome {
    let model = space::resolve(&args.space.space)?;
    let v = point_in(&model, &args.point, "point")?;
    let (xi, eta) = parse_plane(&args.plane, model.dim())?;
    let k_tensor = model.metric.sectional_curvature(&v, &xi, &eta)?;
    let k_brioschi = if model.dim() == 2 {
        Some(brioschi_curvature(&model.metric, &v)?)
    } else {
        None
    };
    let reference = k_brioschi.or(model.known_k);
    let defect = reference.map(|k| (k_tensor - k).abs());

    let columns = ["k_tensor", "k_brioschi", "k_known", "defect"].map(String::from).to_vec();
    let mut report = Report::new("curvature", params(args), columns);
    report.push(vec![k_tensor.into(), k_brioschi.into(), model.known_k.into(), defect.into()]);
    Ok((report, None))
}

fn curve_columns(dim: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=dim).map(|i| format!("x{i}")));
    cols.extend((1..=dim).map(|i| format!("u{i}")));
    cols.push("speed".into());
    cols
}

fn push_curve(report: &mut Report, model: &ModelSpace, curve: &Curve, every: usize) -> Result<(), CliError> {
    let last = curve.len() - 1;
    for i in (0..curve.len()).filter(|i| i % every == 0 || *i == last) {
        let (x, u) = (&curve.points()[i], &curve.velocities()[i]);
        let mut row: Vec<Cell> = vec![curve.times()[i].into()];
        row.extend(x.iter().map(|&c| Cell::from(c)));
        row.extend(u.iter().map(|&c| Cell::from(c)));
        row.push(model.metric.norm(x, u)?.into());
        report.push(row);
    }
    Ok(())
}

pub fn geodesic(args: &GeodesicArgs) -> Outcome {
    let model = space::resolve(&args.space.space)?;
    let v0 = point_in(&model, &args.v0, "v0")?;
    let xi0 = vector_of(&model, &args.xi0, "xi0")?;
    if !(args.dt > 0.0 && args.dt.is_finite()) {
        return Err(CliError::Usage(format!("dt must be positive, got {}", args.dt)));
    }
    if !(args.t > 0.0 && args.t.is_finite()) {
        return Err(CliError::Usage(format!("t must be positive, got {}", args.t)));
    }
    if args.every == 0 {
        return Err(CliError::Usage("every must be at least 1".into()));
    }

    let mut report = Report::new("geodesic", params(args), curve_columns(model.dim()));
    match integrate_geodesic(&model.metric.levi_civita(), &v0, &xi0, 0.0, args.t, args.dt) {
        Ok(curve) => {
            push_curve(&mut report, &model, &curve, args.every)?;
            report.note("speed_drift", speed_drift(&model.metric, &curve)?);
            if let Ok((x, _)) = model.oracle_geodesic(&v0, &xi0, curve.end()) {
                report.note("oracle_error", (curve.last() - x).amax());
            }
            Ok((report, None))
        }
        Err(GeomError::DomainExit { t, last_point, partial }) => {
            push_curve(&mut report, &model, &partial, args.every)?;
            report.status = Status::DomainExit;
            report.note("exit_time", t);
            let err = GeomError::DomainExit { t, last_point, partial };
            Ok((report, Some(err)))
        }
        Err(e) => Err(e.into()),
    }
}

pub fn circle(args: &CircleArgs) -> Outcome {
    let model = space::resolve(&args.space.space)?;
    let v = point_in(&model, &args.center, "center")?;
    if args.radii.0.is_empty() || args.radii.0.iter().any(|r| !(*r > 0.0)) {
        return Err(CliError::Usage("radii must be positive".into()));
    }
    if !(args.dt > 0.0 && args.dt.is_finite()) {
        return Err(CliError::Usage(format!("dt must be positive, got {}", args.dt)));
    }
    if args.n_theta < 3 {
        return Err(CliError::Usage("n-theta must be at least 3".into()));
    }
    if model.dim() < 2 {
        return Err(CliError::Usage("geodesic circles need at least two dimensions".into()));
    }
    let (xi, eta) = match &args.plane {
        Some(p) => {
            let (a, b) = parse_plane(p, model.dim())?;
            model.metric.orthonormalize(&v, &a, &b)?
        }
        None => {
            let frame = orthonormal_frame(&model.metric, &v)?;
            (frame[0].clone(), frame[1].clone())
        }
    };
    let k_tensor = model.metric.sectional_curvature(&v, &xi, &eta)?;
    let opts = FanOptions {
        n_theta: args.n_theta,
        dt: args.dt,
        ..FanOptions::default()
    };

    let mut done: Vec<(f64, f64)> = Vec::new();
    let mut failure = None;
    for &r in &args.radii.0 {
        match geodesic_circle_length(&model.metric, &v, &xi, &eta, r, &opts) {
            Ok(l) => done.push((r, l)),
            Err(e) if e.is_domain() => {
                failure = Some((r, e));
                break;
            }
            Err(e) => return Err(e.into()),
        }
    }
    let k_fit = if done.len() >= 2 {
        let (radii, lengths): (Vec<f64>, Vec<f64>) = done.iter().copied().unzip();
        Some(curvature_from_circle_lengths(&radii, &lengths)?)
    } else {
        None
    };

    let columns = ["r", "length", "defect", "k_tensor", "k_fit", "status"].map(String::from).to_vec();
    let mut report = Report::new("circle", params(args), columns);
    for &(r, l) in &done {
        let defect = (l - 2.0 * PI * r * (1.0 - k_tensor * r * r / 6.0)).abs();
        report.push(vec![r.into(), l.into(), defect.into(), k_tensor.into(), k_fit.into(), "ok".into()]);
    }
    report.note("k_tensor", k_tensor);
    report.note("k_fit", k_fit);
    if let Some((r, e)) = failure {
        report.push(vec![r.into(), Cell::Empty, Cell::Empty, k_tensor.into(), k_fit.into(), "domain_exit".into()]);
        report.status = Status::DomainExit;
        report.note("failed_radius", r);
        return Ok((report, Some(e)));
    }
    Ok((report, None))
}

pub fn energy_min(args: &EnergyMinArgs) -> Outcome {
    let model = space::resolve(&args.space.space)?;
    let a = point_in(&model, &args.a, "a")?;
    let b = point_in(&model, &args.b, "b")?;
    if args.n < 2 {
        return Err(CliError::Usage("n must be at least 2".into()));
    }
    if !(args.tol > 0.0) {
        return Err(CliError::Usage("tol must be positive".into()));
    }
    let init = Curve::sample(0.0, 1.0, args.n, |t| &a + (&b - &a) * t)?;
    if init.points().iter().any(|p| !model.space().contains(p)) {
        return Err(CliError::Usage("the chord from a to b leaves the domain; no admissible initial curve".into()));
    }
    let opts = EnergyOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };

    let dim = model.dim();
    let mut columns = ["record", "index", "energy", "gradient_norm", "t"].map(String::from).to_vec();
    columns.extend((1..=dim).map(|i| format!("x{i}")));
    let mut report = Report::new("energy-min", params(args), columns);
    let blank = || vec![Cell::Empty; dim];

    let (curve, failure) = match minimize_energy(&model.metric, &a, &b, args.n, &init, &opts) {
        Ok(res) => {
            for rec in &res.history {
                let mut row = vec!["iterate".into(), rec.iteration.into(), rec.energy.into(), rec.gradient_norm.into(), Cell::Empty];
                row.extend(blank());
                report.push(row);
            }
            report.note("iterations", res.history.last().map_or(0, |r| r.iteration));
            report.note("energy", res.energy);
            report.note("gradient_norm", res.gradient_norm);
            (res.curve, None)
        }
        Err(GeomError::NoConvergence { iterations, residual, best }) => {
            report.status = Status::NoConvergence;
            report.note("iterations", iterations);
            report.note("gradient_norm", residual);
            let err = GeomError::NoConvergence {
                iterations,
                residual,
                best: None,
            };
            match best {
                Some(c) => (*c, Some(err)),
                None => return Ok((report, Some(err))),
            }
        }
        Err(e) => return Err(e.into()),
    };
    for (i, (t, x)) in curve.times().iter().zip(curve.points()).enumerate() {
        let mut row = vec!["node".into(), i.into(), Cell::Empty, Cell::Empty, (*t).into()];
        row.extend(x.iter().map(|&c| Cell::from(c)));
        report.push(row);
    }
    report.note("discrete_residual", discrete_geodesic_residual(&model.metric, &curve)?);
    Ok((report, failure))
}
