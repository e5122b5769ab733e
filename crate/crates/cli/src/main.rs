//! `chartgeom`: run geometry experiments on gallery spaces and emit CSV or JSON.
//!
//! Exit status is 0 on success, 2 for invalid arguments, 3 when a computation
//! leaves the chart domain or fails to converge (partial results are still
//! written and flagged), and 1 for I/O failures.

mod commands;
mod output;
mod space;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use chartgeom::GeomError;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::output::Format;

#[derive(Parser, Debug)]
#[command(name = "chartgeom", version, about = "Riemannian geometry experiments in a single chart")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value = "csv", global = true)]
    format: Format,

    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sectional curvature of a plane, with the Brioschi value on 2-D spaces.
    Curvature(commands::CurvatureArgs),
    /// Integrate a geodesic from an initial point and velocity.
    Geodesic(commands::GeodesicArgs),
    /// Geodesic circle lengths and the curvature fitted from them.
    Circle(commands::CircleArgs),
    /// Minimize the discrete energy between two points.
    #[command(name = "energy-min")]
    EnergyMin(commands::EnergyMinArgs),
}

/// Options shared by every command.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SpaceArg {
    /// Gallery name (euclidean<n>, sphere, halfplane, disc, toy<n>) or conformal:<lambda(x, y)>.
    #[arg(long)]
    pub space: String,
}

/// Comma-separated coordinates such as `0,1` or `-1.5,2e-3`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}")))
            .collect::<Result<Vec<_>, _>>()
            .and_then(|v| {
                if v.iter().all(|x| x.is_finite()) {
                    Ok(Coords(v))
                } else {
                    Err("coordinates must be finite".into())
                }
            })
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Geom(GeomError),
    Io(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Geom(GeomError::Argument(_) | GeomError::Dimension { .. }) => 2,
            CliError::Geom(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Geom(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "output failed: {e}"),
        }
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        CliError::Geom(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (report, failure) = match &cli.command {
        Command::Curvature(a) => commands::curvature(a)?,
        Command::Geodesic(a) => commands::geodesic(a)?,
        Command::Circle(a) => commands::circle(a)?,
        Command::EnergyMin(a) => commands::energy_min(a)?,
    };
    report.write(cli.format, cli.out.as_deref())?;
    match failure {
        Some(e) => Err(CliError::Geom(e)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
