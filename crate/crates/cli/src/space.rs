//! Resolution of `--space` values: gallery names or inline conformal factors.

use std::sync::Arc;

use chartgeom::gallery::{self, conformal2d};
use chartgeom::{ChartSpace, ModelSpace, Point};
use fasteval::{Compiler, Evaler};

use crate::CliError;

pub const CONFORMAL_PREFIX: &str = "conformal:";

/// A compiled expression in the chart coordinates `x`, `y`.
struct Factor {
    slab: fasteval::Slab,
    instr: fasteval::Instruction,
}

impl Factor {
    fn parse(src: &str) -> Result<Self, CliError> {
        let mut slab = fasteval::Slab::new();
        let expr = fasteval::Parser::new()
            .parse(src, &mut slab.ps)
            .map_err(|e| CliError::Usage(format!("cannot parse conformal factor `{src}`: {e}")))?;
        let instr = expr.from(&slab.ps).compile(&slab.ps, &mut slab.cs);
        let factor = Self { slab, instr };
        // Surface unknown names now rather than at the first metric evaluation.
        factor
            .try_eval(0.25, 0.5)
            .map_err(|e| CliError::Usage(format!("cannot evaluate conformal factor `{src}`: {e}")))?;
        Ok(factor)
    }

    fn try_eval(&self, x: f64, y: f64) -> Result<f64, fasteval::Error> {
        let mut ns = |name: &str, args: Vec<f64>| -> Option<f64> {
            match (name, args.as_slice()) {
                ("x", []) => Some(x),
                ("y", []) => Some(y),
                ("exp", [a]) => Some(a.exp()),
                ("sqrt", [a]) => Some(a.sqrt()),
                _ => None,
            }
        };
        self.instr.eval(&self.slab, &mut ns)
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.try_eval(x, y).unwrap_or(f64::NAN)
    }
}

/// Looks up a gallery model, or builds `G = lambda(x, y)^2 I` from
/// `conformal:<expression>`. The conformal domain is where `lambda` is
/// positive and finite.
pub fn resolve(name: &str) -> Result<ModelSpace, CliError> {
    let Some(src) = name.strip_prefix(CONFORMAL_PREFIX) else {
        return gallery::registry(name).map_err(|e| {
            CliError::Usage(format!("{e}; or {CONFORMAL_PREFIX}<expression in x, y>"))
        });
    };
    let factor = Arc::new(Factor::parse(src)?);
    let f = factor.clone();
    let space = ChartSpace::new(name, 2, move |v: &[f64]| {
        let s = f.eval(v[0], v[1]);
        s > 0.0 && s.is_finite()
    })
    .map_err(CliError::Geom)?;
    conformal2d(name, space, move |v: &Point| factor.eval(v[0], v[1])).map_err(CliError::Geom)
}
