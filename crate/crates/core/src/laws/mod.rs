//! Laws of the drawdown time `τ = inf{t : X_t = M_t − δ}` and of `M_τ`.

pub mod excursion;
pub mod hitting;
pub mod inversion;
pub mod tail;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::quad::QuadSettings;
use crate::scale;
use crate::sturm::OdeSettings;

pub use excursion::{b_factor, c_hat, excursion_rates, excursion_quotients, nu, nu_rate};
pub use hitting::{exit_probability, exit_transform, hitting_laplace, HitMethod, HitOptions, HitResult};
pub use inversion::{stehfest_coefficients, tau_cdf, TauCdf};
pub use tail::{max_density, max_tail, tail_curve, TailCurve};
pub use transform::{conditional_laplace, joint_transform, run_up_transform, TransformResult};

pub(crate) const MODULE: &str = "drawdown-laws";

pub const DEFAULT_TOL: f64 = 1e-10;

fn default_tol() -> f64 {
    DEFAULT_TOL
}

/// Start point, drawdown size and transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawdownQuery {
    pub x: f64,
    pub delta: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl DrawdownQuery {
    pub fn new(x: f64, delta: f64) -> Self {
        Self {
            x,
            delta,
            alpha: 0.0,
            beta: 0.0,
            tol: DEFAULT_TOL,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn with_beta(self, beta: f64) -> Self {
        Self { beta, ..self }
    }

    pub fn with_tol(self, tol: f64) -> Self {
        Self { tol, ..self }
    }

    pub fn validate(&self, model: &DiffusionModel) -> Result<()> {
        scale::validate_query(model, self.x, self.delta)?;
        for (what, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(MODULE, "query", what, format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(self.tol > 0.0 && self.tol <= 1e-3) {
            return Err(Error::invalid(MODULE, "query", "tol", format!("must lie in (0, 1e-3], got {}", self.tol)));
        }
        Ok(())
    }

    pub(crate) fn quad_settings(&self) -> QuadSettings {
        QuadSettings {
            abs_tol: self.tol,
            rel_tol: self.tol,
            max_subdivisions: 2000,
        }
    }

    pub(crate) fn basis_settings(&self) -> OdeSettings {
        OdeSettings::with_tol(self.tol.clamp(1e-13, 1e-10))
    }
}

pub(crate) fn check_level(model: &DiffusionModel, op: &'static str, query: &DrawdownQuery, y: f64) -> Result<()> {
    if !(y >= query.x) {
        return Err(Error::domain(MODULE, op, y, format!("level must be at least the start point {}", query.x)));
    }
    if !model.is_interior(y) {
        return Err(Error::domain(MODULE, op, y, format!("level outside ]{}, {}[", model.lower(), model.upper())));
    }
    Ok(())
}
