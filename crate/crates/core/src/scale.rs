//! Scale function, scale density and speed density of a diffusion.
//!
//! The scale density is `S′(x) = exp(−∫_{r}^{x} 2μ/σ²)` with `r` the model's
//! reference point, so it does not depend on where `S` itself is anchored.
//! Every downstream formula uses only scale differences and products
//! `(…)·dS`, which makes the anchor unobservable.

use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::quad::{self, QuadSettings};

const MODULE: &str = "diffusion-core";

fn inner_settings() -> QuadSettings {
    QuadSettings {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        max_subdivisions: 500,
    }
}

fn require_interior(model: &DiffusionModel, op: &'static str, x: f64) -> Result<()> {
    if model.is_interior(x) {
        Ok(())
    } else {
        Err(Error::domain(
            MODULE,
            op,
            x,
            format!("not inside ]{}, {}[", model.lower(), model.upper()),
        ))
    }
}

/// `∫_{from}^{to} 2μ/σ²`, so that `S′(to) = S′(from)·exp(−result)`.
pub fn log_density_drop(model: &DiffusionModel, from: f64, to: f64) -> Result<f64> {
    quad::integrate_plain(|u| model.scale_log_rate(u), from, to, inner_settings())
        .map(|r| r.value)
        .map_err(|e| e.within(MODULE, "scale_density"))
}

/// `S′(x)`, normalised to one at the model's reference point.
pub fn scale_density(model: &DiffusionModel, x: f64) -> Result<f64> {
    require_interior(model, "scale_density", x)?;
    let drop = log_density_drop(model, model.scale_ref(), x)?;
    let v = (-drop).exp();
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            module: MODULE,
            op: "scale_density",
            at: x,
            value: v,
        })
    }
}

/// `(S(hi) − S(lo)) / S′(hi)` computed without forming either factor,
/// so it stays representable where `S′` itself would overflow.
pub fn scale_gap_over_density(model: &DiffusionModel, lo: f64, hi: f64) -> Result<f64> {
    require_interior(model, "scale", lo)?;
    require_interior(model, "scale", hi)?;
    let settings = QuadSettings::default();
    quad::integrate(
        |u| {
            let drop = log_density_drop(model, u, hi)?;
            Ok(drop.exp())
        },
        lo,
        hi,
        settings,
    )
    .map(|r| r.value)
    .map_err(|e| e.within(MODULE, "scale"))
}

/// `S(x)` anchored at `anchor` (`S(anchor) = 0`).
pub fn scale(model: &DiffusionModel, anchor: f64, x: f64) -> Result<f64> {
    ScaleMap::new(model, anchor)?.eval(x)
}

/// Validates a drawdown query: `x` interior, `δ > 0` and `x − δ` strictly
/// above the lower endpoint so every target level `z − δ`, `z ≥ x`, lies in
/// the state space.
pub fn validate_query(model: &DiffusionModel, x: f64, delta: f64) -> Result<()> {
    if !model.is_interior(x) {
        return Err(Error::domain(
            MODULE,
            "validate_query",
            x,
            format!("start point must lie inside ]{}, {}[", model.lower(), model.upper()),
        ));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain(MODULE, "validate_query", delta, "drawdown size must be positive and finite"));
    }
    if x - delta <= model.lower() {
        return Err(Error::domain(
            MODULE,
            "validate_query",
            x - delta,
            format!(
                "drawdown level x − δ must lie strictly above the lower endpoint {}",
                model.lower()
            ),
        ));
    }
    Ok(())
}

/// Scale function anchored at an interior point.
#[derive(Debug, Clone)]
pub struct ScaleMap<'a> {
    model: &'a DiffusionModel,
    anchor: f64,
    settings: QuadSettings,
}

impl<'a> ScaleMap<'a> {
    pub fn new(model: &'a DiffusionModel, anchor: f64) -> Result<Self> {
        require_interior(model, "scale", anchor)?;
        Ok(Self {
            model,
            anchor,
            settings: QuadSettings::default(),
        })
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        scale_density(self.model, x)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        require_interior(self.model, "scale", x)?;
        if x == self.anchor {
            return Ok(0.0);
        }
        // S′(u) = S′(anchor)·exp(−∫_anchor^u 2μ/σ²) keeps the inner
        // integrals short when the reference point is far away.
        let base = scale_density(self.model, self.anchor)?;
        let model = self.model;
        let anchor = self.anchor;
        quad::integrate(
            |u| Ok(base * (-log_density_drop(model, anchor, u)?).exp()),
            anchor,
            x,
            self.settings,
        )
        .map(|r| r.value)
        .map_err(|e| e.within(MODULE, "scale"))
    }

    /// `S(A+)` relative to the anchor; `−∞` when the scale is unbounded below.
    pub fn at_lower(&self) -> Result<f64> {
        if let Some(v) = self.model.closed_form_scale_at_lower(self.anchor) {
            return Ok(v);
        }
        let a = self.model.lower();
        if a.is_finite() {
            // Integrate towards A on a geometric sequence of points.
            let mut total = 0.0;
            let mut hi = self.anchor;
            for k in 1..=60 {
                let lo = a + (self.anchor - a) * 0.5f64.powi(k);
                let piece = ScaleMap::new(self.model, hi)?.eval(lo)?;
                total += piece;
                hi = lo;
                if piece.abs() <= 1e-12 * total.abs().max(1e-300) {
                    return Ok(total);
                }
                if !total.is_finite() || total < -1e15 {
                    return Ok(f64::NEG_INFINITY);
                }
            }
            Ok(f64::NEG_INFINITY)
        } else {
            let mut prev = 0.0;
            for k in 0..60 {
                let lo = self.anchor - 2f64.powi(k);
                if !self.model.is_interior(lo) {
                    break;
                }
                let v = self.eval(lo)?;
                if !v.is_finite() || v < -1e15 {
                    return Ok(f64::NEG_INFINITY);
                }
                if k > 3 && (v - prev).abs() <= 1e-12 * v.abs() {
                    return Ok(v);
                }
                prev = v;
            }
            Ok(f64::NEG_INFINITY)
        }
    }
}

/// Speed density `m′(x) = 2 / (σ²(x) S′(x))`.
#[derive(Debug, Clone, Copy)]
pub struct SpeedDensity<'a> {
    model: &'a DiffusionModel,
}

impl<'a> SpeedDensity<'a> {
    pub fn new(model: &'a DiffusionModel) -> Self {
        Self { model }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let sd = scale_density(self.model, x)?;
        Ok(2.0 / (self.model.diffusion_sq(x) * sd))
    }
}
