//! Hitting-time and two-sided exit transforms.

use serde::Serialize;

use super::MODULE;
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::scale::ScaleMap;
use crate::sturm::{self, OdeSettings};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HitMethod {
    ClosedForm,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HitOptions {
    /// Box `[lo, hi]` standing in for the state space when no closed form
    /// is available. The far side of the box is treated as absorbing.
    pub truncation: Option<(f64, f64)>,
    pub settings: OdeSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitResult {
    pub value: f64,
    pub method: HitMethod,
    /// Change in value when the box is doubled away from the target.
    pub truncation_sensitivity: Option<f64>,
}

fn interior(model: &DiffusionModel, op: &'static str, x: f64) -> Result<()> {
    if model.is_interior(x) {
        Ok(())
    } else {
        Err(Error::domain(MODULE, op, x, format!("outside ]{}, {}[", model.lower(), model.upper())))
    }
}

/// `E^x[e^{−αT_y}]`.
pub fn hitting_laplace(model: &DiffusionModel, x: f64, y: f64, alpha: f64, opts: &HitOptions) -> Result<HitResult> {
    interior(model, "hitting_laplace", x)?;
    interior(model, "hitting_laplace", y)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::domain(MODULE, "hitting_laplace", alpha, "alpha must be finite and non-negative"));
    }
    if x == y {
        return Ok(HitResult {
            value: 1.0,
            method: HitMethod::ClosedForm,
            truncation_sensitivity: None,
        });
    }
    if opts.truncation.is_none() {
        if let Some(v) = model.closed_form_hitting(x, y, alpha) {
            return Ok(HitResult {
                value: v,
                method: HitMethod::ClosedForm,
                truncation_sensitivity: None,
            });
        }
    }
    let Some((lo, hi)) = opts.truncation else {
        return Err(Error::Unsupported {
            module: MODULE,
            op: "hitting_laplace",
            reason: format!(
                "no closed-form eigenfunctions for model '{}'; supply a truncation box",
                model.id()
            ),
        });
    };
    if !(lo < x.min(y) && hi > x.max(y)) {
        return Err(Error::invalid(
            MODULE,
            "hitting_laplace",
            "truncation",
            format!("box [{lo}, {hi}] must strictly contain both {x} and {y}"),
        ));
    }
    let value = boxed_hit(model, x, y, alpha, lo, hi, &opts.settings)?;
    let (lo2, hi2) = enlarge(model, x, y, lo, hi);
    let wider = boxed_hit(model, x, y, alpha, lo2, hi2, &opts.settings)?;
    Ok(HitResult {
        value,
        method: HitMethod::Truncated,
        truncation_sensitivity: Some((wider - value).abs()),
    })
}

fn enlarge(model: &DiffusionModel, x: f64, y: f64, lo: f64, hi: f64) -> (f64, f64) {
    let width = hi - lo;
    if y > x {
        let mut lo2 = lo - width;
        if !model.is_interior(lo2) {
            lo2 = 0.5 * (lo + model.lower());
        }
        (lo2, hi)
    } else {
        let mut hi2 = hi + width;
        if !model.is_interior(hi2) {
            hi2 = 0.5 * (hi + model.upper());
        }
        (lo, hi2)
    }
}

fn boxed_hit(model: &DiffusionModel, x: f64, y: f64, alpha: f64, lo: f64, hi: f64, s: &OdeSettings) -> Result<f64> {
    if alpha == 0.0 {
        return if y > x { exit_probability(model, x, y, lo) } else { exit_probability(model, x, y, hi) };
    }
    if y > x {
        upper_exit(model, x, lo, y, alpha, s)
    } else {
        lower_exit(model, x, y, hi, alpha, s)
    }
}

// E^x[e^{−αT_bnd}; T_bnd < T_a] = u(x)/u(bnd) with u(a) = 0.
fn upper_exit(model: &DiffusionModel, x: f64, a: f64, bnd: f64, alpha: f64, s: &OdeSettings) -> Result<f64> {
    let basis = sturm::solve_local_basis(model, alpha, a, bnd, s)?;
    let (ux, _) = basis.working_values(x)?;
    let (ub, _) = basis.working_values(bnd)?;
    Ok(ux / ub)
}

// E^x[e^{−αT_a}; T_a < T_bnd] = h(x)/h(a) with h(bnd) = 0. On the working
// pair, h = û(bnd)q − q(bnd)û and h(a) = û(bnd).
fn lower_exit(model: &DiffusionModel, x: f64, a: f64, bnd: f64, alpha: f64, s: &OdeSettings) -> Result<f64> {
    let basis = sturm::solve_local_basis(model, alpha, a, bnd, s)?;
    let (ux, qx) = basis.working_values(x)?;
    let (ub, qb) = basis.working_values(bnd)?;
    if !(ub.is_finite() && ub > 0.0) {
        return Err(Error::DegenerateBasis {
            module: MODULE,
            op: "exit_transform",
            at: bnd,
            denominator: ub,
        });
    }
    Ok((qx - qb * (ux / ub)).clamp(0.0, 1.0))
}

/// `E^x[e^{−αT_a}; T_a < T_bnd]` for `a ≤ x ≤ bnd`.
pub fn exit_transform(model: &DiffusionModel, x: f64, a: f64, bnd: f64, alpha: f64) -> Result<f64> {
    check_exit(model, "exit_transform", x, a, bnd)?;
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::domain(MODULE, "exit_transform", alpha, "alpha must be finite and non-negative"));
    }
    if x == a {
        return Ok(1.0);
    }
    if x == bnd {
        return Ok(0.0);
    }
    if alpha == 0.0 {
        return exit_probability(model, x, a, bnd);
    }
    lower_exit(model, x, a, bnd, alpha, &OdeSettings::default())
}

/// `P^x(T_a < T_bnd) = (S(bnd) − S(x)) / (S(bnd) − S(a))`.
///
/// Also accepts `a > bnd`, in which case it is `P^x(T_a < T_bnd)` for an
/// upper target `a`.
pub fn exit_probability(model: &DiffusionModel, x: f64, a: f64, bnd: f64) -> Result<f64> {
    if a > bnd {
        return exit_probability(model, x, bnd, a).map(|p| 1.0 - p);
    }
    check_exit(model, "exit_probability", x, a, bnd)?;
    if x == a {
        return Ok(1.0);
    }
    if x == bnd {
        return Ok(0.0);
    }
    let (num, den) = match (model.closed_form_scale(bnd, x), model.closed_form_scale(bnd, a)) {
        (Some(n), Some(d)) => (n, d),
        _ => {
            let s = ScaleMap::new(model, x)?;
            let up = s.eval(bnd)?;
            (up, up - s.eval(a)?)
        }
    };
    Ok((num / den).clamp(0.0, 1.0))
}

fn check_exit(model: &DiffusionModel, op: &'static str, x: f64, a: f64, bnd: f64) -> Result<()> {
    interior(model, op, a)?;
    interior(model, op, bnd)?;
    if !(a < bnd) {
        return Err(Error::domain(MODULE, op, bnd, format!("need a < bnd, got a = {a}")));
    }
    if !(a <= x && x <= bnd) {
        return Err(Error::domain(MODULE, op, x, format!("start must lie in [{a}, {bnd}]")));
    }
    Ok(())
}
