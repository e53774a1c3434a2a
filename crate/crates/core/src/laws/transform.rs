//! Joint Laplace transform of `(τ, M_τ)` and its conditional pieces.
//!
//! ```text
//! E^x[e^{−ατ − βM_τ}; τ < ∞] = ∫_x^B exp(−βy − ∫_x^y ĉ dS) · b(y) dS(y)
//! ```
//!
//! Excursions below the maximum that reach depth `δ` end the run with
//! weight `b`; shallower ones only cost run-up time, at rate `ĉ − ν`.
//! Together with the `ν` killing this puts `ĉ` in the exponent and `b`
//! outside. At `α = 0` both equal `ν` and the formula reduces to the law of
//! `M_τ`; for Brownian motion it gives `sech(√(2α)δ/σ)`.
//!
//! The outer integral is carried as an ODE in `y` for the cumulative
//! exponents, so each accepted step needs a handful of basis solves on
//! `[y−δ, y]` and nothing is interpolated.

use std::cell::Cell;

use serde::Serialize;

use super::{check_level, excursion, DrawdownQuery, MODULE};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::ode::{self, After, StepControl};
use crate::sturm::ExcursionRates;

/// Survival exponent `∫ ν dS` at which the outer integral is cut.
pub const TRUNCATION_EXPONENT: f64 = 32.236_191_301_916_64; // −ln 1e−14

const OUTER_MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub truncation_point: f64,
    pub max_wronskian_drift: f64,
}

fn outer_end(model: &DiffusionModel, query: &DrawdownQuery) -> f64 {
    let b = model.upper();
    if b.is_finite() {
        b - 1e-9 * (1.0 + b.abs())
    } else {
        query.x + 1e6 * query.delta.max(1.0)
    }
}

// Local errors of the outer solve accumulate, so it runs a decade below
// the query tolerance.
fn outer_control(query: &DrawdownQuery) -> StepControl {
    let tol = (0.1 * query.tol).max(1e-13);
    StepControl::new(tol, tol, OUTER_MAX_STEPS)
}

fn rates_at(model: &DiffusionModel, query: &DrawdownQuery, y: f64, drift: &Cell<f64>) -> Result<ExcursionRates> {
    let r = excursion::excursion_rates(model, y, query.delta, query.alpha, &query.basis_settings())
        .map_err(|e| e.within(MODULE, "joint_transform"))?;
    drift.set(drift.get().max(r.wronskian_drift));
    Ok(r)
}

/// `E^x[exp(−ατ − βM_τ); τ < ∞]`.
pub fn joint_transform(model: &DiffusionModel, query: &DrawdownQuery) -> Result<TransformResult> {
    query.validate(model)?;
    let drift = Cell::new(0.0);
    let beta = query.beta;
    let ctl = outer_control(query);
    let end = outer_end(model, query);

    // State: [∫ν dS, ∫ĉ dS, partial transform].
    let out = ode::integrate(
        |y, s: &[f64; 3]| {
            let r = rates_at(model, query, y, &drift)?;
            Ok([r.nu, r.c_hat, (-beta * y - s[1]).exp() * r.b])
        },
        query.x,
        [0.0, 0.0, 0.0],
        end,
        &ctl,
        |_, s| Ok(if s[0] >= TRUNCATION_EXPONENT { After::Stop } else { After::Continue }),
    )
    .map_err(|e| e.within(MODULE, "joint_transform"))?;

    let [k, _, j] = out.y;
    let remainder = (-beta * out.x - k).exp();
    // With α = β = 0 the integrand is an exact derivative.
    let value = if query.alpha == 0.0 && beta == 0.0 { -(-k).exp_m1() } else { j.max(0.0) };
    if !value.is_finite() {
        return Err(Error::NonFinite {
            module: MODULE,
            op: "joint_transform",
            at: out.x,
            value,
        });
    }
    Ok(TransformResult {
        value,
        abs_error_estimate: remainder + out.local_error[2],
        truncation_point: out.x,
        max_wronskian_drift: drift.get(),
    })
}

/// `P^x(τ < ∞) = 1 − exp(−∫_x^B ν dS)`.
pub fn drawdown_probability(model: &DiffusionModel, query: &DrawdownQuery) -> Result<TransformResult> {
    joint_transform(model, &query.with_alpha(0.0).with_beta(0.0))
}

fn run_up_exponent(model: &DiffusionModel, query: &DrawdownQuery, y: f64) -> Result<(f64, f64)> {
    if query.alpha == 0.0 || y == query.x {
        return Ok((0.0, 0.0));
    }
    let drift = Cell::new(0.0);
    let ctl = outer_control(query);
    let out = ode::integrate(
        |z, _: &[f64; 1]| {
            let r = rates_at(model, query, z, &drift)?;
            Ok([r.c_hat - r.nu])
        },
        query.x,
        [0.0],
        y,
        &ctl,
        |_, _| Ok(After::Continue),
    )
    .map_err(|e| e.within(MODULE, "run_up_transform"))?;
    Ok((out.y[0], drift.get()))
}

/// `exp(−∫_x^y (ĉ − ν) dS)`: the Laplace transform of the time spent in
/// excursions shallower than `δ` while the maximum climbs from `x` to `y`.
pub fn run_up_transform(model: &DiffusionModel, x: f64, y: f64, delta: f64, alpha: f64) -> Result<f64> {
    let query = DrawdownQuery::new(x, delta).with_alpha(alpha);
    query.validate(model)?;
    check_level(model, "run_up_transform", &query, y)?;
    Ok((-run_up_exponent(model, &query, y)?.0).exp())
}

/// `E^x[e^{−ατ} | M_τ = y] = exp(−∫_x^y (ĉ − ν) dS) · b(y)/ν(y)`.
pub fn conditional_laplace(model: &DiffusionModel, query: &DrawdownQuery, y: f64) -> Result<f64> {
    query.validate(model)?;
    check_level(model, "conditional_laplace", query, y)?;
    if query.alpha == 0.0 {
        return Ok(1.0);
    }
    let (exponent, _) = run_up_exponent(model, query, y)?;
    let r = rates_at(model, query, y, &Cell::new(0.0))?;
    Ok((-exponent).exp() * r.b / r.nu)
}
