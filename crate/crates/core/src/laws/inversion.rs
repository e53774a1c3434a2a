//! CDF of the drawdown time by Gaver–Stehfest inversion of
//! `α ↦ E^x[e^{−ατ}; τ < ∞]/α`.
//!
//! For an even order `N` the approximation at `t` is
//!
//! ```text
//! F_N(t) = (ln 2 / t) Σ_{k=1}^{N} V_k φ(k ln 2 / t) / (k ln 2 / t)
//! ```
//!
//! Every order up to 18 reuses the same 18 transform values, so the order
//! is picked per `t` as the one whose value moved least from the previous
//! order. The coefficients grow like `10^{N/2}`, so high orders amplify the
//! transform's own error; the sweep finds the balance point.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use super::{transform, DrawdownQuery, MODULE};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;

pub const ORDERS: [usize; 5] = [10, 12, 14, 16, 18];

/// Gap between consecutive orders above which a value is flagged.
pub const INSTABILITY_GAP: f64 = 1e-4;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// Stehfest weights `V_1..V_N` for even `N`.
pub fn stehfest_coefficients(n: usize) -> Result<Vec<f64>> {
    if n == 0 || n % 2 == 1 || n > 30 {
        return Err(Error::invalid(MODULE, "tau_cdf", "order", format!("must be even in [2, 30], got {n}")));
    }
    let half = n / 2;
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for j in k.div_ceil(2)..=k.min(half) {
            let term = (j as f64).powi(half as i32) * factorial(2 * j)
                / (factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k));
            let t = sum + term;
            comp += if sum.abs() >= term.abs() { (sum - t) + term } else { (term - t) + sum };
            sum = t;
        }
        let sign = if (k + half).is_multiple_of(2) { 1.0 } else { -1.0 };
        out.push(sign * (sum + comp));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauCdf {
    pub t: Vec<f64>,
    pub cdf: Vec<f64>,
    /// Value before monotone post-processing and clipping.
    pub raw: Vec<f64>,
    pub order: Vec<usize>,
    /// Smallest gap between consecutive orders.
    pub gap: Vec<f64>,
    pub unstable: Vec<bool>,
    pub max_wronskian_drift: f64,
}

/// Inverts a real-axis Laplace transform `f` at `t` with the order sweep.
pub fn invert<F>(f: F, t: f64) -> Result<(f64, usize, f64)>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let n_max = ORDERS[ORDERS.len() - 1];
    let ln2t = std::f64::consts::LN_2 / t;
    let values: Vec<f64> = (1..=n_max)
        .into_par_iter()
        .map(|k| f(k as f64 * ln2t))
        .collect::<Result<_>>()?;
    let mut approx = Vec::with_capacity(ORDERS.len());
    for &n in &ORDERS {
        let v = stehfest_coefficients(n)?;
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for (vk, fk) in v.iter().zip(&values) {
            let term = vk * fk;
            let s = sum + term;
            comp += if sum.abs() >= term.abs() { (sum - s) + term } else { (term - s) + sum };
            sum = s;
        }
        approx.push(ln2t * (sum + comp));
    }
    let mut best = (approx[1], ORDERS[1], (approx[1] - approx[0]).abs());
    for i in 2..approx.len() {
        let gap = (approx[i] - approx[i - 1]).abs();
        if gap < best.2 {
            best = (approx[i], ORDERS[i], gap);
        }
    }
    Ok(best)
}

// Pool-adjacent-violators fit of a non-decreasing sequence.
fn isotonic(values: &[f64]) -> Vec<f64> {
    let mut blocks: Vec<(f64, usize)> = Vec::new();
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, n2) = blocks[blocks.len() - 1];
            let (m1, n1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let n = n1 + n2;
            *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
        }
    }
    blocks.into_iter().flat_map(|(m, n)| std::iter::repeat_n(m, n)).collect()
}

/// `P^x(τ ≤ t)` on an increasing grid of positive times.
pub fn tau_cdf(model: &DiffusionModel, query: &DrawdownQuery, t_grid: &[f64]) -> Result<TauCdf> {
    query.validate(model)?;
    if query.beta != 0.0 {
        return Err(Error::invalid(MODULE, "tau_cdf", "beta", "must be 0 for the CDF of τ"));
    }
    if t_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) || t_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(MODULE, "tau_cdf", "t_grid", "must be positive and strictly increasing"));
    }
    // Drift is non-negative, so its bit pattern orders like the value.
    let drift = AtomicU64::new(0);
    let laplace = |alpha: f64| -> Result<f64> {
        let r = transform::joint_transform(model, &query.with_alpha(alpha))?;
        drift.fetch_max(r.max_wronskian_drift.to_bits(), Ordering::Relaxed);
        Ok(r.value / alpha)
    };
    let mut raw = Vec::with_capacity(t_grid.len());
    let mut order = Vec::with_capacity(t_grid.len());
    let mut gap = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let (v, n, g) = invert(laplace, t).map_err(|e| e.within(MODULE, "tau_cdf"))?;
        raw.push(v);
        order.push(n);
        gap.push(g);
    }
    let cdf = isotonic(&raw).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let unstable = gap.iter().map(|g| *g > INSTABILITY_GAP).collect();
    Ok(TauCdf {
        t: t_grid.to_vec(),
        cdf,
        raw,
        order,
        gap,
        unstable,
        max_wronskian_drift: f64::from_bits(drift.into_inner()),
    })
}
