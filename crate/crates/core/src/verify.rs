//! Analytic laws against the Monte Carlo oracle, row by row.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::laws::{self, DrawdownQuery};
use crate::mc::{self, McConfig, Probe};
use crate::model::DiffusionModel;

/// Rows pass when the estimate is within this many standard errors.
pub const Z_LIMIT: f64 = 3.0;
/// Largest fraction of unstopped paths the oracle accepts.
pub const MAX_UNSTOPPED: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyPlan {
    pub x: f64,
    pub delta: f64,
    pub tail_levels: Vec<f64>,
    /// `α` values for `E[e^{−ατ}]`.
    pub alphas: Vec<f64>,
    pub cdf_times: Vec<f64>,
    pub mc: McConfig,
    pub max_halvings: usize,
}

impl VerifyPlan {
    /// Levels `x + δ·{½, 1, 2}`, `α = ½` and no CDF rows.
    pub fn default_for(x: f64, delta: f64, mc: McConfig) -> Self {
        Self {
            x,
            delta,
            tail_levels: vec![x + 0.5 * delta, x + delta, x + 2.0 * delta],
            alphas: vec![0.5],
            cdf_times: Vec::new(),
            mc,
            max_halvings: 4,
        }
    }

    fn probes(&self) -> Vec<Probe> {
        let mut p: Vec<Probe> = self.tail_levels.iter().map(|&y| Probe::Tail { y }).collect();
        p.extend(self.alphas.iter().map(|&alpha| Probe::Transform { alpha, beta: 0.0 }));
        p.extend(self.cdf_times.iter().map(|&t| Probe::Cdf { t }));
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyRow {
    pub quantity: String,
    pub analytic: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub pass: bool,
}

impl VerifyRow {
    pub fn new(quantity: String, analytic: f64, estimate: f64, std_error: f64) -> Self {
        let diff = estimate - analytic;
        let z = if std_error > 0.0 {
            diff / std_error
        } else if diff.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY.copysign(diff)
        };
        Self {
            quantity,
            analytic,
            estimate,
            std_error,
            z,
            pass: z.abs() <= Z_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub model_id: String,
    pub x: f64,
    pub delta: f64,
    pub n_paths: usize,
    pub dt: f64,
    pub dt_converged: bool,
    pub dt_rounds: Vec<mc::DtRound>,
    pub unstopped_fraction: f64,
    pub max_wronskian_drift: f64,
    pub rows: Vec<VerifyRow>,
    pub pass: bool,
}

pub fn verify(model: &DiffusionModel, plan: &VerifyPlan) -> Result<VerifyReport> {
    let query = DrawdownQuery::new(plan.x, plan.delta);
    query.validate(model)?;

    let curve = laws::tail_curve(model, &query, &plan.tail_levels)?;
    let mut transforms = Vec::new();
    let mut drift = 0.0f64;
    for &alpha in &plan.alphas {
        let r = laws::joint_transform(model, &query.with_alpha(alpha))?;
        drift = drift.max(r.max_wronskian_drift);
        transforms.push(r.value);
    }
    let cdf = if plan.cdf_times.is_empty() {
        None
    } else {
        Some(laws::tau_cdf(model, &query, &plan.cdf_times)?)
    };

    let choice = mc::choose_dt(model, plan.x, plan.delta, &plan.mc, &plan.probes(), plan.max_halvings)?;
    let samples = &choice.samples;

    let mut rows = Vec::new();
    for (i, &y) in plan.tail_levels.iter().enumerate() {
        let e = mc::estimate_tail(samples, y)?;
        rows.push(VerifyRow::new(format!("P(M > {y})"), curve.tail[i], e.estimate, e.std_error));
    }
    for (i, &alpha) in plan.alphas.iter().enumerate() {
        let e = mc::estimate_transform(samples, alpha, 0.0)?;
        rows.push(VerifyRow::new(format!("E[exp(-{alpha} tau)]"), transforms[i], e.estimate, e.std_error));
    }
    if let Some(cdf) = &cdf {
        for (i, &t) in plan.cdf_times.iter().enumerate() {
            let e = mc::estimate_cdf(samples, t)?;
            rows.push(VerifyRow::new(format!("P(tau <= {t})"), cdf.cdf[i], e.estimate, e.std_error));
        }
    }
    let unstopped = mc::unstopped_fraction(samples);
    let pass = rows.iter().all(|r| r.pass) && unstopped < MAX_UNSTOPPED;
    Ok(VerifyReport {
        model_id: model.id().to_string(),
        x: plan.x,
        delta: plan.delta,
        n_paths: samples.len(),
        dt: choice.dt,
        dt_converged: choice.converged,
        dt_rounds: choice.rounds,
        unstopped_fraction: unstopped,
        max_wronskian_drift: drift,
        rows,
        pass,
    })
}
