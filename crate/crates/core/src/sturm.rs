//! Local solution bases of the eigenvalue equation `½σ²g″ + μg′ = αg`.
//!
//! [`solve_local_basis`] integrates two solutions on `[l, r]` in the original
//! coordinate with the scale-derivative initial data
//!
//! ```text
//! u(l) = 0, u⁺(l) = 1,    v(l) = 1, v⁺(l) = 0,
//! ```
//!
//! so the scale Wronskian `W = u⁺v − uv⁺` equals `+1` everywhere.
//!
//! Both solutions are dominated by the growing mode after a few multiples of
//! `σ/√(2α)`, and forming `W` from the grown values cancels catastrophically.
//! The integrator therefore carries a working pair `(u, q)` with
//! `q = v − c(x)·u`: whenever the two state vectors start to align, `q` is
//! re-projected off `u` and the shift `c` is accumulated. The map
//! `(u, v) ↦ (u, q)` is unimodular, so `W` and every basis-invariant quotient
//! are unchanged, while the working pair stays well conditioned. Each
//! solution also carries its own log-scale so values never overflow.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::ode::{self, After, StepControl};
use crate::scale;

const MODULE: &str = "sturm-liouville";

/// Relative Wronskian drift above which a solve is repeated at a tighter
/// tolerance.
pub const WRONSKIAN_DRIFT_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Solutions are rescaled to unit magnitude once their norm leaves
    /// `[1/rescale_threshold, rescale_threshold]`.
    pub rescale_threshold: f64,
}

impl Default for OdeSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-10,
            max_steps: 200_000,
            rescale_threshold: 16.0,
        }
    }
}

impl OdeSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_tol = |t: f64| t > 0.0 && t <= 1e-4;
        if !ok_tol(self.rel_tol) || !ok_tol(self.abs_tol) {
            return Err(Error::invalid(
                MODULE,
                "solve_local_basis",
                "tolerance",
                format!("tolerances must lie in (0, 1e-4], got rel {} abs {}", self.rel_tol, self.abs_tol),
            ));
        }
        if self.max_steps < 1000 {
            return Err(Error::invalid(MODULE, "solve_local_basis", "max_steps", "must be at least 1000"));
        }
        if !(self.rescale_threshold > 1.0) {
            return Err(Error::invalid(MODULE, "solve_local_basis", "rescale_threshold", "must exceed 1"));
        }
        Ok(())
    }

    fn control(&self) -> StepControl {
        StepControl::new(self.rel_tol, self.abs_tol, self.max_steps)
    }
}

/// Which member of a [`SolutionBasis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solution {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

// State layout: [ũ, ũ′, q̃, q̃′, L, Σ] with L = ∫_l^x 2μ/σ² and
// Σ = ∫_l^x e^{−L} = (S(x) − S(l)) / S′(l). Reduced solutions:
//   û = e^{log_u}·ũ               (û = u / S′(l))
//   v = e^{log_q}·q̃ + shift·û
#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    y: [f64; 6],
    log_u: f64,
    log_q: f64,
    shift: f64,
}

impl Node {
    fn wronskian(&self) -> f64 {
        let m = self.y[1] * self.y[2] - self.y[0] * self.y[3];
        m * (self.y[4] + self.log_u + self.log_q).exp()
    }

    fn u_reduced(&self) -> (f64, f64) {
        let s = self.log_u.exp();
        (s * self.y[0], s * self.y[1])
    }

    fn v(&self) -> (f64, f64) {
        let (u, du) = self.u_reduced();
        let s = self.log_q.exp();
        (s * self.y[2] + self.shift * u, s * self.y[3] + self.shift * du)
    }
}

fn rhs(model: &DiffusionModel, alpha: f64, x: f64, y: &[f64; 6]) -> Result<[f64; 6]> {
    let s2 = model.diffusion_sq(x);
    let mu = model.drift(x);
    let out = [
        y[1],
        2.0 * (alpha * y[0] - mu * y[1]) / s2,
        y[3],
        2.0 * (alpha * y[2] - mu * y[3]) / s2,
        2.0 * mu / s2,
        (-y[4]).exp(),
    ];
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::Solver {
            module: MODULE,
            op: "solve_local_basis",
            at: x,
            reason: "non-finite coefficients or state".into(),
        })
    }
}

/// Rescales and re-orthogonalises the working pair in place.
fn condition(node: &mut Node, threshold: f64) -> bool {
    let mut changed = false;
    let y = &mut node.y;

    let nu = y[0].hypot(y[1]);
    if nu > threshold || nu < 1.0 / threshold {
        y[0] /= nu;
        y[1] /= nu;
        node.log_u += nu.ln();
        changed = true;
    }
    let nu = y[0].hypot(y[1]);
    let nq = y[2].hypot(y[3]);
    let dot = y[0] * y[2] + y[1] * y[3];
    if dot.abs() > 0.5 * nu * nq {
        let c = dot / (nu * nu);
        y[2] -= c * y[0];
        y[3] -= c * y[1];
        node.shift += c * (node.log_q - node.log_u).exp();
        changed = true;
    }
    let nq = y[2].hypot(y[3]);
    if nq > threshold || nq < 1.0 / threshold {
        y[2] /= nq;
        y[3] /= nq;
        node.log_q += nq.ln();
        changed = true;
    }
    changed
}

fn propagate(
    model: &DiffusionModel,
    alpha: f64,
    start: Node,
    to: f64,
    settings: &OdeSettings,
    mut record: Option<&mut Vec<Node>>,
) -> Result<Node> {
    let mut cur = start;
    let threshold = settings.rescale_threshold;
    let out = ode::integrate(
        |x, y| rhs(model, alpha, x, y),
        start.x,
        start.y,
        to,
        &settings.control(),
        |x, y| {
            cur.x = x;
            cur.y = *y;
            let changed = condition(&mut cur, threshold);
            *y = cur.y;
            if let Some(nodes) = record.as_deref_mut() {
                nodes.push(cur);
            }
            Ok(if changed { After::Modified } else { After::Continue })
        },
    )
    .map_err(|e| e.within(MODULE, "solve_local_basis"))?;
    cur.x = out.x;
    cur.y = out.y;
    Ok(cur)
}

/// Two solutions of the eigenvalue equation on `[l, r]`.
#[derive(Debug)]
pub struct SolutionBasis {
    model: DiffusionModel,
    alpha: f64,
    left: f64,
    right: f64,
    settings: OdeSettings,
    nodes: Vec<Node>,
    max_drift: f64,
    density_left: OnceLock<f64>,
}

/// Solves for the basis with `u(l)=0, u⁺(l)=1, v(l)=1, v⁺(l)=0` on `[l, r]`.
///
/// The solve is repeated with tolerances tightened a hundredfold (at most
/// twice) while the Wronskian drifts by more than [`WRONSKIAN_DRIFT_LIMIT`].
pub fn solve_local_basis(
    model: &DiffusionModel,
    alpha: f64,
    l: f64,
    r: f64,
    settings: &OdeSettings,
) -> Result<SolutionBasis> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::domain(MODULE, "solve_local_basis", alpha, "alpha must be positive"));
    }
    for x in [l, r] {
        if !model.is_interior(x) {
            return Err(Error::domain(
                MODULE,
                "solve_local_basis",
                x,
                format!("endpoint must lie inside ]{}, {}[", model.lower(), model.upper()),
            ));
        }
    }
    if !(l < r) {
        return Err(Error::domain(MODULE, "solve_local_basis", r, format!("need l < r, got [{l}, {r}]")));
    }
    settings.validate()?;

    let mut current = *settings;
    let mut attempt = 0;
    loop {
        let basis = solve_once(model, alpha, l, r, &current)?;
        let tighter = current.rel_tol.min(current.abs_tol) / 100.0;
        if basis.max_drift <= WRONSKIAN_DRIFT_LIMIT || attempt == 2 || tighter < 1e-14 {
            return Ok(basis);
        }
        current.rel_tol = (current.rel_tol / 100.0).max(1e-14);
        current.abs_tol = (current.abs_tol / 100.0).max(1e-14);
        attempt += 1;
    }
}

fn solve_once(model: &DiffusionModel, alpha: f64, l: f64, r: f64, settings: &OdeSettings) -> Result<SolutionBasis> {
    let start = Node {
        x: l,
        y: [0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
        log_u: 0.0,
        log_q: 0.0,
        shift: 0.0,
    };
    let mut nodes = vec![start];
    let end = propagate(model, alpha, start, r, settings, Some(&mut nodes))?;
    if nodes.last().map(|n| n.x) != Some(end.x) {
        nodes.push(end);
    }
    let max_drift = nodes.iter().map(|n| (n.wronskian() - 1.0).abs()).fold(0.0, f64::max);
    Ok(SolutionBasis {
        model: model.clone(),
        alpha,
        left: l,
        right: r,
        settings: *settings,
        nodes,
        max_drift,
        density_left: OnceLock::new(),
    })
}

impl SolutionBasis {
    pub fn interval(&self) -> (f64, f64) {
        (self.left, self.right)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn model(&self) -> &DiffusionModel {
        &self.model
    }

    /// Scale Wronskian `u⁺v − uv⁺` at the left endpoint; `+1` by construction.
    pub fn wronskian_ref(&self) -> f64 {
        1.0
    }

    /// Largest relative deviation of the Wronskian from its reference value
    /// over the integrator's accepted steps.
    pub fn max_wronskian_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    fn density_left(&self) -> Result<f64> {
        if let Some(v) = self.density_left.get() {
            return Ok(*v);
        }
        let v = scale::scale_density(&self.model, self.left)?;
        Ok(*self.density_left.get_or_init(|| v))
    }

    fn node_at(&self, x: f64, op: &'static str) -> Result<Node> {
        if !(self.left <= x && x <= self.right) {
            return Err(Error::domain(
                MODULE,
                op,
                x,
                format!("outside the basis interval [{}, {}]", self.left, self.right),
            ));
        }
        let idx = self.nodes.partition_point(|n| n.x <= x).saturating_sub(1);
        let node = self.nodes[idx];
        if node.x == x {
            return Ok(node);
        }
        propagate(&self.model, self.alpha, node, x, &self.settings, None)
    }

    /// Scale density at `x`, consistent with the integrated `L` component.
    pub fn scale_density_at(&self, x: f64) -> Result<f64> {
        let n = self.node_at(x, "scale_density")?;
        Ok(self.density_left()? * (-n.y[4]).exp())
    }

    pub fn value(&self, g: Solution, x: f64) -> Result<f64> {
        let n = self.node_at(x, "value")?;
        Ok(match g {
            Solution::U => self.density_left()? * n.u_reduced().0,
            Solution::V => n.v().0,
        })
    }

    /// Ordinary derivative `g′(x)`.
    pub fn derivative(&self, g: Solution, x: f64) -> Result<f64> {
        let n = self.node_at(x, "derivative")?;
        Ok(match g {
            Solution::U => self.density_left()? * n.u_reduced().1,
            Solution::V => n.v().1,
        })
    }

    /// Scale derivative `g⁺(x) = g′(x)/S′(x)`.
    ///
    /// The solutions are C¹ on the interior, so both sides agree; a side is
    /// rejected only where the basis carries no data on that side.
    pub fn scale_derivative(&self, g: Solution, x: f64, side: Side) -> Result<f64> {
        if (side == Side::Left && x == self.left) || (side == Side::Right && x == self.right) {
            return Err(Error::domain(
                MODULE,
                "scale_derivative",
                x,
                "no one-sided data beyond the basis interval",
            ));
        }
        let n = self.node_at(x, "scale_derivative")?;
        let growth = n.y[4].exp();
        Ok(match g {
            Solution::U => n.u_reduced().1 * growth,
            Solution::V => n.v().1 * growth / self.density_left()?,
        })
    }

    /// Scale Wronskian `u⁺(x)v(x) − u(x)v⁺(x)`, evaluated on the
    /// well-conditioned working pair.
    pub fn wronskian(&self, x: f64) -> Result<f64> {
        Ok(self.node_at(x, "wronskian")?.wronskian())
    }

    /// Values and scale derivatives of `(u, v)` at both endpoints, in the
    /// model's absolute scale normalisation.
    pub fn endpoint_pair(&self) -> Result<EndpointPair> {
        let sl = self.density_left()?;
        let end = *self.nodes.last().expect("basis has nodes");
        let (u, du) = end.u_reduced();
        let (v, dv) = end.v();
        let growth = end.y[4].exp();
        Ok(EndpointPair {
            p_left: 0.0,
            q_left: 1.0,
            p_right: sl * u,
            q_right: v,
            p_plus_right: du * growth,
            q_plus_right: dv * growth / sl,
        })
    }

    /// Values of the working pair `(û, q)` at `x` in reduced units
    /// (`û = u/S′(l)`), where `q = v − c·û` for the shift `c` accumulated
    /// over the whole interval. `q(l) = 1` and `û(l) = 0`.
    pub fn working_values(&self, x: f64) -> Result<(f64, f64)> {
        let n = self.node_at(x, "working_values")?;
        let final_shift = self.nodes.last().expect("basis has nodes").shift;
        let (u, _) = n.u_reduced();
        let q = n.log_q.exp() * n.y[2] + (n.shift - final_shift) * u;
        Ok((u, q))
    }

    /// Excursion rates at the right endpoint `z = r` for drawdown size
    /// `δ = r − l`, each expressed per unit `dz` (multiplied by `S′(z)`).
    pub fn excursion_rates(&self) -> ExcursionRates {
        let end = *self.nodes.last().expect("basis has nodes");
        let y = end.y;
        let nu = (-y[4]).exp() / y[5];
        let c_hat = y[1] / y[0];
        let b = end.log_q.exp() * (y[1] * y[2] - y[0] * y[3]) / y[0];
        ExcursionRates {
            nu,
            b,
            c_hat,
            wronskian_drift: self.max_drift,
        }
    }
}

/// Free-function form of [`SolutionBasis::scale_derivative`].
pub fn scale_derivative(basis: &SolutionBasis, g: Solution, x: f64, side: Side) -> Result<f64> {
    basis.scale_derivative(g, x, side)
}

/// Free-function form of [`SolutionBasis::wronskian`].
pub fn wronskian(basis: &SolutionBasis, x: f64) -> Result<f64> {
    basis.wronskian(x)
}

/// A pair of solutions sampled where the drawdown quotients need them:
/// values at both endpoints and scale derivatives at the right endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointPair {
    pub p_left: f64,
    pub q_left: f64,
    pub p_right: f64,
    pub q_right: f64,
    pub p_plus_right: f64,
    pub q_plus_right: f64,
}

impl EndpointPair {
    /// The pair `(a·p + b·q, c·p + d·q)`.
    pub fn recombine(&self, a: f64, b: f64, c: f64, d: f64) -> Self {
        Self {
            p_left: a * self.p_left + b * self.q_left,
            q_left: c * self.p_left + d * self.q_left,
            p_right: a * self.p_right + b * self.q_right,
            q_right: c * self.p_right + d * self.q_right,
            p_plus_right: a * self.p_plus_right + b * self.q_plus_right,
            q_plus_right: c * self.p_plus_right + d * self.q_plus_right,
        }
    }
}

/// Excursion intensities at level `z` per unit `dz`: `ν·S′`, `b·S′`, `ĉ·S′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionRates {
    pub nu: f64,
    pub b: f64,
    pub c_hat: f64,
    pub wronskian_drift: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn brownian_basis_is_sinh_cosh() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let basis = solve_local_basis(&bm, 0.5, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let u1 = basis.value(Solution::U, 1.0).unwrap();
        let v1 = basis.value(Solution::V, 1.0).unwrap();
        assert!(rel(u1, 1f64.sinh()) < 1e-9, "{u1}");
        assert!(rel(v1, 1f64.cosh()) < 1e-9, "{v1}");
        assert!((u1 - 1.1752012).abs() < 1e-7 && (v1 - 1.5430806).abs() < 1e-7);
        for x in [0.0, 0.3, 0.77, 1.0] {
            assert!((basis.wronskian(x).unwrap() - 1.0).abs() < 1e-10);
            let mid = basis.value(Solution::U, x).unwrap();
            assert!((mid - x.sinh()).abs() < 1e-9 * x.cosh());
        }
        assert_eq!(basis.wronskian(0.0).unwrap(), basis.wronskian_ref());
    }

    #[test]
    fn scale_derivative_examples() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let basis = solve_local_basis(&bm, 0.5, 0.0, 1.0, &OdeSettings::default()).unwrap();
        assert!((basis.scale_derivative(Solution::U, 0.0, Side::Right).unwrap() - 1.0).abs() < 1e-14);
        let s = basis.scale_derivative(Solution::V, 1.0, Side::Left).unwrap();
        assert!(rel(s, 1f64.sinh()) < 1e-9);
        assert!(basis.scale_derivative(Solution::U, 0.0, Side::Left).is_err());
        assert!(basis.scale_derivative(Solution::U, 1.5, Side::Left).is_err());

        let dbm = DiffusionModel::drifted_brownian(1.0, 1.0).unwrap();
        let basis = solve_local_basis(&dbm, 0.5, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let g1 = basis.derivative(Solution::V, 1.0).unwrap();
        let plus = scale_derivative(&basis, Solution::V, 1.0, Side::Left).unwrap();
        assert!(rel(plus, g1 * 2f64.exp()) < 1e-10);
    }

    #[test]
    fn drifted_basis_matches_closed_form() {
        // γ± = −1 ± √2; v solves v(0)=1, v′(0)=0.
        let dbm = DiffusionModel::drifted_brownian(1.0, 1.0).unwrap();
        let basis = solve_local_basis(&dbm, 0.5, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let (gp, gm) = (-1.0 + 2f64.sqrt(), -1.0 - 2f64.sqrt());
        let a = -gm / (gp - gm);
        let b = gp / (gp - gm);
        let v1 = a * gp.exp() + b * gm.exp();
        assert!(rel(basis.value(Solution::V, 1.0).unwrap(), v1) < 1e-8);
        // u(0)=0, u′(0)=S′(0)=1.
        let u1 = (gp.exp() - gm.exp()) / (gp - gm);
        assert!(rel(basis.value(Solution::U, 1.0).unwrap(), u1) < 1e-8);
        let w5 = wronskian(&basis, 0.5).unwrap();
        let w1 = wronskian(&basis, 1.0).unwrap();
        assert!(rel(w5, w1) < 1e-8);
    }

    #[test]
    fn large_alpha_long_interval_stays_conditioned() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let basis = solve_local_basis(&bm, 50.0, -5.0, 5.0, &OdeSettings::default()).unwrap();
        assert!(basis.max_wronskian_drift() <= WRONSKIAN_DRIFT_LIMIT, "{}", basis.max_wronskian_drift());
        let r = basis.excursion_rates();
        let k = 10.0f64;
        assert!(rel(r.c_hat, k / (10.0 * k).tanh()) < 1e-9);
        // b = k / sinh(10k) ≈ 2k e^{−100}
        let exact_log = (2.0 * k).ln() - 100.0;
        assert!((r.b.ln() - exact_log).abs() < 1e-8, "{} vs {}", r.b.ln(), exact_log);
    }

    #[test]
    fn rejects_bad_inputs() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let s = OdeSettings::default();
        assert!(solve_local_basis(&bm, 0.0, 0.0, 1.0, &s).is_err());
        assert!(solve_local_basis(&bm, 1.0, 1.0, 0.0, &s).is_err());
        let gbm = DiffusionModel::geometric(0.1, 0.3).unwrap();
        assert!(solve_local_basis(&gbm, 1.0, -1.0, 1.0, &s).is_err());
        let loose = OdeSettings::with_tol(1e-3);
        assert!(solve_local_basis(&bm, 1.0, 0.0, 1.0, &loose).is_err());
        let few = OdeSettings {
            max_steps: 10,
            ..OdeSettings::default()
        };
        assert!(solve_local_basis(&bm, 1.0, 0.0, 1.0, &few).is_err());
    }
}
