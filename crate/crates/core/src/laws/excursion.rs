//! Excursion functionals below the running maximum.
//!
//! For a level `z` and drawdown size `δ`:
//!
//! * `ν(z) = 1/(S(z) − S(z−δ))`, the mass of excursions reaching depth `δ`;
//! * `b(z) = n↓_z(e^{−αT_{z−δ}}; T_{z−δ} < ζ)`;
//! * `ĉ(z) = ν(z) + n↓_z(1 − e^{−αζ}; T_{z−δ} > ζ)`.
//!
//! `b` and `ĉ` are quotients of solutions of the eigenvalue equation on
//! `[z−δ, z]` and do not depend on which basis is used. Every function here
//! also has a "rate" form, the quantity times `S′(z)`, which is what integrals
//! `∫ (…) dS(z)` need and which stays representable where `S′` does not.

use crate::error::{Error, Result};
use crate::model::{DiffusionModel, ModelKind};
use crate::scale;
use crate::sturm::{self, EndpointPair, ExcursionRates, OdeSettings};

const MODULE: &str = "drawdown-laws";

fn check_levels(model: &DiffusionModel, op: &'static str, z: f64, delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::domain(MODULE, op, delta, "drawdown size must be positive and finite"));
    }
    if !model.is_interior(z) {
        return Err(Error::domain(MODULE, op, z, format!("level outside ]{}, {}[", model.lower(), model.upper())));
    }
    if !model.is_interior(z - delta) {
        return Err(Error::domain(
            MODULE,
            op,
            z - delta,
            format!("level z − δ must lie above the lower endpoint {}", model.lower()),
        ));
    }
    Ok(())
}

fn check_alpha(op: &'static str, alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(MODULE, op, alpha, "alpha must be finite and non-negative"))
    }
}

// S′(z)/(S(z) − S(z−δ)) in closed form for the catalog models that have one.
fn closed_form_nu_rate(model: &DiffusionModel, z: f64, delta: f64) -> Option<f64> {
    match model.kind() {
        ModelKind::Brownian { .. } => Some(1.0 / delta),
        ModelKind::DriftedBrownian { mu, sigma } => {
            let k = 2.0 * mu / (sigma * sigma);
            if k == 0.0 {
                Some(1.0 / delta)
            } else {
                Some(k / (k * delta).exp_m1())
            }
        }
        ModelKind::Geometric { mu, sigma } => {
            let p = 2.0 * mu / (sigma * sigma);
            let shrink = (-delta / z).ln_1p();
            if (1.0 - p).abs() < 1e-14 {
                Some(-1.0 / (z * shrink))
            } else {
                Some((1.0 - p) / (-z * ((1.0 - p) * shrink).exp_m1()))
            }
        }
        _ => None,
    }
}

/// `ν(z)·S′(z)`, the intensity of δ-deep excursions per unit `dz`.
pub fn nu_rate(model: &DiffusionModel, z: f64, delta: f64) -> Result<f64> {
    check_levels(model, "nu", z, delta)?;
    match closed_form_nu_rate(model, z, delta) {
        Some(v) => Ok(v),
        None => Ok(1.0 / scale::scale_gap_over_density(model, z - delta, z)?),
    }
}

/// `ν(z) = 1/(S(z) − S(z−δ))`.
pub fn nu(model: &DiffusionModel, z: f64, delta: f64) -> Result<f64> {
    check_levels(model, "nu", z, delta)?;
    if let Some(gap) = model.closed_form_scale(z, z - delta) {
        return Ok(1.0 / gap);
    }
    let gap = scale::scale_gap_over_density(model, z - delta, z)? * scale::scale_density(model, z)?;
    Ok(1.0 / gap)
}

/// The two quotients `(b, ĉ)` for a pair of solutions `(p, q)` on
/// `[z−δ, z]`:
///
/// ```text
/// D = p(z)q(z−δ) − p(z−δ)q(z)
/// b = (p⁺(z)q(z) − p(z)q⁺(z)) / D
/// ĉ = (p⁺(z)q(z−δ) − p(z−δ)q⁺(z)) / D
/// ```
pub fn excursion_quotients(pair: &EndpointPair) -> Result<(f64, f64)> {
    let d1 = pair.p_right * pair.q_left;
    let d2 = pair.p_left * pair.q_right;
    let d = d1 - d2;
    if !(d.abs() >= 1e-13 * (d1.abs() + d2.abs())) || d == 0.0 {
        return Err(Error::DegenerateBasis {
            module: MODULE,
            op: "excursion_quotients",
            at: pair.p_right,
            denominator: d,
        });
    }
    let b = (pair.p_plus_right * pair.q_right - pair.p_right * pair.q_plus_right) / d;
    let c = (pair.p_plus_right * pair.q_left - pair.p_left * pair.q_plus_right) / d;
    Ok((b, c))
}

/// Rates `ν·S′`, `b·S′`, `ĉ·S′` at `z`. At `α = 0` all three are the
/// exact `ν·S′`.
pub fn excursion_rates(
    model: &DiffusionModel,
    z: f64,
    delta: f64,
    alpha: f64,
    settings: &OdeSettings,
) -> Result<ExcursionRates> {
    check_levels(model, "excursion_rates", z, delta)?;
    check_alpha("excursion_rates", alpha)?;
    if alpha == 0.0 {
        let nu = nu_rate(model, z, delta)?;
        return Ok(ExcursionRates {
            nu,
            b: nu,
            c_hat: nu,
            wronskian_drift: 0.0,
        });
    }
    let basis = sturm::solve_local_basis(model, alpha, z - delta, z, settings)?;
    let r = basis.excursion_rates();
    for (name, v) in [("nu", r.nu), ("b", r.b), ("c_hat", r.c_hat)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::NonFinite {
                module: MODULE,
                op: if name == "b" { "b_factor" } else { "c_hat" },
                at: z,
                value: v,
            });
        }
    }
    Ok(r)
}

/// `b(z) = n↓_z(e^{−αT_{z−δ}}; T_{z−δ} < ζ)`; equals `ν(z)` at `α = 0`.
pub fn b_factor(model: &DiffusionModel, z: f64, delta: f64, alpha: f64) -> Result<f64> {
    check_alpha("b_factor", alpha)?;
    if alpha == 0.0 {
        return nu(model, z, delta);
    }
    let r = excursion_rates(model, z, delta, alpha, &OdeSettings::default())?;
    Ok(r.b / scale::scale_density(model, z)?)
}

/// `ĉ(z) = ν(z) + n↓_z(1 − e^{−αζ}; T_{z−δ} > ζ)`; equals `ν(z)` at `α = 0`.
pub fn c_hat(model: &DiffusionModel, z: f64, delta: f64, alpha: f64) -> Result<f64> {
    check_alpha("c_hat", alpha)?;
    if alpha == 0.0 {
        return nu(model, z, delta);
    }
    let r = excursion_rates(model, z, delta, alpha, &OdeSettings::default())?;
    Ok(r.c_hat / scale::scale_density(model, z)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sturm::solve_local_basis;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn nu_examples() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        assert_eq!(nu(&bm, 3.0, 2.0).unwrap(), 0.5);
        let dbm = DiffusionModel::drifted_brownian(1.0, 1.0).unwrap();
        let v = nu(&dbm, 1.0, 1.0).unwrap();
        assert!(rel(v, 2.0 / (1.0 - (-2f64).exp())) < 1e-12);
        assert!((v - 2.3130353).abs() < 1e-7);
        let small: Vec<f64> = [0.5, 0.1, 0.01].iter().map(|d| nu(&dbm, 1.0, *d).unwrap()).collect();
        assert!(small.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn nu_rate_closed_forms_match_quadrature() {
        let cases = [
            DiffusionModel::drifted_brownian(0.7, 1.3).unwrap(),
            DiffusionModel::geometric(0.05, 0.3).unwrap(),
            DiffusionModel::geometric(0.1, 0.4f64.sqrt()).unwrap(),
        ];
        for m in &cases {
            let z = 1.4;
            let exact = nu_rate(m, z, 0.3).unwrap();
            let quad = 1.0 / scale::scale_gap_over_density(m, z - 0.3, z).unwrap();
            assert!(rel(exact, quad) < 1e-10, "{} {exact} {quad}", m.id());
        }
    }

    #[test]
    fn brownian_quotients() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let b = b_factor(&bm, 0.0, 1.0, 0.5).unwrap();
        let c = c_hat(&bm, 0.0, 1.0, 0.5).unwrap();
        assert!(rel(b, 1.0 / 1f64.sinh()) < 1e-9, "{b}");
        assert!(rel(c, 1.0 / 1f64.tanh()) < 1e-9, "{c}");
        assert_eq!(b_factor(&bm, 0.0, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(c_hat(&bm, 0.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn quotients_from_endpoint_pair_match_rates() {
        let dbm = DiffusionModel::drifted_brownian(1.0, 1.0).unwrap();
        let basis = solve_local_basis(&dbm, 0.5, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let (b, c) = excursion_quotients(&basis.endpoint_pair().unwrap()).unwrap();
        let sd = scale::scale_density(&dbm, 1.0).unwrap();
        let r = basis.excursion_rates();
        assert!(rel(b * sd, r.b) < 1e-10);
        assert!(rel(c * sd, r.c_hat) < 1e-10);
        assert!(excursion_quotients(&basis.endpoint_pair().unwrap().recombine(1.0, 2.0, 2.0, 4.0)).is_err());
    }

    #[test]
    fn small_alpha_limits_and_ordering() {
        let models = [
            DiffusionModel::brownian(1.0).unwrap(),
            DiffusionModel::drifted_brownian(1.0, 1.0).unwrap(),
            DiffusionModel::geometric(0.05, 0.3).unwrap(),
            DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap(),
        ];
        for m in &models {
            let (z, d) = if m.lower() == 0.0 { (1.2, 0.3) } else { (0.5, 1.0) };
            let n = nu(m, z, d).unwrap();
            let mut errs = Vec::new();
            for a in [1e-2, 1e-3, 1e-4] {
                let b = b_factor(m, z, d, a).unwrap();
                let c = c_hat(m, z, d, a).unwrap();
                assert!(0.0 < b && b < n && n < c, "{} a={a}: {b} {n} {c}", m.id());
                errs.push(((b - n).abs().max((c - n).abs())) / n);
            }
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log10();
                assert!(order >= 0.9, "{} order {order}", m.id());
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn quotients_are_basis_invariant(
            a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0, d in -3.0f64..3.0,
            alpha in 0.01f64..5.0, mu in -1.0f64..1.0,
        ) {
            prop_assume!((a * d - b * c).abs() > 0.1);
            let m = DiffusionModel::drifted_brownian(mu, 1.0).unwrap();
            let basis = solve_local_basis(&m, alpha, 0.0, 1.0, &OdeSettings::default()).unwrap();
            let pair = basis.endpoint_pair().unwrap();
            let (b0, c0) = excursion_quotients(&pair).unwrap();
            let (b1, c1) = excursion_quotients(&pair.recombine(a, b, c, d)).unwrap();
            prop_assert!(rel(b1, b0) < 1e-10, "b {} vs {}", b1, b0);
            prop_assert!(rel(c1, c0) < 1e-10, "c {} vs {}", c1, c0);
        }
    }
}
