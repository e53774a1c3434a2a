//! Law of the maximum at the drawdown time.

use serde::Serialize;

use super::{check_level, excursion, DrawdownQuery, MODULE};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::quad;

fn survival_exponent(model: &DiffusionModel, query: &DrawdownQuery, from: f64, to: f64) -> Result<f64> {
    if from == to {
        return Ok(0.0);
    }
    let delta = query.delta;
    quad::integrate(|z| excursion::nu_rate(model, z, delta), from, to, query.quad_settings())
        .map(|r| r.value)
        .map_err(|e| e.within(MODULE, "max_tail"))
}

/// `P^x[M_τ > y] = exp(−∫_x^y ν dS)`.
pub fn max_tail(model: &DiffusionModel, query: &DrawdownQuery, y: f64) -> Result<f64> {
    query.validate(model)?;
    check_level(model, "max_tail", query, y)?;
    Ok((-survival_exponent(model, query, query.x, y)?).exp())
}

/// Density of `M_τ` with respect to `dy`: `ν(y)S′(y)·P^x[M_τ > y]`.
pub fn max_density(model: &DiffusionModel, query: &DrawdownQuery, y: f64) -> Result<f64> {
    query.validate(model)?;
    check_level(model, "max_density", query, y)?;
    if y == query.x {
        return Err(Error::domain(MODULE, "max_density", y, "level must exceed the start point"));
    }
    let tail = (-survival_exponent(model, query, query.x, y)?).exp();
    Ok(excursion::nu_rate(model, y, query.delta)? * tail)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCurve {
    pub x: f64,
    pub delta: f64,
    pub grid: Vec<f64>,
    pub tail: Vec<f64>,
    pub density: Vec<f64>,
}

/// Tail and density on an increasing grid of levels `y ≥ x`. At `y = x`
/// the density is its right limit `ν(x)S′(x)`.
pub fn tail_curve(model: &DiffusionModel, query: &DrawdownQuery, grid: &[f64]) -> Result<TailCurve> {
    query.validate(model)?;
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid(MODULE, "tail_curve", "y_grid", "must be strictly increasing"));
    }
    let mut tail = Vec::with_capacity(grid.len());
    let mut density = Vec::with_capacity(grid.len());
    let mut exponent = 0.0;
    let mut prev = query.x;
    for &y in grid {
        check_level(model, "tail_curve", query, y)?;
        exponent += survival_exponent(model, query, prev, y)?;
        prev = y;
        let t = (-exponent).exp();
        tail.push(t);
        density.push(excursion::nu_rate(model, y, query.delta)? * t);
    }
    Ok(TailCurve {
        x: query.x,
        delta: query.delta,
        grid: grid.to_vec(),
        tail,
        density,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate, QuadSettings};
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn tail_examples() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let q = DrawdownQuery::new(0.0, 1.0);
        assert!(rel(max_tail(&bm, &q, 2.0).unwrap(), (-2f64).exp()) < 1e-12);
        assert_eq!(max_tail(&bm, &q, 0.0).unwrap(), 1.0);
        assert!(rel(max_density(&bm, &q, 2.0).unwrap(), (-2f64).exp()) < 1e-12);

        let dbm = DiffusionModel::drifted_brownian(1.0, 1.0).unwrap();
        let t = max_tail(&dbm, &q, 1.0).unwrap();
        assert!(rel(t, (-2.0 / (2f64.exp() - 1.0)).exp()) < 1e-12);
        assert!((t - 0.7312).abs() < 1e-4);
        assert!(max_tail(&bm, &q, -1.0).is_err());
        assert!(max_density(&bm, &q, 0.0).is_err());
    }

    #[test]
    fn density_integrates_to_one_minus_defect() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let q = DrawdownQuery::new(0.0, 1.0);
        let s = QuadSettings::with_tol(1e-12);
        let mass = integrate(|y| max_density(&bm, &q, y), 0.0, 40.0, s).unwrap().value;
        assert!((mass - 1.0).abs() < 1e-9, "{mass}");

        let dbm = DiffusionModel::drifted_brownian(1.0, 1.0).unwrap();
        let top = 150.0;
        let mass = integrate(|y| max_density(&dbm, &q, y), 0.0, top, s).unwrap().value;
        let lim = max_tail(&dbm, &q, top).unwrap();
        assert!((mass - (1.0 - lim)).abs() < 1e-8, "{mass} {lim}");
    }

    #[test]
    fn curve_matches_pointwise_and_log_derivative() {
        let ou = DiffusionModel::ornstein_uhlenbeck(1.0, 0.0, 1.0).unwrap();
        let q = DrawdownQuery::new(0.0, 1.0);
        let grid = [0.0, 0.25, 0.5, 1.0];
        let c = tail_curve(&ou, &q, &grid).unwrap();
        for (i, y) in grid.iter().enumerate() {
            assert!(rel(c.tail[i], max_tail(&ou, &q, *y).unwrap()) < 1e-10);
        }
        assert!(c.tail.windows(2).all(|w| w[1] <= w[0]));
        let y = 0.7;
        let h = 1e-4;
        let fd = -(max_tail(&ou, &q, y + h).unwrap().ln() - max_tail(&ou, &q, y - h).unwrap().ln()) / (2.0 * h);
        assert!(rel(fd, excursion::nu_rate(&ou, y, 1.0).unwrap()) < 1e-6);
        assert!(tail_curve(&ou, &q, &[0.5, 0.25]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn tail_is_a_survival_function(mu in -1.0f64..1.0, sigma in 0.3f64..2.0, delta in 0.2f64..3.0, dy in 0.0f64..5.0) {
            let m = DiffusionModel::drifted_brownian(mu, sigma).unwrap();
            let q = DrawdownQuery::new(0.0, delta);
            let a = max_tail(&m, &q, dy).unwrap();
            let b = max_tail(&m, &q, dy + 0.5).unwrap();
            prop_assert!((0.0..=1.0).contains(&a) && b <= a);
        }
    }
}
