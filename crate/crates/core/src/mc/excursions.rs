//! Counts of δ-deep excursions below the running maximum.
//!
//! Over the levels `]x, y]` these counts are Poisson with mean
//! `∫_x^y ν dS`. A path is run until its maximum passes `y`; each time an
//! excursion reaches depth `δ` it is recorded and the path is restarted at
//! its maximum, which by the strong Markov property is where it would next
//! begin a new excursion at that level. Only excursions that reach depth
//! `δ` are recorded.

use rayon::prelude::*;
use serde::Serialize;

use super::{check_start, Dynamics, McConfig, Mode, PathParams, PathSample, Streams, MODULE};
use crate::error::{Error, Result};
use crate::model::DiffusionModel;
use crate::scale::ScaleMap;

/// Simulates paths from `x` until the maximum exceeds `y_top`, recording
/// every δ-deep excursion on the way.
pub fn simulate_excursions(
    model: &DiffusionModel,
    x: f64,
    delta: f64,
    y_top: f64,
    cfg: &McConfig,
) -> Result<Vec<PathSample>> {
    check_start(model, x, delta)?;
    cfg.validate(model, delta)?;
    if !(y_top > x && model.is_interior(y_top)) {
        return Err(Error::domain(MODULE, "simulate_excursions", y_top, "band top must be an interior level above x"));
    }
    let scale = ScaleMap::new(model, x)?;
    let s_lower = scale.at_lower()?;
    let certain = model.lower_in_state_space() || s_lower == f64::NEG_INFINITY;
    // From the drawdown level the path regains its maximum before reaching A
    // with probability (S(m − δ) − S(A)) / (S(m) − S(A)).
    let return_prob = move |m: f64| -> Result<f64> {
        if certain {
            return Ok(1.0);
        }
        let lo = scale.eval(m - delta)? - s_lower;
        let hi = scale.eval(m)? - s_lower;
        Ok((lo / hi).clamp(0.0, 1.0))
    };
    let mode = Mode::Excursions {
        y_top,
        return_prob: &return_prob,
    };
    let params = PathParams {
        dynamics: Dynamics::new(model, cfg.scheme),
        x,
        delta,
        dt: cfg.step(delta),
        t_max: cfg.t_max,
        substeps: 1,
    };
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| super::run_path(&params, &mode, &mut Streams::new(cfg.seed, i), i))
        .collect()
}

/// Number of recorded excursions of depth at least `delta` whose level lies
/// in `]lo, hi]`.
pub fn extract_excursions(path: &PathSample, delta: f64, band: (f64, f64)) -> usize {
    path.excursions
        .iter()
        .filter(|e| e.depth >= delta && e.level > band.0 && e.level <= band.1)
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoissonSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// `variance / mean`; one for a Poisson law.
    pub dispersion: f64,
    pub mean_std_error: f64,
}

pub fn poisson_summary(counts: &[usize]) -> Result<PoissonSummary> {
    if counts.len() < 2 {
        return Err(Error::invalid(MODULE, "poisson_summary", "counts", "need at least two paths"));
    }
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let variance = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(PoissonSummary {
        n: counts.len(),
        mean,
        variance,
        dispersion: if mean > 0.0 { variance / mean } else { f64::NAN },
        mean_std_error: (variance / n).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brownian_counts_are_poisson() {
        let bm = DiffusionModel::brownian(1.0).unwrap();
        let cfg = McConfig::new(4000, 0.0025, 200.0, 5);
        let paths = simulate_excursions(&bm, 0.0, 1.0, 2.0, &cfg).unwrap();
        let counts: Vec<usize> = paths.iter().map(|p| extract_excursions(p, 1.0, (0.0, 2.0))).collect();
        let s = poisson_summary(&counts).unwrap();
        assert!((s.mean - 2.0).abs() < 3.0 * (2.0f64 / 4000.0).sqrt(), "{s:?}");
        assert!((0.85..1.15).contains(&s.dispersion), "{s:?}");
        assert!(paths.iter().all(|p| p.m_tau_hat > 2.0));
    }

    #[test]
    fn shallow_paths_have_no_deep_excursions() {
        let p = PathSample {
            path_id: 0,
            stopped: false,
            tau_hat: 1.0,
            m_tau_hat: 2.5,
            excursions: Vec::new(),
        };
        assert_eq!(extract_excursions(&p, 1.0, (0.0, 2.0)), 0);
        assert!(poisson_summary(&[1]).is_err());
    }
}
