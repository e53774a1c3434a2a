use serde::Serialize;

use super::{PathSample, MODULE};
use crate::error::{Error, Result};

/// Sample mean with its CLT standard error. Paths that never stopped enter
/// the mean as zero; `lower`/`upper` bound the mean over every value they
/// could have taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub n: usize,
    pub unstopped_fraction: f64,
}

fn summarize(samples: &[PathSample], op: &'static str, f: impl Fn(&PathSample) -> (f64, f64)) -> Result<Estimate> {
    if samples.is_empty() {
        return Err(Error::invalid(MODULE, op, "samples", "no samples"));
    }
    let n = samples.len() as f64;
    let (mut sum, mut sum_sq, mut slack, mut unstopped) = (0.0, 0.0, 0.0, 0usize);
    for s in samples {
        let (v, extra) = f(s);
        sum += v;
        sum_sq += v * v;
        slack += extra;
        if !s.stopped {
            unstopped += 1;
        }
    }
    let mean = sum / n;
    let var = if samples.len() > 1 {
        ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(Estimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
        lower: mean,
        upper: mean + slack / n,
        n: samples.len(),
        unstopped_fraction: unstopped as f64 / n,
    })
}

/// Estimate of `P(M_τ > y)`.
pub fn estimate_tail(samples: &[PathSample], y: f64) -> Result<Estimate> {
    summarize(samples, "estimate_tail", |s| match (s.stopped, s.m_tau_hat > y) {
        (true, hit) => (f64::from(u8::from(hit)), 0.0),
        // The maximum can only grow, so an unstopped path already above y
        // counts in full.
        (false, true) => (1.0, 0.0),
        (false, false) => (0.0, 1.0),
    })
}

/// Estimate of `E[e^{−ατ − βM_τ}; τ < ∞]`.
pub fn estimate_transform(samples: &[PathSample], alpha: f64, beta: f64) -> Result<Estimate> {
    summarize(samples, "estimate_transform", |s| {
        let w = (-alpha * s.tau_hat - beta * s.m_tau_hat).exp();
        if s.stopped {
            (w, 0.0)
        } else {
            (0.0, w)
        }
    })
}

/// Estimate of `P(τ ≤ t)`.
pub fn estimate_cdf(samples: &[PathSample], t: f64) -> Result<Estimate> {
    summarize(samples, "estimate_cdf", |s| match (s.stopped, s.tau_hat <= t) {
        (true, within) => (f64::from(u8::from(within)), 0.0),
        (false, true) => (0.0, 1.0),
        (false, false) => (0.0, 0.0),
    })
}

pub fn unstopped_fraction(samples: &[PathSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().filter(|s| !s.stopped).count() as f64 / samples.len() as f64
}

/// Raw samples as CSV with columns `path_id, stopped, tau_hat, m_tau_hat`.
pub fn samples_to_csv(samples: &[PathSample]) -> String {
    let mut out = String::from("path_id,stopped,tau_hat,m_tau_hat\n");
    for s in samples {
        out.push_str(&format!("{},{},{:.16e},{:.16e}\n", s.path_id, s.stopped, s.tau_hat, s.m_tau_hat));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: u64, stopped: bool, tau: f64, m: f64) -> PathSample {
        PathSample {
            path_id: id,
            stopped,
            tau_hat: tau,
            m_tau_hat: m,
            excursions: Vec::new(),
        }
    }

    #[test]
    fn degenerate_estimates() {
        let s: Vec<_> = (0..10).map(|i| sample(i, true, 1.0, 3.0)).collect();
        let e = estimate_tail(&s, 2.0).unwrap();
        assert_eq!((e.estimate, e.std_error), (1.0, 0.0));
        let e = estimate_transform(&s, 0.0, 0.0).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert!(estimate_tail(&[], 1.0).is_err());
    }

    #[test]
    fn unstopped_paths_widen_bounds() {
        let s = vec![sample(0, true, 1.0, 0.5), sample(1, false, 10.0, 0.2)];
        let e = estimate_transform(&s, 0.1, 0.0).unwrap();
        assert!((e.estimate - 0.5 * (-0.1f64).exp()).abs() < 1e-15);
        assert!((e.upper - e.lower - 0.5 * (-1f64).exp()).abs() < 1e-15);
        assert_eq!(e.unstopped_fraction, 0.5);
        let t = estimate_tail(&s, 0.3).unwrap();
        assert_eq!((t.lower, t.upper), (0.5, 1.0));
    }

    #[test]
    fn csv_uses_full_precision() {
        let csv = samples_to_csv(&[sample(3, true, 0.1, 1.0 / 3.0)]);
        assert_eq!(
            csv,
            "path_id,stopped,tau_hat,m_tau_hat\n3,true,1.0000000000000001e-1,3.3333333333333331e-1\n"
        );
    }
}
