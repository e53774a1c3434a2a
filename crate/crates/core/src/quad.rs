//! Adaptive Gauss–Kronrod quadrature on finite intervals.
//!
//! A 7-point Gauss rule embedded in a 15-point Kronrod rule gives both the
//! panel value and its error estimate. The interval with the largest error
//! is bisected until the global estimate meets `max(abs_tol, rel_tol·|I|)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 1e-12,
            max_subdivisions: 2000,
        }
    }
}

impl QuadSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            abs_tol: tol,
            rel_tol: tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadEstimate {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F>(f: &mut F, lo: f64, hi: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                module: "quad",
                op: "integrate",
                at: x,
                value: v,
            });
        }
        Ok(v)
    };

    let fc = eval(center)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs_sum = WGK[7] * fc.abs();
    for (j, (&node, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * node;
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        kronrod += wk * (f1 + f2);
        abs_sum += wk * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }

    let value = kronrod * half;
    let roundoff = 50.0 * f64::EPSILON * abs_sum * half.abs();
    let error = ((kronrod - gauss) * half).abs().max(roundoff);
    Ok(Panel {
        lo,
        hi,
        value,
        error,
    })
}

/// Integrates a fallible integrand over `[a, b]`; `a > b` flips the sign.
///
/// The first integrand error aborts the integration and is returned as-is.
pub fn integrate<F>(mut f: F, a: f64, b: f64, settings: QuadSettings) -> Result<QuadEstimate>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(
            "quad",
            "integrate",
            "interval",
            format!("endpoints must be finite, got [{a}, {b}]"),
        ));
    }
    if a == b {
        return Ok(QuadEstimate {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let r = integrate(f, b, a, settings)?;
        return Ok(QuadEstimate {
            value: -r.value,
            ..r
        });
    }

    let mut heap = BinaryHeap::new();
    let first = kronrod15(&mut f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    heap.push(first);
    let mut evaluations = 15;

    loop {
        let target = settings.abs_tol.max(settings.rel_tol * total.abs());
        if total_err <= target {
            break;
        }
        if heap.len() >= settings.max_subdivisions {
            return Err(Error::Quadrature {
                module: "quad",
                op: "integrate",
                lo: a,
                hi: b,
                partial: total,
                abs_error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Panel cannot be split further in floating point.
            return Err(Error::Quadrature {
                module: "quad",
                op: "integrate",
                lo: a,
                hi: b,
                partial: total,
                abs_error: total_err,
            });
        }
        let left = kronrod15(&mut f, worst.lo, mid)?;
        let right = kronrod15(&mut f, mid, worst.hi)?;
        evaluations += 30;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }

    // Re-sum to shed the drift of the incremental updates.
    let mut panels = heap.into_vec();
    panels.sort_by(|p, q| p.lo.total_cmp(&q.lo));
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut err = 0.0;
    for p in &panels {
        let t = sum + p.value;
        comp += if sum.abs() >= p.value.abs() {
            (sum - t) + p.value
        } else {
            (p.value - t) + sum
        };
        sum = t;
        err += p.error;
    }
    Ok(QuadEstimate {
        value: sum + comp,
        abs_error: err,
        evaluations,
    })
}

/// Convenience wrapper for infallible integrands.
pub fn integrate_plain<F>(mut f: F, a: f64, b: f64, settings: QuadSettings) -> Result<QuadEstimate>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| Ok(f(x)), a, b, settings)
}
