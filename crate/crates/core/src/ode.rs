//! Dormand–Prince 5(4) integrator for small fixed-size systems.
//!
//! Used for the eigenvalue ODE on short subintervals and, with a fallible
//! right-hand side, for cumulative integrals whose integrand is itself the
//! output of an ODE solve.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Initial step; estimated from the right-hand side when `None`.
    pub initial_step: Option<f64>,
    /// Upper bound on any step.
    pub max_step: Option<f64>,
}

impl StepControl {
    pub fn new(rel_tol: f64, abs_tol: f64, max_steps: usize) -> Self {
        Self {
            rel_tol,
            abs_tol,
            max_steps,
            initial_step: None,
            max_step: None,
        }
    }
}

/// What the per-step hook asks the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum After {
    Continue,
    /// The hook rewrote the state; derivative caches must be refreshed.
    Modified,
    Stop,
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome<const N: usize> {
    pub x: f64,
    pub y: [f64; N],
    pub steps: usize,
    pub evaluations: usize,
    /// Sum of the magnitudes of accepted local error estimates.
    pub local_error: [f64; N],
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

fn error_norm<const N: usize>(err: &[f64; N], y0: &[f64; N], y1: &[f64; N], ctl: &StepControl) -> f64 {
    let mut sum = 0.0;
    for i in 0..N {
        let scale = ctl.abs_tol + ctl.rel_tol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / scale;
        sum += r * r;
    }
    (sum / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(f: &mut F, x0: f64, y0: &[f64; N], f0: &[f64; N], span: f64, ctl: &StepControl) -> Result<f64>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let zero = [0.0; N];
    let d0 = error_norm(y0, &zero, &zero, ctl);
    let d1 = error_norm(f0, &zero, &zero, ctl);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * span.max(1e-300) } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1 = axpy(y0, h0, &[(1.0, f0)]);
    let f1 = f(x0 + h0, &y1)?;
    let mut diff = [0.0; N];
    for i in 0..N {
        diff[i] = f1[i] - f0[i];
    }
    let d2 = error_norm(&diff, &zero, &zero, ctl) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Integrates `y' = f(x, y)` from `x0` to `x1 >= x0`.
///
/// `hook` runs after every accepted step and may rescale the state in place
/// (returning [`After::Modified`]) or end the integration early.
pub fn integrate<const N: usize, F, H>(
    mut f: F,
    x0: f64,
    y0: [f64; N],
    x1: f64,
    ctl: &StepControl,
    mut hook: H,
) -> Result<Outcome<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    H: FnMut(f64, &mut [f64; N]) -> Result<After>,
{
    let span = x1 - x0;
    let mut out = Outcome {
        x: x0,
        y: y0,
        steps: 0,
        evaluations: 0,
        local_error: [0.0; N],
    };
    if span < 0.0 || !span.is_finite() {
        return Err(Error::Solver {
            module: "ode",
            op: "integrate",
            at: x0,
            reason: format!("invalid integration span [{x0}, {x1}]"),
        });
    }
    if span == 0.0 {
        return Ok(out);
    }

    let mut k1 = f(x0, &y0)?;
    out.evaluations += 1;
    let mut h = match ctl.initial_step {
        Some(h) => h.min(span),
        None => {
            out.evaluations += 1;
            initial_step(&mut f, x0, &y0, &k1, span, ctl)?
        }
    };
    if let Some(hmax) = ctl.max_step {
        h = h.min(hmax);
    }
    let mut x = x0;
    let mut y = y0;
    let mut rejected_last = false;

    loop {
        if out.steps >= ctl.max_steps {
            return Err(Error::Solver {
                module: "ode",
                op: "integrate",
                at: x,
                reason: format!("exceeded {} steps", ctl.max_steps),
            });
        }
        let remaining = x1 - x;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 1e-14 * x.abs().max(span) {
            return Err(Error::Solver {
                module: "ode",
                op: "integrate",
                at: x,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }

        let k2 = f(x + C2 * h, &axpy(&y, h, &[(A21, &k1)]))?;
        let k3 = f(x + C3 * h, &axpy(&y, h, &[(A31, &k1), (A32, &k2)]))?;
        let k4 = f(x + C4 * h, &axpy(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]))?;
        let k5 = f(
            x + C5 * h,
            &axpy(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        )?;
        let k6 = f(
            x + h,
            &axpy(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        )?;
        let x_new = if last { x1 } else { x + h };
        let y_new = axpy(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(x_new, &y_new)?;
        out.evaluations += 6;

        let mut err = [0.0; N];
        for i in 0..N {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let norm = error_norm(&err, &y, &y_new, ctl);
        if !norm.is_finite() {
            h *= 0.2;
            rejected_last = true;
            continue;
        }

        if norm <= 1.0 {
            out.steps += 1;
            for (acc, e) in out.local_error.iter_mut().zip(&err) {
                *acc += e.abs();
            }
            x = x_new;
            y = y_new;
            k1 = k7;
            let mut grow = if norm == 0.0 { 5.0 } else { (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0) };
            if rejected_last {
                grow = grow.min(1.0);
            }
            rejected_last = false;
            h *= grow;
            if let Some(hmax) = ctl.max_step {
                h = h.min(hmax);
            }

            match hook(x, &mut y)? {
                After::Continue => {}
                After::Modified => {
                    k1 = f(x, &y)?;
                    out.evaluations += 1;
                }
                After::Stop => break,
            }
            if last {
                break;
            }
        } else {
            h *= (0.9 * norm.powf(-0.2)).clamp(0.2, 1.0);
            rejected_last = true;
        }
    }

    out.x = x;
    out.y = y;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_hook<const N: usize>(_: f64, _: &mut [f64; N]) -> Result<After> {
        Ok(After::Continue)
    }

    #[test]
    fn exponential_growth_to_tight_tolerance() {
        let ctl = StepControl::new(1e-12, 1e-12, 100_000);
        let out = integrate(|_, y: &[f64; 1]| Ok([y[0]]), 0.0, [1.0], 3.0, &ctl, no_hook).unwrap();
        let exact = 3f64.exp();
        assert!((out.y[0] - exact).abs() < 1e-10 * exact, "{} vs {}", out.y[0], exact);
        assert_eq!(out.x, 3.0);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let ctl = StepControl::new(1e-11, 1e-11, 100_000);
        let tau = 2.0 * std::f64::consts::PI;
        let out = integrate(|_, y: &[f64; 2]| Ok([y[1], -y[0]]), 0.0, [1.0, 0.0], tau, &ctl, no_hook).unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-9);
        assert!(out.y[1].abs() < 1e-9);
    }

    #[test]
    fn hook_can_stop_and_rescale() {
        let ctl = StepControl::new(1e-10, 1e-10, 100_000);
        let mut log_scale = 0.0;
        let out = integrate(
            |_, y: &[f64; 1]| Ok([10.0 * y[0]]),
            0.0,
            [1.0],
            50.0,
            &ctl,
            |_, y: &mut [f64; 1]| {
                if y[0].abs() > 1e10 {
                    log_scale += y[0].abs().ln();
                    y[0] = y[0].signum();
                    return Ok(After::Modified);
                }
                Ok(After::Continue)
            },
        )
        .unwrap();
        let total = log_scale + out.y[0].ln();
        assert!((total - 500.0).abs() < 1e-7 * 500.0);

        let out = integrate(
            |_, _y: &[f64; 1]| Ok([1.0]),
            0.0,
            [0.0],
            10.0,
            &ctl,
            |_, y: &mut [f64; 1]| Ok(if y[0] > 2.0 { After::Stop } else { After::Continue }),
        )
        .unwrap();
        assert!(out.x < 10.0 && out.y[0] > 2.0);
    }

    #[test]
    fn rhs_errors_propagate() {
        let ctl = StepControl::new(1e-8, 1e-8, 1000);
        let r = integrate(
            |x, _y: &[f64; 1]| {
                if x > 0.5 {
                    Err(Error::domain("test", "rhs", x, "outside"))
                } else {
                    Ok([1.0])
                }
            },
            0.0,
            [0.0],
            1.0,
            &ctl,
            no_hook,
        );
        assert!(matches!(r, Err(Error::Domain { .. })));
    }
}
