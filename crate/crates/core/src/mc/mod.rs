//! Monte Carlo oracle for the drawdown laws.
//!
//! Paths run on a fixed grid and stop at the first step where the drawdown
//! from the running maximum reaches `δ`. Within each step the path is
//! treated as a Brownian bridge: the probability that the bridge dipped to
//! the drawdown level decides stopping, and a sampled bridge maximum updates
//! `M`. Models with a Brownian image (BM, drifted BM, GBM via `ln x`) use
//! exact increments; the rest use Euler steps with the coefficients frozen
//! over the step.
//!
//! Each path draws from two ChaCha8 streams keyed by `(seed, path)`, one for
//! normals and one for uniforms, so results do not depend on scheduling.

mod estimate;
mod excursions;

pub use estimate::{
    estimate_cdf, estimate_tail, estimate_transform, samples_to_csv, unstopped_fraction, Estimate,
};
pub use excursions::{extract_excursions, poisson_summary, simulate_excursions, PoissonSummary};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BmMap, DiffusionModel};
use crate::scale;

const MODULE: &str = "mc-oracle";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Euler,
    ExactBm,
}

fn default_n_paths() -> usize {
    100_000
}

fn default_t_max() -> f64 {
    50.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Time step; chosen by [`choose_dt`] when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `exact_bm` when the model allows it.
    #[serde(default)]
    pub scheme: Option<Scheme>,
}

impl McConfig {
    pub fn new(n_paths: usize, dt: f64, t_max: f64, seed: u64) -> Self {
        Self {
            n_paths,
            dt: Some(dt),
            t_max,
            seed,
            scheme: None,
        }
    }

    pub fn with_scheme(self, scheme: Scheme) -> Self {
        Self {
            scheme: Some(scheme),
            ..self
        }
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt: Some(dt), ..self }
    }

    pub fn validate(&self, model: &DiffusionModel, delta: f64) -> Result<()> {
        if self.n_paths < 1000 {
            return Err(Error::invalid(MODULE, "simulate", "n_paths", format!("must be at least 1000, got {}", self.n_paths)));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::invalid(MODULE, "simulate", "dt", format!("must be positive, got {dt}")));
            }
            if dt > delta * delta / 100.0 * (1.0 + 1e-12) {
                return Err(Error::invalid(
                    MODULE,
                    "simulate",
                    "dt",
                    format!("{dt} exceeds the resolution guard δ²/100 = {}", delta * delta / 100.0),
                ));
            }
            if self.t_max / dt > 1e9 {
                return Err(Error::invalid(MODULE, "simulate", "dt", "more than 1e9 steps per path"));
            }
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::invalid(MODULE, "simulate", "t_max", format!("must be positive, got {}", self.t_max)));
        }
        if self.scheme == Some(Scheme::ExactBm) && model.bm_image().is_none() {
            return Err(Error::invalid(
                MODULE,
                "simulate",
                "scheme",
                format!("exact_bm needs a Brownian image; model '{}' has none", model.id()),
            ));
        }
        Ok(())
    }

    fn step(&self, delta: f64) -> f64 {
        self.dt.unwrap_or(delta * delta / 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcursionRecord {
    /// Running maximum while the excursion lasts.
    pub level: f64,
    /// Largest observed distance below `level`.
    pub depth: f64,
    /// Time from the excursion's start until it was recorded.
    pub lifetime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub path_id: u64,
    pub stopped: bool,
    /// Drawdown time, or the time the path ended unstopped.
    pub tau_hat: f64,
    /// Running maximum at `tau_hat`.
    pub m_tau_hat: f64,
    pub excursions: Vec<ExcursionRecord>,
}

/// Per-step dynamics in the coordinate `w` where bridges are taken.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Dynamics<'a> {
    model: &'a DiffusionModel,
    map: BmMap,
    exact: Option<(f64, f64)>,
}

impl<'a> Dynamics<'a> {
    pub(crate) fn new(model: &'a DiffusionModel, scheme: Option<Scheme>) -> Self {
        let image = model.bm_image();
        match (scheme, image) {
            (Some(Scheme::Euler), _) | (_, None) => Self {
                model,
                map: BmMap::Identity,
                exact: None,
            },
            (_, Some(img)) => Self {
                model,
                map: img.map,
                exact: Some((img.drift, img.sigma)),
            },
        }
    }

    #[inline]
    fn bm_coord(&self, x: f64) -> f64 {
        self.map.to_bm(x)
    }

    #[inline]
    fn state_coord(&self, w: f64) -> f64 {
        self.map.from_bm(w)
    }

    #[inline]
    fn coefficients(&self, w: f64) -> (f64, f64) {
        match self.exact {
            Some(c) => c,
            None => (self.model.drift(w), self.model.diffusion_sq(w).max(0.0).sqrt()),
        }
    }

    fn lower_w(&self) -> f64 {
        match self.map {
            BmMap::Identity => self.model.lower(),
            BmMap::Log => f64::NEG_INFINITY,
        }
    }

    fn upper_w(&self) -> f64 {
        self.bm_coord(self.model.upper())
    }
}

pub(crate) struct Streams {
    normal: ChaCha8Rng,
    uniform: ChaCha8Rng,
}

impl Streams {
    pub(crate) fn new(seed: u64, path: u64) -> Self {
        let mut normal = ChaCha8Rng::seed_from_u64(seed);
        normal.set_stream(2 * path);
        let mut uniform = ChaCha8Rng::seed_from_u64(seed);
        uniform.set_stream(2 * path + 1);
        Self { normal, uniform }
    }

    #[inline]
    fn normal(&mut self) -> f64 {
        self.normal.sample(StandardNormal)
    }

    /// Uniform on `]0, 1]`, safe for logarithms.
    #[inline]
    fn uniform(&mut self) -> f64 {
        1.0 - self.uniform.random::<f64>()
    }
}

/// How a path ends.
pub(crate) enum Mode<'a> {
    /// At the first δ-drawdown.
    Stop,
    /// Once the maximum exceeds `y_top`; δ-deep excursions below are
    /// recorded and the path restarts from its maximum with probability
    /// `return_prob(level)`.
    Excursions {
        y_top: f64,
        return_prob: &'a (dyn Fn(f64) -> Result<f64> + Sync),
    },
}

pub(crate) struct PathParams<'a> {
    pub dynamics: Dynamics<'a>,
    pub x: f64,
    pub delta: f64,
    pub dt: f64,
    pub t_max: f64,
    /// Normals per step; the increment uses their normalised sum, which
    /// couples a coarse path to the fine path drawn from the same stream.
    pub substeps: usize,
}

pub(crate) fn run_path(p: &PathParams, mode: &Mode, streams: &mut Streams, path_id: u64) -> Result<PathSample> {
    let dynm = &p.dynamics;
    let n_steps = (p.t_max / p.dt).ceil() as u64;
    let sqrt_dt = p.dt.sqrt();
    let norm = (p.substeps as f64).sqrt().recip();
    let (lower_w, upper_w) = (dynm.lower_w(), dynm.upper_w());

    let mut w = dynm.bm_coord(p.x);
    let mut m = p.x;
    let mut level_w = dynm.bm_coord(m - p.delta);
    let mut excursions = Vec::new();
    let mut excursion_start = 0.0;
    let mut depth = 0.0f64;

    let mut k = 0u64;
    while k < n_steps {
        let mut z = 0.0;
        for _ in 0..p.substeps {
            z += streams.normal();
        }
        z *= norm;
        let (mu, sigma) = dynm.coefficients(w);
        let w_new = w + mu * p.dt + sigma * sqrt_dt * z;
        let s2 = sigma * sigma * p.dt;
        k += 1;
        let t = k as f64 * p.dt;

        if w_new >= upper_w {
            return Ok(PathSample {
                path_id,
                stopped: false,
                tau_hat: t,
                m_tau_hat: m,
                excursions,
            });
        }

        let hit = w_new <= level_w || w_new <= lower_w || {
            let expo = 2.0 * (w - level_w) * (w_new - level_w) / s2;
            expo < 20.0 && streams.uniform() < (-expo).exp()
        };
        if hit {
            match mode {
                Mode::Stop => {
                    return Ok(PathSample {
                        path_id,
                        stopped: true,
                        tau_hat: t,
                        m_tau_hat: m,
                        excursions,
                    })
                }
                Mode::Excursions { return_prob, .. } => {
                    excursions.push(ExcursionRecord {
                        level: m,
                        depth: depth.max(m - dynm.state_coord(w_new)).max(p.delta),
                        lifetime: t - excursion_start,
                    });
                    let q = return_prob(m)?;
                    if q < 1.0 && streams.uniform() > q {
                        return Ok(PathSample {
                            path_id,
                            stopped: false,
                            tau_hat: t,
                            m_tau_hat: m,
                            excursions,
                        });
                    }
                    w = dynm.bm_coord(m);
                    excursion_start = t;
                    depth = 0.0;
                    continue;
                }
            }
        }

        // Bridge maximum: (a + b + √((b − a)² − 2s² ln U)) / 2.
        let hi = w.max(w_new);
        let m_w = dynm.bm_coord(m);
        if hi >= m_w || (m_w - w) * (m_w - w_new) < 20.0 * s2 {
            let u = streams.uniform();
            let d = w_new - w;
            let bridge_max = 0.5 * (w + w_new + (d * d - 2.0 * s2 * u.ln()).sqrt());
            if bridge_max > m_w {
                m = dynm.state_coord(bridge_max);
                level_w = dynm.bm_coord(m - p.delta);
                excursion_start = t;
                depth = 0.0;
            }
        }
        w = w_new;
        depth = depth.max(m - dynm.state_coord(w));
        if let Mode::Excursions { y_top, .. } = mode {
            if m > *y_top {
                return Ok(PathSample {
                    path_id,
                    stopped: false,
                    tau_hat: t,
                    m_tau_hat: m,
                    excursions,
                });
            }
        }
    }
    Ok(PathSample {
        path_id,
        stopped: false,
        tau_hat: n_steps as f64 * p.dt,
        m_tau_hat: m,
        excursions,
    })
}

fn check_start(model: &DiffusionModel, x: f64, delta: f64) -> Result<()> {
    scale::validate_query(model, x, delta).map_err(|e| match e {
        Error::Domain { value, reason, .. } => Error::Domain {
            module: MODULE,
            op: "simulate",
            value,
            reason,
        },
        other => other,
    })
}

fn run_all(
    model: &DiffusionModel,
    x: f64,
    delta: f64,
    cfg: &McConfig,
    dt: f64,
    substeps: usize,
    mode: &Mode,
) -> Result<Vec<PathSample>> {
    let params = PathParams {
        dynamics: Dynamics::new(model, cfg.scheme),
        x,
        delta,
        dt,
        t_max: cfg.t_max,
        substeps,
    };
    (0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|i| run_path(&params, mode, &mut Streams::new(cfg.seed, i), i))
        .collect()
}

/// Simulates `cfg.n_paths` paths from `x`, each stopped at its first
/// δ-drawdown or at `t_max`.
pub fn simulate(model: &DiffusionModel, x: f64, delta: f64, cfg: &McConfig) -> Result<Vec<PathSample>> {
    check_start(model, x, delta)?;
    cfg.validate(model, delta)?;
    run_all(model, x, delta, cfg, cfg.step(delta), 1, &Mode::Stop)
}

/// Runs the coarse path at `2·dt` built from the same normals as the fine
/// path at `dt`, returning `(coarse, fine)`.
pub fn simulate_pair(
    model: &DiffusionModel,
    x: f64,
    delta: f64,
    cfg: &McConfig,
) -> Result<(Vec<PathSample>, Vec<PathSample>)> {
    check_start(model, x, delta)?;
    cfg.validate(model, delta)?;
    let dt = cfg.step(delta);
    let coarse_cfg = cfg.with_dt(2.0 * dt);
    let coarse = run_all(model, x, delta, &coarse_cfg, 2.0 * dt, 2, &Mode::Stop)?;
    let fine = run_all(model, x, delta, cfg, dt, 1, &Mode::Stop)?;
    Ok((coarse, fine))
}

/// A quantity whose estimate must be stable under step halving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Probe {
    Tail { y: f64 },
    Transform { alpha: f64, beta: f64 },
    Cdf { t: f64 },
}

impl Probe {
    pub fn estimate(&self, samples: &[PathSample]) -> Result<Estimate> {
        match *self {
            Probe::Tail { y } => estimate_tail(samples, y),
            Probe::Transform { alpha, beta } => estimate_transform(samples, alpha, beta),
            Probe::Cdf { t } => estimate_cdf(samples, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DtRound {
    pub dt: f64,
    /// Largest `|fine − coarse| / SE(fine)` over the probes.
    pub max_shift: f64,
}

#[derive(Debug, Clone)]
pub struct DtChoice {
    pub dt: f64,
    pub converged: bool,
    pub rounds: Vec<DtRound>,
    /// Paths simulated at the chosen `dt`.
    pub samples: Vec<PathSample>,
}

/// Halves the step from `δ²/100` (or `cfg.dt`) until halving moves every
/// probe by less than one standard error, and returns the fine-step samples
/// of the final pair.
pub fn choose_dt(
    model: &DiffusionModel,
    x: f64,
    delta: f64,
    cfg: &McConfig,
    probes: &[Probe],
    max_halvings: usize,
) -> Result<DtChoice> {
    let mut dt = cfg.step(delta) / 2.0;
    let mut rounds = Vec::new();
    loop {
        let (coarse, fine) = simulate_pair(model, x, delta, &cfg.with_dt(dt))?;
        let mut max_shift = 0.0f64;
        for p in probes {
            let f = p.estimate(&fine)?;
            let c = p.estimate(&coarse)?;
            let se = f.std_error.max(1e-300);
            max_shift = max_shift.max((f.estimate - c.estimate).abs() / se);
        }
        rounds.push(DtRound { dt, max_shift });
        let converged = max_shift < 1.0;
        if converged || rounds.len() > max_halvings {
            return Ok(DtChoice {
                dt,
                converged,
                rounds,
                samples: fine,
            });
        }
        dt /= 2.0;
    }
}
