//! Diffusion models: coefficients, state interval and the closed forms
//! attached to the catalog models.
//!
//! A model is the SDE `dX = μ(X) dt + σ(X) dW` on an interval `]A, B[`
//! (optionally including a regular, non-trap lower endpoint `A`). The upper
//! endpoint `B` never belongs to the state space.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

const MODULE: &str = "diffusion-core";

/// Coefficient functions built from a fixed menu of forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Coefficient {
    /// `Σ c_k x^k`, lowest degree first.
    Polynomial { coefficients: Vec<f64> },
    /// `scale · x^exponent` (positive `x` only when the exponent is fractional).
    Power { scale: f64, exponent: f64 },
}

impl Coefficient {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Coefficient::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            Coefficient::Power { scale, exponent } => {
                if *exponent == 2.0 {
                    scale * x * x
                } else {
                    scale * x.powf(*exponent)
                }
            }
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Coefficient::Polynomial { coefficients } => coefficients.iter().all(|c| c.is_finite()),
            Coefficient::Power { scale, exponent } => scale.is_finite() && exponent.is_finite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelKind {
    /// `σ W`.
    Brownian { sigma: f64 },
    /// `μ t + σ W`.
    DriftedBrownian { mu: f64, sigma: f64 },
    /// `dX = μ X dt + σ X dW` on `]0, ∞[`.
    Geometric { mu: f64, sigma: f64 },
    /// `dX = θ (m − X) dt + σ dW`.
    OrnsteinUhlenbeck { theta: f64, mean: f64, sigma: f64 },
    Custom { drift: Coefficient, diffusion_sq: Coefficient },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Brownian { .. } => "bm",
            ModelKind::DriftedBrownian { .. } => "drifted_bm",
            ModelKind::Geometric { .. } => "gbm",
            ModelKind::OrnsteinUhlenbeck { .. } => "ou",
            ModelKind::Custom { .. } => "custom",
        }
    }
}

/// Coordinate in which a model is a Brownian motion with constant drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BmMap {
    Identity,
    Log,
}

impl BmMap {
    #[inline]
    pub fn to_bm(self, x: f64) -> f64 {
        match self {
            BmMap::Identity => x,
            BmMap::Log => x.ln(),
        }
    }

    #[inline]
    pub fn from_bm(self, w: f64) -> f64 {
        match self {
            BmMap::Identity => w,
            BmMap::Log => w.exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BmImage {
    pub map: BmMap,
    pub drift: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionModel {
    id: String,
    kind: ModelKind,
    lower: f64,
    upper: f64,
    lower_in_state_space: bool,
    scale_ref: f64,
}

impl DiffusionModel {
    pub fn brownian(sigma: f64) -> Result<Self> {
        Self::new("bm", ModelKind::Brownian { sigma }, f64::NEG_INFINITY, f64::INFINITY, false, 0.0)
    }

    pub fn drifted_brownian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(
            "drifted_bm",
            ModelKind::DriftedBrownian { mu, sigma },
            f64::NEG_INFINITY,
            f64::INFINITY,
            false,
            0.0,
        )
    }

    pub fn geometric(mu: f64, sigma: f64) -> Result<Self> {
        Self::new("gbm", ModelKind::Geometric { mu, sigma }, 0.0, f64::INFINITY, false, 1.0)
    }

    pub fn ornstein_uhlenbeck(theta: f64, mean: f64, sigma: f64) -> Result<Self> {
        Self::new(
            "ou",
            ModelKind::OrnsteinUhlenbeck { theta, mean, sigma },
            f64::NEG_INFINITY,
            f64::INFINITY,
            false,
            mean,
        )
    }

    /// General constructor. `scale_ref` is the interior point where the
    /// scale density equals one.
    pub fn new(
        id: impl Into<String>,
        kind: ModelKind,
        lower: f64,
        upper: f64,
        lower_in_state_space: bool,
        scale_ref: f64,
    ) -> Result<Self> {
        let model = Self {
            id: id.into(),
            kind,
            lower,
            upper,
            lower_in_state_space,
            scale_ref,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_interval(self, lower: f64, upper: f64, lower_in_state_space: bool) -> Result<Self> {
        let scale_ref = if lower < self.scale_ref && self.scale_ref < upper {
            self.scale_ref
        } else {
            default_reference(lower, upper)
        };
        Self::new(self.id, self.kind, lower, upper, lower_in_state_space, scale_ref)
    }

    pub fn with_scale_ref(self, scale_ref: f64) -> Result<Self> {
        Self::new(self.id, self.kind, self.lower, self.upper, self.lower_in_state_space, scale_ref)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn lower_in_state_space(&self) -> bool {
        self.lower_in_state_space
    }

    pub fn scale_ref(&self) -> f64 {
        self.scale_ref
    }

    #[inline]
    pub fn is_interior(&self, x: f64) -> bool {
        self.lower < x && x < self.upper
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        match &self.kind {
            ModelKind::Brownian { .. } => 0.0,
            ModelKind::DriftedBrownian { mu, .. } => *mu,
            ModelKind::Geometric { mu, .. } => mu * x,
            ModelKind::OrnsteinUhlenbeck { theta, mean, .. } => theta * (mean - x),
            ModelKind::Custom { drift, .. } => drift.eval(x),
        }
    }

    #[inline]
    pub fn diffusion_sq(&self, x: f64) -> f64 {
        match &self.kind {
            ModelKind::Brownian { sigma }
            | ModelKind::DriftedBrownian { sigma, .. }
            | ModelKind::OrnsteinUhlenbeck { sigma, .. } => sigma * sigma,
            ModelKind::Geometric { sigma, .. } => sigma * sigma * x * x,
            ModelKind::Custom { diffusion_sq, .. } => diffusion_sq.eval(x),
        }
    }

    /// `2μ(x)/σ²(x)`, the logarithmic decay rate of the scale density.
    #[inline]
    pub fn scale_log_rate(&self, x: f64) -> f64 {
        2.0 * self.drift(x) / self.diffusion_sq(x)
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, reason: String| Err(Error::invalid(MODULE, "model", what.to_string(), reason));
        if self.lower.is_nan() || self.upper.is_nan() || self.lower >= self.upper {
            return bad("interval", format!("need A < B, got [{}, {}]", self.lower, self.upper));
        }
        if self.lower_in_state_space && !self.lower.is_finite() {
            return bad("interval", "an infinite lower endpoint cannot belong to the state space".into());
        }
        if !self.is_interior(self.scale_ref) {
            return bad(
                "scale_ref",
                format!("{} is not inside ]{}, {}[", self.scale_ref, self.lower, self.upper),
            );
        }
        match &self.kind {
            ModelKind::Brownian { sigma } => positive("sigma", *sigma)?,
            ModelKind::DriftedBrownian { mu, sigma } => {
                finite("mu", *mu)?;
                positive("sigma", *sigma)?;
            }
            ModelKind::Geometric { mu, sigma } => {
                finite("mu", *mu)?;
                positive("sigma", *sigma)?;
                if self.lower < 0.0 {
                    return bad("interval", "geometric Brownian motion lives on ]0, ∞[".into());
                }
            }
            ModelKind::OrnsteinUhlenbeck { theta, mean, sigma } => {
                finite("theta", *theta)?;
                finite("mean", *mean)?;
                positive("sigma", *sigma)?;
            }
            ModelKind::Custom { drift, diffusion_sq } => {
                if !drift.is_finite() || !diffusion_sq.is_finite() {
                    return bad("coefficients", "custom coefficients must be finite".into());
                }
            }
        }
        for x in self.sample_points(65) {
            let (mu, s2) = (self.drift(x), self.diffusion_sq(x));
            if !mu.is_finite() || !s2.is_finite() || s2 <= 0.0 {
                return bad(
                    "coefficients",
                    format!("need finite drift and positive diffusion at x = {x}, got μ = {mu}, σ² = {s2}"),
                );
            }
        }
        Ok(())
    }

    /// Interior points used to spot-check coefficient validity.
    pub fn sample_points(&self, n: usize) -> Vec<f64> {
        let (a, b) = (self.lower, self.upper);
        (1..=n)
            .map(|i| {
                let t = i as f64 / (n + 1) as f64;
                match (a.is_finite(), b.is_finite()) {
                    (true, true) => a + t * (b - a),
                    (true, false) => a + (self.scale_ref - a) * (t / (1.0 - t)) * 2.0,
                    (false, true) => b - (b - self.scale_ref) * ((1.0 - t) / t) * 2.0,
                    (false, false) => self.scale_ref + 20.0 * (2.0 * t - 1.0) / (1.0 - (2.0 * t - 1.0).abs()).max(0.05),
                }
            })
            .filter(|x| self.is_interior(*x))
            .collect()
    }

    /// Closed-form scale density normalised to one at `scale_ref`.
    pub fn closed_form_scale_density(&self, x: f64) -> Option<f64> {
        let r = self.scale_ref;
        match &self.kind {
            ModelKind::Brownian { .. } => Some(1.0),
            ModelKind::DriftedBrownian { mu, sigma } => Some((-2.0 * mu * (x - r) / (sigma * sigma)).exp()),
            ModelKind::Geometric { mu, sigma } => Some((x / r).powf(-2.0 * mu / (sigma * sigma))),
            ModelKind::OrnsteinUhlenbeck { theta, mean, sigma } => {
                Some((theta * ((x - mean).powi(2) - (r - mean).powi(2)) / (sigma * sigma)).exp())
            }
            ModelKind::Custom { .. } => None,
        }
    }

    /// Closed-form `S(x) − S(anchor)` when one exists.
    pub fn closed_form_scale(&self, x: f64, anchor: f64) -> Option<f64> {
        let r = self.scale_ref;
        match &self.kind {
            ModelKind::Brownian { .. } => Some(x - anchor),
            ModelKind::DriftedBrownian { mu, sigma } => {
                if *mu == 0.0 {
                    return Some(x - anchor);
                }
                let k = 2.0 * mu / (sigma * sigma);
                Some(((-k * (anchor - r)).exp() - (-k * (x - r)).exp()) / k)
            }
            ModelKind::Geometric { mu, sigma } => {
                let p = 2.0 * mu / (sigma * sigma);
                if (p - 1.0).abs() < 1e-14 {
                    Some(r * (x / anchor).ln())
                } else {
                    Some(r.powf(p) * (x.powf(1.0 - p) - anchor.powf(1.0 - p)) / (1.0 - p))
                }
            }
            _ => None,
        }
    }

    /// `S(A+) − S(anchor)` in closed form (possibly `−∞`).
    pub fn closed_form_scale_at_lower(&self, anchor: f64) -> Option<f64> {
        match &self.kind {
            ModelKind::Brownian { .. } | ModelKind::OrnsteinUhlenbeck { .. } => Some(f64::NEG_INFINITY),
            ModelKind::DriftedBrownian { mu, sigma } => {
                if *mu >= 0.0 && self.lower == f64::NEG_INFINITY {
                    return Some(f64::NEG_INFINITY);
                }
                let k = 2.0 * mu / (sigma * sigma);
                if self.lower == f64::NEG_INFINITY {
                    Some((-k * (anchor - self.scale_ref)).exp() / k)
                } else {
                    self.closed_form_scale(self.lower, anchor)
                }
            }
            ModelKind::Geometric { mu, sigma } => {
                let p = 2.0 * mu / (sigma * sigma);
                if self.lower > 0.0 {
                    self.closed_form_scale(self.lower, anchor)
                } else if p >= 1.0 {
                    Some(f64::NEG_INFINITY)
                } else {
                    self.closed_form_scale(0.0, anchor)
                }
            }
            ModelKind::Custom { .. } => None,
        }
    }

    /// `E^x[exp(−α T_y)]` from the closed-form increasing/decreasing
    /// eigenfunctions of the catalog models on their natural intervals.
    pub fn closed_form_hitting(&self, x: f64, y: f64, alpha: f64) -> Option<f64> {
        let natural = match &self.kind {
            ModelKind::Geometric { .. } => self.lower == 0.0 && self.upper == f64::INFINITY,
            _ => self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY,
        };
        if !natural {
            return None;
        }
        let up = x <= y;
        match &self.kind {
            ModelKind::Brownian { sigma } => {
                let k = (2.0 * alpha).sqrt() / sigma;
                Some(if up { (k * (x - y)).exp() } else { (-k * (x - y)).exp() })
            }
            ModelKind::DriftedBrownian { mu, sigma } => {
                let s2 = sigma * sigma;
                let root = (mu * mu + 2.0 * alpha * s2).sqrt();
                let gamma = if up { (-mu + root) / s2 } else { (-mu - root) / s2 };
                Some((gamma * (x - y)).exp())
            }
            ModelKind::Geometric { mu, sigma } => {
                let s2 = sigma * sigma;
                let a = mu - 0.5 * s2;
                let root = (a * a + 2.0 * alpha * s2).sqrt();
                let gamma = if up { (-a + root) / s2 } else { (-a - root) / s2 };
                Some((x / y).powf(gamma))
            }
            _ => None,
        }
    }

    /// Coordinates in which the model is Brownian motion with constant drift.
    pub fn bm_image(&self) -> Option<BmImage> {
        match &self.kind {
            ModelKind::Brownian { sigma } => Some(BmImage {
                map: BmMap::Identity,
                drift: 0.0,
                sigma: *sigma,
            }),
            ModelKind::DriftedBrownian { mu, sigma } => Some(BmImage {
                map: BmMap::Identity,
                drift: *mu,
                sigma: *sigma,
            }),
            ModelKind::Geometric { mu, sigma } => Some(BmImage {
                map: BmMap::Log,
                drift: mu - 0.5 * sigma * sigma,
                sigma: *sigma,
            }),
            _ => None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(MODULE, "model", name.to_string(), format!("must be positive and finite, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(MODULE, "model", name.to_string(), format!("must be finite, got {v}")))
    }
}

fn default_reference(lower: f64, upper: f64) -> f64 {
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => {
            if lower < 0.0 {
                0.0
            } else if lower == 0.0 {
                1.0
            } else {
                lower + 1.0
            }
        }
        (false, true) => {
            if upper > 0.0 {
                0.0
            } else {
                upper - 1.0
            }
        }
        (false, false) => 0.0,
    }
}

/// Interval endpoint as written in JSON: a number or `"-inf"`/`"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Number(f64),
    Text(String),
}

impl Endpoint {
    pub fn value(&self) -> Result<f64> {
        match self {
            Endpoint::Number(v) => Ok(*v),
            Endpoint::Text(s) => match s.trim() {
                "inf" | "+inf" | "infinity" => Ok(f64::INFINITY),
                "-inf" | "-infinity" => Ok(f64::NEG_INFINITY),
                other => other.parse::<f64>().map_err(|_| {
                    Error::invalid(MODULE, "model", "interval", format!("cannot read endpoint {other:?}"))
                }),
            },
        }
    }

    fn from_f64(v: f64) -> Self {
        if v == f64::INFINITY {
            Endpoint::Text("inf".into())
        } else if v == f64::NEG_INFINITY {
            Endpoint::Text("-inf".into())
        } else {
            Endpoint::Number(v)
        }
    }
}

/// Model document as exchanged in JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model_id: String,
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(default)]
    pub interval: Option<[Endpoint; 2]>,
    #[serde(default)]
    pub a_in_state_space: bool,
}

fn param(params: &Map<String, Value>, name: &str, default: Option<f64>) -> Result<f64> {
    match params.get(name) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::invalid(MODULE, "model", format!("params.{name}"), format!("expected a number, got {v}"))),
        None => default.ok_or_else(|| Error::invalid(MODULE, "model", format!("params.{name}"), "missing")),
    }
}

fn coefficient(params: &Map<String, Value>, name: &str) -> Result<Coefficient> {
    let v = params
        .get(name)
        .ok_or_else(|| Error::invalid(MODULE, "model", format!("params.{name}"), "missing"))?;
    serde_json::from_value(v.clone())
        .map_err(|e| Error::invalid(MODULE, "model", format!("params.{name}"), e.to_string()))
}

impl TryFrom<&ModelSpec> for DiffusionModel {
    type Error = Error;

    fn try_from(spec: &ModelSpec) -> Result<Self> {
        let p = &spec.params;
        let known: &[&str] = match spec.kind.as_str() {
            "bm" => &["sigma", "scale_ref"],
            "drifted_bm" => &["mu", "sigma", "scale_ref"],
            "gbm" => &["mu", "sigma", "scale_ref"],
            "ou" => &["theta", "mean", "sigma", "scale_ref"],
            "custom" => &["drift", "diffusion_sq", "scale_ref"],
            other => {
                return Err(Error::invalid(
                    MODULE,
                    "model",
                    "kind",
                    format!("unknown kind {other:?} (expected bm, drifted_bm, gbm, ou or custom)"),
                ))
            }
        };
        if let Some(extra) = p.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::invalid(MODULE, "model", format!("params.{extra}"), "unknown parameter"));
        }

        let mut model = match spec.kind.as_str() {
            "bm" => Self::brownian(param(p, "sigma", Some(1.0))?)?,
            "drifted_bm" => Self::drifted_brownian(param(p, "mu", None)?, param(p, "sigma", Some(1.0))?)?,
            "gbm" => Self::geometric(param(p, "mu", None)?, param(p, "sigma", None)?)?,
            "ou" => Self::ornstein_uhlenbeck(
                param(p, "theta", None)?,
                param(p, "mean", Some(0.0))?,
                param(p, "sigma", Some(1.0))?,
            )?,
            _ => {
                let kind = ModelKind::Custom {
                    drift: coefficient(p, "drift")?,
                    diffusion_sq: coefficient(p, "diffusion_sq")?,
                };
                let (lo, hi) = match &spec.interval {
                    Some([a, b]) => (a.value()?, b.value()?),
                    None => {
                        return Err(Error::invalid(MODULE, "model", "interval", "custom models need an interval"))
                    }
                };
                let r = match p.get("scale_ref") {
                    Some(_) => param(p, "scale_ref", None)?,
                    None => default_reference(lo, hi),
                };
                Self::new(spec.model_id.clone(), kind, lo, hi, spec.a_in_state_space, r)?
            }
        };
        if spec.kind != "custom" {
            if let Some([a, b]) = &spec.interval {
                model = model.with_interval(a.value()?, b.value()?, spec.a_in_state_space)?;
            } else if spec.a_in_state_space {
                let (lo, hi) = (model.lower, model.upper);
                model = model.with_interval(lo, hi, true)?;
            }
            if p.contains_key("scale_ref") {
                model = model.with_scale_ref(param(p, "scale_ref", None)?)?;
            }
        }
        Ok(model.with_id(spec.model_id.clone()))
    }
}

impl DiffusionModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| Error::invalid(MODULE, "model", "json", format!("{e} (line {}, column {})", e.line(), e.column())))?;
        Self::try_from(&spec)
    }

    pub fn to_spec(&self) -> ModelSpec {
        let mut params = Map::new();
        let mut put = |k: &str, v: f64| {
            params.insert(k.to_string(), Value::from(v));
        };
        match &self.kind {
            ModelKind::Brownian { sigma } => put("sigma", *sigma),
            ModelKind::DriftedBrownian { mu, sigma } | ModelKind::Geometric { mu, sigma } => {
                put("mu", *mu);
                put("sigma", *sigma);
            }
            ModelKind::OrnsteinUhlenbeck { theta, mean, sigma } => {
                put("theta", *theta);
                put("mean", *mean);
                put("sigma", *sigma);
            }
            ModelKind::Custom { drift, diffusion_sq } => {
                params.insert("drift".into(), serde_json::to_value(drift).expect("coefficient serializes"));
                params.insert(
                    "diffusion_sq".into(),
                    serde_json::to_value(diffusion_sq).expect("coefficient serializes"),
                );
            }
        }
        params.insert("scale_ref".into(), Value::from(self.scale_ref));
        ModelSpec {
            model_id: self.id.clone(),
            kind: self.kind.name().to_string(),
            params,
            interval: Some([Endpoint::from_f64(self.lower), Endpoint::from_f64(self.upper)]),
            a_in_state_space: self.lower_in_state_space,
        }
    }
}
