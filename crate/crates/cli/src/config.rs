use std::path::{Path, PathBuf};

use ddkit_core::mc::McConfig;
use ddkit_core::{DiffusionModel, DrawdownQuery, ModelSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub y_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub alpha_grid: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HitConfig {
    pub x: f64,
    #[serde(default)]
    pub alpha: f64,
    /// Level for `E^x[e^{−αT_y}]`.
    pub target: Option<f64>,
    /// Interval for the two-sided exit transform.
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub truncation: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub query: Option<DrawdownQuery>,
    #[serde(default)]
    pub grids: Grids,
    pub mc: Option<McConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    pub hit: Option<HitConfig>,
}

pub struct Loaded {
    pub model: DiffusionModel,
    pub config: RunConfig,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cli::run: cannot read config {}: {e}", path.display())))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Validation(format!(
            "cli::run: malformed config {} at line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
    })?;
    let present = [&config.grids.y_grid, &config.grids.t_grid, &config.grids.alpha_grid]
        .iter()
        .filter(|g| g.is_some())
        .count();
    if present > 1 {
        return Err(CliError::Validation(
            "cli::run: grids must contain at most one of y_grid, t_grid, alpha_grid".into(),
        ));
    }
    let model = DiffusionModel::try_from(&config.model)?;
    if let Some(q) = &config.query {
        q.validate(&model)?;
    }
    Ok(Loaded { model, config })
}

impl RunConfig {
    pub fn query(&self, command: &str) -> Result<DrawdownQuery, CliError> {
        self.query
            .ok_or_else(|| CliError::Validation(format!("cli::{command}: config needs a query {{x, delta, ...}}")))
    }

    pub fn grid<'a>(&'a self, command: &str, name: &str, grid: &'a Option<Vec<f64>>) -> Result<&'a [f64], CliError> {
        match grid {
            Some(g) if !g.is_empty() => Ok(g),
            _ => Err(CliError::Validation(format!("cli::{command}: config needs a non-empty grids.{name}"))),
        }
    }
}
