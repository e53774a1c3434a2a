use std::path::Path;

use ddkit_core::laws::{self, HitOptions};
use ddkit_core::mc::{self, McConfig};
use ddkit_core::verify::{self, VerifyPlan};
use serde::Serialize;

use crate::config::{Format, Loaded};
use crate::output::{emit, num, write_bytes, Table};
use crate::{CliError, Command};

pub fn run(command: Command, loaded: &Loaded, seed: Option<u64>, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    match command {
        Command::Tail | Command::Density => tail(command, loaded, format, out),
        Command::Transform => transform(loaded, format, out),
        Command::TauCdf => tau_cdf(loaded, format, out),
        Command::Hit => hit(loaded, format, out),
        Command::Simulate => simulate(loaded, seed, format, out),
        Command::Excursions => excursions(loaded, seed, format, out),
        Command::Verify => verify(loaded, seed, format, out),
    }
}

fn mc_config(loaded: &Loaded, seed: Option<u64>) -> McConfig {
    let mut cfg = loaded.config.mc.unwrap_or(McConfig {
        n_paths: 100_000,
        dt: None,
        t_max: 50.0,
        seed: 0,
        scheme: None,
    });
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg
}

fn tail(command: Command, loaded: &Loaded, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = &loaded.config;
    let name = if command == Command::Tail { "tail" } else { "density" };
    let query = c.query(name)?;
    let grid = c.grid(name, "y_grid", &c.grids.y_grid)?;
    let curve = laws::tail_curve(&loaded.model, &query, grid)?;
    let mut table = Table::new(vec!["y", name]);
    let values = if command == Command::Tail { &curve.tail } else { &curve.density };
    for (y, v) in curve.grid.iter().zip(values) {
        table.push(vec![num(*y), num(*v)]);
    }
    emit(&table, &curve, format, out)
}

#[derive(Serialize)]
struct TransformRow {
    alpha: f64,
    beta: f64,
    #[serde(flatten)]
    result: laws::TransformResult,
}

fn transform(loaded: &Loaded, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = &loaded.config;
    let query = c.query("transform")?;
    let grid = c.grid("transform", "alpha_grid", &c.grids.alpha_grid)?;
    let mut rows = Vec::new();
    let mut table = Table::new(vec!["alpha", "beta", "value", "abs_error_estimate", "truncation_point"]);
    for &alpha in grid {
        let r = laws::joint_transform(&loaded.model, &query.with_alpha(alpha))?;
        table.push(vec![num(alpha), num(query.beta), num(r.value), num(r.abs_error_estimate), num(r.truncation_point)]);
        rows.push(TransformRow {
            alpha,
            beta: query.beta,
            result: r,
        });
    }
    emit(&table, &rows, format, out)
}

fn tau_cdf(loaded: &Loaded, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = &loaded.config;
    let query = c.query("tau-cdf")?;
    let grid = c.grid("tau-cdf", "t_grid", &c.grids.t_grid)?;
    let r = laws::tau_cdf(&loaded.model, &query, grid)?;
    let mut table = Table::new(vec!["t", "cdf", "raw", "order", "gap", "unstable"]);
    for i in 0..r.t.len() {
        table.push(vec![
            num(r.t[i]),
            num(r.cdf[i]),
            num(r.raw[i]),
            r.order[i].to_string(),
            num(r.gap[i]),
            r.unstable[i].to_string(),
        ]);
    }
    if r.unstable.iter().any(|u| *u) {
        eprintln!("warning: inversion orders disagree by more than {:e} at some times", laws::inversion::INSTABILITY_GAP);
    }
    emit(&table, &r, format, out)
}

#[derive(Serialize)]
struct HitReport {
    x: f64,
    alpha: f64,
    target: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
    value: f64,
    method: String,
    truncation_sensitivity: Option<f64>,
}

fn hit(loaded: &Loaded, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let h = loaded
        .config
        .hit
        .as_ref()
        .ok_or_else(|| CliError::Validation("cli::hit: config needs a hit section".into()))?;
    let report = match (h.target, h.lower, h.upper) {
        (Some(y), None, None) => {
            let opts = HitOptions {
                truncation: h.truncation.map(|[a, b]| (a, b)),
                ..HitOptions::default()
            };
            let r = laws::hitting_laplace(&loaded.model, h.x, y, h.alpha, &opts)?;
            HitReport {
                x: h.x,
                alpha: h.alpha,
                target: Some(y),
                lower: None,
                upper: None,
                value: r.value,
                method: format!("{:?}", r.method).to_lowercase(),
                truncation_sensitivity: r.truncation_sensitivity,
            }
        }
        (None, Some(a), Some(b)) => HitReport {
            x: h.x,
            alpha: h.alpha,
            target: None,
            lower: Some(a),
            upper: Some(b),
            value: laws::exit_transform(&loaded.model, h.x, a, b, h.alpha)?,
            method: "exit".into(),
            truncation_sensitivity: None,
        },
        _ => {
            return Err(CliError::Validation(
                "cli::hit: give either hit.target or both hit.lower and hit.upper".into(),
            ))
        }
    };
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut table = Table::new(vec!["x", "alpha", "target", "lower", "upper", "value", "method", "truncation_sensitivity"]);
    table.push(vec![
        num(report.x),
        num(report.alpha),
        opt(report.target),
        opt(report.lower),
        opt(report.upper),
        num(report.value),
        report.method.clone(),
        opt(report.truncation_sensitivity),
    ]);
    emit(&table, &report, format, out)
}

#[derive(Serialize)]
struct SimulationReport {
    model_id: String,
    n_paths: usize,
    dt: f64,
    unstopped_fraction: f64,
    transform: mc::Estimate,
    tails: Vec<(f64, mc::Estimate)>,
}

fn simulate(loaded: &Loaded, seed: Option<u64>, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = &loaded.config;
    let query = c.query("simulate")?;
    let cfg = mc_config(loaded, seed);
    let dt = cfg.dt.unwrap_or(query.delta * query.delta / 100.0);
    let samples = mc::simulate(&loaded.model, query.x, query.delta, &cfg.with_dt(dt))?;
    let unstopped = mc::unstopped_fraction(&samples);
    if unstopped > verify::MAX_UNSTOPPED {
        eprintln!("warning: {:.2}% of paths did not stop before t_max", 100.0 * unstopped);
    }
    match format {
        Format::Csv => {
            write_bytes(mc::samples_to_csv(&samples).as_bytes(), out)
        }
        Format::Json => {
            let mut tails = Vec::new();
            for &y in c.grids.y_grid.as_deref().unwrap_or(&[]) {
                tails.push((y, mc::estimate_tail(&samples, y)?));
            }
            let report = SimulationReport {
                model_id: loaded.model.id().to_string(),
                n_paths: samples.len(),
                dt,
                unstopped_fraction: unstopped,
                transform: mc::estimate_transform(&samples, query.alpha, query.beta)?,
                tails,
            };
            emit(&Table::new(Vec::new()), &report, format, out)
        }
    }
}

#[derive(Serialize)]
struct ExcursionReport {
    band: (f64, f64),
    delta: f64,
    expected_mean: f64,
    #[serde(flatten)]
    summary: mc::PoissonSummary,
    z: f64,
    pass: bool,
}

fn excursions(loaded: &Loaded, seed: Option<u64>, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = &loaded.config;
    let query = c.query("excursions")?;
    let grid = c.grid("excursions", "y_grid", &c.grids.y_grid)?;
    let top = *grid.last().expect("grid is non-empty");
    let mut cfg = mc_config(loaded, seed);
    cfg.dt = Some(cfg.dt.unwrap_or(query.delta * query.delta / 400.0));
    if loaded.config.mc.is_none() {
        cfg.n_paths = 10_000;
        cfg.t_max = 1e4;
    }
    let paths = mc::simulate_excursions(&loaded.model, query.x, query.delta, top, &cfg)?;
    let band = (query.x, top);
    let counts: Vec<usize> = paths.iter().map(|p| mc::extract_excursions(p, query.delta, band)).collect();
    let summary = mc::poisson_summary(&counts)?;
    let expected_mean = -laws::max_tail(&loaded.model, &query, top)?.ln();
    let z = (summary.mean - expected_mean) / (expected_mean / summary.n as f64).sqrt();
    let pass = z.abs() <= verify::Z_LIMIT && (0.9..=1.1).contains(&summary.dispersion);
    let report = ExcursionReport {
        band,
        delta: query.delta,
        expected_mean,
        summary,
        z,
        pass,
    };
    let mut table = Table::new(vec!["lo", "hi", "n", "expected_mean", "mean", "variance", "dispersion", "z", "pass"]);
    table.push(vec![
        num(band.0),
        num(band.1),
        summary.n.to_string(),
        num(expected_mean),
        num(summary.mean),
        num(summary.variance),
        num(summary.dispersion),
        num(z),
        pass.to_string(),
    ]);
    emit(&table, &report, format, out)
}

fn verify(loaded: &Loaded, seed: Option<u64>, format: Format, out: Option<&Path>) -> Result<(), CliError> {
    let c = &loaded.config;
    let query = c.query("verify")?;
    let mut plan = VerifyPlan::default_for(query.x, query.delta, mc_config(loaded, seed));
    if let Some(ys) = &c.grids.y_grid {
        plan.tail_levels = ys.clone();
    }
    if let Some(ts) = &c.grids.t_grid {
        plan.cdf_times = ts.clone();
    }
    if let Some(alphas) = &c.grids.alpha_grid {
        plan.alphas = alphas.clone();
    }
    let report = verify::verify(&loaded.model, &plan)?;
    let mut table = Table::new(vec!["quantity", "analytic", "estimate", "std_error", "z", "pass"]);
    for r in &report.rows {
        table.push(vec![r.quantity.clone(), num(r.analytic), num(r.estimate), num(r.std_error), num(r.z), r.pass.to_string()]);
    }
    emit(&table, &report, format, out)?;
    if report.pass {
        Ok(())
    } else {
        Err(CliError::VerifyFailed)
    }
}
