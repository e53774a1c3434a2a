mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use config::Format;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Tail of the maximum at the drawdown time over grids.y_grid.
    Tail,
    /// Density of the maximum at the drawdown time over grids.y_grid.
    Density,
    /// Joint Laplace transform over grids.alpha_grid at query.beta.
    Transform,
    /// CDF of the drawdown time over grids.t_grid.
    TauCdf,
    /// Hitting or two-sided exit transform from the `hit` section.
    Hit,
    /// Monte Carlo samples of (tau, M_tau).
    Simulate,
    /// Poisson test of deep excursion counts below grids.y_grid's last level.
    Excursions,
    /// Analytic laws against the Monte Carlo oracle.
    Verify,
}

#[derive(Debug, Parser)]
#[command(name = "ddkit", version, about = "Drawdown laws of one-dimensional diffusions")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides mc.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
    Io(String),
    VerifyFailed,
}

impl From<ddkit_core::Error> for CliError {
    fn from(e: ddkit_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
            CliError::VerifyFailed => 4,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("DDKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Validation(format!("cli::run: DDKIT_THREADS must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Validation(format!("cli::run: {e}")))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| {
        let loaded = config::load(&cli.config)?;
        let format = cli.format.or(loaded.config.output.format).unwrap_or(Format::Csv);
        let out = cli.out.clone().or_else(|| loaded.config.output.path.clone());
        commands::run(cli.command, &loaded, cli.seed, format, out.as_deref())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Validation(m) | CliError::Numeric(m) | CliError::Io(m) => eprintln!("error: {m}"),
                CliError::VerifyFailed => eprintln!("verify: at least one check failed"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
