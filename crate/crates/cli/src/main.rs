//! Command-line front end: single g2 evaluations, minimization, parameter
//! sweeps, the cascade-advantage criterion and three-way model validation.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 model-domain
//! error, 3 validation failure. Set HERALDG2_THREADS to cap worker
//! parallelism; outputs are identical regardless.

mod commands;
mod config_file;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use heraldg2::optsweep::Scale;

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: String) -> Self {
        Self { code: 1, message }
    }

    pub fn model(message: String) -> Self {
        Self { code: 2, message }
    }

    pub fn validation(message: String) -> Self {
        Self { code: 3, message }
    }
}

impl From<heraldg2::Error> for CliError {
    fn from(e: heraldg2::Error) -> Self {
        match e {
            heraldg2::Error::InvalidConfig(_) => CliError::usage(e.to_string()),
            _ => CliError::model(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Analytic,
    Matrix,
    Mc,
}

#[derive(Parser)]
#[command(
    name = "heraldg2",
    version,
    about = "Heralded g2 of SPDC and cascaded-SPDC single-photon sources",
    long_about = None
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the heralded g2 once and print the underlying rates
    G2 {
        /// Experiment description (TOML)
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Analytic)]
        model: ModelArg,
        /// Monte Carlo window count (accepts scientific notation)
        #[arg(long, default_value_t = 1e6)]
        windows: f64,
        /// Monte Carlo seed
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Minimize g2 over the pair rate and report the plateau
    Min {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Analytic)]
        model: ModelArg,
        /// Lower pair-rate bound in Hz (model-dependent default)
        #[arg(long)]
        from: Option<f64>,
        /// Upper pair-rate bound in Hz (model-dependent default)
        #[arg(long)]
        to: Option<f64>,
    },
    /// Sweep a parameter and emit a CSV table
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// pair_rate, cascade_efficiency, figure_of_merit or eta
        #[arg(long)]
        param: String,
        #[arg(long)]
        from: f64,
        #[arg(long)]
        to: f64,
        #[arg(long)]
        points: usize,
        /// Logarithmic grid (default)
        #[arg(long, conflicts_with = "linear")]
        log: bool,
        /// Linear grid
        #[arg(long)]
        linear: bool,
        #[arg(long, value_enum, default_value_t = ModelArg::Analytic)]
        model: ModelArg,
        /// Also sweep the direct-pumping counterpart of a cspdc config
        #[arg(long)]
        both_sources: bool,
        /// Output file (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cascade-advantage thresholds and verdict for the configured source
    Criterion {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = ModelArg::Analytic)]
        model: ModelArg,
    },
    /// Three-way model comparison; fails when mc and matrix disagree
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1e6)]
        windows: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::G2 {
            config,
            model,
            windows,
            seed,
        } => {
            let loaded = commands::load_config(&config)?;
            commands::cmd_g2(&loaded, model, windows, seed)
        }
        Command::Min {
            config,
            model,
            from,
            to,
        } => {
            let loaded = commands::load_config(&config)?;
            commands::cmd_min(&loaded, model, from, to)
        }
        Command::Sweep {
            config,
            param,
            from,
            to,
            points,
            log: _,
            linear,
            model,
            both_sources,
            out,
        } => {
            let loaded = commands::load_config(&config)?;
            let scale = if linear { Scale::Linear } else { Scale::Log };
            commands::cmd_sweep(
                &loaded,
                &param,
                from,
                to,
                points,
                scale,
                model,
                both_sources,
                out.as_ref(),
            )
        }
        Command::Criterion { config, model } => {
            let loaded = commands::load_config(&config)?;
            commands::cmd_criterion(&loaded, model)
        }
        Command::Validate {
            config,
            windows,
            seed,
        } => {
            let loaded = commands::load_config(&config)?;
            commands::cmd_validate(&loaded, windows, seed)
        }
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("HERALDG2_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
