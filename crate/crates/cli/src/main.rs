//! `ddbubble`: kernel reports, default-function solves and drawdown
//! simulations driven by a TOML configuration.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ddbubble::config::RunConfig;
use ddbubble::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_CERTIFICATE: u8 = 4;
const EXIT_OTHER: u8 = 1;

#[derive(Debug, Parser)]
#[command(name = "ddbubble", version, about = "Drawdown bubbles in discrete-time martingales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tabulate a(x), b(x), b_ε(x) over the grid and classify the kernel.
    KernelReport(Common),
    /// Solve for the default function M(x) on the grid.
    SolveDefault(Common),
    /// Monte-Carlo estimate of the mass lost at drawdown times.
    Simulate(Common),
    /// Summability check for products of independent returns.
    IidCheck(Common),
    /// Inverse Bessel process under the relative-barrier schedule.
    Bessel(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Master seed of the path streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of simulated paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Horizon in steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Solver tolerance on the relative sup-norm increment.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write only this format; both by default.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn load(&self) -> ddbubble::Result<RunConfig> {
        let mut config = RunConfig::from_path(&self.config)?;
        if let Some(seed) = self.seed {
            config.simulate.seed = seed;
        }
        if let Some(paths) = self.paths {
            config.simulate.paths = paths;
        }
        if let Some(steps) = self.steps {
            config.simulate.steps = steps;
        }
        if let Some(tol) = self.tol {
            config.solve.tol = tol;
        }
        if let Some(max_iter) = self.max_iter {
            config.solve.max_iter = max_iter;
        }
        Ok(config)
    }
}

/// Outcome of a command that ran to completion.
pub enum Status {
    Done,
    NotConverged,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Toml(_) | Error::InvalidParameter(_) | Error::Csv(_) => EXIT_CONFIG,
        Error::CertificateRejected { .. } | Error::Hypothesis { .. } => EXIT_CERTIFICATE,
        Error::Path { source, .. } => exit_code(source),
        _ => EXIT_OTHER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, common) = match &cli.command {
        Command::KernelReport(c) => ("kernel-report", c),
        Command::SolveDefault(c) => ("solve-default", c),
        Command::Simulate(c) => ("simulate", c),
        Command::IidCheck(c) => ("iid-check", c),
        Command::Bessel(c) => ("bessel", c),
    };
    let result = common.load().and_then(|config| {
        let out = commands::Outputs::new(&common.out, common.format)?;
        match cli.command {
            Command::KernelReport(_) => commands::kernel_report(&config, &out),
            Command::SolveDefault(_) => commands::solve_default(&config, &out),
            Command::Simulate(_) => commands::simulate(&config, &out),
            Command::IidCheck(_) => commands::iid_check(&config, &out),
            Command::Bessel(_) => commands::bessel(&config, &out),
        }
    });
    match result {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::NotConverged) => {
            eprintln!("{name}: iteration stopped at max_iter before reaching the tolerance");
            ExitCode::from(EXIT_NOT_CONVERGED)
        }
        Err(err) => {
            eprintln!("{name}: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
