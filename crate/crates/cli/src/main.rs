//! `llassim`: simulation, reconstruction, stability and prediction runs
//! writing CSV files.

mod commands;
mod config;
mod table;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::{parse_mode, BoundaryChoice, RunConfig};

/// Error together with its exit-code class.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Parse(anyhow::Error),
    Solver(anyhow::Error),
    Verify(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 1,
            Self::Parse(_) => 2,
            Self::Solver(_) => 3,
            Self::Verify(_) => 4,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Self::Usage(e) | Self::Parse(e) | Self::Solver(e) | Self::Verify(e) => e,
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

pub trait ResultExt<T> {
    fn usage(self) -> Outcome<T>;
    fn parse_input(self) -> Outcome<T>;
    fn solver(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for std::result::Result<T, E> {
    fn usage(self) -> Outcome<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }

    fn parse_input(self) -> Outcome<T> {
        self.map_err(|e| Failure::Parse(e.into()))
    }

    fn solver(self) -> Outcome<T> {
        self.map_err(|e| Failure::Solver(e.into()))
    }
}

#[derive(Parser, Debug)]
#[command(name = "llassim", version, about = "Price formation simulation and data assimilation")]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// verification | assimilation
    #[arg(long, global = true)]
    mode: Option<String>,
    /// nonlocal | neumann
    #[arg(long, global = true)]
    bc: Option<String>,
    /// Worker threads for the per-basis solves.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward run: price.csv, density_T.csv, transformed_T.csv.
    Simulate,
    /// Reconstruct f(·, T) from a price series: fhat_T.csv, controls.csv, recon_diag.csv.
    Reconstruct {
        /// `t,p,lambda` measurements.
        price: PathBuf,
        /// `x,f` initial density used for the ε term in verification mode.
        #[arg(long)]
        f0: Option<PathBuf>,
        /// `x,f` profile at T to report the interior error against.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Perturbed-price sweep: stability.csv.
    Stability,
    /// Restart the forward model from a reconstruction: predicted_price.csv.
    Predict {
        /// `x,f` reconstruction at T.
        fhat: PathBuf,
        /// Measured `t,p,lambda` series; simulated from the configuration if absent.
        #[arg(long)]
        price: Option<PathBuf>,
    },
    /// Invariant checks: verify_report.csv; exit code 4 on failure.
    Verify,
}

fn configure(cli: &Cli) -> Outcome<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path).usage()?,
        None => RunConfig::preset(1).usage()?,
    };
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(mode) = &cli.mode {
        cfg.assimilation.mode = parse_mode(mode).usage()?;
    }
    if let Some(bc) = &cli.bc {
        cfg.bc = BoundaryChoice::parse(bc)
            .ok_or_else(|| anyhow::anyhow!("--bc must be nonlocal or neumann, got `{bc}`"))
            .usage()?;
    }
    if let Some(n) = cli.parallel {
        if n == 0 {
            return Err(Failure::Usage(anyhow::anyhow!("--parallel needs at least one thread")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().usage()?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome<()> {
    let cfg = configure(&cli)?;
    match cli.command {
        Command::Simulate => commands::simulate(&cfg),
        Command::Reconstruct { price, f0, reference } => {
            commands::reconstruct(&cfg, &commands::ReconstructArgs { price, f0, reference })
        }
        Command::Stability => commands::stability(&cfg),
        Command::Predict { fhat, price } => commands::predict(&cfg, &commands::PredictArgs { fhat, price }),
        Command::Verify => commands::verify(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
