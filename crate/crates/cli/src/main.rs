//! `cyflab`: configuration-driven runs of the fibration laboratory.
//!
//! Exit codes: 0 pass, 1 assertion failure, 2 configuration error, 3 numerical failure.

mod commands;
mod config;
mod report;
mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigError, Overrides, RunConfig, SUITES};
use report::Failure;

#[derive(Parser)]
#[command(name = "cyflab", version, about = "Fiberwise Ricci-flat metrics on torus families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration
    #[arg(long)]
    config: PathBuf,
    /// Override solver.grid_n
    #[arg(long)]
    grid: Option<usize>,
    /// Override stencil.h_s
    #[arg(long = "fd-step")]
    fd_step: Option<f64>,
    /// Override threads (0 = all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the Monge-Ampère equation on one fiber
    SolveFiber {
        #[command(flatten)]
        common: Common,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Curvature, direct-image and positivity report over the base samples
    RunFamily {
        #[command(flatten)]
        common: Common,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        /// Also write an SVG heatmap of c(rho)
        #[arg(long)]
        plot: bool,
    },
    /// Run a named suite, or every suite listed in the config
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        suite: Option<String>,
    },
    /// Green kernel bounds of the fiberwise Ricci-flat metrics
    Green {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let over = Overrides { grid: common.grid, fd_step: common.fd_step, threads: common.threads };
    let cfg = RunConfig::load(&common.config, over)?;
    if cfg.threads > 0 {
        // fails only if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::SolveFiber { common, out } => {
            let cfg = load(&common)?;
            commands::solve_fiber(&cfg, &out)
        }
        Command::RunFamily { common, out, plot } => {
            let cfg = load(&common)?;
            commands::run_family(&cfg, &out, plot)
        }
        Command::Verify { common, suite } => {
            let cfg = load(&common)?;
            let names = match suite {
                Some(s) if SUITES.contains(&s.as_str()) => vec![s],
                Some(s) => return Err(ConfigError(format!("unknown suite {s:?}; known: {}", SUITES.join(", "))).into()),
                None if cfg.suites.is_empty() => return Err(ConfigError("no --suite given and config lists no suites".into()).into()),
                None => cfg.suites.clone(),
            };
            suites::preflight(&cfg)?;
            let mut pass = true;
            for name in names {
                pass &= suites::verify(&cfg, &name)?;
            }
            Ok(pass)
        }
        Command::Green { common } => {
            let cfg = load(&common)?;
            commands::green(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("assertion failure");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}
