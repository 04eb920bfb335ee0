// NaN must fail the `!(x > 0.0)` style checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use leibenson_core::config::RunConfig;
use leibenson_core::Error;

#[derive(Parser)]
#[command(name = "leibenson", version, about = "Radial solver and diagnostics for u_t = Δ_p(u^q)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuation in N plus the limit run; writes trajectory, norms and barriers.
    Solve(Common),
    /// Solve, then run the full property suite.
    Verify(Common),
    /// Propagation-rate fits and dead-core scaling sweeps.
    FitRate(Common),
    /// The property suite over the `[p, q]` points of `sweep.points`.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long, value_name = "K")]
    jobs: Option<usize>,
    /// Overrides `seed`.
    #[arg(long, value_name = "S")]
    seed: Option<u64>,
    /// Overrides `time.snapshot_every`.
    #[arg(long, value_name = "STEPS")]
    snapshot_every: Option<usize>,
}

const PASS: u8 = 0;
const PROPERTY_FAILURE: u8 = 1;
const CONFIG_ERROR: u8 = 2;
const SOLVER_FAILURE: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config { .. } | Error::Parse { .. } | Error::Precondition(_) => CONFIG_ERROR,
                _ => SOLVER_FAILURE,
            };
        }
        if cause.downcast_ref::<rayon::ThreadPoolBuildError>().is_some() {
            return CONFIG_ERROR;
        }
    }
    SOLVER_FAILURE
}

fn context(common: Common, command: &'static str) -> anyhow::Result<commands::RunContext> {
    if let Some(k) = common.jobs {
        if k == 0 {
            return Err(Error::config("--jobs", "must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    let mut config = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(k) = common.snapshot_every {
        config.time.snapshot_every = k;
    }
    let out = match common.out {
        Some(dir) => dir,
        None if config.output.dir.is_absolute() => config.output.dir.clone(),
        None => config.base_dir.join(&config.output.dir),
    };
    config.output.dir = out.clone();
    Ok(commands::RunContext { config, out, command })
}

type Handler = fn(&commands::RunContext) -> anyhow::Result<bool>;

fn run(cli: Cli) -> anyhow::Result<bool> {
    let (common, name, f): (Common, &'static str, Handler) = match cli.command {
        Command::Solve(c) => (c, "solve", commands::solve),
        Command::Verify(c) => (c, "verify", commands::verify),
        Command::FitRate(c) => (c, "fit-rate", commands::fit_rate_cmd),
        Command::Sweep(c) => (c, "sweep", commands::sweep_cmd),
    };
    let ctx = context(common, name)?;
    f(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::from(PASS),
        Ok(false) => ExitCode::from(PROPERTY_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
