//! `qpac`: dataset generation, verification suites, bound evaluation and the
//! complexity/gap correlation experiment.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Context;
use config::{parse, read_file, BoundConfig, CorrelateConfig, GenDataConfig, VerifyConfig};
use error::{CliError, CliResult, ErrorReport};

#[derive(Debug, Parser)]
#[command(name = "qpac", version, about = "PAC-Bayes bounds for layered quantum-channel models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample labeled cluster-model ground states into a JSON-lines file.
    GenData(Common),
    /// Run a verification suite; exits 3 when any check fails.
    Verify(Common),
    /// Evaluate the complexity report of a model.
    Bound(Common),
    /// Train many models and correlate complexity with the generalization gap.
    Correlate(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Directory for relative output paths.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    if workers == 0 {
        return Err(CliError::Config("worker count must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(f)
}

fn run(cli: Cli) -> CliResult<()> {
    let (name, common) = match &cli.command {
        Command::GenData(c) => ("gen-data", c),
        Command::Verify(c) => ("verify", c),
        Command::Bound(c) => ("bound", c),
        Command::Correlate(c) => ("correlate", c),
    };
    let bytes = read_file(&common.config).map_err(|e| CliError::Config(e.to_string()))?;
    let ctx = Context { out_dir: common.out.clone() };
    let workers = common.workers.unwrap_or(1);
    match cli.command {
        Command::GenData(_) => {
            let mut cfg: GenDataConfig = parse(&bytes, name, |c: &GenDataConfig| c.task.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            let summary = in_pool(workers, || commands::gen_data(&cfg, &ctx))?;
            print_json(&summary)
        }
        Command::Verify(_) => {
            let mut cfg: VerifyConfig = parse(&bytes, name, |c: &VerifyConfig| c.task.as_deref())?;
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            let (report, passed) = in_pool(workers, || commands::verify(&cfg, &ctx))?;
            print_json(&report)?;
            if passed {
                Ok(())
            } else {
                Err(CliError::Verification(format!("suite {:?} reported violations", cfg.suite)))
            }
        }
        Command::Bound(_) => {
            let cfg: BoundConfig = parse(&bytes, name, |c: &BoundConfig| c.task.as_deref())?;
            let report = in_pool(workers, || commands::bound(&cfg, &ctx))?;
            print_json(&report)
        }
        Command::Correlate(_) => {
            let mut cfg: CorrelateConfig = parse(&bytes, name, |c: &CorrelateConfig| c.task.as_deref())?;
            cfg.base_seed = common.seed.unwrap_or(cfg.base_seed);
            cfg.workers = common.workers.unwrap_or(cfg.workers);
            let summary = in_pool(cfg.workers, || commands::correlate(&cfg, &ctx))?;
            print_json(&summary)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport::from(&e);
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            ExitCode::from(e.exit_code())
        }
    }
}
