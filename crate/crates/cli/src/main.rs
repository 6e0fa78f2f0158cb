//! `invset`: compute maximal invariant sets, learn them from failures, and
//! check the learned sets against ground truth.
//!
//! Exit status: 0 on success, 1 when a verdict fails (a pass flag in the
//! report, or a certification violation), 2 on usage, config or runtime
//! errors.

mod config;
mod emit;
mod error;
mod pipeline;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::emit::Emitter;
use crate::error::CliError;
use crate::pipeline::{LearnSummary, RecursionSummary};

#[derive(Debug, Parser)]
#[command(name = "invset", version, about)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the number of certification rollouts.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    rollouts: Option<u64>,
    /// Print nothing on success and only warnings in the log.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximal control invariant set by the state-space recursion.
    Mci,
    /// Maximal state-control invariant set by the joint-space recursion.
    Msci,
    /// Learn the state-control invariant set from failures (model-blind).
    FailLearn,
    /// Random-admissible rollouts against a polytope in JSON form.
    Certify { polytope: PathBuf },
    /// Containment, equality and Hausdorff distance of two JSON polytopes.
    Compare {
        p: PathBuf,
        q: PathBuf,
        /// Containment tolerance, scaled by each row's norm.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Ground truth, learning, certification and the validation report.
    Run,
}

enum Verdict {
    Pass,
    Fail,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Usage("this subcommand needs --config <PATH>".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(n) = cli.rollouts {
        cfg = cfg.with_rollouts(n as usize);
    }
    if let Some(out) = &cli.out {
        cfg = cfg.with_output_dir(out.clone());
    }
    Ok(cfg)
}

fn print<T: Serialize>(cli: &Cli, value: &T) {
    if cli.quiet {
        return;
    }
    let mut stdout = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(value).expect("summaries serialize");
    // A closed pipe is not an error worth reporting.
    let _ = writeln!(stdout, "{text}");
}

fn execute(cli: &Cli) -> Result<Verdict, CliError> {
    if let Command::Compare { p, q, tol } = &cli.command {
        let (p, q) = (pipeline::read_polytope(p)?, pipeline::read_polytope(q)?);
        print(cli, &pipeline::compare(&p, &q, *tol)?);
        return Ok(Verdict::Pass);
    }
    // Validate the whole config before touching the file system.
    let cfg = load(cli)?;
    let polytope = match &cli.command {
        Command::Certify { polytope } => Some(pipeline::read_polytope(polytope)?),
        _ => None,
    };
    let out = Emitter::new(&cfg.output)?;
    log::info!("writing artifacts to {}", out.dir().display());
    match &cli.command {
        Command::Mci => print(cli, &RecursionSummary::from(&pipeline::mci(&cfg, &out)?)),
        Command::Msci => print(cli, &RecursionSummary::from(&pipeline::msci(&cfg, &out)?)),
        Command::FailLearn => print(cli, &LearnSummary::from(&pipeline::fail_learn(&cfg, &out)?)),
        Command::Certify { .. } => {
            let report =
                pipeline::certify_polytope(&cfg, polytope.as_ref().expect("read above"), &out)?;
            print(cli, &report);
            if !report.passed {
                return Ok(Verdict::Fail);
            }
        }
        Command::Run => {
            let report = pipeline::run(&cfg, &out)?;
            print(cli, &report);
            if !report.passed() {
                let failed: Vec<_> = report
                    .pass
                    .iter()
                    .filter(|(_, &ok)| !ok)
                    .map(|(k, _)| k.as_str())
                    .collect();
                log::warn!("failed checks: {}", failed.join(", "));
                return Ok(Verdict::Fail);
            }
        }
        Command::Compare { .. } => unreachable!("handled above"),
    }
    Ok(Verdict::Pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(&cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
