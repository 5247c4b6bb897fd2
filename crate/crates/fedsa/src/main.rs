use std::fmt::Arguments;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedsa::error::Result;
use fedsa::harness::{
    cli_chain_info, cli_compare, cli_gen, cli_prop1, cli_run, cli_sweep_agents,
    load_generator_params, parse_seeds, ExperimentSpec, RunOptions,
};

/// Simulator for federated stochastic approximation with Markovian
/// sampling: drift-corrected local updates against plain averaging.
#[derive(Parser)]
#[command(name = "fedsa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment spec (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Seed count (`5` means seeds 0..5) or explicit comma list (`3,9,11`).
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads; falls back to FEDSA_WORKERS, then all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Draw a separate anchor observation instead of reusing it.
    #[arg(long)]
    fresh_anchor: bool,
    /// Also render the mean traces as an SVG chart.
    #[arg(long)]
    plot: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm over all seeds; per-seed CSVs plus a mean CSV.
    Run(CommonArgs),
    /// Run both algorithms on the identical instance and seeds.
    Compare(CommonArgs),
    /// Repeat the experiment for each fleet size in the spec's m_list.
    SweepAgents(CommonArgs),
    /// Closed-form bias limit next to a noiseless H=2 simulation.
    Prop1 {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Materialize generator params (JSON) into an instance file.
    Gen {
        /// Generator parameter file (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stationary distribution and mixing report per agent chain.
    ChainInfo {
        /// Instance file (JSON).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn options_from(args: &CommonArgs) -> Result<RunOptions> {
    Ok(RunOptions {
        seeds_override: args.seeds.as_deref().map(parse_seeds).transpose()?,
        workers: args.workers,
        fresh_anchor: args.fresh_anchor,
        plot: args.plot,
    })
}

/// Prints to stdout, ignoring EPIPE so `fedsa ... | head` exits cleanly.
fn say(args: Arguments) {
    let _ = std::io::stdout().write_fmt(args);
    let _ = std::io::stdout().write_all(b"\n");
}

macro_rules! say {
    ($($arg:tt)*) => { say(format_args!($($arg)*)) };
}

/// Ok(true): success. Ok(false): ran fine but a declared acceptance
/// threshold failed. Err: configuration or execution error.
fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run(args) => {
            let spec = ExperimentSpec::load(&args.config)?;
            let summary = cli_run(&spec, &args.out, &options_from(&args)?)?;
            report_checks(&summary.checks);
            say!("wrote {}", args.out.join("summary.json").display());
            Ok(summary.passed)
        }
        Command::Compare(args) => {
            let spec = ExperimentSpec::load(&args.config)?;
            let summary = cli_compare(&spec, &args.out, &options_from(&args)?)?;
            report_checks(&summary.checks);
            for (name, floor) in &summary.floors {
                say!("{name}: floor {:.6e} (stderr {:.2e})", floor.floor, floor.stderr);
            }
            say!("wrote {}", args.out.join("summary.json").display());
            Ok(summary.passed)
        }
        Command::SweepAgents(args) => {
            let spec = ExperimentSpec::load(&args.config)?;
            let m_list = spec.m_list.clone();
            let summary = cli_sweep_agents(&spec, &m_list, &args.out, &options_from(&args)?)?;
            report_checks(&summary.checks);
            if let Some(sweep) = &summary.sweep {
                say!("slope {:.4} over {} fleet sizes", sweep.slope, sweep.points.len());
            }
            say!("wrote {}", args.out.join("summary.json").display());
            Ok(summary.passed)
        }
        Command::Prop1 { config, out } => {
            let spec = ExperimentSpec::load(&config)?;
            let output = cli_prop1(&spec, &out)?;
            say!(
                "closed form vs simulation: relative error {:.3e} after {} rounds",
                output.relative_error, output.rounds_used
            );
            say!("wrote {}", out.join("prop1.json").display());
            Ok(true)
        }
        Command::Gen { config, out } => {
            let params = load_generator_params(&config)?;
            let path = cli_gen(&params, &out)?;
            say!("wrote {}", path.display());
            Ok(true)
        }
        Command::ChainInfo { config, out } => {
            let records = cli_chain_info(&config, &out)?;
            for rec in &records {
                say!(
                    "agent {}: tau({}) = {}, rho {:.4}",
                    rec.agent, rec.mixing.epsilon, rec.mixing.tau, rec.mixing.rho_hat
                );
            }
            say!("wrote {}", out.join("chain_info.json").display());
            Ok(true)
        }
    }
}

fn report_checks(checks: &[fedsa::harness::CheckResult]) {
    for check in checks {
        let status = if check.passed { "pass" } else { "FAIL" };
        say!("check {}: {status} ({})", check.name, check.detail);
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
