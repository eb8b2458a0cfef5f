//! `sentinel` — model a small computer network under progressive attack,
//! build the defender's observer, solve for a min-max defense policy, sweep
//! re-image costs, and simulate the closed loop.

mod config;
mod pipeline;
mod policy_io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{InitialObserver, RunConfig};
use pipeline::{AdversaryKind, ExportFormat};
use sentinel_core::Error;

#[derive(Parser)]
#[command(name = "sentinel", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every pipeline stage; flags override the config file.
#[derive(Args, Clone)]
struct CommonOpts {
    /// Configuration file (TOML); defaults are used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of computers in the network.
    #[arg(long)]
    k: Option<usize>,
    /// Whether a network attack may target an already fully compromised computer.
    #[arg(long = "h-on-w")]
    h_on_w: Option<bool>,
    /// Observer rooting: all-normal, post-attack, or full.
    #[arg(long)]
    initial: Option<InitialObserver>,
}

impl CommonOpts {
    fn load(&self) -> Result<RunConfig, Error> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(k) = self.k {
            config.model.k = k;
        }
        if let Some(h) = self.h_on_w {
            config.model.h_admissible_on_w = h;
        }
        if let Some(initial) = self.initial {
            config.observer.initial = initial;
        }
        config.validate()?;
        if config.run.workers > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(config.run.workers)
                .build_global();
        }
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// System automaton operations.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Observer automaton operations.
    Observer {
        #[command(subcommand)]
        command: ObserverCommand,
    },
    /// Solve the min-max dynamic program and write the policy artifact.
    Solve {
        #[command(flatten)]
        common: CommonOpts,
        /// Value-iteration stopping tolerance.
        #[arg(long)]
        tol: Option<f64>,
        /// Output directory for policy.txt, summary.json, and manifest.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve across a re-image cost grid and write CSV reports.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        r_from: Option<f64>,
        #[arg(long)]
        r_to: Option<f64>,
        #[arg(long)]
        r_step: Option<f64>,
        /// Output directory for actions.csv, shares.csv, thresholds.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play a solved policy against an adversary and emit the trace.
    Simulate {
        /// Policy artifact written by `solve`.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_enum)]
        adversary: AdversaryKind,
        /// Event list file for the script adversary.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// True initial state code (e.g. NN); defaults to the first
        /// candidate of the initial belief.
        #[arg(long)]
        z0: Option<String>,
        /// Trace output file (JSON lines); stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Write the bipartite system automaton to a file.
    Export {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "fsm")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ObserverCommand {
    /// Build the reachable observer automaton and write it to a file.
    Build {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value = "fsm")]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Model { command: ModelCommand::Export { common, format, out } } => {
            let config = common.load()?;
            pipeline::cmd_model_export(&config, format, &out)
        }
        Command::Observer { command: ObserverCommand::Build { common, format, out } } => {
            let config = common.load()?;
            let line = pipeline::cmd_observer_build(&config, format, &out)?;
            println!("{line}");
            Ok(())
        }
        Command::Solve { common, tol, out } => {
            let mut config = common.load()?;
            if let Some(tol) = tol {
                config.solver.tolerance = tol;
                config.validate()?;
            }
            let out_dir = pipeline::resolve_out_dir(out.as_deref(), &config);
            let line = pipeline::cmd_solve(&config, &out_dir)?;
            println!("{line}");
            Ok(())
        }
        Command::Sweep { common, r_from, r_to, r_step, out } => {
            let mut config = common.load()?;
            if let Some(v) = r_from {
                config.sweep.r_from = v;
            }
            if let Some(v) = r_to {
                config.sweep.r_to = v;
            }
            if let Some(v) = r_step {
                config.sweep.r_step = v;
            }
            config.validate()?;
            let out_dir = pipeline::resolve_out_dir(out.as_deref(), &config);
            let line = pipeline::cmd_sweep(&config, &out_dir)?;
            println!("{line}");
            Ok(())
        }
        Command::Simulate { policy, adversary, script, seed, horizon, z0, out } => {
            let line = pipeline::cmd_simulate(
                &policy,
                adversary,
                script.as_deref(),
                seed,
                horizon,
                z0.as_deref(),
                out.as_deref(),
            )?;
            println!("{line}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::Parse(_) | Error::InvalidParameter(_) => 2,
                Error::CapacityExceeded { .. } => 3,
                Error::NonConvergence { .. } => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}
