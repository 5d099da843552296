use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ridepool_cli as cmd;

/// Ride-sharing fleet simulator.
#[derive(Parser, Debug)]
#[command(name = "ridepool", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Config file; unset keys take their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// dispatch|ridesharing|pricing|darm=on|off, repeatable.
    #[arg(long = "toggle", value_name = "NAME=on|off")]
    toggles: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Runs one simulation and writes its metrics.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Dispatch policy to use; a fresh one otherwise.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Also write every priced offer to quotes.csv and every dispatch
        /// decision to decisions.csv.
        #[arg(long)]
        trace: bool,
    },
    /// Trains the dispatch policy.
    Train {
        #[command(flatten)]
        common: Common,
        /// Resume from this checkpoint.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Episodes to run; seeds count up from the config seed.
        #[arg(long, default_value_t = 1)]
        episodes: usize,
    },
    /// Runs a trained policy greedily with learning off.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        /// Same as for simulate.
        #[arg(long)]
        trace: bool,
    },
    /// Summarizes the metrics written by an earlier run.
    Report {
        /// Directory holding metrics.csv and friends.
        #[arg(long, value_name = "DIR")]
        from: PathBuf,
        /// Also write summary.txt here.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Runs the five baselines and the full method on the same demand.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// Number of seeds, counting up from the config seed.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
}

fn config(c: &Common) -> Result<ridepool::SimConfig> {
    cmd::resolve_config(c.config.as_deref(), c.seed, &c.toggles)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, checkpoint, trace } => {
            let cfg = config(&common)?;
            let policy = checkpoint.as_deref().map(cmd::load_policy).transpose()?;
            if let Some(r) = cmd::simulate(&cfg, policy, trace, &common.out)? {
                print!("{r}");
            }
        }
        Command::Train { common, checkpoint, episodes } => {
            let cfg = config(&common)?;
            let init = checkpoint.as_deref().map(cmd::load_policy).transpose()?;
            let q = cmd::train(&cfg, init, episodes, &common.out)?;
            println!(
                "{} decisions, {} updates; checkpoint written to {}",
                q.steps(),
                q.updates(),
                common.out.join(cmd::CHECKPOINT_FILE).display()
            );
        }
        Command::Evaluate { common, checkpoint, trace } => {
            let cfg = config(&common)?;
            let policy = cmd::load_policy(&checkpoint)?;
            if let Some(r) = cmd::evaluate(&cfg, policy, trace, &common.out)? {
                print!("{r}");
            }
        }
        Command::Report { from, out } => {
            print!("{}", cmd::report(&from, out.as_deref())?);
        }
        Command::Compare { common, checkpoint, seeds } => {
            let cfg = config(&common)?;
            let policy = checkpoint.as_deref().map(cmd::load_policy).transpose()?;
            let list: Vec<u64> = (0..seeds).map(|k| cfg.seed + k).collect();
            let rows = cmd::compare(&cfg, policy.as_ref(), &list, &common.out).context("compare failed")?;
            print!("{}", cmd::render_table(&rows));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RIDEPOOL_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
