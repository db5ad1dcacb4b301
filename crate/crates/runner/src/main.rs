use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use consensus_admm::mpc::mpc_loop;
use consensus_admm_runner::{demo, load_scenario, scenario_json, write_outputs, Summary};

#[derive(Parser)]
#[command(
    name = "cadmm",
    version,
    about = "Distributed MPC for quadrotor swarms via consensus ADMM"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectories, residuals, summary and delivery log.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override `admm.rho`.
        #[arg(long)]
        rho: Option<f64>,
        /// Override `admm.max_rounds`.
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Override `channel.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Load and validate a scenario file.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Print a built-in scenario as JSON.
    Demo {
        #[arg(long, value_parser = demo::NAMES)]
        name: String,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            rho,
            max_rounds,
            seed,
        } => {
            let mut s = load_scenario(&scenario)?;
            if let Some(rho) = rho {
                s.admm.rho = rho;
            }
            if let Some(n) = max_rounds {
                s.admm.max_rounds = n;
            }
            if let Some(seed) = seed {
                s.channel.seed = seed;
            }
            s.validate()?;
            let result = mpc_loop(&s)?;
            write_outputs(&result, &out)?;
            let summary = Summary::of(&result);
            println!(
                "{} MPC steps, completed: {}, min distance: {}",
                summary.mpc_steps,
                summary.completed,
                summary
                    .min_distance_overall
                    .map_or("n/a".into(), |d| format!("{d:.4}")),
            );
            println!("outputs written to {}", out.display());
        }
        Command::Validate { scenario } => {
            let s = load_scenario(&scenario)?;
            println!(
                "ok: {} agents, {} edges",
                s.n_agents,
                s.graph().edge_count()
            );
        }
        Command::Demo { name } => {
            let s = demo::by_name(&name).ok_or("unknown demo")?;
            print!("{}", scenario_json(&s));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = e.source();
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
