//! `cruise`: solve, compare and study cruise trajectories from scenario files.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Fail;

#[derive(Parser, Debug)]
#[command(name = "cruise", version, about = "Cruise-phase trajectory optimization")]
struct Cli {
    /// Root directory for run outputs; each run writes into its own subdirectory.
    #[arg(long, global = true, env = "CRUISE_OUT", default_value = "runs")]
    out: PathBuf,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the costate boundary-value problem by shooting.
    Solve(commands::SolveArgs),
    /// Solve by direct transcription.
    Direct(commands::DirectArgs),
    /// Shooting solve against direct transcription.
    Compare(commands::CompareArgs),
    /// Cluster scattered points into covering ellipses.
    Cluster(commands::ClusterArgs),
    /// Fit a composite wind field to gridded observations.
    WindFit(commands::WindFitArgs),
    /// Draw a seeded random wind field.
    WindSample(commands::WindSampleArgs),
    /// Stationary-speed stability over a throttle × mass grid.
    Turnpike(commands::TurnpikeArgs),
    /// Monte Carlo study of wind-induced flight-time variability.
    Mc(commands::McArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Solve(a) => commands::solve(&cli.out, a),
        Command::Direct(a) => commands::direct(&cli.out, a),
        Command::Compare(a) => commands::compare(&cli.out, a),
        Command::Cluster(a) => commands::cluster(&cli.out, a),
        Command::WindFit(a) => commands::wind_fit(&cli.out, a),
        Command::WindSample(a) => commands::wind_sample(&cli.out, a),
        Command::Turnpike(a) => commands::turnpike(&cli.out, a),
        Command::Mc(a) => commands::mc(&cli.out, a),
    };
    match result {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(Fail::Solver(msg, dir)) => {
            eprintln!("error: {msg}");
            if let Some(d) = dir {
                println!("{}", d.display());
            }
            ExitCode::from(1)
        }
        Err(Fail::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
