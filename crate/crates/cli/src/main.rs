//! `thermoplan`: scenario generation, capacity planning runs, season-wide
//! benchmarking and report tables.

mod artifacts;
mod benchmark;
mod config;
mod data;
mod plan;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thermoplan::scenario::SelectionMode;
use thermoplan::synth::SystemScale;

use config::Algorithm;

/// Bad input (exit 2) or a failure while working on good input (exit 1).
pub enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

pub type CmdResult = Result<(), Failure>;

pub trait Classify<T> {
    fn invalid(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Invalid(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

#[derive(Parser)]
#[command(name = "thermoplan", version, about = "Capacity planning of hybrid heat sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic season table and optionally a reference system.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        days: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "small")]
        scale: Scale,
        /// Also write the matching reference system as JSON.
        #[arg(long)]
        system: Option<PathBuf>,
    },
    /// Select and reshape one typical day per month.
    Scenarios {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "joint")]
        selection: Selection,
    },
    /// Run an optimizer on a plan file.
    Plan {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        algorithm: Option<Algorithm>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every scheme of a finished run on the full season.
    Benchmark {
        #[arg(long)]
        run: PathBuf,
        /// Plan file; defaults to the snapshot inside the run.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Season table; defaults to the plan's scenario source.
        #[arg(long)]
        season: Option<PathBuf>,
    },
    /// Merge fronts and hypervolume traces of several runs.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Shared reference point `cost,res`.
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        reference: Option<[f64; 2]>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Scale {
    Small,
    Large,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Selection {
    Joint,
    Independent,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [a, b] => Ok([a, b]),
        _ => Err(format!("expected two comma-separated numbers, got {}", v.len())),
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Synth {
            out,
            days,
            seed,
            scale,
            system,
        } => {
            let scale = match scale {
                Scale::Small => SystemScale::Small,
                Scale::Large => SystemScale::Large,
            };
            data::synth(&out, days, seed, scale, system.as_deref())
        }
        Command::Scenarios { input, out, selection } => {
            let mode = match selection {
                Selection::Joint => SelectionMode::Joint,
                Selection::Independent => SelectionMode::Independent,
            };
            data::scenarios(&input, &out, mode)
        }
        Command::Plan {
            config,
            algorithm,
            budget,
            seed,
            out,
        } => plan::plan(&config, plan::Overrides { algorithm, budget, seed }, &out),
        Command::Benchmark { run, config, season } => benchmark::benchmark(&run, config.as_deref(), season.as_deref()),
        Command::Report { runs, out, reference } => report::report(&runs, &out, reference),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
