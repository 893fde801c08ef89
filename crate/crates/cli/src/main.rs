//! `nsadisp`: run threshold, inversion, evolution and transform scenarios from JSON files.

mod pipelines;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::pipelines::Context;
use crate::scenario::{builtin_scenarios, Pipeline, Scenario};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Assertion(String),
}

impl From<nsadisp::Error> for CliError {
    fn from(e: nsadisp::Error) -> Self {
        match e {
            nsadisp::Error::InvalidGrid(_) | nsadisp::Error::InvalidArgument(_) => CliError::Config(e.to_string()),
            other => CliError::Assertion(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "nsadisp", version, about = "Dispersive estimates for Schrödinger operators with threshold obstructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// output directory for reports
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// seed for randomized test functions
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// node-count multiplier for refinement studies
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    grid_scale: u8,
}

#[derive(Subcommand)]
enum Command {
    /// zero-energy null space, filtration and Jordan basis
    Threshold(ConfigArg),
    /// low-energy inverse scan
    Invert(ConfigArg),
    /// propagate a bump and fit the decay exponent
    Evolve(ConfigArg),
    /// lambda -> rho transform of the windowed inverse
    Ftscan(ConfigArg),
    /// every pipeline in sequence, ending with the decay-exponent check
    Full(ConfigArg),
    /// write the builtin scenario files into --out
    Fixtures,
}

#[derive(clap::Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let (pipeline, path) = match &cli.command {
        Command::Fixtures => {
            for (name, s) in builtin_scenarios() {
                let mut text = serde_json::to_string_pretty(&s).expect("serializable");
                text.push('\n');
                std::fs::create_dir_all(&cli.out).map_err(|e| CliError::Config(e.to_string()))?;
                std::fs::write(cli.out.join(name), text).map_err(|e| CliError::Config(e.to_string()))?;
            }
            return Ok(());
        }
        Command::Threshold(c) => (Pipeline::Threshold, &c.config),
        Command::Invert(c) => (Pipeline::Inverse, &c.config),
        Command::Evolve(c) => (Pipeline::Evolve, &c.config),
        Command::Ftscan(c) => (Pipeline::Ftscan, &c.config),
        Command::Full(c) => (Pipeline::Full, &c.config),
    };
    let scenario = Scenario::load(path)?;
    if let Some(p) = scenario.pipeline {
        if p != pipeline && p != Pipeline::Full {
            return Err(CliError::Config(format!("scenario is for {p:?}, not {pipeline:?}")));
        }
    }
    let grid = scenario.build_grid(cli.grid_scale as usize)?;
    let v = scenario.build_potential(&grid)?;
    let ctx = Context { scenario: &scenario, grid, v, out: &cli.out, seed: cli.seed };
    match pipeline {
        Pipeline::Threshold => pipelines::threshold(&ctx).map(|_| ()),
        Pipeline::Inverse => {
            let (basis, _) = pipelines::threshold(&ctx)?;
            pipelines::inverse(&ctx, &basis).map(|_| ())
        }
        Pipeline::Evolve => {
            let basis = if scenario.evolve.project { Some(pipelines::threshold(&ctx)?.0) } else { None };
            pipelines::evolve(&ctx, basis.as_ref()).map(|_| ())
        }
        Pipeline::Ftscan => {
            let (basis, _) = pipelines::threshold(&ctx)?;
            let reg = if basis.is_empty() { None } else { Some(pipelines::inverse(&ctx, &basis)?.0) };
            pipelines::ftscan(&ctx, &basis, reg.as_ref()).map(|_| ())
        }
        Pipeline::Full => pipelines::full(&ctx),
    }
}

fn main() -> ExitCode {
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Assertion(m)) => {
            eprintln!("nsadisp: check failed: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Config(m)) => {
            eprintln!("nsadisp: configuration error: {m}");
            ExitCode::from(3)
        }
    }
}
