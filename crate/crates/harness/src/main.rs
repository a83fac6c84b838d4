use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sohb_core::gci::{self, GciProfile};
use sohb_core::micro::Model;
use sohb_harness::acceptance::run_suite;
use sohb_harness::config::{load_config, Mode, RunConfig};
use sohb_harness::output::constants_csv;
use sohb_harness::{init_threads, runs, HarnessError, Result};

#[derive(Parser)]
#[command(name = "sohb", version, about = "Body-attitude alignment: particles, constants, macroscopic fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gradual,
    Jump,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Gradual => Model::Gradual,
            ModelArg::Jump => Model::Jump,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Interacting particle system, one frame file per replica.
    Simulate(RunArgs),
    /// One particle in a constant prescribed field.
    Single(RunArgs),
    /// Hydrodynamic constants as CSV on stdout.
    Constants {
        #[arg(long = "D", value_delimiter = ',', required = true)]
        d: Vec<f64>,
        #[arg(long, value_enum, value_delimiter = ',', default_values = ["gradual", "jump"])]
        model: Vec<ModelArg>,
    },
    /// Constants from the collision-invariant profile as CSV on stdout; solver ladder on stderr.
    Gci {
        #[arg(long = "D")]
        d: f64,
        #[arg(long, value_enum, default_value = "gradual")]
        model: ModelArg,
        /// Also write the profile table `r,hbar,hbar_prime,residual` to this file.
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        points: usize,
    },
    /// Macroscopic system on a periodic line.
    Macro(RunArgs),
    /// Any mode, as selected by the config file.
    Run(RunArgs),
    /// Runs the acceptance suite; exit code 1 if any check fails.
    Validate {
        /// Only these criteria (comma separated ids).
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

fn load(args: &RunArgs) -> Result<RunConfig> {
    let mut config = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = &args.output {
        config.output = out.clone();
    }
    Ok(config)
}

fn validate(only: &[u8]) -> bool {
    let results = run_suite(only, |r| println!("{}", r.line()));
    let passed = results.iter().filter(|r| r.passed).count();
    println!("{passed}/{} criteria passed", results.len());
    passed == results.len()
}

fn dispatch(config: &RunConfig, mode: Mode) -> Result<bool> {
    let dir = config.output.clone();
    let meta = match mode {
        Mode::Simulate => runs::simulate(config, &dir)?,
        Mode::Single => runs::single(config, &dir)?,
        Mode::Constants => runs::constants(config, &dir)?,
        Mode::Gci => runs::gci_run(config, &dir)?,
        Mode::Macro => runs::macro_run(config, &dir)?,
        Mode::Validate => return Ok(validate(&[])),
    };
    eprintln!("wrote {} file(s) and {} to {}", meta.files.len(), runs::METADATA_FILE, dir.display());
    Ok(true)
}

fn execute(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Simulate(a) => dispatch(&load(&a)?, Mode::Simulate),
        Command::Single(a) => dispatch(&load(&a)?, Mode::Single),
        Command::Macro(a) => dispatch(&load(&a)?, Mode::Macro),
        Command::Run(a) => {
            let config = load(&a)?;
            dispatch(&config, config.mode)
        }
        Command::Constants { d, model } => {
            let mut rows = Vec::new();
            for &m in &model {
                for &d in &d {
                    rows.push(gci::constants(d, m.into())?);
                }
            }
            print!("{}", constants_csv(&rows));
            Ok(true)
        }
        Command::Gci {
            d,
            model,
            profile: table,
            points,
        } => {
            let profile = GciProfile::for_model(model.into(), d)?;
            for step in &profile.ladder {
                eprintln!("nodes {:>4}  residual {:.3e}", step.nodes, step.residual);
            }
            if let Some(path) = table {
                std::fs::write(&path, runs::profile_table(&profile, points))
                    .map_err(|e| HarnessError::io(&path, e))?;
            }
            print!("{}", constants_csv(&[gci::constants_for(&profile)?]));
            Ok(true)
        }
        Command::Validate { only } => Ok(validate(&only)),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
