use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lplab_cli::config::{parse_config, Kind};
use lplab_cli::error::CliError;
use lplab_cli::run::run_experiment;

#[derive(Parser)]
#[command(name = "lp-lab", version, about = "Spectral Landau-Pekar experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `LP_LAB_OUT` and the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-epsilon runs.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// March the ground-state reference trajectory.
    Reference(Common),
    /// Integrate the coupled system for every epsilon.
    Evolve(Common),
    /// Decompose coupled runs against the reference.
    Decompose(Common),
    /// Check the adiabatic estimate on a prescribed potential path.
    Adiabatic(Common),
    /// Measure dispersive decay of the projected flow.
    Dispersive(Common),
    /// Decompose over an epsilon sweep and fit scaling exponents.
    Sweep(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, common) = match cli.command {
        Command::Reference(c) => (Kind::Reference, c),
        Command::Evolve(c) => (Kind::Evolve, c),
        Command::Decompose(c) => (Kind::Decompose, c),
        Command::Adiabatic(c) => (Kind::Adiabatic, c),
        Command::Dispersive(c) => (Kind::Dispersive, c),
        Command::Sweep(c) => (Kind::Sweep, c),
    };
    let level = if common.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match execute(kind, &common) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(kind: Kind, common: &Common) -> Result<u8, CliError> {
    let cfg = parse_config(&common.config)?;
    let out = common
        .out
        .clone()
        .or_else(|| std::env::var_os("LP_LAB_OUT").map(PathBuf::from))
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("lp-lab-out"));
    let outcome = run_experiment(&cfg, kind, &out, common.workers)?;
    if let Some(e) = &outcome.error {
        log::error!("{e}");
    }
    Ok(outcome.exit_code())
}
