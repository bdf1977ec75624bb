use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use impact_game::{parse_config, run_experiment, write_outcome, CliError, ExperimentKind};

/// Log verbosity, e.g. `IMPACT_GAME_LOG=debug`.
const LOG_ENV: &str = "IMPACT_GAME_LOG";

#[derive(Parser, Debug)]
#[command(name = "impact-game", version, about = "Nash equilibria and stability of multi-agent transient impact games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Subcommand, Debug)]
enum Command {
    /// Equilibrium strategies of every agent.
    Equilibrium(Common),
    /// Equilibrium strategies with expected cost, variance and mean-variance.
    Costs(Common),
    /// Costs for every combination of traded-asset choices.
    PayoffMatrix(Common),
    /// Critical transaction cost below which the market oscillates.
    ThetaCritical(Common),
    /// Estimated vs predicted critical transaction cost over a parameter grid.
    Sweep(Common),
    /// Price paths with and without the equilibrium trades.
    Simulate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Solver tolerance; overrides `solver.tol`.
    #[arg(long)]
    tol: Option<f64>,
}

fn run(cli: Cli) -> Result<PathBuf, CliError> {
    let (kind, args) = match cli.command {
        Command::Equilibrium(a) => (ExperimentKind::Equilibrium, a),
        Command::Costs(a) => (ExperimentKind::Costs, a),
        Command::PayoffMatrix(a) => (ExperimentKind::PayoffMatrix, a),
        Command::ThetaCritical(a) => (ExperimentKind::ThetaCritical, a),
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Simulate(a) => (ExperimentKind::Simulate, a),
    };
    let text = std::fs::read_to_string(&args.config).map_err(|e| CliError::io(args.config.display().to_string(), e))?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(tol) = args.tol {
        if tol.is_nan() || tol <= 0.0 {
            return Err(CliError::usage("--tol", "tolerance must be positive"));
        }
        config.solver.tol = tol;
    }
    if let Some(out) = &args.out {
        config.output.dir = Some(out.display().to_string());
    }
    let dir = PathBuf::from(config.output.dir.clone().unwrap_or_else(|| "out".into()));
    let mut outcome = run_experiment(&config, kind)?;
    write_outcome(&mut outcome, &dir)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({ "error": e.report() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
