//! `mle`: run and inspect multi-level evolution experiments.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 for runtime or
//! evaluation errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mle_core::archive::Level;
use mle_core::error::Error;
use mle_core::orchestrator::{self, ExperimentConfig};
use mle_core::physics::{build_model, simulate, trajectory_csv, Fidelity};
use mle_core::robots::{express_robot, RobotGenome};

#[derive(Parser)]
#[command(name = "mle", version, about = "Multi-level evolution of robots from materials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap materials and seed the component and robot archives,
    /// writing initial snapshots to the output directory.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a full experiment to budget exhaustion.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Export one archive as a heatmap CSV.
    Export {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        level: String,
        #[arg(long)]
        process: String,
        #[arg(long)]
        format: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-simulate one robot genome and write its trajectory CSV.
    Replay {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        genome: PathBuf,
        #[arg(long)]
        fidelity: String,
        #[arg(long)]
        trajectory: PathBuf,
    },
    /// Print per-archive coverage, QD-score, and best fitness as JSON.
    Metrics {
        #[arg(long)]
        run: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Init { config, out } => {
            let mut config = ExperimentConfig::from_toml_file(&config)?;
            config.output_dir = out.display().to_string();
            let state = orchestrator::init(config)?;
            orchestrator::save_state(&state, &out)?;
            println!(
                "initialised {} archives after {} evaluations; snapshots in {}",
                state.all_archives().len(),
                state.eval_counter,
                out.display()
            );
            Ok(())
        }
        Command::Run { config, out, seed } => {
            let mut config = ExperimentConfig::from_toml_file(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            config.output_dir = out.display().to_string();
            let (state, report) = orchestrator::run_experiment(config)?;
            orchestrator::save_state(&state, &out)?;
            orchestrator::save_report(&report, &out)?;
            println!(
                "run complete: {} evaluations ({} fine); report in {}",
                state.eval_counter,
                state.consumed.fine,
                out.display()
            );
            Ok(())
        }
        Command::Export { run, level, process, format, out } => {
            if format != "csv" {
                return Err(Error::Config(format!("unsupported export format {format:?}")));
            }
            let state = orchestrator::load_state(&run)?;
            let level: Level = level.parse()?;
            let archive = state.archive(level, &process)?;
            orchestrator::write_heatmap(archive, &out)?;
            Ok(())
        }
        Command::Replay { run, genome, fidelity, trajectory } => {
            let state = orchestrator::load_state(&run)?;
            let fidelity: Fidelity = fidelity.parse()?;
            let text = std::fs::read_to_string(&genome).map_err(|e| Error::Load {
                path: genome.display().to_string(),
                reason: e.to_string(),
            })?;
            let genome: RobotGenome = serde_json::from_str(&text).map_err(|e| Error::Load {
                path: genome.display().to_string(),
                reason: e.to_string(),
            })?;
            let expressed = express_robot(
                &genome,
                &state.component_archives,
                &state.material_archives,
                state.config.process_table(),
                state.config.lattice.body_size,
                state.config.lattice.component_size,
                state.config.lattice.cell_side,
            )?;
            let model = build_model(
                &expressed.plan,
                &expressed.cell_components,
                state.config.lattice.cell_side,
                genome.controller.clone(),
            );
            let outcome = simulate(&model, &state.config.simulation.sim_config(fidelity))?;
            if let Some(parent) = trajectory.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&trajectory, trajectory_csv(&outcome.trajectory))?;
            println!(
                "replayed at {} fidelity: fitness {} m over {} samples",
                fidelity.as_str(),
                outcome.fitness,
                outcome.trajectory.len()
            );
            Ok(())
        }
        Command::Metrics { run } => {
            let state = orchestrator::load_state(&run)?;
            println!("{}", serde_json::to_string_pretty(&state.archive_report())?);
            Ok(())
        }
    }
}
