//! Experiment orchestration: configuration, the multi-level loop, cascading
//! staleness propagation, persistence, and exports.

pub mod cascade;
pub mod config;
pub mod export;
pub mod persist;
pub mod run;
pub mod state;

pub use cascade::DependencyStore;
pub use config::{Budgets, ExperimentConfig};
pub use export::{heatmap_csv, write_heatmap};
pub use persist::{load_state, save_report, save_state};
pub use run::{
    cascade_and_resweep, cascade_invalidate, evaluate_level, init, resweep_stale, run_experiment,
    run_to_completion, step,
};
pub use state::{ArchiveReportEntry, Consumed, ExperimentReport, ExperimentState};
