//! Full experiment state: archives for every search process, the seeded rng,
//! budget accounting, the transferability predictor, evaluation records, the
//! dependency store, and the append-only evaluation log. The whole struct
//! serializes, and a reloaded state continues bit-identically.

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::archive::{Archive, Level};
use crate::components::ComponentClass;
use crate::error::{Error, Result};
use crate::hybrid::{EvalRecord, TransferabilityPredictor};
use crate::orchestrator::cascade::DependencyStore;
use crate::orchestrator::config::ExperimentConfig;
use crate::physics::Fidelity;

/// Loop iterations consumed per level, plus fine evaluations spent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consumed {
    pub material: u64,
    pub component: u64,
    pub robot: u64,
    pub fine: u64,
}

impl Consumed {
    pub fn loop_count(&self, level: Level) -> u64 {
        match level {
            Level::Material => self.material,
            Level::Component => self.component,
            Level::Robot => self.robot,
        }
    }

    pub fn add_loop(&mut self, level: Level) {
        match level {
            Level::Material => self.material += 1,
            Level::Component => self.component += 1,
            Level::Robot => self.robot += 1,
        }
    }
}

/// One evaluation-log line. Field order is the on-disk JSONL column order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalLogEntry {
    pub eval_id: u64,
    pub level: Level,
    pub process: String,
    pub genome_hash: String,
    pub fidelity: Fidelity,
    pub fitness: f64,
    pub features: Vec<f64>,
    pub descriptor: Vec<f64>,
    /// Simulated milliseconds for robot runs, 0 for closed-form levels.
    /// Deterministic by construction so logs are byte-reproducible.
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentState {
    pub config: ExperimentConfig,
    pub rng: ChaCha8Rng,
    pub material_archives: BTreeMap<String, Archive>,
    pub component_archives: BTreeMap<String, Archive>,
    pub robot_archive: Archive,
    pub eval_counter: u64,
    pub consumed: Consumed,
    /// Robot-level loop iterations, for promotion cadence.
    pub robot_loop_iters: u64,
    /// Smooth weighted-round-robin credits (material, component, robot).
    pub wrr_credits: [f64; 3],
    pub predictor: TransferabilityPredictor,
    /// Evaluation history per genome hash.
    pub records: BTreeMap<String, EvalRecord>,
    pub deps: DependencyStore,
    /// Append-only JSONL evaluation log.
    pub log: Vec<String>,
    /// Per-(level, fidelity) evaluation counts, keys like "robot:real".
    pub eval_counts: BTreeMap<String, u64>,
    /// Archive metrics captured right after bootstrap + seeding.
    pub post_seed: Option<Vec<ArchiveReportEntry>>,
}

/// Per-archive block of the experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveReportEntry {
    pub level: Level,
    pub process: String,
    pub occupied: usize,
    pub total_bins: usize,
    pub coverage: f64,
    pub qd_score: f64,
    pub best_fitness: Option<f64>,
}

/// Final experiment summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub budgets: crate::orchestrator::config::Budgets,
    pub consumed: Consumed,
    pub eval_counts: BTreeMap<String, u64>,
    pub post_seed: Vec<ArchiveReportEntry>,
    pub archives: Vec<ArchiveReportEntry>,
}

impl ExperimentState {
    /// Empty state: archives exist but hold nothing; call `init` to
    /// bootstrap and seed them.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        use rand::SeedableRng;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut material_archives = BTreeMap::new();
        for process in config.processes.material.keys() {
            material_archives.insert(
                process.clone(),
                Archive::new(config.archives.material.feature_spec()?, Level::Material, process),
            );
        }
        let mut component_archives = BTreeMap::new();
        for class in ComponentClass::ALL {
            component_archives.insert(
                class.as_str().to_string(),
                Archive::new(
                    config.archives.component.feature_spec()?,
                    Level::Component,
                    class.as_str(),
                ),
            );
        }
        let robot_archive =
            Archive::new(config.archives.robot.feature_spec()?, Level::Robot, "0");
        let robot_bounds = vec![
            (config.archives.robot.dim0[0], config.archives.robot.dim0[1]),
            (config.archives.robot.dim1[0], config.archives.robot.dim1[1]),
        ];
        let predictor = TransferabilityPredictor::new(
            config.hybrid.knn_k,
            config.hybrid.prior_gap,
            robot_bounds,
        );
        Ok(Self {
            config,
            rng,
            material_archives,
            component_archives,
            robot_archive,
            eval_counter: 0,
            consumed: Consumed::default(),
            robot_loop_iters: 0,
            wrr_credits: [0.0; 3],
            predictor,
            records: BTreeMap::new(),
            deps: DependencyStore::default(),
            log: Vec::new(),
            eval_counts: BTreeMap::new(),
            post_seed: None,
        })
    }

    pub fn archive(&self, level: Level, process: &str) -> Result<&Archive> {
        let found = match level {
            Level::Material => self.material_archives.get(process),
            Level::Component => self.component_archives.get(process),
            Level::Robot => (process == "0").then_some(&self.robot_archive),
        };
        found.ok_or_else(|| Error::Config(format!("no archive {}:{process}", level.as_str())))
    }

    pub fn archive_mut(&mut self, level: Level, process: &str) -> Result<&mut Archive> {
        let found = match level {
            Level::Material => self.material_archives.get_mut(process),
            Level::Component => self.component_archives.get_mut(process),
            Level::Robot => (process == "0").then_some(&mut self.robot_archive),
        };
        found.ok_or_else(|| Error::Config(format!("no archive {}:{process}", level.as_str())))
    }

    /// Process tags of one level, in fixed order.
    pub fn processes(&self, level: Level) -> Vec<String> {
        match level {
            Level::Material => self.material_archives.keys().cloned().collect(),
            Level::Component => {
                ComponentClass::ALL.iter().map(|c| c.as_str().to_string()).collect()
            }
            Level::Robot => vec!["0".to_string()],
        }
    }

    /// All archives in canonical order (levels, then process tag).
    pub fn all_archives(&self) -> Vec<&Archive> {
        let mut out: Vec<&Archive> = self.material_archives.values().collect();
        out.extend(self.component_archives.values());
        out.push(&self.robot_archive);
        out
    }

    /// Milliseconds of simulated time a robot evaluation covers; the
    /// deterministic stand-in for wallclock in the log.
    pub fn simulated_ms(&self, level: Level, fidelity: Fidelity) -> u64 {
        match level {
            Level::Robot => {
                (self.config.simulation.sim_config(fidelity).duration * 1e3).round() as u64
            }
            _ => 0,
        }
    }

    /// Append one evaluation to the log and bump the per-key counter.
    /// Returns the evaluation id.
    pub fn log_eval(
        &mut self,
        level: Level,
        process: &str,
        genome_hash: &str,
        fidelity: Fidelity,
        fitness: f64,
        features: &[f64],
        descriptor: &[f64],
    ) -> Result<u64> {
        self.eval_counter += 1;
        let entry = EvalLogEntry {
            eval_id: self.eval_counter,
            level,
            process: process.to_string(),
            genome_hash: genome_hash.to_string(),
            fidelity,
            fitness,
            features: features.to_vec(),
            descriptor: descriptor.to_vec(),
            wallclock_ms: self.simulated_ms(level, fidelity),
        };
        self.log.push(serde_json::to_string(&entry)?);
        *self
            .eval_counts
            .entry(format!("{}:{}", level.as_str(), fidelity.as_str()))
            .or_insert(0) += 1;
        Ok(self.eval_counter)
    }

    /// Update the per-genome evaluation record after one evaluation.
    pub fn record_eval(
        &mut self,
        genome_hash: &str,
        level: Level,
        process: &str,
        descriptor: &[f64],
        fidelity: Fidelity,
        fitness: f64,
        eval_id: u64,
    ) {
        let record = self.records.entry(genome_hash.to_string()).or_insert_with(|| EvalRecord {
            genome_hash: genome_hash.to_string(),
            level,
            process: process.to_string(),
            descriptor: descriptor.to_vec(),
            fitness_virtual: None,
            fitness_real: None,
            eval_ids: Vec::new(),
        });
        record.descriptor = descriptor.to_vec();
        match fidelity {
            Fidelity::Virtual => record.fitness_virtual = Some(fitness),
            Fidelity::Real => record.fitness_real = Some(fitness),
        }
        record.eval_ids.push(eval_id);
    }

    pub fn archive_report(&self) -> Vec<ArchiveReportEntry> {
        self.all_archives()
            .into_iter()
            .map(|a| {
                let m = a.metrics();
                ArchiveReportEntry {
                    level: a.level(),
                    process: a.process().to_string(),
                    occupied: m.occupied,
                    total_bins: m.total_bins,
                    coverage: m.coverage,
                    qd_score: m.qd_score,
                    best_fitness: m.best_fitness,
                }
            })
            .collect()
    }

    pub fn report(&self) -> ExperimentReport {
        ExperimentReport {
            seed: self.config.seed,
            budgets: self.config.budgets,
            consumed: self.consumed,
            eval_counts: self.eval_counts.clone(),
            post_seed: self.post_seed.clone().unwrap_or_default(),
            archives: self.archive_report(),
        }
    }
}
