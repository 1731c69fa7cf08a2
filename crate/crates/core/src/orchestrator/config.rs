//! Experiment configuration. Loaded from TOML; unknown keys are a hard
//! error so config drift fails fast instead of silently running defaults.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::archive::FeatureSpec;
use crate::components::ComponentMutationRates;
use crate::cppn::CppnMutationRates;
use crate::error::{Error, Result};
use crate::materials::{MaterialMutationRates, ProcessCoeffs, ProcessTable};
use crate::physics::{Fidelity, SimConfig};
use crate::robots::RobotMutationRates;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: String,
    pub budgets: Budgets,
    pub schedule: Schedule,
    pub bootstrap: Bootstrap,
    pub mutation: MutationConfig,
    pub archives: ArchivesConfig,
    pub processes: ProcessesConfig,
    pub simulation: SimulationConfig,
    pub hybrid: HybridConfig,
    pub lattice: LatticeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            output_dir: "out".into(),
            budgets: Budgets::default(),
            schedule: Schedule::default(),
            bootstrap: Bootstrap::default(),
            mutation: MutationConfig::default(),
            archives: ArchivesConfig::default(),
            processes: ProcessesConfig::default(),
            simulation: SimulationConfig::default(),
            hybrid: HybridConfig::default(),
            lattice: LatticeConfig::default(),
        }
    }
}

/// Evaluation budgets: per-level caps on illumination-loop iterations, plus
/// the total fine (real-fidelity) evaluation allowance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub material: u64,
    pub component: u64,
    pub robot: u64,
    pub fine: u64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { material: 2000, component: 2000, robot: 2000, fine: 100 }
    }
}

/// Level scheduling and promotion cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub material_weight: f64,
    pub component_weight: f64,
    pub robot_weight: f64,
    /// Run one promotion tranche every this many robot-level iterations.
    pub promotion_interval: u64,
    /// Fine evaluations per tranche (capped by the remaining fine budget).
    pub promotion_tranche: u64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            material_weight: 2.0,
            component_weight: 3.0,
            robot_weight: 5.0,
            promotion_interval: 50,
            promotion_tranche: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bootstrap {
    /// Known-material lattice size per material process.
    pub materials_per_process: usize,
    /// Random seed genomes per component class archive.
    pub component_seeds: usize,
    /// Random seed genomes for the robot archive.
    pub robot_seeds: usize,
    /// Attempts per seed slot before aborting with a diagnostic.
    pub seed_retry_limit: usize,
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self {
            materials_per_process: 16,
            component_seeds: 20,
            robot_seeds: 20,
            seed_retry_limit: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationConfig {
    pub cppn: CppnMutationRates,
    pub material: MaterialMutationRates,
    pub component: ComponentMutationRates,
    pub robot: RobotMutationRates,
}

/// Bounds and bin counts of one 2D archive grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid2 {
    pub bins: [usize; 2],
    pub dim0: [f64; 2],
    pub dim1: [f64; 2],
}

impl Default for Grid2 {
    fn default() -> Self {
        Self { bins: [10, 10], dim0: [0.0, 1.0], dim1: [0.0, 1.0] }
    }
}

impl Grid2 {
    pub fn feature_spec(&self) -> Result<FeatureSpec> {
        FeatureSpec::grid2(
            (self.dim0[0], self.dim0[1], self.bins[0]),
            (self.dim1[0], self.dim1[1], self.bins[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchivesConfig {
    /// Material grids: (log10 stiffness, density).
    pub material: Grid2,
    /// Component grids: (mass, log10 mean stiffness).
    pub component: Grid2,
    /// Robot grid: (cell count, actuator fraction).
    pub robot: Grid2,
}

impl Default for ArchivesConfig {
    fn default() -> Self {
        Self {
            material: Grid2 { bins: [10, 10], dim0: [2.0, 6.0], dim1: [300.0, 2000.0] },
            component: Grid2 { bins: [10, 10], dim0: [0.0, 32.0], dim1: [2.0, 6.0] },
            robot: Grid2 { bins: [12, 10], dim0: [1.0, 36.0], dim1: [0.0, 1.0] },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessesConfig {
    /// Keyed by material process id; values are expression coefficients.
    pub material: BTreeMap<String, ProcessCoeffs>,
}

impl Default for ProcessesConfig {
    fn default() -> Self {
        Self { material: crate::materials::default_process_table() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timestep {
    pub dt: f64,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub gravity: f64,
    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub friction_mu: f64,
    pub real: Timestep,
    #[serde(rename = "virtual")]
    pub coarse: Timestep,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            ground_stiffness: 1e4,
            ground_damping: 10.0,
            friction_mu: 1.0,
            real: Timestep { dt: 1e-3, duration: 5.0 },
            coarse: Timestep { dt: 5e-3, duration: 5.0 },
        }
    }
}

impl SimulationConfig {
    pub fn sim_config(&self, fidelity: Fidelity) -> SimConfig {
        let ts = match fidelity {
            Fidelity::Real => self.real,
            Fidelity::Virtual => self.coarse,
        };
        SimConfig {
            dt: ts.dt,
            duration: ts.duration,
            gravity: self.gravity,
            ground_stiffness: self.ground_stiffness,
            ground_damping: self.ground_damping,
            friction_mu: self.friction_mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridConfig {
    /// Neighbours used by the transferability predictor.
    pub knn_k: usize,
    /// Predicted gap before any dual evaluations exist, metres.
    pub prior_gap: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self { knn_k: 5, prior_gap: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    /// Component geometry lattice edge length (cells).
    pub component_size: usize,
    /// Robot body lattice edge length (cells).
    pub body_size: usize,
    /// Physical cell edge, metres.
    pub cell_side: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { component_size: 4, body_size: 6, cell_side: 0.1 }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn process_table(&self) -> &ProcessTable {
        &self.processes.material
    }

    pub fn validate(&self) -> Result<()> {
        if self.processes.material.is_empty() {
            return Err(Error::Config("at least one material process is required".into()));
        }
        for w in [
            self.schedule.material_weight,
            self.schedule.component_weight,
            self.schedule.robot_weight,
        ] {
            if !(w > 0.0) {
                return Err(Error::Config(format!("schedule weights must be > 0, got {w}")));
            }
        }
        if self.schedule.promotion_interval == 0 {
            return Err(Error::Config("promotion_interval must be >= 1".into()));
        }
        if self.bootstrap.materials_per_process == 0
            || self.bootstrap.component_seeds == 0
            || self.bootstrap.robot_seeds == 0
        {
            return Err(Error::Config("bootstrap sizes must be >= 1".into()));
        }
        if self.bootstrap.seed_retry_limit == 0 {
            return Err(Error::Config("seed_retry_limit must be >= 1".into()));
        }
        self.archives.material.feature_spec()?;
        self.archives.component.feature_spec()?;
        self.archives.robot.feature_spec()?;
        self.simulation.sim_config(Fidelity::Real).validate()?;
        self.simulation.sim_config(Fidelity::Virtual).validate()?;
        if self.lattice.component_size == 0 || self.lattice.body_size == 0 {
            return Err(Error::Config("lattice sizes must be >= 1".into()));
        }
        if !(self.lattice.cell_side > 0.0) {
            return Err(Error::Config("cell_side must be > 0".into()));
        }
        if self.hybrid.knn_k == 0 {
            return Err(Error::Config("knn_k must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let config = ExperimentConfig::default();
        let text = config.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, config);
    }

    #[test]
    fn minimal_toml_uses_defaults() {
        let config = ExperimentConfig::from_toml_str("seed = 7\n").unwrap();
        assert_eq!(config.seed, 7);
        assert_eq!(config.budgets, Budgets::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("sede = 7\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[budgets]\nmaterials = 10\n").is_err());
        assert!(
            ExperimentConfig::from_toml_str("[simulation.real]\ndt = 0.001\ntimestep = 1\n")
                .is_err()
        );
    }

    #[test]
    fn process_table_keys() {
        let text = r#"
[processes.material.0]
alpha_rho = 1.0
alpha_k = 1.0

[processes.material.1]
alpha_rho = 0.6
alpha_k = 1.3
"#;
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.processes.material.len(), 2);
        assert_eq!(config.processes.material["1"].alpha_k, 1.3);
    }

    #[test]
    fn bad_weights_rejected() {
        let mut config = ExperimentConfig::default();
        config.schedule.robot_weight = 0.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn virtual_timestep_key_is_renamed() {
        let text = "[simulation.virtual]\ndt = 0.002\nduration = 3.0\n";
        let config = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(config.simulation.coarse.dt, 0.002);
        let sim = config.simulation.sim_config(Fidelity::Virtual);
        assert_eq!(sim.duration, 3.0);
    }
}
