//! Hybridisation machinery: one genome representation evaluated at two
//! fidelities, provenance-aware archive competition, and a k-nearest-
//! neighbour transferability predictor that estimates the coarse simulator's
//! error for a given design.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::archive::{Archive, BinRef, Elite, InsertOutcome, Level, Provenance};
use crate::components::{express_component, ComponentGenome};
use crate::error::{Error, Result};
use crate::materials::{express_material, MaterialGenome, ProcessTable};
use crate::physics::{build_model, simulate, Fidelity, SimConfig, DIVERGED_FITNESS};
use crate::robots::{descriptor, express_robot, RobotGenome};

/// Canonical JSON for hashing and snapshot embedding: serialization goes
/// through `serde_json::Value`, whose object keys are sorted, so equal values
/// always produce identical bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string(&v)?)
}

/// Stable digest of a canonical genome serialization.
pub fn genome_hash(canonical: &str) -> String {
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

/// One genome's evaluation history across fidelities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub genome_hash: String,
    pub level: Level,
    pub process: String,
    pub descriptor: Vec<f64>,
    pub fitness_virtual: Option<f64>,
    pub fitness_real: Option<f64>,
    pub eval_ids: Vec<u64>,
}

impl EvalRecord {
    pub fn gap(&self) -> Option<f64> {
        match (self.fitness_virtual, self.fitness_real) {
            (Some(v), Some(r)) => Some((r - v).abs()),
            _ => None,
        }
    }
}

/// k-nearest-neighbour regressor over (descriptor, |fitness gap|) pairs.
/// Distances are Euclidean over descriptors normalised per dimension to
/// [0, 1] by the robot archive bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferabilityPredictor {
    pairs: Vec<(Vec<f64>, f64)>,
    k: usize,
    /// Returned before any training pair exists.
    prior_gap: f64,
    /// Per-dimension (lower, upper) normalisation bounds.
    bounds: Vec<(f64, f64)>,
}

impl TransferabilityPredictor {
    pub fn new(k: usize, prior_gap: f64, bounds: Vec<(f64, f64)>) -> Self {
        Self { pairs: Vec::new(), k: k.max(1), prior_gap, bounds }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn add_pair(&mut self, descriptor: Vec<f64>, gap: f64) {
        self.pairs.push((descriptor, gap.abs()));
    }

    fn normalised(&self, descriptor: &[f64]) -> Vec<f64> {
        descriptor
            .iter()
            .enumerate()
            .map(|(d, &v)| match self.bounds.get(d) {
                Some(&(lo, hi)) if hi > lo => (v - lo) / (hi - lo),
                _ => v,
            })
            .collect()
    }

    /// Mean gap of the k nearest training pairs (k capped at the training
    /// set size); the configured prior when no pairs exist. Always >= 0.
    pub fn predict(&self, descriptor: &[f64]) -> f64 {
        if self.pairs.is_empty() {
            return self.prior_gap;
        }
        let query = self.normalised(descriptor);
        let mut scored: Vec<(f64, usize)> = self
            .pairs
            .iter()
            .enumerate()
            .map(|(idx, (d, _))| {
                let nd = self.normalised(d);
                let dist: f64 =
                    nd.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
                (dist, idx)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let k = self.k.min(scored.len());
        let sum: f64 = scored[..k].iter().map(|&(_, idx)| self.pairs[idx].1).sum();
        sum / k as f64
    }
}

/// Outcome of evaluating one genome at one fidelity.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub fitness: f64,
    pub features: Vec<f64>,
    pub descriptor: Vec<f64>,
    /// True when the simulation blew up and the fitness is the sentinel.
    pub diverged: bool,
    /// False for components that fail their class validity gate; such
    /// candidates are evaluable but must not enter the archive.
    pub insertable: bool,
    /// Lower-level bins this evaluation depended on (nominal pointer targets
    /// plus resolved fallbacks). Empty at the material level.
    pub dependencies: Vec<BinRef>,
}

/// Shared expression and simulation parameters.
#[derive(Debug, Clone)]
pub struct EvalSettings<'a> {
    pub table: &'a ProcessTable,
    pub component_lattice: usize,
    pub body_lattice: usize,
    pub cell_side: f64,
    pub sim_real: SimConfig,
    pub sim_virtual: SimConfig,
}

impl<'a> EvalSettings<'a> {
    pub fn sim_config(&self, fidelity: Fidelity) -> &SimConfig {
        match fidelity {
            Fidelity::Real => &self.sim_real,
            Fidelity::Virtual => &self.sim_virtual,
        }
    }
}

/// Materials express through a closed form, identical at both fidelities.
pub fn evaluate_material(genome: &MaterialGenome, settings: &EvalSettings) -> Result<Evaluation> {
    let phenotype = express_material(genome, settings.table)?;
    let features = phenotype.features();
    Ok(Evaluation {
        fitness: phenotype.fitness(),
        descriptor: features.clone(),
        features,
        diverged: false,
        insertable: true,
        dependencies: Vec::new(),
    })
}

/// Components aggregate resolved materials; also fidelity-independent.
pub fn evaluate_component(
    genome: &ComponentGenome,
    material_archives: &BTreeMap<String, Archive>,
    settings: &EvalSettings,
) -> Result<Evaluation> {
    let out = express_component(
        genome,
        material_archives,
        settings.table,
        settings.component_lattice,
        settings.cell_side,
    )?;
    let mut dependencies = Vec::new();
    for ptr in &genome.pointers {
        dependencies.push(BinRef::new(Level::Material, ptr.process.clone(), ptr.bin()));
    }
    for (process, bin) in &out.resolved_bins {
        dependencies.push(BinRef::new(Level::Material, process.clone(), bin.clone()));
    }
    dependencies.sort();
    dependencies.dedup();
    let features = out.phenotype.features();
    Ok(Evaluation {
        fitness: out.phenotype.fitness(),
        descriptor: features.clone(),
        features,
        diverged: false,
        insertable: out.phenotype.valid_for_class,
        dependencies,
    })
}

/// Robots express against the component archives and run in the mass-spring
/// simulator at the requested fidelity. A diverged simulation yields the
/// large negative sentinel fitness instead of an error, keeping the search
/// loop total.
pub fn evaluate_robot(
    genome: &RobotGenome,
    component_archives: &BTreeMap<String, Archive>,
    material_archives: &BTreeMap<String, Archive>,
    fidelity: Fidelity,
    settings: &EvalSettings,
) -> Result<Evaluation> {
    let expressed = express_robot(
        genome,
        component_archives,
        material_archives,
        settings.table,
        settings.body_lattice,
        settings.component_lattice,
        settings.cell_side,
    )?;
    let desc = descriptor(&expressed.plan);
    let features = desc.features();
    let dependencies: Vec<BinRef> = expressed
        .dependencies
        .iter()
        .map(|(class, bin)| BinRef::new(Level::Component, class.as_str(), bin.clone()))
        .collect();
    let model = build_model(
        &expressed.plan,
        &expressed.cell_components,
        settings.cell_side,
        genome.controller.clone(),
    );
    let (fitness, diverged) = match simulate(&model, settings.sim_config(fidelity)) {
        Ok(outcome) => (outcome.fitness, false),
        Err(Error::Diverged { .. }) => (DIVERGED_FITNESS, true),
        Err(e) => return Err(e),
    };
    Ok(Evaluation {
        fitness,
        descriptor: features.clone(),
        features,
        diverged,
        insertable: true,
        dependencies,
    })
}

/// A virtual elite proposed for fine (real) evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PromotionCandidate {
    pub genome: serde_json::Value,
    pub genome_hash: String,
    pub fitness_virtual: f64,
    pub descriptor: Vec<f64>,
}

/// Rank candidates by `fitness_virtual - predicted gap`, descending, ties by
/// genome hash ascending. Returns indices into `candidates`; callers take
/// the top `fine_budget`.
pub fn rank_for_promotion(
    candidates: &[PromotionCandidate],
    predictor: &TransferabilityPredictor,
) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(idx, c)| (c.fitness_virtual - predictor.predict(&c.descriptor), idx))
        .collect();
    order.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then_with(|| candidates[a.1].genome_hash.cmp(&candidates[b.1].genome_hash))
    });
    order.into_iter().map(|(_, idx)| idx).collect()
}

/// Provenance-aware insertion. A real-provenance incumbent is displaced only
/// by a real candidate of higher fitness, or by a virtual candidate whose
/// fitness exceeds the incumbent's by more than its own predicted gap.
/// Everything else follows the plain strict-improvement rule.
pub fn insert_with_margin(
    archive: &mut Archive,
    candidate: Elite,
    predictor: &TransferabilityPredictor,
) -> Result<InsertOutcome> {
    if candidate.fitness.is_finite() && candidate.features.iter().all(|f| f.is_finite()) {
        let bin = archive.bin_of(&candidate.features)?;
        if let Some(incumbent) = archive.get(&bin) {
            if incumbent.provenance == Provenance::Real
                && candidate.provenance == Provenance::Virtual
            {
                let margin = predictor.predict(&candidate.features);
                if candidate.fitness <= incumbent.fitness + margin {
                    return Ok(InsertOutcome::Rejected);
                }
            }
        }
    }
    archive.try_insert(candidate)
}
