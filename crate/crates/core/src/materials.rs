//! Lowest level: a synthetic four-parameter material model standing in for
//! real chemistry. Expression is a closed form from genome to physical
//! properties, so material evaluation has no reality gap; fitness is the
//! negated unit cost.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spring-constant scale is clamped into this decade range.
pub const STIFFNESS_MIN: f64 = 1e2;
pub const STIFFNESS_MAX: f64 = 1e6;

/// Genome of one material: four parameters in [0, 1].
/// g[0] composition, g[1] porosity, g[2] cure, g[3] additive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialGenome {
    pub process: String,
    pub g: [f64; 4],
}

impl MaterialGenome {
    pub fn new(process: impl Into<String>, g: [f64; 4]) -> Self {
        Self { process: process.into(), g: g.map(|v| v.clamp(0.0, 1.0)) }
    }
}

/// Derived physical properties of a material.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialPhenotype {
    /// kg/m^3
    pub density: f64,
    /// N/m, spring-constant scale
    pub stiffness: f64,
    /// dimensionless damping ratio
    pub damping_ratio: f64,
    /// dimensionless actuation gain in [0, 1]
    pub actuation_gain: f64,
    /// dimensionless sensing quality in [0, 1]
    pub sensitivity: f64,
    /// cost units per unit volume
    pub unit_cost: f64,
}

impl MaterialPhenotype {
    /// Archive features: (log10 stiffness, density).
    pub fn features(&self) -> Vec<f64> {
        vec![self.stiffness.log10(), self.density]
    }

    /// Lower cost is better.
    pub fn fitness(&self) -> f64 {
        -self.unit_cost
    }
}

/// Per-process expression coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessCoeffs {
    pub alpha_rho: f64,
    pub alpha_k: f64,
}

pub type ProcessTable = BTreeMap<String, ProcessCoeffs>;

/// Two default material search processes.
pub fn default_process_table() -> ProcessTable {
    let mut table = BTreeMap::new();
    table.insert("0".to_string(), ProcessCoeffs { alpha_rho: 1.0, alpha_k: 1.0 });
    table.insert("1".to_string(), ProcessCoeffs { alpha_rho: 0.6, alpha_k: 1.3 });
    table
}

/// Closed-form genome-to-phenotype map. Pure and fidelity-independent.
pub fn express_material(genome: &MaterialGenome, table: &ProcessTable) -> Result<MaterialPhenotype> {
    let coeffs = table
        .get(&genome.process)
        .ok_or_else(|| Error::Config(format!("unknown material process {:?}", genome.process)))?;
    let [g1, g2, g3, g4] = genome.g;
    let density = 300.0 + 1700.0 * coeffs.alpha_rho * g1 * (1.0 - 0.5 * g2);
    let stiffness =
        10f64.powf(2.0 + 4.0 * coeffs.alpha_k * g1 * g3).clamp(STIFFNESS_MIN, STIFFNESS_MAX);
    Ok(MaterialPhenotype {
        density,
        stiffness,
        damping_ratio: 0.05 + 0.5 * g2,
        actuation_gain: g4 * (1.0 - g3),
        sensitivity: g2 * g4,
        unit_cost: 1.0 + 10.0 * g3 + 5.0 * g4 + 2.0 * g1,
    })
}

/// Mutation rates for material genomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialMutationRates {
    pub per_gene_prob: f64,
    pub sigma: f64,
}

impl Default for MaterialMutationRates {
    fn default() -> Self {
        Self { per_gene_prob: 0.5, sigma: 0.1 }
    }
}

/// Gaussian jitter per gene; the process id never mutates (processes are
/// separate searches).
pub fn mutate_material<R: Rng>(
    genome: &MaterialGenome,
    rng: &mut R,
    rates: &MaterialMutationRates,
) -> MaterialGenome {
    use rand_distr::Distribution;
    let normal =
        rand_distr::Normal::new(0.0, rates.sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let mut g = genome.g;
    for v in &mut g {
        if rng.random::<f64>() < rates.per_gene_prob {
            *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
        }
    }
    MaterialGenome { process: genome.process.clone(), g }
}

/// Deterministic bootstrap lattice of known materials.
///
/// Points walk a row-major 4x4 lattice of (g1, g3) over {0, 1/3, 2/3, 1}.
/// The first pass uses g2 = g4 = 0.5; if more than 16 genomes are requested
/// the lattice repeats with g2 = g4 alternating 0.25, 0.75, ... so repeats
/// stay distinct.
pub fn bootstrap_materials(process: &str, n: usize) -> Vec<MaterialGenome> {
    let steps = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
    (0..n)
        .map(|k| {
            let point = k % 16;
            let cycle = k / 16;
            let g1 = steps[point / 4];
            let g3 = steps[point % 4];
            let fill = match cycle {
                0 => 0.5,
                c if c % 2 == 1 => 0.25,
                _ => 0.75,
            };
            MaterialGenome::new(process, [g1, fill, g3, fill])
        })
        .collect()
}
