//! Middle level: a component is a geometry CPPN plus pointers into material
//! archives. Expression queries the geometry over a small lattice, resolves
//! each pointer to a concrete material, and aggregates per-cell material
//! properties into one mechanical phenotype. Three class-specific search
//! processes exist: structure, actuator, sensor.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::cppn::{Cppn, CppnMutationRates};
use crate::error::{Error, Result};
use crate::materials::{express_material, MaterialGenome, MaterialPhenotype, ProcessTable};

/// Number of material slots per component. Fixed: pointer mutation needs a
/// stable arity, and two slots already exercise multi-material composition.
pub const SLOT_COUNT: usize = 2;

/// Minimum capability for a component to count as an actuator or sensor.
pub const CLASS_VALIDITY_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentClass {
    Structure,
    Actuator,
    Sensor,
}

impl ComponentClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ComponentClass::Structure => "structure",
            ComponentClass::Actuator => "actuator",
            ComponentClass::Sensor => "sensor",
        }
    }

    pub const ALL: [ComponentClass; 3] =
        [ComponentClass::Structure, ComponentClass::Actuator, ComponentClass::Sensor];
}

impl std::str::FromStr for ComponentClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structure" => Ok(ComponentClass::Structure),
            "actuator" => Ok(ComponentClass::Actuator),
            "sensor" => Ok(ComponentClass::Sensor),
            other => Err(Error::Config(format!("unknown component class {other:?}"))),
        }
    }
}

/// Pointer into a two-dimensional material archive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterialPointer {
    pub process: String,
    pub i: usize,
    pub j: usize,
}

impl MaterialPointer {
    pub fn bin(&self) -> Vec<usize> {
        vec![self.i, self.j]
    }
}

/// Geometry CPPN (4 inputs; outputs: occupancy, slot selector) plus one
/// material pointer per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentGenome {
    pub class: ComponentClass,
    pub geometry: Cppn,
    pub pointers: Vec<MaterialPointer>,
}

/// One cell of the expressed component lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellFill {
    pub occupied: bool,
    pub slot: usize,
}

/// Aggregate mechanical phenotype of a component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentPhenotype {
    /// Row-major `lattice_size^2` cells.
    pub occupancy: Vec<CellFill>,
    pub mass: f64,
    pub mean_stiffness: f64,
    pub mean_damping: f64,
    pub actuation_capability: f64,
    pub sensor_quality: f64,
    pub cost: f64,
    pub valid_for_class: bool,
}

impl ComponentPhenotype {
    /// Archive features: (mass, log10 mean stiffness).
    pub fn features(&self) -> Vec<f64> {
        vec![self.mass, self.mean_stiffness.log10()]
    }

    pub fn fitness(&self) -> f64 {
        -self.cost
    }

    pub fn occupied_cells(&self) -> usize {
        self.occupancy.iter().filter(|c| c.occupied).count()
    }
}

/// Expression result, including which archive bins each slot pointer
/// actually resolved to (used for cascade dependency tracking).
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressedComponent {
    pub phenotype: ComponentPhenotype,
    /// (process, resolved bin) per slot, same order as the genome pointers.
    pub resolved_bins: Vec<(String, Vec<usize>)>,
}

/// Follow a pointer into a material archive. If the addressed bin is empty
/// the nearest occupied bin by Euclidean index distance is used instead
/// (ties broken by lexicographically smallest index); only a fully empty
/// archive is an error.
pub fn resolve_pointer<'a>(
    ptr: &MaterialPointer,
    archives: &'a BTreeMap<String, Archive>,
) -> Result<(Vec<usize>, &'a crate::archive::Elite)> {
    let archive = archives
        .get(&ptr.process)
        .ok_or_else(|| Error::Config(format!("unknown material process {:?}", ptr.process)))?;
    resolve_in_archive(&ptr.bin(), archive)
}

/// Nearest-occupied lookup shared by material and component pointers.
pub fn resolve_in_archive<'a>(
    bin: &[usize],
    archive: &'a Archive,
) -> Result<(Vec<usize>, &'a crate::archive::Elite)> {
    if let Some(elite) = archive.get(bin) {
        return Ok((bin.to_vec(), elite));
    }
    let mut best: Option<(f64, &Vec<usize>, &crate::archive::Elite)> = None;
    for (index, elite) in archive.iter() {
        let dist: f64 = index
            .iter()
            .zip(bin)
            .map(|(&a, &b)| {
                let d = a as f64 - b as f64;
                d * d
            })
            .sum();
        // Lexicographic iteration order makes "strictly smaller" keep the
        // lexicographically smallest index among ties.
        if best.map_or(true, |(d, _, _)| dist < d) {
            best = Some((dist, index, elite));
        }
    }
    match best {
        Some((_, index, elite)) => Ok((index.clone(), elite)),
        None => Err(Error::UnresolvedPointer { archive: archive.tag() }),
    }
}

/// Pure aggregation over an occupied lattice given the resolved material of
/// each slot. Assumes at least one occupied cell.
pub fn aggregate(
    cells: &[CellFill],
    slots: &[MaterialPhenotype],
    cell_volume: f64,
) -> (f64, f64, f64, f64, f64, f64) {
    let mut mass = 0.0;
    let mut stiffness_sum = 0.0;
    let mut damping_sum = 0.0;
    let mut actuation = 0.0f64;
    let mut sensitivity_sum = 0.0;
    let mut cost = 0.0;
    let mut count = 0usize;
    for cell in cells.iter().filter(|c| c.occupied) {
        let m = &slots[cell.slot];
        mass += m.density * cell_volume;
        stiffness_sum += m.stiffness;
        damping_sum += m.damping_ratio;
        actuation = actuation.max(m.actuation_gain);
        sensitivity_sum += m.sensitivity;
        cost += m.unit_cost * cell_volume * 1e3;
        count += 1;
    }
    let n = count as f64;
    (mass, stiffness_sum / n, damping_sum / n, actuation, sensitivity_sum / n, cost)
}

/// Express a component against the current material archives.
///
/// The geometry CPPN is queried over the lattice; a cell is occupied iff its
/// first output is positive, and takes slot 0 or 1 from the sign of the
/// second. A fully empty lattice forces the centre cell occupied with slot 0
/// so no component is ever empty.
pub fn express_component(
    genome: &ComponentGenome,
    material_archives: &BTreeMap<String, Archive>,
    table: &ProcessTable,
    lattice_size: usize,
    cell_side: f64,
) -> Result<ExpressedComponent> {
    let mut resolved_bins = Vec::with_capacity(genome.pointers.len());
    let mut slots = Vec::with_capacity(genome.pointers.len());
    for ptr in &genome.pointers {
        let (bin, elite) = resolve_pointer(ptr, material_archives)?;
        let material: MaterialGenome = serde_json::from_value(elite.genome.clone())?;
        slots.push(express_material(&material, table)?);
        resolved_bins.push((ptr.process.clone(), bin));
    }

    let grid = genome.geometry.query_lattice(lattice_size, lattice_size)?;
    let mut cells = Vec::with_capacity(lattice_size * lattice_size);
    for row in 0..lattice_size {
        for col in 0..lattice_size {
            let out = &grid[row][col];
            cells.push(CellFill {
                occupied: out[0] > 0.0,
                slot: if out[1] <= 0.0 { 0 } else { 1 },
            });
        }
    }
    if cells.iter().all(|c| !c.occupied) {
        let centre = (lattice_size - 1) / 2;
        cells[centre * lattice_size + centre] = CellFill { occupied: true, slot: 0 };
    }

    let cell_volume = cell_side.powi(3);
    let (mass, mean_stiffness, mean_damping, actuation, sensor_quality, cost) =
        aggregate(&cells, &slots, cell_volume);
    let valid_for_class = match genome.class {
        ComponentClass::Structure => true,
        ComponentClass::Actuator => actuation >= CLASS_VALIDITY_THRESHOLD,
        ComponentClass::Sensor => sensor_quality >= CLASS_VALIDITY_THRESHOLD,
    };
    Ok(ExpressedComponent {
        phenotype: ComponentPhenotype {
            occupancy: cells,
            mass,
            mean_stiffness,
            mean_damping,
            actuation_capability: actuation,
            sensor_quality,
            cost,
            valid_for_class,
        },
        resolved_bins,
    })
}

/// Mutation rates for component genomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComponentMutationRates {
    /// Probability of mutating the geometry CPPN.
    pub geometry_prob: f64,
    /// Per-pointer probability of jittering its bin indices.
    pub pointer_prob: f64,
}

impl Default for ComponentMutationRates {
    fn default() -> Self {
        Self { geometry_prob: 0.7, pointer_prob: 0.3 }
    }
}

/// Mutate geometry and/or pointers. Jittered pointer indices move by a
/// uniform step in {-1, 0, +1} per axis, clamped to the target archive's
/// bin range. The class never mutates.
pub fn mutate_component<R: Rng>(
    genome: &ComponentGenome,
    rng: &mut R,
    rates: &ComponentMutationRates,
    cppn_rates: &CppnMutationRates,
    material_bins: &BTreeMap<String, [usize; 2]>,
) -> ComponentGenome {
    let geometry = if rng.random::<f64>() < rates.geometry_prob {
        genome.geometry.mutate(rng, cppn_rates)
    } else {
        genome.geometry.clone()
    };
    let mut pointers = genome.pointers.clone();
    for ptr in &mut pointers {
        if rng.random::<f64>() < rates.pointer_prob {
            let bins = material_bins.get(&ptr.process).copied().unwrap_or([1, 1]);
            ptr.i = jitter_index(ptr.i, bins[0], rng);
            ptr.j = jitter_index(ptr.j, bins[1], rng);
        }
    }
    ComponentGenome { class: genome.class, geometry, pointers }
}

fn jitter_index<R: Rng>(value: usize, bins: usize, rng: &mut R) -> usize {
    let step = rng.random_range(-1i64..=1);
    (value as i64 + step).clamp(0, bins.max(1) as i64 - 1) as usize
}
