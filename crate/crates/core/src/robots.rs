//! Top level: a robot is a body-plan CPPN plus scalar controller parameters.
//! Expression queries the CPPN over a body lattice; each occupied cell gets a
//! component class, a pointer into that class's archive, and an actuation
//! phase. Post-processing keeps the largest 4-connected region so every body
//! is physically plausible.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::archive::Archive;
use crate::components::{
    express_component, resolve_in_archive, ComponentClass, ComponentGenome, ComponentPhenotype,
};
use crate::cppn::{Cppn, CppnMutationRates};
use crate::error::{Error, Result};
use crate::materials::ProcessTable;

/// Controller parameter ranges: (lower, upper).
pub const OMEGA_RANGE: (f64, f64) = (0.5, 4.0);
pub const AMPLITUDE_RANGE: (f64, f64) = (0.0, 1.0);
pub const FEEDBACK_RANGE: (f64, f64) = (-1.0, 1.0);

/// Number of body CPPN outputs: occupancy, three class scores, two pointer
/// coordinates, phase.
pub const BODY_OUTPUTS: usize = 7;

/// Open-loop oscillator parameters with an optional sensor feedback term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controller {
    /// Oscillation frequency, Hz.
    pub omega: f64,
    /// Drive amplitude in [0, 1].
    pub amplitude: f64,
    /// Gain on the sensed vertical velocity of the centre of mass.
    pub feedback_gain: f64,
}

impl Controller {
    pub fn clamped(omega: f64, amplitude: f64, feedback_gain: f64) -> Self {
        Self {
            omega: omega.clamp(OMEGA_RANGE.0, OMEGA_RANGE.1),
            amplitude: amplitude.clamp(AMPLITUDE_RANGE.0, AMPLITUDE_RANGE.1),
            feedback_gain: feedback_gain.clamp(FEEDBACK_RANGE.0, FEEDBACK_RANGE.1),
        }
    }

    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            omega: rng.random_range(OMEGA_RANGE.0..=OMEGA_RANGE.1),
            amplitude: rng.random_range(AMPLITUDE_RANGE.0..=AMPLITUDE_RANGE.1),
            feedback_gain: rng.random_range(FEEDBACK_RANGE.0..=FEEDBACK_RANGE.1),
        }
    }
}

/// Pointer into one component class archive.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComponentPointer {
    pub class: ComponentClass,
    pub i: usize,
    pub j: usize,
}

impl ComponentPointer {
    pub fn bin(&self) -> Vec<usize> {
        vec![self.i, self.j]
    }
}

/// Robot genome: body CPPN (4 inputs, 7 outputs) and controller scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotGenome {
    pub body: Cppn,
    pub controller: Controller,
}

impl RobotGenome {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self { body: Cppn::fully_connected(4, BODY_OUTPUTS, rng), controller: Controller::random(rng) }
    }
}

/// One occupied body cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyCell {
    pub pointer: ComponentPointer,
    /// Actuation phase in [-pi, pi].
    pub phase: f64,
}

/// Expressed body: a lattice of occupied cells forming one 4-connected
/// region, plus the resolved sensing quality of the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyPlan {
    pub size: usize,
    /// Row-major `size^2` cells; `None` is unoccupied.
    pub cells: Vec<Option<BodyCell>>,
    /// Mean sensor quality over resolved sensor cells, 0 if none.
    pub sensor_quality: f64,
}

impl BodyPlan {
    pub fn occupied_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&BodyCell> {
        self.cells[row * self.size + col].as_ref()
    }

    pub fn class_count(&self, class: ComponentClass) -> usize {
        self.cells
            .iter()
            .flatten()
            .filter(|c| c.pointer.class == class)
            .count()
    }
}

/// Feature descriptor of a robot: body size and actuation mix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotDescriptor {
    pub cell_count: usize,
    pub actuator_fraction: f64,
}

impl RobotDescriptor {
    pub fn features(&self) -> Vec<f64> {
        vec![self.cell_count as f64, self.actuator_fraction]
    }
}

/// Descriptor of an expressed body plan.
pub fn descriptor(plan: &BodyPlan) -> RobotDescriptor {
    let occupied = plan.occupied_cells();
    let actuators = plan.class_count(ComponentClass::Actuator);
    RobotDescriptor {
        cell_count: occupied,
        actuator_fraction: if occupied == 0 { 0.0 } else { actuators as f64 / occupied as f64 },
    }
}

/// Expression result: the plan, the resolved component phenotype per occupied
/// cell, and the set of component bins the robot depends on (nominal pointer
/// targets plus the bins they actually resolved to).
#[derive(Debug, Clone)]
pub struct ExpressedRobot {
    pub plan: BodyPlan,
    /// Keyed by (row, col).
    pub cell_components: BTreeMap<(usize, usize), ComponentPhenotype>,
    pub dependencies: std::collections::BTreeSet<(ComponentClass, Vec<usize>)>,
}

/// Keep only the largest 4-connected region of `mask` (row-major
/// `size x size`). Ties keep the region containing the lexicographically
/// smallest (row, col) cell.
pub fn largest_connected_region(mask: &[bool], size: usize) -> Vec<bool> {
    let mut labels = vec![usize::MAX; mask.len()];
    let mut region_sizes = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != usize::MAX {
            continue;
        }
        let label = region_sizes.len();
        let mut count = 0usize;
        let mut stack = vec![start];
        labels[start] = label;
        while let Some(idx) = stack.pop() {
            count += 1;
            let (row, col) = (idx / size, idx % size);
            let mut push = |r: usize, c: usize| {
                let n = r * size + c;
                if mask[n] && labels[n] == usize::MAX {
                    labels[n] = label;
                    stack.push(n);
                }
            };
            if row > 0 {
                push(row - 1, col);
            }
            if row + 1 < size {
                push(row + 1, col);
            }
            if col > 0 {
                push(row, col - 1);
            }
            if col + 1 < size {
                push(row, col + 1);
            }
        }
        region_sizes.push(count);
    }
    if region_sizes.is_empty() {
        return vec![false; mask.len()];
    }
    // Regions are discovered in order of their lexicographically smallest
    // member, so a strict comparison keeps the earliest region among ties.
    let mut best = 0;
    for (label, &count) in region_sizes.iter().enumerate() {
        if count > region_sizes[best] {
            best = label;
        }
    }
    labels.iter().map(|&l| l == best).collect()
}

/// Map a squashed pointer coordinate in [-1, 1] onto a bin index range.
fn pointer_axis(p: f64, bins: usize) -> usize {
    let frac = ((p + 1.0) / 2.0).clamp(0.0, 1.0);
    ((frac * bins as f64).floor() as usize).min(bins - 1)
}

/// Express a robot genome against the current component archives.
///
/// Cells are occupied where the CPPN's occupancy output is positive; the
/// class is the argmax of the three class scores (ties resolve structure >
/// actuator > sensor); pointer coordinates map onto the class archive's
/// index ranges; the phase output scales to [-pi, pi]. Post-processing keeps
/// the largest 4-connected region, and an all-empty lattice forces a single
/// structure cell at the lattice centre with pointer (0, 0).
pub fn express_robot(
    genome: &RobotGenome,
    component_archives: &BTreeMap<String, Archive>,
    material_archives: &BTreeMap<String, Archive>,
    table: &ProcessTable,
    body_size: usize,
    component_lattice: usize,
    cell_side: f64,
) -> Result<ExpressedRobot> {
    let grid = genome.body.query_lattice(body_size, body_size)?;

    let class_bins = |class: ComponentClass| -> Result<[usize; 2]> {
        let archive = component_archives
            .get(class.as_str())
            .ok_or_else(|| Error::Config(format!("missing component archive {:?}", class.as_str())))?;
        let dims = archive.spec().dims();
        Ok([dims[0].bins, dims[1].bins])
    };

    let mut mask = vec![false; body_size * body_size];
    let mut raw_cells: Vec<Option<BodyCell>> = vec![None; body_size * body_size];
    for row in 0..body_size {
        for col in 0..body_size {
            let out = &grid[row][col];
            let idx = row * body_size + col;
            if out[0] <= 0.0 {
                continue;
            }
            mask[idx] = true;
            let (c_struct, c_act, c_sens) = (out[1], out[2], out[3]);
            let class = if c_struct >= c_act && c_struct >= c_sens {
                ComponentClass::Structure
            } else if c_act >= c_sens {
                ComponentClass::Actuator
            } else {
                ComponentClass::Sensor
            };
            let bins = class_bins(class)?;
            raw_cells[idx] = Some(BodyCell {
                pointer: ComponentPointer {
                    class,
                    i: pointer_axis(out[4], bins[0]),
                    j: pointer_axis(out[5], bins[1]),
                },
                phase: std::f64::consts::PI * out[6],
            });
        }
    }

    let keep = largest_connected_region(&mask, body_size);
    let mut cells: Vec<Option<BodyCell>> = raw_cells
        .into_iter()
        .zip(&keep)
        .map(|(cell, &k)| if k { cell } else { None })
        .collect();

    if cells.iter().all(|c| c.is_none()) {
        let centre = (body_size - 1) / 2;
        let idx = centre * body_size + centre;
        cells[idx] = Some(BodyCell {
            pointer: ComponentPointer { class: ComponentClass::Structure, i: 0, j: 0 },
            phase: std::f64::consts::PI * grid[centre][centre][6],
        });
    }

    // Resolve every occupied cell's pointer to a concrete component and
    // re-express it against the material archives.
    let mut cell_components = BTreeMap::new();
    let mut dependencies = std::collections::BTreeSet::new();
    let mut sensor_sum = 0.0;
    let mut sensor_count = 0usize;
    for row in 0..body_size {
        for col in 0..body_size {
            let Some(cell) = cells[row * body_size + col].as_ref() else {
                continue;
            };
            let archive = component_archives
                .get(cell.pointer.class.as_str())
                .ok_or_else(|| Error::UnresolvedPointer {
                    archive: format!("component:{}", cell.pointer.class.as_str()),
                })?;
            let (resolved_bin, elite) = resolve_in_archive(&cell.pointer.bin(), archive)?;
            dependencies.insert((cell.pointer.class, cell.pointer.bin()));
            dependencies.insert((cell.pointer.class, resolved_bin));
            let component: ComponentGenome = serde_json::from_value(elite.genome.clone())?;
            let expressed =
                express_component(&component, material_archives, table, component_lattice, cell_side)?;
            if cell.pointer.class == ComponentClass::Sensor {
                sensor_sum += expressed.phenotype.sensor_quality;
                sensor_count += 1;
            }
            cell_components.insert((row, col), expressed.phenotype);
        }
    }

    let sensor_quality = if sensor_count == 0 { 0.0 } else { sensor_sum / sensor_count as f64 };
    Ok(ExpressedRobot {
        plan: BodyPlan { size: body_size, cells, sensor_quality },
        cell_components,
        dependencies,
    })
}

/// Mutation rates for robot genomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotMutationRates {
    /// Per-parameter probability of perturbing a controller scalar.
    pub controller_prob: f64,
}

impl Default for RobotMutationRates {
    fn default() -> Self {
        Self { controller_prob: 0.5 }
    }
}

/// Mutate the body CPPN and jitter controller parameters by a Gaussian with
/// sigma equal to 10% of each parameter's range, clamped back into range.
pub fn mutate_robot<R: Rng>(
    genome: &RobotGenome,
    rng: &mut R,
    rates: &RobotMutationRates,
    cppn_rates: &CppnMutationRates,
) -> RobotGenome {
    use rand_distr::Distribution;
    let body = genome.body.mutate(rng, cppn_rates);
    let mut ctrl = genome.controller.clone();
    let mut jitter = |value: &mut f64, range: (f64, f64)| {
        if rng.random::<f64>() < rates.controller_prob {
            let sigma = 0.1 * (range.1 - range.0);
            let normal = rand_distr::Normal::new(0.0, sigma).expect("finite sigma");
            *value = (*value + normal.sample(rng)).clamp(range.0, range.1);
        }
    };
    jitter(&mut ctrl.omega, OMEGA_RANGE);
    jitter(&mut ctrl.amplitude, AMPLITUDE_RANGE);
    jitter(&mut ctrl.feedback_gain, FEEDBACK_RANGE);
    RobotGenome { body, controller: ctrl }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::{Elite, FeatureSpec, Level, Provenance};
    use crate::components::MaterialPointer;
    use crate::cppn::{Activation, Connection, Node};
    use crate::materials::{default_process_table, express_material, MaterialGenome};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn material_archives() -> BTreeMap<String, Archive> {
        let table = default_process_table();
        let spec = FeatureSpec::grid2((2.0, 6.0, 10), (300.0, 2000.0, 10)).unwrap();
        let mut archive = Archive::new(spec, Level::Material, "0");
        // Soft material with both actuation and sensing.
        let genome = MaterialGenome::new("0", [0.0, 0.6, 0.0, 0.8]);
        let p = express_material(&genome, &table).unwrap();
        archive
            .try_insert(Elite {
                genome: serde_json::to_value(&genome).unwrap(),
                fitness: p.fitness(),
                features: p.features(),
                provenance: Provenance::Virtual,
                stale: false,
                eval_id: 0,
            })
            .unwrap();
        let mut map = BTreeMap::new();
        map.insert("0".to_string(), archive);
        map
    }

    fn component_archives() -> BTreeMap<String, Archive> {
        let table = default_process_table();
        let materials = material_archives();
        let mut map = BTreeMap::new();
        for class in ComponentClass::ALL {
            let spec = FeatureSpec::grid2((0.0, 32.0, 10), (2.0, 6.0, 10)).unwrap();
            let mut archive = Archive::new(spec, Level::Component, class.as_str());
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let genome = ComponentGenome {
                class,
                geometry: Cppn::fully_connected(4, 2, &mut rng),
                pointers: vec![
                    MaterialPointer { process: "0".into(), i: 0, j: 0 },
                    MaterialPointer { process: "0".into(), i: 0, j: 0 },
                ],
            };
            let out = express_component(&genome, &materials, &table, 4, 0.1).unwrap();
            archive
                .try_insert(Elite {
                    genome: serde_json::to_value(&genome).unwrap(),
                    fitness: out.phenotype.fitness(),
                    features: out.phenotype.features(),
                    provenance: Provenance::Virtual,
                    stale: false,
                    eval_id: 0,
                })
                .unwrap();
            map.insert(class.as_str().to_string(), archive);
        }
        map
    }

    /// Body CPPN with constant outputs: bias wired to each output with the
    /// given weights (output sign = weight sign).
    fn constant_body(weights: [f64; BODY_OUTPUTS]) -> Cppn {
        let mut nodes: Vec<Node> =
            (0..4).map(|id| Node { id, activation: Activation::Linear }).collect();
        for id in 4..4 + BODY_OUTPUTS as u32 {
            nodes.push(Node { id, activation: Activation::Sigmoid });
        }
        let connections = (0..BODY_OUTPUTS)
            .map(|o| Connection { from: 3, to: (4 + o) as u32, weight: weights[o] })
            .collect();
        Cppn { nodes, connections, inputs: 4, outputs: BODY_OUTPUTS }
    }

    fn express(genome: &RobotGenome) -> Result<ExpressedRobot> {
        express_robot(
            genome,
            &component_archives(),
            &material_archives(),
            &default_process_table(),
            6,
            4,
            0.1,
        )
    }

    #[test]
    fn constant_structure_body_fills_lattice() {
        let genome = RobotGenome {
            body: constant_body([1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0]),
            controller: Controller::clamped(1.0, 0.5, 0.0),
        };
        let out = express(&genome).unwrap();
        assert_eq!(out.plan.occupied_cells(), 36);
        assert_eq!(out.plan.class_count(ComponentClass::Structure), 36);
        let d = descriptor(&out.plan);
        assert_eq!(d.cell_count, 36);
        assert_eq!(d.actuator_fraction, 0.0);
    }

    #[test]
    fn empty_body_forces_centre_structure_cell() {
        let genome = RobotGenome {
            body: constant_body([-1.0, 1.0, 0.5, 0.5, 0.0, 0.0, 0.0]),
            controller: Controller::clamped(1.0, 0.5, 0.0),
        };
        let out = express(&genome).unwrap();
        assert_eq!(out.plan.occupied_cells(), 1);
        let cell = out.plan.cell(2, 2).expect("forced cell at (2,2)");
        assert_eq!(cell.pointer.class, ComponentClass::Structure);
        assert_eq!(cell.pointer.i, 0);
        assert_eq!(cell.pointer.j, 0);
        let d = descriptor(&out.plan);
        assert_eq!((d.cell_count, d.actuator_fraction), (1, 0.0));
    }

    #[test]
    fn class_tie_prefers_structure_then_actuator() {
        // All three scores equal: structure wins.
        let g1 = RobotGenome {
            body: constant_body([1.0, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0]),
            controller: Controller::clamped(1.0, 0.5, 0.0),
        };
        assert_eq!(express(&g1).unwrap().plan.class_count(ComponentClass::Structure), 36);
        // Actuator and sensor tied above structure: actuator wins.
        let g2 = RobotGenome {
            body: constant_body([1.0, -0.5, 0.5, 0.5, 0.0, 0.0, 0.0]),
            controller: Controller::clamped(1.0, 0.5, 0.0),
        };
        assert_eq!(express(&g2).unwrap().plan.class_count(ComponentClass::Actuator), 36);
    }

    #[test]
    fn largest_region_survives_fixture() {
        // 6x6 mask with a 5-cell region and a 3-cell region.
        let mut mask = vec![false; 36];
        for &(r, c) in &[(0, 0), (0, 1), (1, 0), (1, 1), (2, 0)] {
            mask[r * 6 + c] = true;
        }
        for &(r, c) in &[(4, 4), (4, 5), (5, 5)] {
            mask[r * 6 + c] = true;
        }
        let kept = largest_connected_region(&mask, 6);
        assert_eq!(kept.iter().filter(|&&k| k).count(), 5);
        assert!(kept[0] && kept[2 * 6]);
        assert!(!kept[4 * 6 + 4]);
    }

    #[test]
    fn region_tie_keeps_lexicographically_first() {
        // Two 2-cell regions; the one containing (0,0) must survive.
        let mut mask = vec![false; 36];
        for &(r, c) in &[(0, 0), (0, 1), (5, 4), (5, 5)] {
            mask[r * 6 + c] = true;
        }
        let kept = largest_connected_region(&mask, 6);
        assert!(kept[0] && kept[1]);
        assert!(!kept[5 * 6 + 4] && !kept[5 * 6 + 5]);
    }

    #[test]
    fn region_matches_reference_flood_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        for _ in 0..300 {
            let mask: Vec<bool> = (0..36).map(|_| rng.random::<f64>() < 0.45).collect();
            let kept = largest_connected_region(&mask, 6);
            let expected = oracle_largest_region(&mask, 6);
            assert_eq!(kept, expected, "mask {mask:?}");
        }
    }

    /// Independent reference: label every region by repeated scanning, then
    /// pick the best by (size, earliest lexicographic member).
    fn oracle_largest_region(mask: &[bool], size: usize) -> Vec<bool> {
        let mut seen = vec![false; mask.len()];
        let mut regions: Vec<Vec<usize>> = Vec::new();
        for start in 0..mask.len() {
            if !mask[start] || seen[start] {
                continue;
            }
            let mut members = vec![start];
            seen[start] = true;
            let mut frontier = vec![start];
            while !frontier.is_empty() {
                let mut next = Vec::new();
                for &idx in &frontier {
                    let (r, c) = (idx / size, idx % size);
                    let mut neighbours = Vec::new();
                    if r > 0 {
                        neighbours.push(idx - size);
                    }
                    if r + 1 < size {
                        neighbours.push(idx + size);
                    }
                    if c > 0 {
                        neighbours.push(idx - 1);
                    }
                    if c + 1 < size {
                        neighbours.push(idx + 1);
                    }
                    for n in neighbours {
                        if mask[n] && !seen[n] {
                            seen[n] = true;
                            members.push(n);
                            next.push(n);
                        }
                    }
                }
                frontier = next;
            }
            members.sort_unstable();
            regions.push(members);
        }
        let mut out = vec![false; mask.len()];
        if let Some(best) = regions
            .iter()
            .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        {
            for &idx in best {
                out[idx] = true;
            }
        }
        out
    }

    #[test]
    fn expression_invariants_over_random_genomes() {
        let components = component_archives();
        let materials = material_archives();
        let table = default_process_table();
        let mut rng = ChaCha8Rng::seed_from_u64(2025);
        for _ in 0..200 {
            let mut genome = RobotGenome::random(&mut rng);
            for _ in 0..5 {
                genome = mutate_robot(
                    &genome,
                    &mut rng,
                    &RobotMutationRates::default(),
                    &CppnMutationRates::default(),
                );
            }
            let out =
                express_robot(&genome, &components, &materials, &table, 6, 4, 0.1).unwrap();
            let occupied = out.plan.occupied_cells();
            assert!(occupied >= 1);
            // Connectivity: the occupied mask must be one region.
            let mask: Vec<bool> = out.plan.cells.iter().map(|c| c.is_some()).collect();
            let kept = largest_connected_region(&mask, 6);
            assert_eq!(mask, kept);
            assert_eq!(out.cell_components.len(), occupied);
            let d = descriptor(&out.plan);
            assert!((1..=36).contains(&d.cell_count));
            assert!((0.0..=1.0).contains(&d.actuator_fraction));
            for cell in out.plan.cells.iter().flatten() {
                assert!(cell.phase.abs() <= std::f64::consts::PI);
                assert!(cell.pointer.i < 10 && cell.pointer.j < 10);
            }
        }
    }

    #[test]
    fn pointer_axis_is_surjective() {
        let mut seen = std::collections::BTreeSet::new();
        for step in 0..=1000 {
            let p = -1.0 + 2.0 * step as f64 / 1000.0;
            seen.insert(pointer_axis(p, 10));
        }
        assert_eq!(seen, (0..10).collect());
    }

    #[test]
    fn mutate_keeps_controller_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut genome = RobotGenome::random(&mut rng);
        for _ in 0..10_000 {
            genome = mutate_robot(
                &genome,
                &mut rng,
                &RobotMutationRates::default(),
                &CppnMutationRates::zero(),
            );
            let c = &genome.controller;
            assert!((OMEGA_RANGE.0..=OMEGA_RANGE.1).contains(&c.omega));
            assert!((AMPLITUDE_RANGE.0..=AMPLITUDE_RANGE.1).contains(&c.amplitude));
            assert!((FEEDBACK_RANGE.0..=FEEDBACK_RANGE.1).contains(&c.feedback_gain));
        }
    }

    #[test]
    fn mutate_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let genome = RobotGenome::random(&mut rng);
        let rates = RobotMutationRates::default();
        let cppn_rates = CppnMutationRates::default();
        let a = mutate_robot(&genome, &mut ChaCha8Rng::seed_from_u64(8), &rates, &cppn_rates);
        let b = mutate_robot(&genome, &mut ChaCha8Rng::seed_from_u64(8), &rates, &cppn_rates);
        assert_eq!(a, b);
    }

    #[test]
    fn zero_rates_keep_controller() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let genome = RobotGenome::random(&mut rng);
        let child = mutate_robot(
            &genome,
            &mut rng,
            &RobotMutationRates { controller_prob: 0.0 },
            &CppnMutationRates::zero(),
        );
        assert_eq!(child, genome);
    }

    #[test]
    fn genome_serialization_schema() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let genome = RobotGenome::random(&mut rng);
        let json = serde_json::to_value(&genome).unwrap();
        assert!(json["body"]["nodes"].is_array());
        assert!(json["controller"]["omega"].is_f64());
        assert!(json["controller"]["amplitude"].is_f64());
        assert!(json["controller"]["feedback_gain"].is_f64());
        let back: RobotGenome = serde_json::from_value(json).unwrap();
        assert_eq!(back, genome);
    }

    #[test]
    fn plan_descriptor_counts_fixture() {
        // Hand-built plan: 10 cells, 4 actuators.
        let mut cells: Vec<Option<BodyCell>> = vec![None; 36];
        for k in 0..10 {
            let class = if k < 4 { ComponentClass::Actuator } else { ComponentClass::Structure };
            cells[k] = Some(BodyCell {
                pointer: ComponentPointer { class, i: 0, j: 0 },
                phase: 0.0,
            });
        }
        let plan = BodyPlan { size: 6, cells, sensor_quality: 0.0 };
        let d = descriptor(&plan);
        assert_eq!(d.cell_count, 10);
        assert!((d.actuator_fraction - 0.4).abs() < 1e-15);
    }
}
