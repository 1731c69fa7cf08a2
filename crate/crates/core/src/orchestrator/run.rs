//! The multi-level loop: bootstrap the material archives with known
//! materials, seed the upper archives with random genomes, then repeat the
//! illumination iteration (select, mutate, evaluate, insert) at one level at
//! a time under a weighted round-robin budget schedule. Robot-level virtual
//! elites are periodically promoted to fine (real) evaluation, and every
//! accepted lower-level change cascades staleness upward.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde_json::Value;

use crate::archive::{Archive, BinRef, Elite, InsertOutcome, Level, Provenance};
use crate::components::{ComponentClass, ComponentGenome, MaterialPointer, SLOT_COUNT};
use crate::cppn::Cppn;
use crate::error::{Error, Result};
use crate::hybrid::{
    evaluate_component, evaluate_material, evaluate_robot, genome_hash, insert_with_margin,
    rank_for_promotion, EvalSettings, Evaluation, PromotionCandidate,
};
use crate::materials::{bootstrap_materials, mutate_material, MaterialGenome};
use crate::orchestrator::config::ExperimentConfig;
use crate::orchestrator::state::{ExperimentReport, ExperimentState};
use crate::physics::Fidelity;
use crate::robots::{mutate_robot, RobotGenome};

/// Hash of a genome already in canonical (sorted-key) JSON value form.
pub fn hash_value(genome: &Value) -> String {
    genome_hash(&genome.to_string())
}

fn settings(config: &ExperimentConfig) -> EvalSettings<'_> {
    EvalSettings {
        table: &config.processes.material,
        component_lattice: config.lattice.component_size,
        body_lattice: config.lattice.body_size,
        cell_side: config.lattice.cell_side,
        sim_real: config.simulation.sim_config(Fidelity::Real),
        sim_virtual: config.simulation.sim_config(Fidelity::Virtual),
    }
}

/// Evaluate a serialized genome at one level and fidelity against archive
/// snapshots. Deterministic; consumes no randomness.
pub fn evaluate_level(
    config: &ExperimentConfig,
    material_archives: &BTreeMap<String, Archive>,
    component_archives: &BTreeMap<String, Archive>,
    level: Level,
    genome: &Value,
    fidelity: Fidelity,
) -> Result<Evaluation> {
    let settings = settings(config);
    match level {
        Level::Material => {
            let genome: MaterialGenome = serde_json::from_value(genome.clone())?;
            evaluate_material(&genome, &settings)
        }
        Level::Component => {
            let genome: ComponentGenome = serde_json::from_value(genome.clone())?;
            evaluate_component(&genome, material_archives, &settings)
        }
        Level::Robot => {
            let genome: RobotGenome = serde_json::from_value(genome.clone())?;
            evaluate_robot(&genome, component_archives, material_archives, fidelity, &settings)
        }
    }
}

/// Bins-per-dimension of each material archive, for pointer clamping.
fn material_bins_map(archives: &BTreeMap<String, Archive>) -> BTreeMap<String, [usize; 2]> {
    archives
        .iter()
        .map(|(process, archive)| {
            let dims = archive.spec().dims();
            (process.clone(), [dims[0].bins, dims[1].bins])
        })
        .collect()
}

fn mutate_genome(
    config: &ExperimentConfig,
    level: Level,
    parent: &Value,
    rng: &mut rand_chacha::ChaCha8Rng,
    material_bins: &BTreeMap<String, [usize; 2]>,
) -> Result<Value> {
    let child = match level {
        Level::Material => {
            let genome: MaterialGenome = serde_json::from_value(parent.clone())?;
            serde_json::to_value(mutate_material(&genome, rng, &config.mutation.material))?
        }
        Level::Component => {
            let genome: ComponentGenome = serde_json::from_value(parent.clone())?;
            serde_json::to_value(crate::components::mutate_component(
                &genome,
                rng,
                &config.mutation.component,
                &config.mutation.cppn,
                material_bins,
            ))?
        }
        Level::Robot => {
            let genome: RobotGenome = serde_json::from_value(parent.clone())?;
            serde_json::to_value(mutate_robot(
                &genome,
                rng,
                &config.mutation.robot,
                &config.mutation.cppn,
            ))?
        }
    };
    Ok(child)
}

/// Insert an evaluated candidate, register its dependencies, and cascade on
/// accepted lower-level changes. Class-invalid candidates never enter the
/// archive.
fn insert_candidate(
    state: &mut ExperimentState,
    level: Level,
    process: &str,
    genome: Value,
    eval: &Evaluation,
    provenance: Provenance,
    eval_id: u64,
) -> Result<InsertOutcome> {
    if !eval.insertable {
        return Ok(InsertOutcome::Rejected);
    }
    let bin = state.archive(level, process)?.bin_of(&eval.features)?;
    let elite = Elite {
        genome,
        fitness: eval.fitness,
        features: eval.features.clone(),
        provenance,
        stale: false,
        eval_id,
    };
    let outcome = match level {
        Level::Robot => insert_with_margin(&mut state.robot_archive, elite, &state.predictor)?,
        _ => state.archive_mut(level, process)?.try_insert(elite)?,
    };
    if outcome.accepted() {
        let elite_ref = BinRef::new(level, process, bin);
        if level != Level::Material {
            state.deps.register(elite_ref.clone(), eval.dependencies.iter().cloned());
        }
        if level != Level::Robot {
            cascade_and_resweep(state, &elite_ref)?;
        }
    }
    Ok(outcome)
}

/// Mark every transitive dependent of a changed bin stale and return the
/// stale set (components first, then robots, in lexicographic order).
pub fn cascade_invalidate(state: &mut ExperimentState, changed: &BinRef) -> Result<BTreeSet<BinRef>> {
    let stale = state.deps.transitive_dependents(changed);
    for elite_ref in &stale {
        state.archive_mut(elite_ref.level, &elite_ref.process)?.mark_stale(&elite_ref.index);
    }
    Ok(stale)
}

/// Cascade a change and immediately resweep everything it staled.
pub fn cascade_and_resweep(state: &mut ExperimentState, changed: &BinRef) -> Result<u64> {
    let stale = cascade_invalidate(state, changed)?;
    resweep_stale(state, stale)
}

/// Re-express and re-evaluate every stale elite at its recorded fidelity.
/// Components settle before robots; component re-binning can stale further
/// robots, which join the robot pass. Returns the number of re-evaluations.
pub fn resweep_stale(state: &mut ExperimentState, stale: BTreeSet<BinRef>) -> Result<u64> {
    let mut count = 0u64;
    let mut pending_robots: BTreeSet<BinRef> = BTreeSet::new();
    for elite_ref in &stale {
        match elite_ref.level {
            Level::Component => count += resweep_one(state, elite_ref, &mut pending_robots)?,
            Level::Robot => {
                pending_robots.insert(elite_ref.clone());
            }
            Level::Material => {}
        }
    }
    let robots: Vec<BinRef> = pending_robots.into_iter().collect();
    let mut ignored = BTreeSet::new();
    for elite_ref in &robots {
        count += resweep_one(state, elite_ref, &mut ignored)?;
    }
    Ok(count)
}

/// Resweep a single stale elite. If the re-expressed features moved bins,
/// re-insert at the new bin and vacate the old one only if the insertion
/// succeeded; otherwise keep the old bin with the refreshed result.
fn resweep_one(
    state: &mut ExperimentState,
    elite_ref: &BinRef,
    newly_staled: &mut BTreeSet<BinRef>,
) -> Result<u64> {
    let level = elite_ref.level;
    let process = elite_ref.process.clone();
    let (genome, provenance) = {
        let archive = state.archive(level, &process)?;
        match archive.get(&elite_ref.index) {
            Some(elite) if elite.stale => (elite.genome.clone(), elite.provenance),
            _ => return Ok(0), // vacated or refreshed by an earlier move
        }
    };

    // Robots re-evaluate at their recorded fidelity; a real-provenance elite
    // with no fine budget left downgrades to a virtual result.
    let (fidelity, new_provenance) = match (level, provenance) {
        (Level::Robot, Provenance::Real) => {
            if state.consumed.fine < state.config.budgets.fine {
                (Fidelity::Real, Provenance::Real)
            } else {
                (Fidelity::Virtual, Provenance::Virtual)
            }
        }
        _ => (Fidelity::Virtual, provenance),
    };

    let eval = match evaluate_level(
        &state.config,
        &state.material_archives,
        &state.component_archives,
        level,
        &genome,
        fidelity,
    ) {
        Ok(eval) => eval,
        Err(Error::UnresolvedPointer { archive }) => {
            // The elite can no longer be expressed; drop it.
            eprintln!("resweep: removing {elite_ref} (unresolved pointer into {archive})");
            state.archive_mut(level, &process)?.remove(&elite_ref.index);
            state.deps.unregister(elite_ref);
            return Ok(0);
        }
        Err(e) => return Err(e),
    };
    if level == Level::Robot && fidelity == Fidelity::Real {
        state.consumed.fine += 1;
    }
    let hash = hash_value(&genome);
    let eval_id = state.log_eval(
        level,
        &process,
        &hash,
        fidelity,
        eval.fitness,
        &eval.features,
        &eval.descriptor,
    )?;
    state.record_eval(&hash, level, &process, &eval.descriptor, fidelity, eval.fitness, eval_id);

    let new_bin = state.archive(level, &process)?.bin_of(&eval.features)?;
    let refreshed = Elite {
        genome,
        fitness: eval.fitness,
        features: eval.features.clone(),
        provenance: new_provenance,
        stale: false,
        eval_id,
    };

    if new_bin == elite_ref.index {
        state.archive_mut(level, &process)?.replace_at(new_bin, refreshed);
        state.deps.register(elite_ref.clone(), eval.dependencies.iter().cloned());
        return Ok(1);
    }

    // Features moved bins. Offer the refreshed elite at its new home.
    let outcome = if eval.insertable {
        match level {
            Level::Robot => {
                insert_with_margin(&mut state.robot_archive, refreshed.clone(), &state.predictor)?
            }
            _ => state.archive_mut(level, &process)?.try_insert(refreshed.clone())?,
        }
    } else {
        InsertOutcome::Rejected
    };

    if outcome.accepted() {
        state.archive_mut(level, &process)?.remove(&elite_ref.index);
        let new_ref = BinRef::new(level, &process, new_bin);
        state.deps.unregister(elite_ref);
        state.deps.register(new_ref.clone(), eval.dependencies.iter().cloned());
        if level == Level::Component {
            // Robots touching the vacated or newly changed bin must follow.
            for touched in [elite_ref, &new_ref] {
                for robot_ref in state.deps.transitive_dependents(touched) {
                    state
                        .archive_mut(robot_ref.level, &robot_ref.process)?
                        .mark_stale(&robot_ref.index);
                    newly_staled.insert(robot_ref);
                }
            }
        }
    } else {
        // Keep the old bin but carry the refreshed result.
        state.archive_mut(level, &process)?.replace_at(elite_ref.index.clone(), refreshed);
        state.deps.register(elite_ref.clone(), eval.dependencies.iter().cloned());
    }
    Ok(1)
}

/// Evaluate, log, record, and insert one genome; shared by seeding and the
/// main loop.
fn evaluate_and_insert(
    state: &mut ExperimentState,
    level: Level,
    process: &str,
    genome: Value,
    fidelity: Fidelity,
    provenance: Provenance,
) -> Result<(Evaluation, InsertOutcome)> {
    let eval = evaluate_level(
        &state.config,
        &state.material_archives,
        &state.component_archives,
        level,
        &genome,
        fidelity,
    )?;
    let hash = hash_value(&genome);
    let eval_id = state.log_eval(
        level,
        process,
        &hash,
        fidelity,
        eval.fitness,
        &eval.features,
        &eval.descriptor,
    )?;
    state.record_eval(&hash, level, process, &eval.descriptor, fidelity, eval.fitness, eval_id);
    let outcome = insert_candidate(state, level, process, genome, &eval, provenance, eval_id)?;
    Ok((eval, outcome))
}

/// Bootstrap every material archive with the known-material lattice.
fn bootstrap_material_archives(state: &mut ExperimentState) -> Result<()> {
    for process in state.processes(Level::Material) {
        for genome in
            bootstrap_materials(&process, state.config.bootstrap.materials_per_process)
        {
            let value = serde_json::to_value(&genome)?;
            evaluate_and_insert(
                state,
                Level::Material,
                &process,
                value,
                Fidelity::Virtual,
                Provenance::Virtual,
            )?;
        }
    }
    Ok(())
}

fn random_component_genome(
    rng: &mut rand_chacha::ChaCha8Rng,
    class: ComponentClass,
    material_archives: &BTreeMap<String, Archive>,
) -> ComponentGenome {
    let geometry = Cppn::fully_connected(4, 2, rng);
    let processes: Vec<&String> = material_archives.keys().collect();
    let mut pointers = Vec::with_capacity(SLOT_COUNT);
    for _ in 0..SLOT_COUNT {
        let process = processes[rng.random_range(0..processes.len())];
        let archive = &material_archives[process];
        let pick = rng.random_range(0..archive.occupied());
        let (bin, _) = archive.nth_occupied(pick).expect("occupied bin");
        pointers.push(MaterialPointer { process: process.clone(), i: bin[0], j: bin[1] });
    }
    ComponentGenome { class, geometry, pointers }
}

/// Seed each component class archive with random genomes whose pointers are
/// uniform over occupied material bins. Class-invalid draws retry up to the
/// configured limit before aborting.
fn seed_component_archives(state: &mut ExperimentState) -> Result<()> {
    for class in ComponentClass::ALL {
        for _ in 0..state.config.bootstrap.component_seeds {
            let mut attempts = 0;
            loop {
                attempts += 1;
                let genome =
                    random_component_genome(&mut state.rng, class, &state.material_archives);
                let value = serde_json::to_value(&genome)?;
                let check = evaluate_level(
                    &state.config,
                    &state.material_archives,
                    &state.component_archives,
                    Level::Component,
                    &value,
                    Fidelity::Virtual,
                );
                match check {
                    Ok(eval) if eval.insertable => {
                        evaluate_and_insert(
                            state,
                            Level::Component,
                            class.as_str(),
                            value,
                            Fidelity::Virtual,
                            Provenance::Virtual,
                        )?;
                        break;
                    }
                    Ok(_) | Err(Error::UnresolvedPointer { .. }) => {
                        if attempts >= state.config.bootstrap.seed_retry_limit {
                            return Err(Error::Seeding {
                                archive: format!("component:{}", class.as_str()),
                                reason: format!(
                                    "no class-valid genome within {attempts} attempts"
                                ),
                            });
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(())
}

fn seed_robot_archive(state: &mut ExperimentState) -> Result<()> {
    for _ in 0..state.config.bootstrap.robot_seeds {
        let mut attempts = 0;
        loop {
            attempts += 1;
            let genome = RobotGenome::random(&mut state.rng);
            let value = serde_json::to_value(&genome)?;
            match evaluate_and_insert(
                state,
                Level::Robot,
                "0",
                value,
                Fidelity::Virtual,
                Provenance::Virtual,
            ) {
                Ok(_) => break,
                Err(Error::UnresolvedPointer { archive }) => {
                    if attempts >= state.config.bootstrap.seed_retry_limit {
                        return Err(Error::Seeding {
                            archive: "robot:0".into(),
                            reason: format!(
                                "unresolved pointer into {archive} after {attempts} attempts"
                            ),
                        });
                    }
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}

/// Bootstrap and seed a fresh experiment state.
pub fn init(config: ExperimentConfig) -> Result<ExperimentState> {
    let mut state = ExperimentState::new(config)?;
    bootstrap_material_archives(&mut state)?;
    seed_component_archives(&mut state)?;
    seed_robot_archive(&mut state)?;
    state.post_seed = Some(state.archive_report());
    Ok(state)
}

/// Smooth weighted round-robin over levels with remaining loop budget.
fn next_level(state: &mut ExperimentState) -> Option<Level> {
    const LEVELS: [Level; 3] = [Level::Material, Level::Component, Level::Robot];
    let weights = [
        state.config.schedule.material_weight,
        state.config.schedule.component_weight,
        state.config.schedule.robot_weight,
    ];
    let budgets = [
        state.config.budgets.material,
        state.config.budgets.component,
        state.config.budgets.robot,
    ];
    let eligible: Vec<usize> = (0..3)
        .filter(|&i| state.consumed.loop_count(LEVELS[i]) < budgets[i])
        .collect();
    if eligible.is_empty() {
        return None;
    }
    let total: f64 = eligible.iter().map(|&i| weights[i]).sum();
    for &i in &eligible {
        state.wrr_credits[i] += weights[i];
    }
    let mut best = eligible[0];
    for &i in &eligible[1..] {
        if state.wrr_credits[i] > state.wrr_credits[best] {
            best = i;
        }
    }
    state.wrr_credits[best] -= total;
    Some(LEVELS[best])
}

/// One Fig-1(b)-style iteration at the given level: select a random occupied
/// bin, mutate its elite, evaluate at virtual fidelity, offer the result to
/// the archive.
fn run_iteration(state: &mut ExperimentState, level: Level) -> Result<()> {
    let processes = state.processes(level);
    let process = if processes.len() == 1 {
        processes[0].clone()
    } else {
        processes[state.rng.random_range(0..processes.len())].clone()
    };

    let occupied = state.archive(level, &process)?.occupied();
    if occupied == 0 {
        return Err(Error::EmptyArchive { archive: format!("{}:{process}", level.as_str()) });
    }
    let pick = state.rng.random_range(0..occupied);
    let parent =
        state.archive(level, &process)?.nth_occupied(pick).expect("occupied bin").1.genome.clone();

    let material_bins = material_bins_map(&state.material_archives);
    let child = mutate_genome(&state.config, level, &parent, &mut state.rng, &material_bins)?;

    state.consumed.add_loop(level);
    evaluate_and_insert(state, level, &process, child, Fidelity::Virtual, Provenance::Virtual)?;

    if level == Level::Robot {
        state.robot_loop_iters += 1;
        if state.robot_loop_iters % state.config.schedule.promotion_interval == 0 {
            promotion_tranche(state)?;
        }
    }
    Ok(())
}

/// Promote the most promising virtual robot elites to fine evaluation:
/// rank by virtual fitness penalised by the predicted reality gap, re-run
/// the top of the list at real fidelity, train the predictor on the observed
/// gap, and offer the real result back to the archive under the margin rule.
fn promotion_tranche(state: &mut ExperimentState) -> Result<()> {
    let remaining = state.config.budgets.fine.saturating_sub(state.consumed.fine);
    if remaining == 0 {
        return Ok(());
    }
    let take_cap = state.config.schedule.promotion_tranche.min(remaining) as usize;

    let mut candidates = Vec::new();
    for (_, elite) in state.robot_archive.iter() {
        if elite.provenance != Provenance::Virtual {
            continue;
        }
        let hash = hash_value(&elite.genome);
        if let Some(record) = state.records.get(&hash) {
            // Skip genomes whose dual evaluation still matches the archive
            // state; re-promoting them would spend fine budget on an
            // identical result.
            if record.fitness_real.is_some()
                && record.fitness_virtual == Some(elite.fitness)
                && record.descriptor == elite.features
            {
                continue;
            }
        }
        candidates.push(PromotionCandidate {
            genome: elite.genome.clone(),
            genome_hash: hash,
            fitness_virtual: elite.fitness,
            descriptor: elite.features.clone(),
        });
    }
    if candidates.is_empty() {
        return Ok(());
    }

    let order = rank_for_promotion(&candidates, &state.predictor);
    for &idx in order.iter().take(take_cap) {
        let candidate = &candidates[idx];
        let genome = candidate.genome.clone();
        let fitness_virtual = candidate.fitness_virtual;

        let eval = evaluate_level(
            &state.config,
            &state.material_archives,
            &state.component_archives,
            Level::Robot,
            &genome,
            Fidelity::Real,
        )?;
        state.consumed.fine += 1;
        let hash = hash_value(&genome);
        let eval_id = state.log_eval(
            Level::Robot,
            "0",
            &hash,
            Fidelity::Real,
            eval.fitness,
            &eval.features,
            &eval.descriptor,
        )?;
        state.record_eval(
            &hash,
            Level::Robot,
            "0",
            &eval.descriptor,
            Fidelity::Real,
            eval.fitness,
            eval_id,
        );
        state.predictor.add_pair(eval.descriptor.clone(), (eval.fitness - fitness_virtual).abs());
        insert_candidate(state, Level::Robot, "0", genome, &eval, Provenance::Real, eval_id)?;
    }
    Ok(())
}

/// Run one scheduled iteration. Returns false once every loop budget is
/// exhausted.
pub fn step(state: &mut ExperimentState) -> Result<bool> {
    match next_level(state) {
        Some(level) => {
            run_iteration(state, level)?;
            Ok(true)
        }
        None => Ok(false),
    }
}

pub fn run_to_completion(state: &mut ExperimentState) -> Result<()> {
    while step(state)? {}
    Ok(())
}

/// Full experiment: bootstrap, seed, loop to budget exhaustion, report.
pub fn run_experiment(config: ExperimentConfig) -> Result<(ExperimentState, ExperimentReport)> {
    let mut state = init(config)?;
    run_to_completion(&mut state)?;
    let report = state.report();
    Ok((state, report))
}
