//! Deterministic 2D mass-spring locomotion evaluator.
//!
//! A body plan becomes a network of corner point masses joined by edge and
//! diagonal springs; actuator cells rhythmically stretch their springs'
//! rest lengths. Integration is semi-implicit Euler on flat ground with a
//! penalty contact model, and fitness is the forward displacement of the
//! centre of mass.
//!
//! The state variable is each corner's displacement from its build position,
//! and spring geometry is stored as home-vector deltas. No force term ever
//! reads an absolute x coordinate, so translating a model leaves the whole
//! trajectory (and the fitness) bit-identical.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::components::{ComponentClass, ComponentPhenotype};
use crate::error::{Error, Result};
use crate::robots::{BodyPlan, Controller};

/// Strain amplitude scale of the actuation drive.
pub const DRIVE_SCALE: f64 = 0.3;
/// Rest-length strain is clamped into [-STRAIN_LIMIT, STRAIN_LIMIT].
pub const STRAIN_LIMIT: f64 = 0.5;
/// Feedback normalisation: sensed vertical com speed in m/s mapping to unit
/// feedback.
pub const FEEDBACK_SPEED_SCALE: f64 = 1.0;
/// Slip speed below which ground friction ramps linearly (regularised
/// Coulomb clamp).
pub const FRICTION_EPS: f64 = 0.01;
/// Fitness recorded by callers for diverged simulations.
pub const DIVERGED_FITNESS: f64 = -1e6;

/// Evaluation fidelity. "Real" stands in for physical testing as a fine
/// simulation; "virtual" is the same model integrated five times coarser.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fidelity {
    Virtual,
    Real,
}

impl Fidelity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Fidelity::Virtual => "virtual",
            Fidelity::Real => "real",
        }
    }
}

impl std::str::FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "virtual" => Ok(Fidelity::Virtual),
            "real" => Ok(Fidelity::Real),
            other => Err(Error::Config(format!("unknown fidelity {other:?}"))),
        }
    }
}

/// Integrator and environment parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub duration: f64,
    pub gravity: f64,
    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub friction_mu: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::real()
    }
}

impl SimConfig {
    pub fn real() -> Self {
        Self {
            dt: 1e-3,
            duration: 5.0,
            gravity: 9.81,
            ground_stiffness: 1e4,
            ground_damping: 10.0,
            friction_mu: 1.0,
        }
    }

    pub fn coarse() -> Self {
        Self { dt: 5e-3, ..Self::real() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= self.duration) {
            return Err(Error::Config(format!(
                "sim config needs 0 < dt <= duration, got dt={} duration={}",
                self.dt, self.duration
            )));
        }
        Ok(())
    }
}

/// Periodic rest-length modulation of one spring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Actuation {
    pub gain: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spring {
    pub a: usize,
    pub b: usize,
    /// Build-time vector from corner a to corner b.
    pub home_delta: [f64; 2],
    pub rest_length: f64,
    pub stiffness: f64,
    /// Damping coefficient, N s/m.
    pub damping: f64,
    pub actuation: Option<Actuation>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    /// Build position (resting pose, lowest point at y = 0).
    pub home: [f64; 2],
    pub mass: f64,
}

/// A robot rendered into point masses and springs, ready to integrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpringMassModel {
    pub masses: Vec<PointMass>,
    pub springs: Vec<Spring>,
    pub sensor_quality: f64,
    pub controller: Controller,
}

impl SpringMassModel {
    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.mass).sum()
    }

    /// Centre of mass of the build pose.
    pub fn home_com(&self) -> [f64; 2] {
        let total = self.total_mass();
        let mut com = [0.0, 0.0];
        for m in &self.masses {
            com[0] += m.mass * m.home[0];
            com[1] += m.mass * m.home[1];
        }
        [com[0] / total, com[1] / total]
    }

    /// Translate the build pose horizontally. Dynamics are unaffected.
    pub fn shift_x(&mut self, dx: f64) {
        for m in &mut self.masses {
            m.home[0] += dx;
        }
    }
}

/// Build a spring-mass model from an expressed body plan.
///
/// Corner masses are shared between adjacent cells; each occupied cell
/// contributes four edge springs (deduplicated across neighbours) and two
/// diagonals at half stiffness. Cell mass is the component mass divided by
/// 16, split equally over the cell's corners. Spring damping is
/// `2 c sqrt(k m_local)` from the component damping ratio and the mean
/// endpoint mass. Actuator cells mark all six of their springs actuated with
/// the cell's phase; a spring shared with an earlier actuator keeps the
/// first marking.
pub fn build_model(
    plan: &BodyPlan,
    cell_components: &BTreeMap<(usize, usize), ComponentPhenotype>,
    cell_side: f64,
    controller: Controller,
) -> SpringMassModel {
    let size = plan.size;
    let mut corner_ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut corner_list: Vec<(usize, usize)> = Vec::new();
    let mut corner_of = |corner: (usize, usize), list: &mut Vec<(usize, usize)>| -> usize {
        *corner_ids.entry(corner).or_insert_with(|| {
            list.push(corner);
            list.len() - 1
        })
    };

    struct ProtoSpring {
        a: usize,
        b: usize,
        delta: [i64; 2],
        stiffness: f64,
        damping_ratio: f64,
        diagonal: bool,
        actuation: Option<Actuation>,
    }

    let mut springs: Vec<ProtoSpring> = Vec::new();
    let mut edge_index: BTreeMap<((usize, usize), (usize, usize)), usize> = BTreeMap::new();
    let mut corner_mass: BTreeMap<usize, f64> = BTreeMap::new();

    for row in 0..size {
        for col in 0..size {
            let Some(cell) = plan.cell(row, col) else { continue };
            let phen = &cell_components[&(row, col)];
            let cell_mass = phen.mass / 16.0;
            let corners =
                [(row, col), (row, col + 1), (row + 1, col), (row + 1, col + 1)];
            let ids: Vec<usize> =
                corners.iter().map(|&c| corner_of(c, &mut corner_list)).collect();
            for &id in &ids {
                *corner_mass.entry(id).or_insert(0.0) += cell_mass / 4.0;
            }

            let actuation = (cell.pointer.class == ComponentClass::Actuator).then(|| Actuation {
                gain: phen.actuation_capability,
                phase: cell.phase,
            });

            // Four edges, shared with neighbouring cells.
            let edges = [
                ((row, col), (row, col + 1)),
                ((row + 1, col), (row + 1, col + 1)),
                ((row, col), (row + 1, col)),
                ((row, col + 1), (row + 1, col + 1)),
            ];
            let mut cell_springs: Vec<usize> = Vec::with_capacity(6);
            for (ca, cb) in edges {
                let key = if ca <= cb { (ca, cb) } else { (cb, ca) };
                let idx = *edge_index.entry(key).or_insert_with(|| {
                    let a = corner_of(key.0, &mut corner_list);
                    let b = corner_of(key.1, &mut corner_list);
                    springs.push(ProtoSpring {
                        a,
                        b,
                        delta: [
                            key.1 .1 as i64 - key.0 .1 as i64,
                            key.1 .0 as i64 - key.0 .0 as i64,
                        ],
                        stiffness: phen.mean_stiffness,
                        damping_ratio: phen.mean_damping,
                        diagonal: false,
                        actuation: None,
                    });
                    springs.len() - 1
                });
                cell_springs.push(idx);
            }
            // Two diagonals, never shared.
            for (ca, cb) in [
                ((row, col), (row + 1, col + 1)),
                ((row + 1, col), (row, col + 1)),
            ] {
                let a = corner_of(ca, &mut corner_list);
                let b = corner_of(cb, &mut corner_list);
                springs.push(ProtoSpring {
                    a,
                    b,
                    delta: [cb.1 as i64 - ca.1 as i64, cb.0 as i64 - ca.0 as i64],
                    stiffness: 0.5 * phen.mean_stiffness,
                    damping_ratio: phen.mean_damping,
                    diagonal: true,
                    actuation: None,
                });
                cell_springs.push(springs.len() - 1);
            }

            if let Some(act) = actuation {
                for idx in cell_springs {
                    let spring = &mut springs[idx];
                    if spring.actuation.is_none() {
                        spring.actuation = Some(act);
                    }
                }
            }
        }
    }

    // Rest the body on the ground: lowest corner at y = 0.
    let min_row = corner_list.iter().map(|&(r, _)| r).min().unwrap_or(0);
    let masses: Vec<PointMass> = corner_list
        .iter()
        .enumerate()
        .map(|(id, &(r, c))| PointMass {
            home: [c as f64 * cell_side, (r - min_row) as f64 * cell_side],
            mass: corner_mass[&id],
        })
        .collect();

    let diag_len = cell_side * 2f64.sqrt();
    let springs = springs
        .into_iter()
        .map(|p| {
            let m_local = 0.5 * (masses[p.a].mass + masses[p.b].mass);
            Spring {
                a: p.a,
                b: p.b,
                home_delta: [p.delta[0] as f64 * cell_side, p.delta[1] as f64 * cell_side],
                rest_length: if p.diagonal { diag_len } else { cell_side },
                stiffness: p.stiffness,
                damping: 2.0 * p.damping_ratio * (p.stiffness * m_local).sqrt(),
                actuation: p.actuation,
            }
        })
        .collect();

    SpringMassModel { masses, springs, sensor_quality: plan.sensor_quality, controller }
}

/// Actuated strain of one spring at time `t`: a bounded sinusoid plus an
/// optional sensor feedback term driven by the vertical com velocity.
/// Always in [-STRAIN_LIMIT, STRAIN_LIMIT].
pub fn drive_strain(
    t: f64,
    actuation: &Actuation,
    controller: &Controller,
    sensor_quality: f64,
    v_y_com: f64,
) -> f64 {
    let feedback = if sensor_quality > 0.0 {
        (controller.feedback_gain * sensor_quality * v_y_com / FEEDBACK_SPEED_SCALE)
            .clamp(-STRAIN_LIMIT, STRAIN_LIMIT)
    } else {
        0.0
    };
    let wave = DRIVE_SCALE
        * actuation.gain
        * controller.amplitude
        * (controller.omega * std::f64::consts::TAU * t + actuation.phase).sin();
    (wave + feedback).clamp(-STRAIN_LIMIT, STRAIN_LIMIT)
}

/// One trajectory sample (10 ms cadence).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub energy: f64,
}

/// Simulation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// Forward displacement of the centre of mass, metres.
    pub fitness: f64,
    /// Mean speed of the centre of mass over the run.
    pub mean_com_speed: f64,
    /// Mechanical energy sampled at 10 Hz.
    pub energy_trace: Vec<(f64, f64)>,
    /// Centre-of-mass trajectory sampled every 10 ms.
    pub trajectory: Vec<TrajectorySample>,
}

/// Mechanical energy of a state: kinetic + spring potential (against nominal
/// rest lengths) + gravitational potential above y = 0.
pub fn mechanical_energy(
    model: &SpringMassModel,
    displacements: &[[f64; 2]],
    velocities: &[[f64; 2]],
    gravity: f64,
) -> f64 {
    let mut energy = 0.0;
    for (i, m) in model.masses.iter().enumerate() {
        let v2 = velocities[i][0] * velocities[i][0] + velocities[i][1] * velocities[i][1];
        energy += 0.5 * m.mass * v2;
        energy += m.mass * gravity * (m.home[1] + displacements[i][1]);
    }
    for s in &model.springs {
        let dx = s.home_delta[0] + displacements[s.b][0] - displacements[s.a][0];
        let dy = s.home_delta[1] + displacements[s.b][1] - displacements[s.a][1];
        let len = (dx * dx + dy * dy).sqrt();
        let stretch = len - s.rest_length;
        energy += 0.5 * s.stiffness * stretch * stretch;
    }
    energy
}

/// Integrate the model with semi-implicit Euler: velocities update from the
/// forces at time t, then positions update from the new velocities. Fully
/// deterministic; a non-finite state aborts with a divergence error.
pub fn simulate(model: &SpringMassModel, config: &SimConfig) -> Result<SimOutcome> {
    config.validate()?;
    let n = model.masses.len();
    let total_mass = model.total_mass();
    let home_com = model.home_com();
    let mut u = vec![[0.0f64; 2]; n];
    let mut v = vec![[0.0f64; 2]; n];

    let steps = (config.duration / config.dt).round() as usize;
    let sample_every = ((0.01 / config.dt).round() as usize).max(1);
    let energy_every = ((0.1 / config.dt).round() as usize).max(1);

    let com_u = |u: &[[f64; 2]]| -> [f64; 2] {
        let mut c = [0.0, 0.0];
        for (i, m) in model.masses.iter().enumerate() {
            c[0] += m.mass * u[i][0];
            c[1] += m.mass * u[i][1];
        }
        [c[0] / total_mass, c[1] / total_mass]
    };
    let com_v = |v: &[[f64; 2]]| -> [f64; 2] {
        let mut c = [0.0, 0.0];
        for (i, m) in model.masses.iter().enumerate() {
            c[0] += m.mass * v[i][0];
            c[1] += m.mass * v[i][1];
        }
        [c[0] / total_mass, c[1] / total_mass]
    };

    let mut trajectory = Vec::with_capacity(steps / sample_every + 2);
    let mut energy_trace = Vec::with_capacity(steps / energy_every + 2);
    let record = |t: f64,
                  u: &[[f64; 2]],
                  v: &[[f64; 2]],
                  trajectory: &mut Vec<TrajectorySample>,
                  energy_trace: &mut Vec<(f64, f64)>,
                  with_energy: bool| {
        let cu = com_u(u);
        let energy = mechanical_energy(model, u, v, config.gravity);
        trajectory.push(TrajectorySample {
            t,
            x: home_com[0] + cu[0],
            y: home_com[1] + cu[1],
            energy,
        });
        if with_energy {
            energy_trace.push((t, energy));
        }
    };
    record(0.0, &u, &v, &mut trajectory, &mut energy_trace, true);

    let mut speed_sum = 0.0;
    let mut force = vec![[0.0f64; 2]; n];
    for step in 0..steps {
        let t = step as f64 * config.dt;
        let v_y_com = com_v(&v)[1];

        for f in &mut force {
            *f = [0.0, 0.0];
        }
        for s in &model.springs {
            let dx = s.home_delta[0] + u[s.b][0] - u[s.a][0];
            let dy = s.home_delta[1] + u[s.b][1] - u[s.a][1];
            let len = (dx * dx + dy * dy).sqrt();
            if len < 1e-12 {
                continue;
            }
            let dir = [dx / len, dy / len];
            let rest = match &s.actuation {
                Some(act) => {
                    let strain =
                        drive_strain(t, act, &model.controller, model.sensor_quality, v_y_com);
                    s.rest_length * (1.0 + strain)
                }
                None => s.rest_length,
            };
            let rel_v = (v[s.b][0] - v[s.a][0]) * dir[0] + (v[s.b][1] - v[s.a][1]) * dir[1];
            let magnitude = s.stiffness * (len - rest) + s.damping * rel_v;
            force[s.a][0] += magnitude * dir[0];
            force[s.a][1] += magnitude * dir[1];
            force[s.b][0] -= magnitude * dir[0];
            force[s.b][1] -= magnitude * dir[1];
        }
        for (i, m) in model.masses.iter().enumerate() {
            force[i][1] -= m.mass * config.gravity;
            let y = m.home[1] + u[i][1];
            if y < 0.0 {
                let normal = (config.ground_stiffness * (-y) - config.ground_damping * v[i][1])
                    .max(0.0);
                force[i][1] += normal;
                let slip = v[i][0];
                let friction =
                    -config.friction_mu * normal * (slip / FRICTION_EPS).clamp(-1.0, 1.0);
                force[i][0] += friction;
            }
        }

        for (i, m) in model.masses.iter().enumerate() {
            v[i][0] += force[i][0] / m.mass * config.dt;
            v[i][1] += force[i][1] / m.mass * config.dt;
            u[i][0] += v[i][0] * config.dt;
            u[i][1] += v[i][1] * config.dt;
        }

        if u.iter().chain(v.iter()).any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(Error::Diverged { t });
        }

        let cv = com_v(&v);
        speed_sum += (cv[0] * cv[0] + cv[1] * cv[1]).sqrt();

        let done = step + 1;
        if done % sample_every == 0 || done == steps {
            let t_now = done as f64 * config.dt;
            let with_energy = done % energy_every == 0 || done == steps;
            record(t_now, &u, &v, &mut trajectory, &mut energy_trace, with_energy);
        }
    }

    let final_com_u = com_u(&u);
    Ok(SimOutcome {
        fitness: final_com_u[0],
        mean_com_speed: if steps == 0 { 0.0 } else { speed_sum / steps as f64 },
        energy_trace,
        trajectory,
    })
}

/// Write a trajectory as CSV, one row per sample, fixed header `t,x,y,energy`.
pub fn trajectory_csv(trajectory: &[TrajectorySample]) -> String {
    let mut out = String::from("t,x,y,energy\n");
    for s in trajectory {
        out.push_str(&format!("{},{},{},{}\n", s.t, s.x, s.y, s.energy));
    }
    out
}
