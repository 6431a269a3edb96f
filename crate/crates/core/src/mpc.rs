//! Predictive-sampling MPC over the kinematic world.
//!
//! Each control step perturbs the nominal velocity sequence K times, rolls
//! every candidate forward T steps, keeps the cheapest as the new nominal and
//! executes its first control. Noise is drawn on a few knots and held between
//! them, which gives smoother candidates than per-step noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsl::{CostSpec, Residual, ResolvedSpec};
use crate::geometry::Vec3;
use crate::world::{Control, GripCommand, WorldState, GRASP_RADIUS, MAX_SPEED, PALM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub samples: usize,
    /// Standard deviation of the velocity perturbation, m/s.
    pub noise: f64,
    pub dt: f64,
    /// Run time budget as a multiple of the program's duration.
    pub duration_multiplier: f64,
    /// Number of independent noise values per candidate, held piecewise constant.
    pub knots: usize,
    pub seed: u64,
    /// Rollout threads; `None` uses the global rayon pool.
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 20,
            samples: 32,
            noise: 0.15,
            dt: 0.05,
            duration_multiplier: 4.0,
            knots: 2,
            seed: 0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid MPC config: {0}")]
pub struct ConfigError(pub &'static str);

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon < 1 {
            return Err(ConfigError("horizon must be at least 1"));
        }
        if self.samples < 2 {
            return Err(ConfigError("need at least 2 samples"));
        }
        if !(self.noise > 0.0) || !(self.dt > 0.0) || !(self.duration_multiplier > 0.0) {
            return Err(ConfigError("noise, dt and duration multiplier must be positive"));
        }
        if self.knots < 1 {
            return Err(ConfigError("need at least 1 knot"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub time: f64,
    pub gripper: Vec3,
    pub held: Option<String>,
    pub control: Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MpcOutcome {
    PrimarySatisfied,
    Timeout,
    NoPrimary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcResult {
    pub final_state: WorldState,
    pub success: bool,
    pub outcome: MpcOutcome,
    pub trajectory: Vec<TrajectoryPoint>,
    /// Best rollout cost of each sampling iteration.
    pub cost_trace: Vec<f64>,
    pub steps_used: usize,
}

/// Object the first `minimize(palm, X)` term asks the palm to reach, if it
/// can be grasped.
fn grasp_target(state: &WorldState, spec: &CostSpec) -> Option<String> {
    let first = spec.terms.iter().find_map(|t| match &t.residual {
        Residual::MinimizeDistance { a, b } => Some((a.as_str(), b.as_str())),
        _ => None,
    })?;
    let other = match first {
        (PALM, o) | (o, PALM) if o != PALM => o,
        _ => return None,
    };
    let obj = state.object(other)?;
    let handle = state.joint_for_handle(&obj.name).is_some();
    (handle || (obj.graspable && state.is_visible(&obj.name))).then(|| obj.name.clone())
}

/// Straight-line approach to the grasp target followed by a grasp command.
/// Empty when there is nothing to grasp or it is already held.
pub fn grasp_heuristic(state: &WorldState, spec: &CostSpec, dt: f64, max_steps: usize) -> Vec<Control> {
    let Some(target) = grasp_target(state, spec) else { return Vec::new() };
    if state.is_held(&target) {
        return Vec::new();
    }
    let mut controls = Vec::new();
    let mut sim = state.clone();
    if sim.gripper.held.is_some() {
        let c = Control::grip(GripCommand::Release);
        sim.step_in_place(&c, dt);
        controls.push(c);
    }
    let reach = GRASP_RADIUS * 0.2;
    while controls.len() < max_steps {
        let Some(goal) = sim.position_of(&target) else { break };
        let delta = goal - sim.gripper.position;
        if delta.norm() <= reach {
            break;
        }
        let v = (delta * (1.0 / dt)).clamp_norm(MAX_SPEED);
        let before = sim.gripper.position;
        let c = Control::velocity(v);
        sim.step_in_place(&c, dt);
        controls.push(c);
        if sim.gripper.position == before {
            break;
        }
    }
    if controls.len() < max_steps {
        controls.push(Control::grip(GripCommand::Grasp));
    }
    controls
}

fn rollout_rng(seed: u64, iteration: u64, sample: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration.wrapping_mul(1 << 20).wrapping_add(sample));
    rng
}

fn perturb(nominal: &[Vec3], config: &MpcConfig, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let normal = Normal::new(0.0, config.noise).expect("noise validated positive");
    let knots = config.knots.min(nominal.len());
    let noise: Vec<Vec3> = (0..knots)
        .map(|_| Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
        .collect();
    nominal
        .iter()
        .enumerate()
        .map(|(t, v)| (*v + noise[t * knots / nominal.len()]).clamp_norm(MAX_SPEED))
        .collect()
}

fn rollout_cost(state: &WorldState, resolved: &ResolvedSpec, controls: &[Vec3], dt: f64) -> f64 {
    let mut sim = state.clone();
    let mut total = 0.0;
    for v in controls {
        sim.step_in_place(&Control::velocity(*v), dt);
        total += resolved.cost(&sim);
    }
    total
}

fn argmin(costs: &[f64]) -> usize {
    let mut best = 0;
    for (i, c) in costs.iter().enumerate() {
        if *c < costs[best] {
            best = i;
        }
    }
    best
}

pub fn run_mpc(state: &WorldState, spec: &CostSpec, config: &MpcConfig) -> MpcResult {
    match config.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run_inner(state, spec, config)),
            Err(e) => {
                log::warn!("falling back to the global pool: {e}");
                run_inner(state, spec, config)
            }
        },
        None => run_inner(state, spec, config),
    }
}

fn run_inner(state: &WorldState, spec: &CostSpec, config: &MpcConfig) -> MpcResult {
    let mut world = state.clone();
    let mut trajectory = Vec::new();
    let mut cost_trace = Vec::new();
    if spec.primary.is_none() {
        return MpcResult {
            final_state: world,
            success: false,
            outcome: MpcOutcome::NoPrimary,
            trajectory,
            cost_trace,
            steps_used: 0,
        };
    }
    let resolved = spec.resolve(state);
    let dt = config.dt;
    let max_steps = ((spec.duration * config.duration_multiplier) / dt).round().max(1.0) as usize;
    let mut steps = 0usize;

    let mut apply = |world: &mut WorldState, c: Control, steps: &mut usize| {
        world.step_in_place(&c, dt);
        *steps += 1;
        trajectory.push(TrajectoryPoint {
            time: world.time,
            gripper: world.gripper.position,
            held: world.gripper.held.clone(),
            control: c,
        });
    };

    let mut satisfied = resolved.primary_satisfied(&world);
    if !satisfied {
        for c in grasp_heuristic(&world, spec, dt, max_steps) {
            apply(&mut world, c, &mut steps);
        }
        satisfied = resolved.primary_satisfied(&world);
    }

    let mut nominal = vec![Vec3::ZERO; config.horizon];
    let mut iteration = 0u64;
    while !satisfied && steps < max_steps {
        let candidates: Vec<Vec<Vec3>> = (0..config.samples)
            .map(|k| {
                if k == 0 {
                    nominal.clone()
                } else {
                    perturb(&nominal, config, &mut rollout_rng(config.seed, iteration, k as u64))
                }
            })
            .collect();
        let costs: Vec<f64> = candidates
            .par_iter()
            .map(|c| rollout_cost(&world, &resolved, c, dt))
            .collect();
        let best = argmin(&costs);
        cost_trace.push(costs[best]);
        nominal = candidates[best].clone();
        let first = nominal[0];
        nominal.rotate_left(1);
        let n = nominal.len();
        if n > 1 {
            nominal[n - 1] = nominal[n - 2];
        }
        apply(&mut world, Control::velocity(first), &mut steps);
        satisfied = resolved.primary_satisfied(&world);
        iteration += 1;
    }

    if world.gripper.held.is_some() {
        apply(&mut world, Control::grip(GripCommand::Release), &mut steps);
    }
    let success = resolved.primary_satisfied(&world);
    MpcResult {
        final_state: world,
        success,
        outcome: if satisfied { MpcOutcome::PrimarySatisfied } else { MpcOutcome::Timeout },
        trajectory,
        cost_trace,
        steps_used: steps,
    }
}
