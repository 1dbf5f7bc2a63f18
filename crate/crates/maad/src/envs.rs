//! Deterministic toy continuous-control environments with analytic inverse
//! dynamics and scripted experts.
//!
//! Both environments are double integrators over `action_dim` independent
//! axes with semi-implicit Euler integration and fixed-horizon episodes:
//!
//! * `linear_point`: `v' = v + a·dt`, `x' = x + v'·dt` — the usual point mass.
//! * `mirror_actuator`: `v' = v + |a|·dt` — the sign of the action is lost,
//!   so the inverse dynamics posterior has two symmetric modes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream;

/// Proportional gain of the scripted PD expert.
pub const PD_KP: f64 = 2.0;
/// Derivative gain of the scripted PD expert.
pub const PD_KD: f64 = 1.0;
/// Weight of the quadratic action penalty in the diagnostic task reward.
pub const ACTION_COST_WEIGHT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    LinearPoint,
    MirrorActuator,
}

/// Static description of an environment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub dt: f64,
    pub horizon: usize,
    pub dynamics_kind: DynamicsKind,
}

impl EnvSpec {
    /// Two-axis point mass; the default training environment.
    pub fn linear_point() -> Self {
        EnvSpec {
            name: "linear_point".into(),
            state_dim: 4,
            action_dim: 2,
            action_low: vec![-1.0; 2],
            action_high: vec![1.0; 2],
            dt: 0.05,
            horizon: 200,
            dynamics_kind: DynamicsKind::LinearPoint,
        }
    }

    /// One-axis actuator that only feels the action magnitude; exercises the
    /// bimodal inverse-dynamics posterior.
    pub fn mirror_actuator() -> Self {
        EnvSpec {
            name: "mirror_actuator".into(),
            state_dim: 2,
            action_dim: 1,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            dt: 0.05,
            horizon: 200,
            dynamics_kind: DynamicsKind::MirrorActuator,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "linear_point" => Ok(EnvSpec::linear_point()),
            "mirror_actuator" => Ok(EnvSpec::mirror_actuator()),
            other => Err(Error::contract(format!("unknown environment '{other}'"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::contract("horizon must be at least 1"));
        }
        if self.state_dim != 2 * self.action_dim {
            return Err(Error::contract(
                "state_dim must be 2 * action_dim (positions + velocities)",
            ));
        }
        if self.action_low.len() != self.action_dim || self.action_high.len() != self.action_dim {
            return Err(Error::contract(
                "action bound dimensions must match action_dim",
            ));
        }
        if self
            .action_low
            .iter()
            .zip(&self.action_high)
            .any(|(lo, hi)| !(lo < hi))
        {
            return Err(Error::contract(
                "action_low must be elementwise below action_high",
            ));
        }
        if !(self.dt > 0.0) {
            return Err(Error::contract("dt must be positive"));
        }
        Ok(())
    }

    /// Clips an action to the box bounds.
    pub fn clip_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
            .collect()
    }
}

/// Dynamic state: positions, velocities and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub step_index: usize,
}

impl EnvState {
    /// Observation vector `[positions..., velocities...]`.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.positions.len() * 2);
        obs.extend_from_slice(&self.positions);
        obs.extend_from_slice(&self.velocities);
        obs
    }

    pub fn from_observation(obs: &[f64], step_index: usize) -> Self {
        let d = obs.len() / 2;
        EnvState {
            positions: obs[..d].to_vec(),
            velocities: obs[d..].to_vec(),
            step_index,
        }
    }
}

/// Initial state: positions uniform in `[-1, 1]^d`, zero velocities.
pub fn env_reset(spec: &EnvSpec, seed: u64) -> EnvState {
    let d = spec.action_dim;
    let mut rng = stream(seed, 0xE5E7);
    let positions = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    EnvState {
        positions,
        velocities: vec![0.0; d],
        step_index: 0,
    }
}

/// Advances one step; the action is clipped to the bounds first. Returns the
/// next state and whether the fixed horizon was reached.
pub fn env_step(spec: &EnvSpec, s: &EnvState, a: &[f64]) -> Result<(EnvState, bool)> {
    if a.len() != spec.action_dim {
        return Err(Error::contract(format!(
            "action dimension {} vs spec {}",
            a.len(),
            spec.action_dim
        )));
    }
    crate::error::ensure_finite(a, "action")?;
    let a = spec.clip_action(a);
    let d = spec.action_dim;
    let mut velocities = Vec::with_capacity(d);
    let mut positions = Vec::with_capacity(d);
    for i in 0..d {
        let accel = match spec.dynamics_kind {
            DynamicsKind::LinearPoint => a[i],
            DynamicsKind::MirrorActuator => a[i].abs(),
        };
        let v = s.velocities[i] + accel * spec.dt;
        velocities.push(v);
        positions.push(s.positions[i] + v * spec.dt);
    }
    let next = EnvState {
        positions,
        velocities,
        step_index: s.step_index + 1,
    };
    let done = next.step_index >= spec.horizon;
    Ok((next, done))
}

/// Scripted expert: a PD regulator toward the origin, clipped to the action
/// bounds. The mirror actuator uses the same magnitude law with a positive
/// sign convention.
pub fn expert_action(spec: &EnvSpec, s: &EnvState) -> Vec<f64> {
    let raw: Vec<f64> = s
        .positions
        .iter()
        .zip(&s.velocities)
        .map(|(x, v)| -PD_KP * x - PD_KD * v)
        .collect();
    let clipped = spec.clip_action(&raw);
    match spec.dynamics_kind {
        DynamicsKind::LinearPoint => clipped,
        DynamicsKind::MirrorActuator => clipped.iter().map(|a| a.abs()).collect(),
    }
}

/// Diagnostic task reward: negative quadratic cost on distance to the origin
/// plus a small action penalty. Used only for evaluation, never for training.
pub fn task_reward(spec: &EnvSpec, s: &EnvState, a: &[f64]) -> f64 {
    let a = spec.clip_action(a);
    let pos_cost: f64 = s.positions.iter().map(|x| x * x).sum();
    let act_cost: f64 = a.iter().map(|v| v * v).sum();
    -(pos_cost + ACTION_COST_WEIGHT * act_cost)
}

const INVERSE_TOL: f64 = 1e-7;

/// The set of in-bounds actions that produce the transition `s → s_next`.
///
/// `linear_point` yields a singleton; `mirror_actuator` yields the pair
/// `{+m, -m}` per axis magnitude (coinciding when the velocity is unchanged).
pub fn analytic_inverse(spec: &EnvSpec, s: &EnvState, s_next: &EnvState) -> Result<Vec<Vec<f64>>> {
    let d = spec.action_dim;
    if s.positions.len() != d || s_next.positions.len() != d {
        return Err(Error::contract("state dimension mismatch"));
    }
    let mut base = Vec::with_capacity(d);
    for i in 0..d {
        let a = (s_next.velocities[i] - s.velocities[i]) / spec.dt;
        let expected_pos = s.positions[i] + s_next.velocities[i] * spec.dt;
        if (expected_pos - s_next.positions[i]).abs() > INVERSE_TOL {
            return Err(Error::InfeasibleTransition(format!(
                "position update inconsistent on axis {i}: expected {expected_pos}, got {}",
                s_next.positions[i]
            )));
        }
        base.push(a);
    }
    match spec.dynamics_kind {
        DynamicsKind::LinearPoint => {
            for (i, a) in base.iter().enumerate() {
                if *a < spec.action_low[i] - INVERSE_TOL || *a > spec.action_high[i] + INVERSE_TOL {
                    return Err(Error::InfeasibleTransition(format!(
                        "required action {a} on axis {i} is out of bounds"
                    )));
                }
            }
            Ok(vec![spec.clip_action(&base)])
        }
        DynamicsKind::MirrorActuator => {
            // magnitude per axis; velocity can only increase
            for (i, a) in base.iter().enumerate() {
                if *a < -INVERSE_TOL {
                    return Err(Error::InfeasibleTransition(format!(
                        "velocity decreased on axis {i}; unreachable under |a| dynamics"
                    )));
                }
                if *a > spec.action_high[i].abs().max(spec.action_low[i].abs()) + INVERSE_TOL {
                    return Err(Error::InfeasibleTransition(format!(
                        "required magnitude {a} on axis {i} is out of bounds"
                    )));
                }
            }
            let m: Vec<f64> = base.iter().map(|a| a.max(0.0)).collect();
            let plus = spec.clip_action(&m);
            let minus = spec.clip_action(&m.iter().map(|v| -v).collect::<Vec<_>>());
            Ok(vec![plus, minus])
        }
    }
}
