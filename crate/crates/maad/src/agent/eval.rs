use super::policy::GaussianPolicy;
use crate::data::DemoTrajectory;
use crate::envs::{env_reset, env_step, task_reward, EnvSpec};
use crate::error::{Error, Result};
use crate::idm::MdnIdm;
use crate::par;

/// Evaluation outcome over deterministic mean-action rollouts.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub mean_return: f64,
    pub std_return: f64,
    pub trajectories: Vec<DemoTrajectory>,
}

/// Rolls `n_episodes` deterministic episodes (mean actions), seeded by
/// `base_seed + episode`. Returns statistics and the trajectories.
pub fn evaluate(
    policy: &GaussianPolicy,
    env: &EnvSpec,
    n_episodes: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::contract("need at least one evaluation episode"));
    }
    let episodes: Vec<Result<DemoTrajectory>> = par::map_indexed(n_episodes, |e| {
        rollout_mean(policy, env, base_seed + e as u64)
    });
    let trajectories: Vec<DemoTrajectory> = episodes.into_iter().collect::<Result<_>>()?;
    let returns: Vec<f64> = trajectories.iter().map(|t| t.ep_return).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / returns.len() as f64;
    Ok(EvalReport {
        mean_return: mean,
        std_return: var.sqrt(),
        trajectories,
    })
}

fn rollout_mean(policy: &GaussianPolicy, env: &EnvSpec, seed: u64) -> Result<DemoTrajectory> {
    let mut state = env_reset(env, seed);
    let mut states = vec![state.observation()];
    let mut actions = Vec::with_capacity(env.horizon);
    let mut ep_return = 0.0;
    loop {
        let a = policy.mean_action(&state.observation())?;
        ep_return += task_reward(env, &state, &a);
        let (next, done) = env_step(env, &state, &a)?;
        actions.push(a);
        states.push(next.observation());
        state = next;
        if done {
            break;
        }
    }
    Ok(DemoTrajectory {
        states,
        actions,
        ep_return,
    })
}

/// Same protocol with the scripted expert (used for dataset anchors).
pub fn evaluate_expert(env: &EnvSpec, n_episodes: usize, base_seed: u64) -> Result<EvalReport> {
    let episodes: Vec<Result<DemoTrajectory>> = par::map_indexed(n_episodes, |e| {
        let seed = base_seed + e as u64;
        let mut state = env_reset(env, seed);
        let mut states = vec![state.observation()];
        let mut actions = Vec::with_capacity(env.horizon);
        let mut ep_return = 0.0;
        loop {
            let a = crate::envs::expert_action(env, &state);
            ep_return += task_reward(env, &state, &a);
            let (next, done) = env_step(env, &state, &a)?;
            actions.push(a);
            states.push(next.observation());
            state = next;
            if done {
                break;
            }
        }
        Ok(DemoTrajectory {
            states,
            actions,
            ep_return,
        })
    });
    let trajectories: Vec<DemoTrajectory> = episodes.into_iter().collect::<Result<_>>()?;
    let returns: Vec<f64> = trajectories.iter().map(|t| t.ep_return).collect();
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / returns.len() as f64;
    Ok(EvalReport {
        mean_return: mean,
        std_return: var.sqrt(),
        trajectories,
    })
}

/// Zero-action rollouts; the "random floor" anchor for normalized returns.
pub fn evaluate_zero_policy(
    env: &EnvSpec,
    n_episodes: usize,
    base_seed: u64,
) -> Result<EvalReport> {
    let zero = vec![0.0; env.action_dim];
    let returns: Vec<Result<f64>> = par::map_indexed(n_episodes, |e| {
        let mut state = env_reset(env, base_seed + e as u64);
        let mut ep_return = 0.0;
        loop {
            ep_return += task_reward(env, &state, &zero);
            let (next, done) = env_step(env, &state, &zero)?;
            state = next;
            if done {
                break;
            }
        }
        Ok(ep_return)
    });
    let returns: Vec<f64> = returns.into_iter().collect::<Result<_>>()?;
    let mean = returns.iter().sum::<f64>() / returns.len() as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / returns.len() as f64;
    Ok(EvalReport {
        mean_return: mean,
        std_return: var.sqrt(),
        trajectories: Vec::new(),
    })
}

/// Coefficient of determination `1 - SS_res/SS_tot`, averaged over action
/// dimensions. Negative values mean worse-than-mean predictions.
pub fn r_squared(predicted: &[Vec<f64>], reference: &[Vec<f64>]) -> Result<f64> {
    if predicted.len() != reference.len() || predicted.len() < 2 {
        return Err(Error::contract(
            "r_squared needs equal lengths of at least 2",
        ));
    }
    let dim = reference[0].len();
    let n = reference.len() as f64;
    let mut total = 0.0;
    for d in 0..dim {
        let mean_ref = reference.iter().map(|r| r[d]).sum::<f64>() / n;
        let ss_tot: f64 = reference
            .iter()
            .map(|r| (r[d] - mean_ref) * (r[d] - mean_ref))
            .sum();
        if ss_tot <= 0.0 {
            return Err(Error::DegenerateInput(format!(
                "reference action dimension {d} has zero variance"
            )));
        }
        let ss_res: f64 = predicted
            .iter()
            .zip(reference)
            .map(|(p, r)| (p[d] - r[d]) * (p[d] - r[d]))
            .sum();
        total += 1.0 - ss_res / ss_tot;
    }
    Ok(total / dim as f64)
}

/// R² between the policy's mean actions on expert states and the expert's
/// actions, pooled over the dataset.
pub fn policy_expert_r2(policy: &GaussianPolicy, demos: &[DemoTrajectory]) -> Result<f64> {
    let mut predicted = Vec::new();
    let mut reference = Vec::new();
    for demo in demos {
        for (t, a) in demo.actions.iter().enumerate() {
            predicted.push(policy.mean_action(&demo.states[t])?);
            reference.push(a.clone());
        }
    }
    r_squared(&predicted, &reference)
}

/// R² between the inverse model's mixture-mean actions on expert transitions
/// and the expert's actions.
pub fn idm_expert_r2(idm: &MdnIdm, demos: &[DemoTrajectory]) -> Result<f64> {
    let mut predicted = Vec::new();
    let mut reference = Vec::new();
    for demo in demos {
        for (t, a) in demo.actions.iter().enumerate() {
            predicted.push(idm.predict_mean(&demo.states[t], &demo.states[t + 1])?);
            reference.push(a.clone());
        }
    }
    r_squared(&predicted, &reference)
}
