use crate::error::{Error, Result};

/// Generalized advantage estimation over a rollout with episode boundary
/// flags. `values[t] = V(s_t)`; `last_value` bootstraps the state after the
/// final step. Returns `(advantages, returns)` with `returns = A + V`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lam: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    if values.len() != t_len || dones.len() != t_len {
        return Err(Error::contract(format!(
            "gae lengths: rewards {t_len}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; t_len];
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let next_value = if t + 1 < t_len {
            values[t + 1]
        } else {
            last_value
        };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        acc = delta + gamma * lam * not_done * acc;
        advantages[t] = acc;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Normalizes `advantages` in place to mean 0, std 1 (guarded for tiny std);
/// returns `(mean, std)` before normalization.
pub fn normalize_advantages(advantages: &mut [f64]) -> (f64, f64) {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages
        .iter()
        .map(|a| (a - mean) * (a - mean))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let denom = std + 1e-8;
    for a in advantages.iter_mut() {
        *a = (*a - mean) / denom;
    }
    (mean, std)
}
