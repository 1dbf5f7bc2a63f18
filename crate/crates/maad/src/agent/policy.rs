use rand::Rng;

use crate::error::{Error, Result};
use crate::numkit::{clamp_log_std, DiagGaussian, Mat, Mlp, MlpGrads, LOG_STD_MAX, LOG_STD_MIN};

/// Diagonal-Gaussian policy: state-dependent mean, state-independent
/// log standard deviations (free parameters, clamped to `[-10, 2]` at use).
#[derive(Debug, Clone)]
pub struct GaussianPolicy {
    state_dim: usize,
    action_dim: usize,
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
}

impl GaussianPolicy {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Ok(GaussianPolicy {
            state_dim,
            action_dim,
            // small output layer keeps initial actions near zero
            mean_net: Mlp::xavier(&sizes, rng, 0.01)?,
            log_std: vec![0.0; action_dim],
        })
    }

    /// Rebuilds a policy from its parts (checkpoint loading).
    pub fn from_parts(mean_net: Mlp, log_std: Vec<f64>) -> Result<Self> {
        if mean_net.out_dim() != log_std.len() {
            return Err(Error::contract("policy part shapes are inconsistent"));
        }
        Ok(GaussianPolicy {
            state_dim: mean_net.in_dim(),
            action_dim: mean_net.out_dim(),
            mean_net,
            log_std,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Effective (clamped) log standard deviations.
    pub fn effective_log_std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| clamp_log_std(*v)).collect()
    }

    /// The policy conditional `π(·|s)` as a distribution value.
    pub fn dist_at(&self, state: &[f64]) -> Result<DiagGaussian> {
        let mean = self.mean_net.apply(state)?;
        DiagGaussian::new(mean, self.effective_log_std())
    }

    pub fn mean_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.mean_net.apply(state)
    }

    /// Stochastic action and its log-probability under the current policy.
    pub fn sample_action(&self, state: &[f64], rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
        let dist = self.dist_at(state)?;
        let action = dist.sample(rng);
        crate::error::ensure_finite(&action, "sampled action")?;
        let logp = dist.log_prob(&action)?;
        Ok((action, logp))
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        self.dist_at(state)?.log_prob(action)
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.log_std.len()
    }

    /// Flatten order: mean net, then log stds.
    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.mean_net.flatten_into(out);
        out.extend_from_slice(&self.log_std);
    }

    pub fn assign_from(&mut self, flat: &[f64]) -> usize {
        let k = self.mean_net.assign_from(flat);
        let n = self.log_std.len();
        self.log_std.copy_from_slice(&flat[k..k + n]);
        k + n
    }
}

/// Gradients shaped like a [`GaussianPolicy`].
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub mean_net: MlpGrads,
    pub log_std: Vec<f64>,
}

impl PolicyGrads {
    pub fn zeros_like(policy: &GaussianPolicy) -> Self {
        PolicyGrads {
            mean_net: MlpGrads::zeros_like(&policy.mean_net),
            log_std: vec![0.0; policy.log_std.len()],
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.mean_net.flatten_into(out);
        out.extend_from_slice(&self.log_std);
    }

    pub fn scale(&mut self, s: f64) {
        self.mean_net.scale(s);
        self.log_std.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add_assign(&mut self, other: &PolicyGrads) {
        self.mean_net.add_assign(&other.mean_net);
        for (a, b) in self.log_std.iter_mut().zip(&other.log_std) {
            *a += b;
        }
    }
}

/// Whether the log-std parameter at `raw` passes gradient (inside the clamp).
#[inline]
pub(crate) fn log_std_grad_mask(raw: f64) -> f64 {
    if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
        1.0
    } else {
        0.0
    }
}

/// Policy and value function optimized jointly by PPO.
#[derive(Debug, Clone)]
pub struct ActorCritic {
    pub policy: GaussianPolicy,
    pub value: Mlp,
}

impl ActorCritic {
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let policy = GaussianPolicy::new(state_dim, action_dim, hidden, rng)?;
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let value = Mlp::xavier(&sizes, rng, 1.0)?;
        Ok(ActorCritic { policy, value })
    }

    pub fn param_count(&self) -> usize {
        self.policy.param_count() + self.value.param_count()
    }

    /// Flatten order: policy, then value net.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.policy.flatten_into(&mut out);
        self.value.flatten_into(&mut out);
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let k = self.policy.assign_from(flat);
        self.value.assign_from(&flat[k..]);
    }

    /// Batched state values.
    pub fn values(&self, states: &Mat) -> Result<Vec<f64>> {
        let acts = self.value.forward_batch(states)?;
        Ok(acts.output().data().to_vec())
    }
}

/// Builds a B×dim matrix from row vectors, validating widths.
pub fn rows_to_mat(rows: &[Vec<f64>], dim: usize, what: &str) -> Result<Mat> {
    for r in rows {
        if r.len() != dim {
            return Err(Error::contract(format!(
                "{what} width {} vs expected {dim}",
                r.len()
            )));
        }
    }
    Ok(Mat::from_rows(rows))
}
