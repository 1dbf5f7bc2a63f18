//! Training losses with analytic parameter gradients. Every `_grad` variant
//! shares its forward arithmetic with the value-only path so finite
//! differences check both.

use super::policy::{log_std_grad_mask, GaussianPolicy, PolicyGrads};
use crate::error::{Error, Result};
use crate::idm::MdnIdm;
use crate::numkit::{BatchActs, Mat, Mlp, MlpGrads};
use crate::rng::{splitmix64, stream, tags};

const LOG_2PI: f64 = 1.837877066409345483560659472811;

/// Mean of `-min(ρA, clip(ρ, 1-ε, 1+ε)A)` over the minibatch.
pub fn ppo_policy_loss(
    policy: &GaussianPolicy,
    states: &Mat,
    actions: &Mat,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
) -> Result<f64> {
    ppo_impl(
        policy,
        states,
        actions,
        old_log_probs,
        advantages,
        clip,
        None,
    )
}

/// [`ppo_policy_loss`] with gradients over the policy parameters.
pub fn ppo_policy_loss_grad(
    policy: &GaussianPolicy,
    states: &Mat,
    actions: &Mat,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
) -> Result<(f64, PolicyGrads)> {
    let mut grads = PolicyGrads::zeros_like(policy);
    let loss = ppo_impl(
        policy,
        states,
        actions,
        old_log_probs,
        advantages,
        clip,
        Some(&mut grads),
    )?;
    Ok((loss, grads))
}

fn ppo_impl(
    policy: &GaussianPolicy,
    states: &Mat,
    actions: &Mat,
    old_log_probs: &[f64],
    advantages: &[f64],
    clip: f64,
    grads: Option<&mut PolicyGrads>,
) -> Result<f64> {
    let b = states.rows();
    if actions.rows() != b || old_log_probs.len() != b || advantages.len() != b {
        return Err(Error::contract("ppo loss batch sizes differ"));
    }
    let acts = policy.mean_net.forward_batch(states)?;
    let means = acts.output();
    let ls = policy.effective_log_std();
    let inv_var: Vec<f64> = ls.iter().map(|l| (-2.0 * l).exp()).collect();

    let mut loss = 0.0;
    let mut coefs = vec![0.0; b];
    for i in 0..b {
        let mi = means.row(i);
        let ai = actions.row(i);
        let mut logp = 0.0;
        for d in 0..ai.len() {
            let diff = ai[d] - mi[d];
            logp += -0.5 * LOG_2PI - ls[d] - 0.5 * diff * diff * inv_var[d];
        }
        let ratio = (logp - old_log_probs[i]).exp();
        if !ratio.is_finite() {
            return Err(Error::numeric(format!("non-finite ppo ratio {ratio}")));
        }
        let a = advantages[i];
        let unclipped = ratio * a;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * a;
        loss -= unclipped.min(clipped);
        // gradient flows only when the unclipped branch attains the min
        coefs[i] = if unclipped <= clipped {
            -a * ratio / b as f64
        } else {
            0.0
        };
    }
    loss /= b as f64;
    if let Some(g) = grads {
        backprop_log_prob_coefs(policy, &acts, actions, &coefs, g);
    }
    Ok(loss)
}

/// Accumulates `Σ_i coef_i · ∇_θ log π(a_i|s_i)` into `grads`.
fn backprop_log_prob_coefs(
    policy: &GaussianPolicy,
    acts: &BatchActs,
    actions: &Mat,
    coefs: &[f64],
    grads: &mut PolicyGrads,
) {
    let means = acts.output();
    let ls = policy.effective_log_std();
    let inv_var: Vec<f64> = ls.iter().map(|l| (-2.0 * l).exp()).collect();
    let b = actions.rows();
    let ad = actions.cols();
    let mut d_mean = Mat::zeros(b, ad);
    for i in 0..b {
        let c = coefs[i];
        if c == 0.0 {
            continue;
        }
        let mi = means.row(i);
        let ai = actions.row(i);
        let dm = d_mean.row_mut(i);
        for d in 0..ad {
            let diff = ai[d] - mi[d];
            dm[d] = c * diff * inv_var[d];
            grads.log_std[d] +=
                c * (diff * diff * inv_var[d] - 1.0) * log_std_grad_mask(policy.log_std[d]);
        }
    }
    policy
        .mean_net
        .backward_batch(acts, &d_mean, &mut grads.mean_net);
}

/// Mean squared error between state-value predictions and GAE returns.
pub fn value_loss(value_net: &Mlp, states: &Mat, targets: &[f64]) -> Result<f64> {
    value_impl(value_net, states, targets, None)
}

pub fn value_loss_grad(value_net: &Mlp, states: &Mat, targets: &[f64]) -> Result<(f64, MlpGrads)> {
    let mut grads = MlpGrads::zeros_like(value_net);
    let loss = value_impl(value_net, states, targets, Some(&mut grads))?;
    Ok((loss, grads))
}

fn value_impl(
    value_net: &Mlp,
    states: &Mat,
    targets: &[f64],
    grads: Option<&mut MlpGrads>,
) -> Result<f64> {
    let b = states.rows();
    if targets.len() != b {
        return Err(Error::contract("value loss batch sizes differ"));
    }
    let acts = value_net.forward_batch(states)?;
    let preds = acts.output();
    let mut loss = 0.0;
    let mut d_out = Mat::zeros(b, 1);
    for i in 0..b {
        let err = preds.get(i, 0) - targets[i];
        loss += err * err;
        d_out.set(i, 0, 2.0 * err / b as f64);
    }
    loss /= b as f64;
    if let Some(g) = grads {
        value_net.backward_batch(&acts, &d_out, g);
    }
    Ok(loss)
}

/// Behavioral cloning: mean `-log π(a|s)` over expert state-action pairs.
pub fn bc_loss(policy: &GaussianPolicy, states: &Mat, actions: &Mat) -> Result<f64> {
    bc_impl(policy, states, actions, None)
}

pub fn bc_loss_grad(
    policy: &GaussianPolicy,
    states: &Mat,
    actions: &Mat,
) -> Result<(f64, PolicyGrads)> {
    let mut grads = PolicyGrads::zeros_like(policy);
    let loss = bc_impl(policy, states, actions, Some(&mut grads))?;
    Ok((loss, grads))
}

fn bc_impl(
    policy: &GaussianPolicy,
    states: &Mat,
    actions: &Mat,
    grads: Option<&mut PolicyGrads>,
) -> Result<f64> {
    let b = states.rows();
    if actions.rows() != b || b == 0 {
        return Err(Error::contract("bc loss needs matching non-empty batches"));
    }
    let acts = policy.mean_net.forward_batch(states)?;
    let means = acts.output();
    let ls = policy.effective_log_std();
    let inv_var: Vec<f64> = ls.iter().map(|l| (-2.0 * l).exp()).collect();
    let mut loss = 0.0;
    for i in 0..b {
        let mi = means.row(i);
        let ai = actions.row(i);
        for d in 0..ai.len() {
            let diff = ai[d] - mi[d];
            loss += 0.5 * LOG_2PI + ls[d] + 0.5 * diff * diff * inv_var[d];
        }
    }
    loss /= b as f64;
    if let Some(g) = grads {
        let coefs = vec![-1.0 / b as f64; b];
        backprop_log_prob_coefs(policy, &acts, actions, &coefs, g);
    }
    Ok(loss)
}

/// Forward-KL regularizer: mean over expert transitions of
/// `KL(p_idm(·|s,s') ‖ π(·|s))`. Gradients reach only the policy; the inverse
/// model is a fixed input here by construction.
pub fn reg_loss(
    policy: &GaussianPolicy,
    idm: &MdnIdm,
    pairs: &[(Vec<f64>, Vec<f64>)],
    mc_samples: usize,
    seed: u64,
) -> Result<f64> {
    reg_impl(policy, idm, pairs, mc_samples, seed, None)
}

pub fn reg_loss_grad(
    policy: &GaussianPolicy,
    idm: &MdnIdm,
    pairs: &[(Vec<f64>, Vec<f64>)],
    mc_samples: usize,
    seed: u64,
) -> Result<(f64, PolicyGrads)> {
    let mut grads = PolicyGrads::zeros_like(policy);
    let loss = reg_impl(policy, idm, pairs, mc_samples, seed, Some(&mut grads))?;
    Ok((loss, grads))
}

fn reg_impl(
    policy: &GaussianPolicy,
    idm: &MdnIdm,
    pairs: &[(Vec<f64>, Vec<f64>)],
    mc_samples: usize,
    seed: u64,
    mut grads: Option<&mut PolicyGrads>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::contract(
            "regularizer needs a non-empty transition batch",
        ));
    }
    if idm.action_dim() != policy.action_dim() {
        return Err(Error::contract("model and policy action dimensions differ"));
    }
    let b = pairs.len();
    let states: Vec<Vec<f64>> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let state_mat = super::policy::rows_to_mat(&states, policy.state_dim(), "regularizer state")?;
    let acts = policy.mean_net.forward_batch(&state_mat)?;
    let means = acts.output();
    let ls = policy.effective_log_std();
    let var_q: Vec<f64> = ls.iter().map(|l| (2.0 * l).exp()).collect();
    let ad = policy.action_dim();

    let mut loss = 0.0;
    let mut d_mean = Mat::zeros(b, ad);
    for (i, (s, s2)) in pairs.iter().enumerate() {
        let mix = idm.mixture_at(s, s2)?;
        let mu_q = means.row(i);
        if idm.n_components() == 1 {
            let comp = &mix.components[0];
            for d in 0..ad {
                let lsp = comp.log_std[d];
                let vp = (2.0 * lsp).exp();
                let dm = comp.mean[d] - mu_q[d];
                loss += ls[d] - lsp + (vp + dm * dm) / (2.0 * var_q[d]) - 0.5;
                if let Some(g) = grads.as_deref_mut() {
                    d_mean.set(i, d, (mu_q[d] - comp.mean[d]) / var_q[d] / b as f64);
                    g.log_std[d] += (1.0 - (vp + dm * dm) / var_q[d]) / b as f64
                        * log_std_grad_mask(policy.log_std[d]);
                }
            }
        } else {
            // Monte-Carlo forward KL; the sample set depends only on the
            // (fixed) inverse model, so value and gradient stay consistent.
            let mut rng = stream(seed ^ splitmix64(i as u64), tags::REG_MC);
            let inv_vq: Vec<f64> = var_q.iter().map(|v| 1.0 / v).collect();
            let m = mc_samples.max(1);
            for _ in 0..m {
                let a = mix.sample(&mut rng);
                let mut log_q = 0.0;
                for d in 0..ad {
                    let diff = a[d] - mu_q[d];
                    log_q += -0.5 * LOG_2PI - ls[d] - 0.5 * diff * diff * inv_vq[d];
                }
                loss += (mix.log_prob(&a)? - log_q) / m as f64;
                if let Some(g) = grads.as_deref_mut() {
                    let scale = 1.0 / (m as f64 * b as f64);
                    let dm = d_mean.row_mut(i);
                    for d in 0..ad {
                        let diff = a[d] - mu_q[d];
                        dm[d] += -diff * inv_vq[d] * scale;
                        g.log_std[d] += -(diff * diff * inv_vq[d] - 1.0)
                            * scale
                            * log_std_grad_mask(policy.log_std[d]);
                    }
                }
            }
        }
    }
    loss /= b as f64;
    if let Some(g) = grads.as_deref_mut() {
        policy
            .mean_net
            .backward_batch(&acts, &d_mean, &mut g.mean_net);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::DiagGaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_policy(seed: u64) -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaussianPolicy::new(3, 2, &[8], &mut rng).unwrap()
    }

    fn batch(policy: &GaussianPolicy, n: usize, seed: u64) -> (Mat, Mat) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let actions: Vec<Vec<f64>> = states
            .iter()
            .map(|s| {
                let mut r = ChaCha8Rng::seed_from_u64(seed ^ s[0].to_bits());
                policy.dist_at(s).unwrap().sample(&mut r)
            })
            .collect();
        (Mat::from_rows(&states), Mat::from_rows(&actions))
    }

    #[test]
    fn unchanged_policy_gives_negative_mean_advantage() {
        let policy = small_policy(1);
        let (states, actions) = batch(&policy, 16, 2);
        let old: Vec<f64> = (0..16)
            .map(|i| policy.log_prob(states.row(i), actions.row(i)).unwrap())
            .collect();
        let adv: Vec<f64> = (0..16).map(|i| (i as f64) - 7.5).collect();
        let loss = ppo_policy_loss(&policy, &states, &actions, &old, &adv, 0.2).unwrap();
        let mean_adv = adv.iter().sum::<f64>() / 16.0;
        assert!((loss + mean_adv).abs() < 1e-12);
    }

    #[test]
    fn clipped_sample_contributes_without_gradient() {
        let policy = small_policy(3);
        let (states, actions) = batch(&policy, 1, 4);
        // engineer ratio = 1.5
        let logp = policy.log_prob(states.row(0), actions.row(0)).unwrap();
        let old = vec![logp - 1.5f64.ln()];
        let (loss, grads) =
            ppo_policy_loss_grad(&policy, &states, &actions, &old, &[1.0], 0.2).unwrap();
        assert!((loss + 1.2).abs() < 1e-12, "loss {loss}");
        let mut flat = Vec::new();
        grads.flatten_into(&mut flat);
        assert!(flat.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_advantages_zero_everything() {
        let policy = small_policy(5);
        let (states, actions) = batch(&policy, 8, 6);
        let old: Vec<f64> = (0..8)
            .map(|i| policy.log_prob(states.row(i), actions.row(i)).unwrap())
            .collect();
        let (loss, grads) =
            ppo_policy_loss_grad(&policy, &states, &actions, &old, &[0.0; 8], 0.2).unwrap();
        assert_eq!(loss, 0.0);
        let mut flat = Vec::new();
        grads.flatten_into(&mut flat);
        assert!(flat.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn value_loss_zero_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = Mlp::xavier(&[2, 6, 1], &mut rng, 1.0).unwrap();
        let states = Mat::from_rows(&[vec![0.1, 0.2], vec![-0.4, 0.9]]);
        let preds: Vec<f64> = (0..2)
            .map(|i| net.apply(states.row(i)).unwrap()[0])
            .collect();
        assert!(value_loss(&net, &states, &preds).unwrap() < 1e-30);

        let mut constant = Mlp::zeros(&[2, 1]).unwrap();
        constant.bias_mut(0)[0] = 3.5;
        assert_eq!(value_loss(&constant, &states, &[3.5, 3.5]).unwrap(), 0.0);
    }

    #[test]
    fn bc_loss_at_expert_mean() {
        // policy mean equals expert action, sigma = 1, 1-D: 0.9189 per sample
        let mut policy = small_policy(8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p1 = GaussianPolicy::new(1, 1, &[4], &mut rng).unwrap();
        let zeros = vec![0.0; p1.param_count()];
        p1.assign_from(&zeros);
        let states = Mat::from_rows(&[vec![0.3]]);
        let actions = Mat::from_rows(&[vec![0.0]]);
        let loss = bc_loss(&p1, &states, &actions).unwrap();
        assert!((loss - 0.9189385).abs() < 1e-6);

        // shrinking sigma at the correct mean reduces the loss
        p1.log_std[0] = -0.7;
        let tighter = bc_loss(&p1, &states, &actions).unwrap();
        assert!(tighter < loss);
        let _ = &mut policy;
    }

    #[test]
    fn reg_loss_zero_when_policy_matches_idm() {
        // K=1 constant IDM equal to the policy conditional everywhere
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut policy = GaussianPolicy::new(2, 1, &[4], &mut rng).unwrap();
        let zeros = vec![0.0; policy.param_count()];
        policy.assign_from(&zeros);
        policy.log_std[0] = -0.25;

        let mut idm = MdnIdm::new(2, 1, 1, &[4], &mut rng).unwrap();
        let n = idm.param_count();
        let mut flat = vec![0.0; n];
        // log_std is the last parameter in flatten order
        flat[n - 1] = -0.25;
        idm.assign(&flat);

        let pairs = vec![(vec![0.4, -0.2], vec![0.5, -0.1]); 6];
        let (loss, grads) = reg_loss_grad(&policy, &idm, &pairs, 0, 0).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
        let mut g = Vec::new();
        grads.flatten_into(&mut g);
        // mean gradient vanishes; log-std gradient vanishes at the match
        assert!(g.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn reg_loss_is_mean_of_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let policy = GaussianPolicy::new(2, 1, &[6], &mut rng).unwrap();
        let idm = MdnIdm::new(2, 1, 1, &[6], &mut rng).unwrap();
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|i| {
                let x = i as f64 * 0.2 - 0.4;
                (vec![x, -x], vec![x + 0.1, -x + 0.1])
            })
            .collect();
        let batch_loss = reg_loss(&policy, &idm, &pairs, 0, 0).unwrap();
        let mut manual = 0.0;
        for (s, s2) in &pairs {
            let mix = idm.mixture_at(s, s2).unwrap();
            let q: DiagGaussian = policy.dist_at(s).unwrap();
            manual += mix.components[0].kl(&q).unwrap();
        }
        manual /= pairs.len() as f64;
        assert!((batch_loss - manual).abs() < 1e-12);
    }
}
