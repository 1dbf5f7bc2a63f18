//! Surrogate reward backends: an adversarial discriminator over state
//! transitions, per-step trajectory matching, and entropic optimal transport
//! solved by log-domain Sinkhorn iterations.
//!
//! Sign conventions are fixed here and asserted in tests: AIL rewards are
//! non-negative, TM and OT rewards are non-positive.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::ObsTrajectory;
use crate::error::{Error, Result};
use crate::idm::log_sum_exp;
use crate::numkit::{Mat, Mlp, MlpGrads};
use crate::rng::{stream, tags};

/// Discriminator output clamp; bounds the −log terms.
pub const AIL_CLAMP_DELTA: f64 = 1e-6;
/// Default Sinkhorn entropic regularization.
pub const OT_EPSILON: f64 = 0.01;
/// Default Sinkhorn iteration count.
pub const OT_ITERS: usize = 100;
/// Default OT reward scale factor.
pub const OT_SCALE: f64 = 20.0;
/// Cosine-cost norm stabilizer.
pub const COSINE_DELTA: f64 = 1e-8;

/// Reward backend selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBackend {
    Ail,
    Tm,
    Ot,
}

/// Binary classifier over `(s, s')` concatenations; sigmoid output.
#[derive(Debug, Clone)]
pub struct Discriminator {
    net: Mlp,
    state_dim: usize,
}

impl Discriminator {
    pub fn new(state_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![2 * state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        Ok(Discriminator {
            net: Mlp::xavier(&sizes, rng, 1.0)?,
            state_dim,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    fn input_vec(&self, s: &[f64], s_next: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.state_dim || s_next.len() != self.state_dim {
            return Err(Error::contract(
                "discriminator transition dimension mismatch",
            ));
        }
        let mut x = Vec::with_capacity(2 * self.state_dim);
        x.extend_from_slice(s);
        x.extend_from_slice(s_next);
        Ok(x)
    }

    pub fn logit(&self, s: &[f64], s_next: &[f64]) -> Result<f64> {
        Ok(self.net.apply(&self.input_vec(s, s_next)?)?[0])
    }

    /// Sigmoid probability that the transition came from the expert.
    pub fn prob(&self, s: &[f64], s_next: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(s, s_next)?))
    }

    /// Batched logits for a pair list.
    pub fn logits(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
        let x = self.pair_batch(pairs)?;
        let acts = self.net.forward_batch(&x)?;
        Ok(acts.output().data().to_vec())
    }

    fn pair_batch(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Mat> {
        let mut x = Mat::zeros(pairs.len(), 2 * self.state_dim);
        for (i, (s, s2)) in pairs.iter().enumerate() {
            if s.len() != self.state_dim || s2.len() != self.state_dim {
                return Err(Error::contract("pair dimension mismatch"));
            }
            let xi = x.row_mut(i);
            xi[..self.state_dim].copy_from_slice(s);
            xi[self.state_dim..].copy_from_slice(s2);
        }
        Ok(x)
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.net.flatten_into(&mut out);
        out
    }

    pub fn assign(&mut self, flat: &[f64]) {
        self.net.assign_from(flat);
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    // ln(1 + e^x), stable for large |x|
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Pooled binary cross-entropy (expert label 1, agent label 0) plus the
/// two-sided gradient penalty at uniform random interpolates. The same
/// `seed` must be passed to the value and gradient paths so they see the
/// same interpolates.
pub fn disc_loss(
    d: &Discriminator,
    expert_pairs: &[(Vec<f64>, Vec<f64>)],
    agent_pairs: &[(Vec<f64>, Vec<f64>)],
    gp_coef: f64,
    seed: u64,
) -> Result<f64> {
    disc_loss_impl(d, expert_pairs, agent_pairs, gp_coef, seed, None)
}

/// [`disc_loss`] plus the gradient over the discriminator parameters.
pub fn disc_loss_grad(
    d: &Discriminator,
    expert_pairs: &[(Vec<f64>, Vec<f64>)],
    agent_pairs: &[(Vec<f64>, Vec<f64>)],
    gp_coef: f64,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let mut grads = MlpGrads::zeros_like(&d.net);
    let loss = disc_loss_impl(
        d,
        expert_pairs,
        agent_pairs,
        gp_coef,
        seed,
        Some(&mut grads),
    )?;
    let mut flat = Vec::with_capacity(d.param_count());
    grads.flatten_into(&mut flat);
    Ok((loss, flat))
}

fn disc_loss_impl(
    d: &Discriminator,
    expert_pairs: &[(Vec<f64>, Vec<f64>)],
    agent_pairs: &[(Vec<f64>, Vec<f64>)],
    gp_coef: f64,
    seed: u64,
    mut grads: Option<&mut MlpGrads>,
) -> Result<f64> {
    if expert_pairs.is_empty() || agent_pairs.is_empty() {
        return Err(Error::contract(
            "discriminator needs non-empty expert and agent pair sets",
        ));
    }
    let n_total = expert_pairs.len() + agent_pairs.len();
    let mut loss = 0.0;

    for (pairs, label) in [(expert_pairs, 1.0), (agent_pairs, 0.0)] {
        let x = d.pair_batch(pairs)?;
        let acts = d.net.forward_batch(&x)?;
        let logits = acts.output();
        let mut d_out = Mat::zeros(pairs.len(), 1);
        for i in 0..pairs.len() {
            let l = logits.get(i, 0);
            if !l.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite discriminator logit {l}"
                )));
            }
            loss += if label > 0.5 {
                softplus(-l)
            } else {
                softplus(l)
            };
            d_out.set(i, 0, (sigmoid(l) - label) / n_total as f64);
        }
        if let Some(g) = grads.as_deref_mut() {
            d.net.backward_batch(&acts, &d_out, g);
        }
    }
    loss /= n_total as f64;

    if gp_coef != 0.0 {
        let n_gp = expert_pairs.len().min(agent_pairs.len());
        let mut rng = stream(seed, tags::DISC_BATCH);
        let mut penalty = 0.0;
        for i in 0..n_gp {
            let (es, es2) = &expert_pairs[i];
            let (as_, as2) = &agent_pairs[i];
            let t: f64 = rng.gen_range(0.0..1.0);
            let mut x = Vec::with_capacity(2 * d.state_dim);
            for (e, a) in es.iter().zip(as_) {
                x.push(t * e + (1.0 - t) * a);
            }
            for (e, a) in es2.iter().zip(as2) {
                x.push(t * e + (1.0 - t) * a);
            }
            let cache = d.net.input_gradient(&x)?;
            let norm = cache.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            penalty += (norm - 1.0) * (norm - 1.0);
            if let Some(g) = grads.as_deref_mut() {
                if norm > 1e-12 {
                    let coef = gp_coef * 2.0 * (norm - 1.0) / (norm * n_gp as f64);
                    let vbar: Vec<f64> = cache.grad.iter().map(|gi| coef * gi).collect();
                    d.net.backward_input_gradient(&cache, &vbar, g);
                }
            }
        }
        loss += gp_coef * penalty / n_gp as f64;
    }
    Ok(loss)
}

/// Adversarial proxy reward `-log(1 - clamp(D(s,s'), δ, 1-δ))`; non-negative
/// and bounded by `-log δ`.
pub fn ail_reward(d: &Discriminator, s: &[f64], s_next: &[f64]) -> Result<f64> {
    let p = d
        .prob(s, s_next)?
        .clamp(AIL_CLAMP_DELTA, 1.0 - AIL_CLAMP_DELTA);
    Ok(-(1.0 - p).ln())
}

/// Batched [`ail_reward`] over transitions.
pub fn ail_rewards(d: &Discriminator, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    let logits = d.logits(pairs)?;
    Ok(logits
        .iter()
        .map(|l| {
            let p = sigmoid(*l).clamp(AIL_CLAMP_DELTA, 1.0 - AIL_CLAMP_DELTA);
            -(1.0 - p).ln()
        })
        .collect())
}

/// Step-aligned trajectory-matching rewards `r_t = -‖s_t - s^e_t‖₂`,
/// truncated to the shorter trajectory.
pub fn tm_rewards(agent: &ObsTrajectory, expert: &ObsTrajectory) -> Result<Vec<f64>> {
    let n = agent.len().min(expert.len());
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let (a, e) = (&agent.states[t], &expert.states[t]);
        if a.len() != e.len() {
            return Err(Error::contract(
                "state dimension mismatch between trajectories",
            ));
        }
        let dist = a
            .iter()
            .zip(e)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        out.push(-dist);
    }
    Ok(out)
}

/// Pairwise alignment costs, non-negative; cosine variant bounded in [0, 2].
#[derive(Debug, Clone)]
pub struct CostMatrix {
    mat: Mat,
}

impl CostMatrix {
    pub fn from_mat(mat: Mat) -> Result<Self> {
        if mat.rows() == 0 || mat.cols() == 0 {
            return Err(Error::contract("cost matrix must be non-empty"));
        }
        if mat.data().iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::contract(
                "cost entries must be finite and non-negative",
            ));
        }
        Ok(CostMatrix { mat })
    }

    pub fn mat(&self) -> &Mat {
        &self.mat
    }
}

/// Cosine-distance cost `C[t][t'] = 1 - ⟨s_t, s^e_t'⟩ / (‖s_t‖‖s^e_t'‖ + δ)`.
pub fn cosine_cost(agent_states: &[Vec<f64>], expert_states: &[Vec<f64>]) -> Result<CostMatrix> {
    if agent_states.is_empty() || expert_states.is_empty() {
        return Err(Error::contract("cosine cost needs non-empty state sets"));
    }
    let a_norm: Vec<f64> = agent_states
        .iter()
        .map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let e_norm: Vec<f64> = expert_states
        .iter()
        .map(|s| s.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut mat = Mat::zeros(agent_states.len(), expert_states.len());
    for (i, sa) in agent_states.iter().enumerate() {
        let row = mat.row_mut(i);
        for (j, se) in expert_states.iter().enumerate() {
            if sa.len() != se.len() {
                return Err(Error::contract("state dimension mismatch in cosine cost"));
            }
            let ip: f64 = sa.iter().zip(se).map(|(x, y)| x * y).sum();
            let c = 1.0 - ip / (a_norm[i] * e_norm[j] + COSINE_DELTA);
            row[j] = c.max(0.0);
        }
    }
    CostMatrix::from_mat(mat)
}

/// Entropic optimal transport plan between uniform marginals.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub entries: Mat,
    /// Uniform row marginal target `1/T_agent`.
    pub row_target: f64,
    /// Uniform column marginal target `1/T_expert`.
    pub col_target: f64,
    /// Max marginal deviation of the raw scaling iterate, before the plan is
    /// rounded onto the transport polytope (a convergence diagnostic).
    pub scaling_violation: f64,
    /// Max marginal deviation of the returned plan.
    pub violation: f64,
}

impl TransportPlan {
    /// `⟨C, P⟩`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        self.entries
            .data()
            .iter()
            .zip(cost.mat.data())
            .map(|(p, c)| p * c)
            .sum()
    }
}

fn marginal_violation(p: &Mat, a: f64, b: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..p.rows() {
        let s: f64 = p.row(i).iter().sum();
        worst = worst.max((s - a).abs());
    }
    for j in 0..p.cols() {
        let mut s = 0.0;
        for i in 0..p.rows() {
            s += p.get(i, j);
        }
        worst = worst.max((s - b).abs());
    }
    worst
}

/// Log-domain Sinkhorn on the kernel `exp(-C/ε)` with uniform marginals,
/// followed by the rank-one rounding step that places the iterate exactly on
/// the transport polytope (raw alternating scaling leaves marginal errors
/// far above tolerance at small iteration counts).
pub fn sinkhorn(cost: &CostMatrix, epsilon: f64, iters: usize) -> Result<TransportPlan> {
    if epsilon <= 0.0 {
        return Err(Error::contract("epsilon must be positive"));
    }
    if iters == 0 {
        return Err(Error::contract("need at least one iteration"));
    }
    let (n, m) = (cost.mat.rows(), cost.mat.cols());
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();

    // scaled kernels: mk[i][j] = -C[i][j]/eps, plus its transpose for the
    // column update's cache locality
    let mut mk = Mat::zeros(n, m);
    let mut mk_t = Mat::zeros(m, n);
    for i in 0..n {
        for j in 0..m {
            let v = -cost.mat.get(i, j) / epsilon;
            mk.set(i, j, v);
            mk_t.set(j, i, v);
        }
    }

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut scratch = vec![0.0; n.max(m)];
    for _ in 0..iters {
        for i in 0..n {
            let row = mk.row(i);
            let buf = &mut scratch[..m];
            for j in 0..m {
                buf[j] = v[j] + row[j];
            }
            u[i] = log_a - log_sum_exp(buf);
        }
        for j in 0..m {
            let row = mk_t.row(j);
            let buf = &mut scratch[..n];
            for i in 0..n {
                buf[i] = u[i] + row[i];
            }
            v[j] = log_b - log_sum_exp(buf);
        }
    }

    let mut entries = Mat::zeros(n, m);
    for i in 0..n {
        let row = mk.row(i);
        let out = entries.row_mut(i);
        for j in 0..m {
            let p = (u[i] + v[j] + row[j]).exp();
            if !p.is_finite() {
                return Err(Error::numeric("non-finite transport plan entry"));
            }
            out[j] = p;
        }
    }
    let a = (-log_a).exp().recip();
    let b = (-log_b).exp().recip();
    let scaling_violation = marginal_violation(&entries, a, b);
    round_to_polytope(&mut entries, a, b);
    let violation = marginal_violation(&entries, a, b);
    Ok(TransportPlan {
        entries,
        row_target: a,
        col_target: b,
        scaling_violation,
        violation,
    })
}

/// Rounds a non-negative matrix onto the transport polytope with uniform
/// marginals `(a, b)`: scale rows down, scale columns down, then spread the
/// residual mass as a rank-one correction.
fn round_to_polytope(p: &mut Mat, a: f64, b: f64) {
    let (n, m) = (p.rows(), p.cols());
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        if s > a {
            let scale = a / s;
            p.row_mut(i).iter_mut().for_each(|x| *x *= scale);
        }
    }
    let mut col_sums = vec![0.0; m];
    for i in 0..n {
        for (j, cs) in col_sums.iter_mut().enumerate() {
            *cs += p.get(i, j);
        }
    }
    let col_scale: Vec<f64> = col_sums
        .iter()
        .map(|&s| if s > b { b / s } else { 1.0 })
        .collect();
    for i in 0..n {
        let row = p.row_mut(i);
        for j in 0..m {
            row[j] *= col_scale[j];
        }
    }
    // residuals are non-negative after the downscaling; clamp float dust
    let mut row_err = vec![0.0; n];
    let mut col_err = vec![0.0; m];
    let mut l1 = 0.0;
    for i in 0..n {
        let s: f64 = p.row(i).iter().sum();
        row_err[i] = (a - s).max(0.0);
        l1 += row_err[i];
    }
    for j in 0..m {
        let mut s = 0.0;
        for i in 0..n {
            s += p.get(i, j);
        }
        col_err[j] = (b - s).max(0.0);
    }
    if l1 > 0.0 {
        for i in 0..n {
            let re = row_err[i] / l1;
            if re != 0.0 {
                let row = p.row_mut(i);
                for j in 0..m {
                    row[j] += re * col_err[j];
                }
            }
        }
    }
}

/// Optimal-transport rewards for a completed episode:
/// `r_t = -scale · Σ_t' C[t][t'] μ*[t][t']` over the step-start states.
pub fn ot_rewards(
    agent: &ObsTrajectory,
    expert: &ObsTrajectory,
    epsilon: f64,
    iters: usize,
    scale: f64,
) -> Result<Vec<f64>> {
    let a_states = &agent.states[..agent.len()];
    let e_states = &expert.states[..expert.len()];
    let cost = cosine_cost(a_states, e_states)?;
    let plan = sinkhorn(&cost, epsilon, iters)?;
    let mut out = Vec::with_capacity(a_states.len());
    for t in 0..a_states.len() {
        let c = cost.mat.row(t);
        let p = plan.entries.row(t);
        let r: f64 = c.iter().zip(p).map(|(ci, pi)| ci * pi).sum();
        out.push(-scale * r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_disc(state_dim: usize) -> Discriminator {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Discriminator::new(state_dim, &[8], &mut rng).unwrap();
        let zeros = vec![0.0; d.param_count()];
        d.assign(&zeros);
        d
    }

    fn pairs(n: usize, dim: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let s2: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (s, s2)
            })
            .collect()
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen expected value
    fn uniform_discriminator_bce() {
        let d = zero_disc(2);
        let e = pairs(8, 2, 1);
        let a = pairs(8, 2, 2);
        let bce = disc_loss(&d, &e, &a, 0.0, 0).unwrap();
        assert!((bce - 0.6931472).abs() < 1e-6);
        // zero net has zero input gradient, so the GP term is exactly 1
        let with_gp = disc_loss(&d, &e, &a, 10.0, 0).unwrap();
        assert!((with_gp - bce - 10.0).abs() < 1e-9);
    }

    #[test]
    fn separating_discriminator_drives_bce_to_zero() {
        let mut d = zero_disc(1);
        // logit = 30·(s + s') separates our synthetic sets
        let mut flat = vec![0.0; d.param_count()];
        d.assign(&flat);
        // last layer weights: we instead saturate via a hand-built net
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = Discriminator::new(1, &[4], &mut rng).unwrap();
        flat = vec![0.0; net.param_count()];
        net.assign(&flat);
        // hidden unit 0 reads s with weight 50 (tanh saturates), output reads it with 40
        let e: Vec<_> = (0..6)
            .map(|i| (vec![1.0 + i as f64 * 0.1], vec![1.0]))
            .collect();
        let a: Vec<_> = (0..6)
            .map(|i| (vec![-1.0 - i as f64 * 0.1], vec![-1.0]))
            .collect();
        net.net.weight_mut(0).set(0, 0, 50.0);
        net.net.weight_mut(1).set(0, 0, 40.0);
        let bce = disc_loss(&net, &e, &a, 0.0, 0).unwrap();
        assert!(bce < 1e-9, "bce {bce}");
    }

    #[test]
    #[allow(clippy::approx_constant)] // frozen expected value
    fn ail_reward_values() {
        let d = zero_disc(2);
        let r = ail_reward(&d, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((r - 0.6931472).abs() < 1e-6);

        // clamp bounds: probabilities 0 and 1 map to ~0 and -ln(1e-6)
        let r_low = -(1.0f64 - AIL_CLAMP_DELTA).ln();
        assert!(r_low < 1.1e-6);
        let r_high = -(AIL_CLAMP_DELTA).ln();
        assert!((r_high - 13.8155106).abs() < 1e-6);
    }

    #[test]
    fn ail_reward_is_monotone_in_d() {
        // -ln(1-p) is increasing on (δ, 1-δ)
        let mut prev = f64::NEG_INFINITY;
        for k in 1..100 {
            let p = k as f64 / 100.0;
            let r = -(1.0 - p.clamp(AIL_CLAMP_DELTA, 1.0 - AIL_CLAMP_DELTA)).ln();
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn tm_reward_cases() {
        let t1 = ObsTrajectory {
            states: vec![vec![1.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.0]],
        };
        let same = tm_rewards(&t1, &t1).unwrap();
        assert_eq!(same, vec![0.0, 0.0]);

        let t2 = ObsTrajectory {
            states: vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![0.0, 0.0]],
        };
        let r = tm_rewards(&t1, &t2).unwrap();
        assert_eq!(r[0], -1.0);
        assert_eq!(r[1], 0.0);

        let longer = ObsTrajectory {
            states: vec![vec![0.0, 0.0]; 10],
        };
        assert_eq!(tm_rewards(&t1, &longer).unwrap().len(), t1.len());
        assert!(tm_rewards(&t1, &longer).unwrap().iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn cosine_cost_reference_points() {
        let a = vec![vec![1.0, 0.0]];
        let same = cosine_cost(&a, &a).unwrap();
        assert!(same.mat().get(0, 0) < 1e-7);

        let orth = cosine_cost(&a, &[vec![0.0, 1.0]]).unwrap();
        assert!((orth.mat().get(0, 0) - 1.0).abs() < 1e-7);

        let anti = cosine_cost(&a, &[vec![-1.0, 0.0]]).unwrap();
        assert!((anti.mat().get(0, 0) - 2.0).abs() < 1e-7);
    }

    #[test]
    fn sinkhorn_zero_cost_gives_uniform_plan() {
        let c = CostMatrix::from_mat(Mat::zeros(4, 4)).unwrap();
        let plan = sinkhorn(&c, 0.01, 100).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((plan.entries.get(i, j) - 1.0 / 16.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sinkhorn_two_by_two_permutation() {
        let c = CostMatrix::from_mat(Mat::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]])).unwrap();
        let plan = sinkhorn(&c, 0.01, 100).unwrap();
        assert!((plan.entries.get(0, 0) - 0.5).abs() < 1e-6);
        assert!((plan.entries.get(1, 1) - 0.5).abs() < 1e-6);
        assert!(plan.entries.get(0, 1).abs() < 1e-6);
        assert!(plan.transport_cost(&c) <= 1e-6);
        assert!(plan.violation <= 1e-9);
    }

    /// Exact minimum over all permutation plans (cost / n per matched pair).
    fn permutation_minimum(c: &Mat) -> f64 {
        let n = c.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = f64::INFINITY;
        fn recurse(c: &Mat, perm: &mut Vec<usize>, k: usize, best: &mut f64) {
            let n = perm.len();
            if k == n {
                let cost: f64 = (0..n).map(|i| c.get(i, perm[i])).sum::<f64>() / n as f64;
                if cost < *best {
                    *best = cost;
                }
                return;
            }
            for i in k..n {
                perm.swap(k, i);
                recurse(c, perm, k + 1, best);
                perm.swap(k, i);
            }
        }
        recurse(c, &mut perm, 0, &mut best);
        best
    }

    #[test]
    fn sinkhorn_approaches_permutation_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut m = Mat::zeros(5, 5);
            m.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(0.0..1.0));
            let c = CostMatrix::from_mat(m).unwrap();
            let plan = sinkhorn(&c, 1e-3, 2000).unwrap();
            let cost = plan.transport_cost(&c);
            let best = permutation_minimum(c.mat());
            assert!(
                cost <= best * 1.01 + 1e-12,
                "cost {cost} vs permutation optimum {best}"
            );
        }
    }

    #[test]
    fn transport_cost_monotone_over_decreasing_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut m = Mat::zeros(8, 8);
        m.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.gen_range(0.0..1.0));
        let c = CostMatrix::from_mat(m).unwrap();
        let costs: Vec<f64> = [1.0, 0.1, 0.01, 0.001]
            .iter()
            .map(|&eps| sinkhorn(&c, eps, 3000).unwrap().transport_cost(&c))
            .collect();
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "costs {costs:?}");
        }
    }

    #[test]
    fn plan_marginals_meet_tolerance_up_to_size_50() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &(n, m) in &[(5usize, 5usize), (20, 30), (50, 50)] {
            let mut mat = Mat::zeros(n, m);
            mat.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(0.0..1.0));
            let c = CostMatrix::from_mat(mat).unwrap();
            let plan = sinkhorn(&c, OT_EPSILON, OT_ITERS).unwrap();
            assert!(plan.violation <= 1e-6, "violation {}", plan.violation);
            assert!(plan.entries.data().iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn ot_rewards_identity_and_linearity() {
        // mutually separated state directions: the plan concentrates on the
        // zero-cost diagonal and self-transport is free
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let states: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let v: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        let traj = ObsTrajectory { states };
        let r = ot_rewards(&traj, &traj, OT_EPSILON, OT_ITERS, OT_SCALE).unwrap();
        assert!(
            r.iter().all(|&x| x.abs() <= 1e-6),
            "max |r| = {}",
            r.iter().fold(0.0f64, |m, x| m.max(x.abs()))
        );

        // linear in the scale factor
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let other = ObsTrajectory {
            states: (0..30)
                .map(|_| (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect(),
        };
        let r1 = ot_rewards(&other, &traj, OT_EPSILON, OT_ITERS, OT_SCALE).unwrap();
        let r2 = ot_rewards(&other, &traj, OT_EPSILON, OT_ITERS, 2.0 * OT_SCALE).unwrap();
        for (a, b) in r1.iter().zip(&r2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!(r1.iter().all(|&x| x <= 0.0));
    }
}
