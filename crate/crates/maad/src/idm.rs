//! Mixture-density inverse dynamics model `p(a | s, s')`, its replay-buffer
//! training loop, and the forward-KL term against a policy conditional.
//!
//! The model emits `K` diagonal-Gaussian components: mixture weights and
//! component means are functions of the transition `(s, s')`, while the
//! component log standard deviations are free parameters independent of the
//! input.

use rand::Rng;

use crate::data::{ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::numkit::{
    clamp_log_std, clip_global_norm, AdamState, DiagGaussian, Mat, Mlp, MlpGrads, LOG_STD_MAX,
    LOG_STD_MIN,
};
use crate::rng::{stream, tags};

#[derive(Debug, Clone)]
pub struct MdnIdm {
    state_dim: usize,
    action_dim: usize,
    n_components: usize,
    weight_net: Mlp,
    mean_net: Mlp,
    log_std: Vec<f64>,
}

/// Mixture parameters evaluated at one transition.
#[derive(Debug, Clone)]
pub struct Mixture {
    pub alphas: Vec<f64>,
    pub components: Vec<DiagGaussian>,
}

impl Mixture {
    /// Mixture mean Σ α_k μ_k.
    pub fn mean(&self) -> Vec<f64> {
        let dim = self.components[0].mean.len();
        let mut out = vec![0.0; dim];
        for (a, c) in self.alphas.iter().zip(&self.components) {
            for d in 0..dim {
                out[d] += a * c.mean[d];
            }
        }
        out
    }

    pub fn log_prob(&self, a: &[f64]) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.alphas.len());
        for (alpha, c) in self.alphas.iter().zip(&self.components) {
            terms.push(alpha.max(f64::MIN_POSITIVE).ln() + c.log_prob(a)?);
        }
        Ok(log_sum_exp(&terms))
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (k, alpha) in self.alphas.iter().enumerate() {
            acc += alpha;
            if u <= acc {
                chosen = k;
                break;
            }
        }
        self.components[chosen].sample(rng)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let mx = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + xs.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

impl MdnIdm {
    /// `hidden` is the trunk architecture shared by both heads (Table-style
    /// default `[128]`); log standard deviations start at 0.
    pub fn new(
        state_dim: usize,
        action_dim: usize,
        n_components: usize,
        hidden: &[usize],
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if n_components == 0 {
            return Err(Error::contract("mixture needs at least one component"));
        }
        let input = 2 * state_dim;
        let mut weight_sizes = vec![input];
        weight_sizes.extend_from_slice(hidden);
        weight_sizes.push(n_components);
        let mut mean_sizes = vec![input];
        mean_sizes.extend_from_slice(hidden);
        mean_sizes.push(n_components * action_dim);
        let mut mean_net = Mlp::xavier(&mean_sizes, rng, 1.0)?;
        // spread component means at init so multimodal targets split the
        // responsibilities instead of stalling at the symmetric saddle
        if n_components > 1 {
            let last = mean_net.n_layers() - 1;
            let bias = mean_net.bias_mut(last);
            for k in 0..n_components {
                let offset = -0.5 + k as f64 / (n_components - 1) as f64;
                for d in 0..action_dim {
                    bias[k * action_dim + d] = offset;
                }
            }
        }
        // narrow initial components sharpen early responsibilities, which
        // keeps spread components from starving on multimodal targets
        let init_log_std = if n_components > 1 { -1.2 } else { 0.0 };
        Ok(MdnIdm {
            state_dim,
            action_dim,
            n_components,
            weight_net: Mlp::xavier(&weight_sizes, rng, 1.0)?,
            mean_net,
            log_std: vec![init_log_std; n_components * action_dim],
        })
    }

    /// Rebuilds a model from its parts (checkpoint loading).
    pub fn from_parts(
        state_dim: usize,
        action_dim: usize,
        n_components: usize,
        weight_net: Mlp,
        mean_net: Mlp,
        log_std: Vec<f64>,
    ) -> Result<Self> {
        if weight_net.in_dim() != 2 * state_dim
            || mean_net.in_dim() != 2 * state_dim
            || weight_net.out_dim() != n_components
            || mean_net.out_dim() != n_components * action_dim
            || log_std.len() != n_components * action_dim
        {
            return Err(Error::contract(
                "inverse model part shapes are inconsistent",
            ));
        }
        Ok(MdnIdm {
            state_dim,
            action_dim,
            n_components,
            weight_net,
            mean_net,
            log_std,
        })
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn weight_net(&self) -> &Mlp {
        &self.weight_net
    }

    pub fn mean_net(&self) -> &Mlp {
        &self.mean_net
    }

    pub fn log_stds(&self) -> &[f64] {
        &self.log_std
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn input_vec(&self, s: &[f64], s_next: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.state_dim || s_next.len() != self.state_dim {
            return Err(Error::contract(format!(
                "transition dims ({}, {}) vs model state_dim {}",
                s.len(),
                s_next.len(),
                self.state_dim
            )));
        }
        let mut x = Vec::with_capacity(2 * self.state_dim);
        x.extend_from_slice(s);
        x.extend_from_slice(s_next);
        Ok(x)
    }

    /// Mixture parameters at `(s, s')`; weights softmax-normalized.
    pub fn mixture_at(&self, s: &[f64], s_next: &[f64]) -> Result<Mixture> {
        let x = self.input_vec(s, s_next)?;
        let means = self.mean_net.apply(&x)?;
        // a single-component softmax is identically 1; skip the weight net
        let alphas: Vec<f64> = if self.n_components == 1 {
            vec![1.0]
        } else {
            let logits = self.weight_net.apply(&x)?;
            let lse = log_sum_exp(&logits);
            logits.iter().map(|l| (l - lse).exp()).collect()
        };
        let mut components = Vec::with_capacity(self.n_components);
        for k in 0..self.n_components {
            let mean = means[k * self.action_dim..(k + 1) * self.action_dim].to_vec();
            let log_std = self.log_std[k * self.action_dim..(k + 1) * self.action_dim]
                .iter()
                .map(|v| clamp_log_std(*v))
                .collect();
            components.push(DiagGaussian::new(mean, log_std)?);
        }
        Ok(Mixture { alphas, components })
    }

    /// `log Σ_k α_k(s,s') N(a; μ_k(s,s'), σ_k)` via log-sum-exp.
    pub fn log_prob(&self, s: &[f64], s_next: &[f64], a: &[f64]) -> Result<f64> {
        if a.len() != self.action_dim {
            return Err(Error::contract("action dimension mismatch"));
        }
        self.mixture_at(s, s_next)?.log_prob(a)
    }

    /// Mixture-mean action prediction (used for R² diagnostics).
    pub fn predict_mean(&self, s: &[f64], s_next: &[f64]) -> Result<Vec<f64>> {
        Ok(self.mixture_at(s, s_next)?.mean())
    }

    pub fn param_count(&self) -> usize {
        self.weight_net.param_count() + self.mean_net.param_count() + self.log_std.len()
    }

    /// Flatten order: weight net, mean net, log stds.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.flatten_into(&mut out);
        out
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.weight_net.flatten_into(out);
        self.mean_net.flatten_into(out);
        out.extend_from_slice(&self.log_std);
    }

    pub fn assign(&mut self, flat: &[f64]) {
        let mut k = self.weight_net.assign_from(flat);
        k += self.mean_net.assign_from(&flat[k..]);
        let n = self.log_std.len();
        self.log_std.copy_from_slice(&flat[k..k + n]);
    }

    fn batch_inputs(&self, batch: &[Transition]) -> Result<(Mat, Mat)> {
        let b = batch.len();
        let mut x = Mat::zeros(b, 2 * self.state_dim);
        let mut a = Mat::zeros(b, self.action_dim);
        for (i, t) in batch.iter().enumerate() {
            if t.state.len() != self.state_dim
                || t.next_state.len() != self.state_dim
                || t.action.len() != self.action_dim
            {
                return Err(Error::contract("triplet shape mismatch"));
            }
            let xi = x.row_mut(i);
            xi[..self.state_dim].copy_from_slice(&t.state);
            xi[self.state_dim..].copy_from_slice(&t.next_state);
            a.row_mut(i).copy_from_slice(&t.action);
        }
        Ok((x, a))
    }

    /// Mean negative log-likelihood of a batch.
    pub fn nll(&self, batch: &[Transition]) -> Result<f64> {
        let (x, a) = self.batch_inputs(batch)?;
        self.nll_mats(&x, &a, None)
    }

    /// Mean NLL and its gradient in [`MdnIdm::flatten`] order.
    pub fn nll_grad(&self, batch: &[Transition]) -> Result<(f64, Vec<f64>)> {
        let (x, a) = self.batch_inputs(batch)?;
        let mut grads = IdmGrads::zeros_like(self);
        let loss = self.nll_mats(&x, &a, Some(&mut grads))?;
        Ok((loss, grads.flatten()))
    }

    /// Batched mean NLL over pre-assembled inputs (`x` holds `[s|s']` rows).
    pub fn nll_mats(&self, x: &Mat, a: &Mat, mut grads: Option<&mut IdmGrads>) -> Result<f64> {
        let b = x.rows();
        if b == 0 {
            return Err(Error::contract("batch must be non-empty"));
        }
        if x.cols() != 2 * self.state_dim || a.cols() != self.action_dim || a.rows() != b {
            return Err(Error::contract("batch shape mismatch"));
        }
        let kk = self.n_components;
        let ad = self.action_dim;
        let single = kk == 1;
        let wacts = if single {
            None
        } else {
            Some(self.weight_net.forward_batch(x)?)
        };
        let macts = self.mean_net.forward_batch(x)?;
        let means = macts.output();

        let ls_eff: Vec<f64> = self.log_std.iter().map(|v| clamp_log_std(*v)).collect();
        let inv_var: Vec<f64> = ls_eff.iter().map(|l| (-2.0 * l).exp()).collect();
        const LOG_2PI: f64 = 1.837877066409345483560659472811;

        let mut total = 0.0;
        let mut d_logits = if single {
            None
        } else {
            Some(Mat::zeros(b, kk))
        };
        let mut d_means = Mat::zeros(b, kk * ad);
        let mut d_log_std = vec![0.0; kk * ad];
        let zero_logits = vec![0.0; kk];

        for i in 0..b {
            let li: &[f64] = match &wacts {
                Some(acts) => acts.output().row(i),
                None => &zero_logits,
            };
            let mi = means.row(i);
            let ai = a.row(i);
            let lse = if single { 0.0 } else { log_sum_exp(li) };
            let mut z = vec![0.0; kk];
            for k in 0..kk {
                let mut comp = li[k] - lse;
                for d in 0..ad {
                    let idx = k * ad + d;
                    let diff = ai[d] - mi[idx];
                    comp += -0.5 * LOG_2PI - ls_eff[idx] - 0.5 * diff * diff * inv_var[idx];
                }
                z[k] = comp;
            }
            let logp = if single { z[0] } else { log_sum_exp(&z) };
            if !logp.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite mixture log-likelihood {logp}"
                )));
            }
            total -= logp;
            if grads.is_some() {
                let scale = 1.0 / b as f64;
                let dmi = d_means.row_mut(i);
                for k in 0..kk {
                    let resp = if single { 1.0 } else { (z[k] - logp).exp() };
                    if let Some(dl) = d_logits.as_mut() {
                        let alpha = (li[k] - lse).exp();
                        dl.set(i, k, (alpha - resp) * scale);
                    }
                    for d in 0..ad {
                        let idx = k * ad + d;
                        let diff = ai[d] - mi[idx];
                        dmi[idx] = -resp * diff * inv_var[idx] * scale;
                        // clamped log-std passes no gradient outside the range
                        if (LOG_STD_MIN..=LOG_STD_MAX).contains(&self.log_std[idx]) {
                            d_log_std[idx] += resp * (1.0 - diff * diff * inv_var[idx]) * scale;
                        }
                    }
                }
            }
        }
        let loss = total / b as f64;
        if let Some(g) = grads.as_deref_mut() {
            if let (Some(acts), Some(dl)) = (&wacts, &d_logits) {
                self.weight_net.backward_batch(acts, dl, &mut g.weight_net);
            }
            self.mean_net
                .backward_batch(&macts, &d_means, &mut g.mean_net);
            for (slot, v) in g.log_std.iter_mut().zip(d_log_std) {
                *slot += v;
            }
        }
        Ok(loss)
    }
}

/// Gradient accumulator shaped like [`MdnIdm`].
pub struct IdmGrads {
    pub weight_net: MlpGrads,
    pub mean_net: MlpGrads,
    pub log_std: Vec<f64>,
}

impl IdmGrads {
    pub fn zeros_like(m: &MdnIdm) -> Self {
        IdmGrads {
            weight_net: MlpGrads::zeros_like(&m.weight_net),
            mean_net: MlpGrads::zeros_like(&m.mean_net),
            log_std: vec![0.0; m.log_std.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.flatten_into(&mut out);
        out
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.weight_net.flatten_into(out);
        self.mean_net.flatten_into(out);
        out.extend_from_slice(&self.log_std);
    }

    pub fn clear(&mut self) {
        for w in &mut self.weight_net.weights {
            w.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.weight_net.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        for w in &mut self.mean_net.weights {
            w.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        for b in &mut self.mean_net.biases {
            b.iter_mut().for_each(|v| *v = 0.0);
        }
        self.log_std.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Stopping rule and batching for [`idm_fit`].
#[derive(Debug, Clone)]
pub struct IdmFitConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub tol: f64,
    pub holdout_frac: f64,
    /// Largest number of replay triplets considered per fit call; one epoch
    /// is one pass over the training split of this sample.
    pub sample_cap: usize,
    pub clip_norm: f64,
}

impl Default for IdmFitConfig {
    fn default() -> Self {
        IdmFitConfig {
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            tol: 1e-3,
            holdout_frac: 0.1,
            sample_cap: 10_000,
            clip_norm: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdmFitReport {
    pub epochs_run: usize,
    pub holdout_nll: f64,
    pub final_train_nll: f64,
}

/// One Adam step on the mean batch NLL; returns the pre-step loss.
pub fn idm_train_step(
    model: &mut MdnIdm,
    opt: &mut AdamState,
    batch: &[Transition],
    clip_norm: f64,
) -> Result<f64> {
    let (loss, mut grads) = model.nll_grad(batch)?;
    clip_global_norm(&mut grads, clip_norm);
    let mut params = model.flatten();
    opt.step(&mut params, &grads)?;
    model.assign(&params);
    Ok(loss)
}

/// Trains on replay minibatches from the current parameters (warm start),
/// stopping when the held-out NLL stops improving by more than `tol` for
/// `patience` consecutive epochs, or at `max_epochs`.
pub fn idm_fit(
    model: &mut MdnIdm,
    opt: &mut AdamState,
    buffer: &ReplayBuffer,
    cfg: &IdmFitConfig,
    seed: u64,
) -> Result<IdmFitReport> {
    if buffer.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut rng = stream(seed, tags::IDM_FIT);
    let n = buffer.len().min(cfg.sample_cap);
    // seeded sample without replacement
    let mut idx: Vec<usize> = (0..buffer.len()).collect();
    for i in 0..n {
        let j = rng.gen_range(i..buffer.len());
        idx.swap(i, j);
    }
    idx.truncate(n);

    // assemble the fit sample once
    let sd2 = 2 * model.state_dim;
    let ad = model.action_dim;
    let mut x_all = Mat::zeros(n, sd2);
    let mut a_all = Mat::zeros(n, ad);
    for (row, &i) in idx.iter().enumerate() {
        let t = buffer.get(i);
        if t.state.len() * 2 != sd2 || t.action.len() != ad {
            return Err(Error::contract(
                "replay triplet shape does not match the model",
            ));
        }
        let xr = x_all.row_mut(row);
        xr[..t.state.len()].copy_from_slice(&t.state);
        xr[t.state.len()..].copy_from_slice(&t.next_state);
        a_all.row_mut(row).copy_from_slice(&t.action);
    }

    let n_holdout =
        ((n as f64 * cfg.holdout_frac).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let gather = |rows: &[usize]| -> (Mat, Mat) {
        let mut x = Mat::zeros(rows.len(), sd2);
        let mut a = Mat::zeros(rows.len(), ad);
        for (k, &r) in rows.iter().enumerate() {
            x.row_mut(k).copy_from_slice(x_all.row(r));
            a.row_mut(k).copy_from_slice(a_all.row(r));
        }
        (x, a)
    };
    let holdout_rows: Vec<usize> = (0..n_holdout).collect();
    let (hx, ha) = gather(&holdout_rows);
    let mut train_rows: Vec<usize> = (n_holdout..n).collect();
    if train_rows.is_empty() {
        train_rows = (0..n).collect();
    }

    struct FitWorkspace {
        grads: IdmGrads,
        flat: Vec<f64>,
        params: Vec<f64>,
    }
    let mut ws = FitWorkspace {
        grads: IdmGrads::zeros_like(model),
        flat: Vec::with_capacity(model.param_count()),
        params: Vec::with_capacity(model.param_count()),
    };
    let mut best = model.nll_mats(&hx, &ha, None)?;
    let mut streak = 0usize;
    let mut epochs_run = 0;
    let mut last_train = f64::NAN;
    for _epoch in 0..cfg.max_epochs {
        epochs_run += 1;
        // shuffle training order
        for i in (1..train_rows.len()).rev() {
            let j = rng.gen_range(0..=i);
            train_rows.swap(i, j);
        }
        let mut sum = 0.0;
        let mut batches = 0;
        for chunk in train_rows.chunks(cfg.batch_size) {
            let (bx, ba) = gather(chunk);
            ws.grads.clear();
            let loss = model.nll_mats(&bx, &ba, Some(&mut ws.grads))?;
            ws.flat.clear();
            ws.grads.flatten_into(&mut ws.flat);
            clip_global_norm(&mut ws.flat, cfg.clip_norm);
            ws.params.clear();
            model.flatten_into(&mut ws.params);
            opt.step(&mut ws.params, &ws.flat)?;
            model.assign(&ws.params);
            sum += loss;
            batches += 1;
        }
        last_train = sum / batches.max(1) as f64;
        let nll = model.nll_mats(&hx, &ha, None)?;
        if best - nll > cfg.tol {
            best = nll;
            streak = 0;
        } else {
            best = best.min(nll);
            streak += 1;
            if streak >= cfg.patience {
                break;
            }
        }
    }
    Ok(IdmFitReport {
        epochs_run,
        holdout_nll: best,
        final_train_nll: last_train,
    })
}

/// Forward KL from the model's posterior at `(s, s')` to a policy conditional
/// `π(·|s)`. Closed form for a single component; Monte-Carlo with
/// `mc_samples` draws otherwise. The estimate is deterministic given `seed`.
pub fn idm_policy_kl(
    model: &MdnIdm,
    policy_at_s: &DiagGaussian,
    s: &[f64],
    s_next: &[f64],
    mc_samples: usize,
    seed: u64,
) -> Result<f64> {
    if policy_at_s.dim() != model.action_dim {
        return Err(Error::contract("policy and model action dimensions differ"));
    }
    let mix = model.mixture_at(s, s_next)?;
    if model.n_components == 1 {
        return mix.components[0].kl(policy_at_s);
    }
    let mut rng = stream(seed, tags::REG_MC);
    let mut total = 0.0;
    for _ in 0..mc_samples {
        let a = mix.sample(&mut rng);
        total += mix.log_prob(&a)? - policy_at_s.log_prob(&a)?;
    }
    Ok(total / mc_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn transition(s: Vec<f64>, a: Vec<f64>, s2: Vec<f64>) -> Transition {
        Transition {
            state: s,
            action: a,
            next_state: s2,
        }
    }

    /// Builds a 1-D-state, 1-D-action model whose mixture parameters are
    /// constants: logits via output bias, means via output bias.
    fn constant_model(k: usize, logits: &[f64], means: &[f64], log_stds: &[f64]) -> MdnIdm {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MdnIdm::new(1, 1, k, &[4], &mut rng).unwrap();
        // zero the nets then set output biases
        let wflat = vec![0.0; m.weight_net.param_count()];
        m.weight_net.assign_from(&wflat);
        let mflat = vec![0.0; m.mean_net.param_count()];
        m.mean_net.assign_from(&mflat);
        let last_w = m.weight_net.n_layers() - 1;
        m.weight_net.bias_mut(last_w).copy_from_slice(logits);
        let last_m = m.mean_net.n_layers() - 1;
        m.mean_net.bias_mut(last_m).copy_from_slice(means);
        m.log_std.copy_from_slice(log_stds);
        m
    }

    #[test]
    fn k1_reduces_to_diag_gaussian() {
        let m = constant_model(1, &[0.0], &[0.4], &[-0.3]);
        let g = DiagGaussian::new(vec![0.4], vec![-0.3]).unwrap();
        for a in [-1.0, 0.0, 0.7] {
            let lp = m.log_prob(&[0.1], &[0.2], &[a]).unwrap();
            assert!((lp - g.log_prob(&[a]).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_two_component_value() {
        // log(0.5·N(1; 1, 1) + 0.5·N(1; -1, 1)); direct formula evaluation
        let m = constant_model(2, &[0.0, 0.0], &[1.0, -1.0], &[0.0, 0.0]);
        let got = m.log_prob(&[0.0], &[0.0], &[1.0]).unwrap();
        let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let expected = (0.5 * phi(0.0) + 0.5 * phi(2.0)).ln();
        assert!((got - expected).abs() < 1e-12);
        assert!((got + 1.4851577).abs() < 1e-3, "got {got}");
    }

    #[test]
    fn far_tail_is_finite() {
        let m = constant_model(2, &[0.0, 0.0], &[1.0, -1.0], &[0.0, 0.0]);
        let lp = m.log_prob(&[0.0], &[0.0], &[1e4]).unwrap();
        assert!(lp.is_finite());
        assert!(lp < -1e6);
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MdnIdm::new(2, 1, 4, &[16], &mut rng).unwrap();
        for i in 0..1000 {
            let mut r = ChaCha8Rng::seed_from_u64(i);
            let s: Vec<f64> = (0..2).map(|_| r.gen_range(-2.0..2.0)).collect();
            let s2: Vec<f64> = (0..2).map(|_| r.gen_range(-2.0..2.0)).collect();
            let mix = m.mixture_at(&s, &s2).unwrap();
            let total: f64 = mix.alphas.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12, "sum {total}");
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = MdnIdm::new(2, 1, 1, &[8], &mut rng).unwrap();
        assert!(matches!(
            m.log_prob(&[0.0], &[0.0, 0.0], &[0.0]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            m.log_prob(&[0.0, 0.0], &[0.0, 0.0], &[0.0, 1.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn training_reduces_loss_on_fixed_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = MdnIdm::new(1, 1, 1, &[16], &mut rng).unwrap();
        let batch: Vec<Transition> = (0..64)
            .map(|i| {
                let s = (i as f64 / 64.0) * 2.0 - 1.0;
                transition(vec![s], vec![0.5 * s], vec![s + 0.1])
            })
            .collect();
        let mut opt = AdamState::new(m.param_count(), 1e-2);
        let mut losses = Vec::new();
        for _ in 0..300 {
            losses.push(idm_train_step(&mut m, &mut opt, &batch, 0.5).unwrap());
        }
        // non-increasing over 100-step windows
        let w0: f64 = losses[..100].iter().sum::<f64>() / 100.0;
        let w2: f64 = losses[200..300].iter().sum::<f64>() / 100.0;
        assert!(w2 <= w0, "windows {w0} -> {w2}");
    }

    #[test]
    fn empty_buffer_fit_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = MdnIdm::new(1, 1, 1, &[8], &mut rng).unwrap();
        let mut opt = AdamState::new(m.param_count(), 1e-4);
        let buf = ReplayBuffer::new(10, 1, 1);
        assert!(matches!(
            idm_fit(&mut m, &mut opt, &buf, &IdmFitConfig::default(), 0),
            Err(Error::EmptyBuffer)
        ));
    }

    #[test]
    fn warm_start_terminates_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut m = MdnIdm::new(1, 1, 1, &[16], &mut rng).unwrap();
        let mut opt = AdamState::new(m.param_count(), 1e-4);
        let mut buf = ReplayBuffer::new(4096, 1, 1);
        let mut data_rng = ChaCha8Rng::seed_from_u64(8);
        // action carries irreducible noise so the NLL has a finite optimum
        buf.push((0..2000).map(|_| {
            let s: f64 = data_rng.gen_range(-1.0..1.0);
            let a: f64 = 0.3 + data_rng.gen_range(-0.5..0.5);
            transition(vec![s], vec![a], vec![s])
        }))
        .unwrap();
        let cfg = IdmFitConfig {
            max_epochs: 600,
            ..IdmFitConfig::default()
        };
        idm_fit(&mut m, &mut opt, &buf, &cfg, 1).unwrap();
        let report = idm_fit(&mut m, &mut opt, &buf, &cfg, 1).unwrap();
        assert!(
            report.epochs_run <= cfg.patience + 1,
            "warm-started fit ran {} epochs",
            report.epochs_run
        );
    }

    #[test]
    fn k1_policy_kl_matches_closed_form() {
        let m = constant_model(1, &[0.0], &[0.3], &[-0.2]);
        let policy = DiagGaussian::new(vec![-0.1], vec![0.1]).unwrap();
        let kl = idm_policy_kl(&m, &policy, &[0.0], &[0.0], 0, 0).unwrap();
        let comp = DiagGaussian::new(vec![0.3], vec![-0.2]).unwrap();
        assert!((kl - comp.kl(&policy).unwrap()).abs() < 1e-12);

        let same = idm_policy_kl(&m, &comp, &[0.0], &[0.0], 0, 0).unwrap();
        assert!(same.abs() < 1e-12);
    }

    #[test]
    fn k2_policy_kl_matches_quadrature() {
        let m = constant_model(2, &[0.2, -0.2], &[1.2, -0.8], &[-0.1, 0.3]);
        let policy = DiagGaussian::new(vec![0.1], vec![0.2]).unwrap();
        let mix = m.mixture_at(&[0.0], &[0.0]).unwrap();

        // quadrature over ±10σ around all component means
        let lo = -0.8 - 10.0 * (0.3f64).exp();
        let hi = 1.2 + 10.0 * (0.3f64).exp();
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut quad = 0.0;
        for i in 0..=n {
            let a = lo + i as f64 * h;
            let lp = mix.log_prob(&[a]).unwrap();
            let p = lp.exp();
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            quad += w * p * (lp - policy.log_prob(&[a]).unwrap());
        }
        quad *= h;

        // Monte-Carlo with the same estimator as idm_policy_kl, tracking SE
        let mut rng = stream(42, tags::REG_MC);
        let mc_n = 100_000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..mc_n {
            let a = mix.sample(&mut rng);
            let v = mix.log_prob(&a).unwrap() - policy.log_prob(&a).unwrap();
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / mc_n as f64;
        let var = (sum_sq / mc_n as f64 - mean * mean).max(0.0);
        let se = (var / mc_n as f64).sqrt();
        assert!(
            (mean - quad).abs() <= 3.0 * se,
            "mc {mean} vs quad {quad} (se {se})"
        );

        let api = idm_policy_kl(&m, &policy, &[0.0], &[0.0], mc_n, 42).unwrap();
        assert!((api - mean).abs() < 1e-12);
    }
}
