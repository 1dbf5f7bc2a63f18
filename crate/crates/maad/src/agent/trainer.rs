//! The full training loop: rollout workers, replay, inverse-model fitting,
//! the regularized PPO update, and the optional discriminator step — executed
//! in that order every iteration.

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;

use super::config::{Metrics, TrainConfig};
use super::eval::evaluate;
use super::gae::{gae, normalize_advantages};
use super::losses::{bc_loss_grad, ppo_policy_loss_grad, reg_loss_grad, value_loss_grad};
use super::policy::{ActorCritic, GaussianPolicy, PolicyGrads};
use crate::data::{
    strip_actions, subsample_pairs, DatasetMeta, DemoTrajectory, ObsTrajectory, ReplayBuffer,
    Transition,
};
use crate::envs::{env_reset, env_step, EnvSpec, EnvState};
use crate::error::{Error, Result};
use crate::idm::{idm_fit, IdmFitConfig, MdnIdm};
use crate::numkit::{clip_global_norm, AdamState, Mat, MlpGrads};
use crate::par;
use crate::rewards::{
    ail_rewards, disc_loss_grad, ot_rewards, tm_rewards, Discriminator, RewardBackend,
};
use crate::rng::{stream, subseed, substream, tags};

/// Expert dataset prepared for training: full transition pairs for the
/// regularizer, the AIL subsample for the discriminator, and pooled
/// state-action matrices when the algorithm uses true actions.
pub struct ExpertData {
    pub demos: Vec<DemoTrajectory>,
    pub obs: Vec<ObsTrajectory>,
    pub pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub disc_pairs: Vec<(Vec<f64>, Vec<f64>)>,
    pub sa_states: Option<Mat>,
    pub sa_actions: Option<Mat>,
}

impl ExpertData {
    pub fn prepare(
        demos: Vec<DemoTrajectory>,
        env: &EnvSpec,
        subsample_rate: usize,
        seed: u64,
        need_actions: bool,
    ) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::contract("expert dataset is empty"));
        }
        for (i, d) in demos.iter().enumerate() {
            d.validate()?;
            if d.states[0].len() != env.state_dim {
                return Err(Error::contract(format!(
                    "trajectory {i} state dimension {} vs env {}",
                    d.states[0].len(),
                    env.state_dim
                )));
            }
        }
        let obs: Vec<ObsTrajectory> = demos.iter().map(strip_actions).collect();
        let mut pairs = Vec::new();
        for o in &obs {
            for t in 0..o.len() {
                pairs.push((o.states[t].clone(), o.states[t + 1].clone()));
            }
        }
        let mut disc_pairs = Vec::new();
        for (i, o) in obs.iter().enumerate() {
            disc_pairs.extend(subsample_pairs(
                &o.states,
                subsample_rate,
                subseed(seed, tags::SUBSAMPLE, &[i as u64]),
            )?);
        }
        let (sa_states, sa_actions) = if need_actions {
            let mut st = Vec::new();
            let mut ac = Vec::new();
            for d in &demos {
                for (t, a) in d.actions.iter().enumerate() {
                    if a.len() != env.action_dim {
                        return Err(Error::contract("expert action dimension mismatch"));
                    }
                    st.push(d.states[t].clone());
                    ac.push(a.clone());
                }
            }
            (Some(Mat::from_rows(&st)), Some(Mat::from_rows(&ac)))
        } else {
            (None, None)
        };
        Ok(ExpertData {
            demos,
            obs,
            pairs,
            disc_pairs,
            sa_states,
            sa_actions,
        })
    }
}

struct Worker {
    rng: ChaCha8Rng,
    env_state: EnvState,
    needs_reset: bool,
    episodes_started: u64,
}

struct Rollout {
    states: Mat,
    actions: Mat,
    logp_old: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    next_states: Vec<Vec<f64>>,
    final_state: Vec<f64>,
    /// `(start index, global episode number)` of episodes starting here.
    episode_starts: Vec<(usize, u64)>,
}

/// Per-run trainer driving the iteration loop.
pub struct Trainer {
    cfg: TrainConfig,
    env: EnvSpec,
    seed: u64,
    meta: DatasetMeta,
    expert: ExpertData,
    ac: ActorCritic,
    ac_opt: AdamState,
    idm: Option<MdnIdm>,
    idm_opt: Option<AdamState>,
    disc: Option<Discriminator>,
    disc_opt: Option<AdamState>,
    replay: ReplayBuffer,
    workers: Vec<Worker>,
    iteration: usize,
    env_steps: u64,
}

impl Trainer {
    pub fn new(
        mut cfg: TrainConfig,
        env: EnvSpec,
        seed: u64,
        demos: Vec<DemoTrajectory>,
        meta: DatasetMeta,
    ) -> Result<Self> {
        cfg.resolve(&env)?;
        if cfg.algorithm.needs_actions() && demos.iter().any(|d| d.actions.is_empty()) {
            return Err(Error::contract(format!(
                "algorithm {} needs expert actions in the dataset",
                cfg.algorithm.name()
            )));
        }
        let expert = ExpertData::prepare(
            demos,
            &env,
            cfg.subsample_rate,
            seed,
            cfg.algorithm.needs_actions(),
        )?;
        let mut init_rng = stream(seed, tags::INIT);
        let ac = ActorCritic::new(
            env.state_dim,
            env.action_dim,
            &cfg.policy_hidden,
            &mut init_rng,
        )?;
        let ac_opt = AdamState::new(ac.param_count(), cfg.lr);

        let train_idm = cfg.lambda_reg > 0.0
            && !cfg.algorithm.uses_action_regularizer()
            && !cfg.algorithm.is_offline();
        let (idm, idm_opt) = if train_idm {
            let idm = MdnIdm::new(
                env.state_dim,
                env.action_dim,
                cfg.idm_components,
                &cfg.idm_hidden,
                &mut init_rng,
            )?;
            let opt = AdamState::new(idm.param_count(), cfg.idm_lr);
            (Some(idm), Some(opt))
        } else {
            (None, None)
        };
        let (disc, disc_opt) = if matches!(cfg.algorithm.backend(), Some(RewardBackend::Ail)) {
            let d = Discriminator::new(env.state_dim, &cfg.disc_hidden, &mut init_rng)?;
            let opt = AdamState::new(d.param_count(), cfg.disc_lr);
            (Some(d), Some(opt))
        } else {
            (None, None)
        };
        let replay = ReplayBuffer::new(cfg.replay_capacity, env.state_dim, env.action_dim);
        let workers = (0..cfg.workers)
            .map(|w| Worker {
                rng: stream(seed, tags::WORKER_BASE + w as u64),
                env_state: EnvState {
                    positions: vec![0.0; env.action_dim],
                    velocities: vec![0.0; env.action_dim],
                    step_index: 0,
                },
                needs_reset: true,
                episodes_started: 0,
            })
            .collect();
        Ok(Trainer {
            cfg,
            env,
            seed,
            meta,
            expert,
            ac,
            ac_opt,
            idm,
            idm_opt,
            disc,
            disc_opt,
            replay,
            workers,
            iteration: 0,
            env_steps: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.ac.policy
    }

    pub fn actor_critic(&self) -> &ActorCritic {
        &self.ac
    }

    pub fn idm(&self) -> Option<&MdnIdm> {
        self.idm.as_ref()
    }

    pub fn discriminator(&self) -> Option<&Discriminator> {
        self.disc.as_ref()
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn is_done(&self) -> bool {
        if self.cfg.algorithm.is_offline() {
            self.iteration >= self.cfg.bc_epochs
        } else {
            self.env_steps >= self.cfg.max_env_steps
        }
    }

    /// Runs to completion, collecting one metrics row per iteration.
    pub fn run(&mut self) -> Result<Vec<Metrics>> {
        let mut rows = Vec::new();
        while !self.is_done() {
            rows.push(self.train_iteration()?);
        }
        Ok(rows)
    }

    /// One outer iteration (or one supervised epoch for the offline path).
    pub fn train_iteration(&mut self) -> Result<Metrics> {
        if self.cfg.algorithm.is_offline() {
            return self.bc_epoch();
        }
        let t_len = self.cfg.rollout_length;

        // 1. collect rollouts, one worker per environment instance
        let workers = std::mem::take(&mut self.workers);
        let policy = &self.ac.policy;
        let env = &self.env;
        let collected: Vec<Result<(Worker, Rollout, Vec<Transition>)>> =
            par::map_vec(workers, |mut w| {
                let (rollout, triplets) = collect_rollout(&mut w, env, policy, t_len)?;
                Ok((w, rollout, triplets))
            });
        let mut rollouts = Vec::with_capacity(self.cfg.workers);
        let mut all_triplets = Vec::new();
        let mut workers = Vec::with_capacity(self.cfg.workers);
        for item in collected {
            let (w, r, t) = item?;
            workers.push(w);
            rollouts.push(r);
            all_triplets.push(t);
        }
        self.workers = workers;

        // 2. replay push in worker order
        for triplets in all_triplets {
            self.replay.push(triplets)?;
        }

        // 3. inverse model fitting (warm start)
        let mut idm_nll = f64::NAN;
        if let (Some(idm), Some(opt)) = (self.idm.as_mut(), self.idm_opt.as_mut()) {
            let fit_cfg = IdmFitConfig {
                batch_size: self.cfg.batch_size,
                max_epochs: self.cfg.idm_max_epochs,
                patience: self.cfg.idm_patience,
                tol: self.cfg.idm_tol,
                holdout_frac: self.cfg.idm_holdout_frac,
                sample_cap: self.cfg.idm_sample_cap,
                clip_norm: self.cfg.clip_norm,
            };
            let report = idm_fit(
                idm,
                opt,
                &self.replay,
                &fit_cfg,
                subseed(self.seed, tags::IDM_FIT, &[self.iteration as u64]),
            )?;
            idm_nll = report.holdout_nll;
        }

        // 4. surrogate rewards
        let backend = self
            .cfg
            .algorithm
            .backend()
            .expect("online algorithms have a backend");
        self.fill_rewards(&mut rollouts, backend)?;
        let mean_reward = {
            let total: f64 = rollouts.iter().map(|r| r.rewards.iter().sum::<f64>()).sum();
            total / (self.cfg.workers * t_len) as f64
        };

        // 5. advantages and returns
        let mut advantages = Vec::with_capacity(rollouts.len());
        let mut returns = Vec::with_capacity(rollouts.len());
        for r in &rollouts {
            let values = self.ac.values(&r.states)?;
            let last_value = self.ac.value.apply(&r.final_state)?[0];
            let (adv, ret) = gae(
                &r.rewards,
                &values,
                &r.dones,
                last_value,
                self.cfg.gamma,
                self.cfg.gae_lambda,
            )?;
            advantages.push(adv);
            returns.push(ret);
        }
        // normalize over the whole update batch (all workers pooled)
        {
            let mut pooled: Vec<f64> = advantages.iter().flatten().copied().collect();
            normalize_advantages(&mut pooled);
            let mut k = 0;
            for adv in advantages.iter_mut() {
                for a in adv.iter_mut() {
                    *a = pooled[k];
                    k += 1;
                }
            }
        }

        // 6. PPO epochs on the regularized objective
        let reg_kl = self.ppo_update(&rollouts, &advantages, &returns)?;

        // 7. discriminator update (adversarial backend only)
        let mut backend_diag = mean_reward;
        if matches!(backend, RewardBackend::Ail) {
            backend_diag = self.disc_update(&rollouts)?;
        }

        self.env_steps += (self.cfg.workers * t_len) as u64;
        self.iteration += 1;

        // 8. deterministic evaluation for the metrics row
        let report = evaluate(
            &self.ac.policy,
            &self.env,
            self.cfg.eval_episodes,
            self.meta.eval_seed,
        )?;
        Ok(Metrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return: report.mean_return,
            std_return: report.std_return,
            normalized_return: self.meta.normalized_return(report.mean_return),
            idm_nll,
            reg_kl,
            backend_diag,
        })
    }

    fn fill_rewards(&self, rollouts: &mut [Rollout], backend: RewardBackend) -> Result<()> {
        match backend {
            RewardBackend::Ail => {
                let disc = self.disc.as_ref().expect("ail backend has a discriminator");
                for r in rollouts.iter_mut() {
                    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..r.states.rows())
                        .map(|t| (r.states.row(t).to_vec(), r.next_states[t].clone()))
                        .collect();
                    r.rewards = ail_rewards(disc, &pairs)?;
                }
                Ok(())
            }
            RewardBackend::Tm | RewardBackend::Ot => {
                let horizon = self.env.horizon;
                let n_expert = self.expert.obs.len() as u64;
                // episodes across all workers, rewarded in parallel
                let mut episodes = Vec::new();
                for (w, r) in rollouts.iter().enumerate() {
                    for &(start, ep) in &r.episode_starts {
                        episodes.push((w, start, ep));
                    }
                }
                let cfg = &self.cfg;
                let expert_obs = &self.expert.obs;
                let chunks: Vec<Result<Vec<f64>>> = par::map_slice(&episodes, |&(w, start, ep)| {
                    let r = &rollouts[w];
                    let mut states = Vec::with_capacity(horizon + 1);
                    for t in start..start + horizon {
                        states.push(r.states.row(t).to_vec());
                    }
                    states.push(r.next_states[start + horizon - 1].clone());
                    let agent_traj = ObsTrajectory { states };
                    let expert_traj = &expert_obs[(ep % n_expert) as usize];
                    match backend {
                        RewardBackend::Tm => tm_rewards(&agent_traj, expert_traj),
                        RewardBackend::Ot => ot_rewards(
                            &agent_traj,
                            expert_traj,
                            cfg.ot_epsilon,
                            cfg.ot_iters,
                            cfg.ot_scale,
                        ),
                        RewardBackend::Ail => unreachable!(),
                    }
                });
                let chunks: Vec<Vec<f64>> = chunks.into_iter().collect::<Result<_>>()?;
                for ((w, start, _), rewards) in episodes.into_iter().zip(chunks) {
                    let slot = &mut rollouts[w].rewards[start..start + rewards.len()];
                    slot.copy_from_slice(&rewards);
                }
                Ok(())
            }
        }
    }

    /// PPO epochs over per-worker minibatches with gradient averaging at
    /// every optimizer step; returns the mean regularizer value.
    fn ppo_update(
        &mut self,
        rollouts: &[Rollout],
        advantages: &[Vec<f64>],
        returns: &[Vec<f64>],
    ) -> Result<f64> {
        let t_len = self.cfg.rollout_length;
        let b = self.cfg.batch_size;
        let n_minibatches = t_len.div_ceil(b);
        let n_workers = rollouts.len();
        let iter_id = self.iteration as u64;
        let mut reg_sum = 0.0;
        let mut reg_count = 0usize;

        for epoch in 0..self.cfg.ppo_epochs {
            // per-worker shuffled visit order
            let orders: Vec<Vec<usize>> = (0..n_workers)
                .map(|w| {
                    let mut order: Vec<usize> = (0..t_len).collect();
                    let mut rng = substream(
                        self.seed,
                        tags::PPO_SHUFFLE,
                        &[iter_id, epoch as u64, w as u64],
                    );
                    for i in (1..order.len()).rev() {
                        let j = rng.gen_range(0..=i);
                        order.swap(i, j);
                    }
                    order
                })
                .collect();

            for mb in 0..n_minibatches {
                let lo = mb * b;
                let hi = (lo + b).min(t_len);
                let policy = &self.ac.policy;
                let value = &self.ac.value;
                let clip = self.cfg.ppo_clip;
                let sd = self.env.state_dim;
                let ad = self.env.action_dim;

                // PPO terms per worker and the shared regularizer term run
                // as one fork so both cores stay busy at every step
                let step_parts = [iter_id, epoch as u64, mb as u64];
                let lambda_reg = self.cfg.lambda_reg;
                let (per_worker, reg_term) = par::join(
                    || -> Vec<Result<(PolicyGrads, MlpGrads)>> {
                        par::map_indexed(n_workers, |w| {
                            let rows = &orders[w][lo..hi];
                            let r = &rollouts[w];
                            let mut states = Mat::zeros(rows.len(), sd);
                            let mut actions = Mat::zeros(rows.len(), ad);
                            let mut old_logp = Vec::with_capacity(rows.len());
                            let mut adv = Vec::with_capacity(rows.len());
                            let mut ret = Vec::with_capacity(rows.len());
                            for (k, &t) in rows.iter().enumerate() {
                                states.row_mut(k).copy_from_slice(r.states.row(t));
                                actions.row_mut(k).copy_from_slice(r.actions.row(t));
                                old_logp.push(r.logp_old[t]);
                                adv.push(advantages[w][t]);
                                ret.push(returns[w][t]);
                            }
                            let (pg, vg) = par::join(
                                || {
                                    ppo_policy_loss_grad(
                                        policy, &states, &actions, &old_logp, &adv, clip,
                                    )
                                },
                                || value_loss_grad(value, &states, &ret),
                            );
                            Ok((pg?.1, vg?.1))
                        })
                    },
                    || -> Result<Option<(f64, PolicyGrads)>> {
                        if lambda_reg <= 0.0 {
                            return Ok(None);
                        }
                        let mut rng = substream(self.seed, tags::EXPERT_BATCH, &step_parts);
                        let term = if self.cfg.algorithm.uses_action_regularizer() {
                            let st = self
                                .expert
                                .sa_states
                                .as_ref()
                                .expect("checked at construction");
                            let ac = self
                                .expert
                                .sa_actions
                                .as_ref()
                                .expect("checked at construction");
                            let mut states = Mat::zeros(b, sd);
                            let mut actions = Mat::zeros(b, ad);
                            for k in 0..b {
                                let i = rng.gen_range(0..st.rows());
                                states.row_mut(k).copy_from_slice(st.row(i));
                                actions.row_mut(k).copy_from_slice(ac.row(i));
                            }
                            bc_loss_grad(policy, &states, &actions)?
                        } else {
                            let idm = self
                                .idm
                                .as_ref()
                                .expect("regularized algorithms fit an idm");
                            let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..b)
                                .map(|_| {
                                    let i = rng.gen_range(0..self.expert.pairs.len());
                                    self.expert.pairs[i].clone()
                                })
                                .collect();
                            reg_loss_grad(
                                policy,
                                idm,
                                &pairs,
                                self.cfg.mc_kl_samples,
                                subseed(self.seed, tags::REG_MC, &step_parts),
                            )?
                        };
                        Ok(Some(term))
                    },
                );

                // ordered average over workers
                let mut policy_grads: Option<PolicyGrads> = None;
                let mut value_grads: Option<MlpGrads> = None;
                for item in per_worker {
                    let (pg, vg) = item?;
                    match (&mut policy_grads, &mut value_grads) {
                        (Some(p), Some(v)) => {
                            p.add_assign(&pg);
                            v.add_assign(&vg);
                        }
                        _ => {
                            policy_grads = Some(pg);
                            value_grads = Some(vg);
                        }
                    }
                }
                let mut policy_grads = policy_grads.expect("at least one worker");
                let mut value_grads = value_grads.expect("at least one worker");
                let w_scale = 1.0 / n_workers as f64;
                policy_grads.scale(w_scale);
                value_grads.scale(w_scale);

                if let Some((reg_value, mut reg_grads)) = reg_term? {
                    reg_grads.scale(self.cfg.lambda_reg);
                    policy_grads.add_assign(&reg_grads);
                    reg_sum += reg_value;
                    reg_count += 1;
                }

                // assemble, clip, step: [policy | value], value loss coef 0.5
                value_grads.scale(0.5);
                let mut flat = Vec::with_capacity(self.ac.param_count());
                policy_grads.flatten_into(&mut flat);
                value_grads.flatten_into(&mut flat);
                clip_global_norm(&mut flat, self.cfg.clip_norm);
                let mut params = self.ac.flatten();
                self.ac_opt.step(&mut params, &flat)?;
                self.ac.assign(&params);
            }
        }
        Ok(if reg_count > 0 {
            reg_sum / reg_count as f64
        } else {
            f64::NAN
        })
    }

    fn disc_update(&mut self, rollouts: &[Rollout]) -> Result<f64> {
        let disc = self.disc.as_mut().expect("ail backend");
        let opt = self.disc_opt.as_mut().expect("ail backend");
        let b = self.cfg.batch_size;
        let iter_id = self.iteration as u64;
        let t_len = self.cfg.rollout_length;
        let mut last_loss = f64::NAN;
        for update in 0..self.cfg.disc_updates {
            let mut rng = substream(self.seed, tags::DISC_BATCH, &[iter_id, update as u64]);
            let expert_mb: Vec<(Vec<f64>, Vec<f64>)> = (0..b)
                .map(|_| {
                    let i = rng.gen_range(0..self.expert.disc_pairs.len());
                    self.expert.disc_pairs[i].clone()
                })
                .collect();
            let agent_mb: Vec<(Vec<f64>, Vec<f64>)> = (0..b)
                .map(|_| {
                    let w = rng.gen_range(0..rollouts.len());
                    let t = rng.gen_range(0..t_len);
                    (
                        rollouts[w].states.row(t).to_vec(),
                        rollouts[w].next_states[t].clone(),
                    )
                })
                .collect();
            let gp_seed = subseed(self.seed, tags::DISC_BATCH, &[iter_id, update as u64, 0x6F]);
            let (loss, mut grads) =
                disc_loss_grad(disc, &expert_mb, &agent_mb, self.cfg.gp_coef, gp_seed)?;
            clip_global_norm(&mut grads, self.cfg.clip_norm);
            let mut params = disc.flatten();
            opt.step(&mut params, &grads)?;
            disc.assign(&params);
            last_loss = loss;
        }
        Ok(last_loss)
    }

    /// One supervised epoch of behavioral cloning over the pooled dataset.
    fn bc_epoch(&mut self) -> Result<Metrics> {
        let st = self.expert.sa_states.as_ref().expect("bc needs actions");
        let ac_mat = self.expert.sa_actions.as_ref().expect("bc needs actions");
        let n = st.rows();
        let b = self.cfg.batch_size;
        let epoch = self.iteration as u64;

        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = substream(self.seed, tags::PPO_SHUFFLE, &[epoch]);
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let sd = self.env.state_dim;
        let ad = self.env.action_dim;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(b) {
            let mut states = Mat::zeros(chunk.len(), sd);
            let mut actions = Mat::zeros(chunk.len(), ad);
            for (k, &i) in chunk.iter().enumerate() {
                states.row_mut(k).copy_from_slice(st.row(i));
                actions.row_mut(k).copy_from_slice(ac_mat.row(i));
            }
            let (loss, grads) = bc_loss_grad(&self.ac.policy, &states, &actions)?;
            let mut flat = Vec::with_capacity(self.ac.policy.param_count());
            grads.flatten_into(&mut flat);
            clip_global_norm(&mut flat, self.cfg.clip_norm);
            // policy-only step: reuse the joint optimizer layout with a
            // zero-padded value segment
            let mut full = flat;
            full.resize(self.ac.param_count(), 0.0);
            let mut params = self.ac.flatten();
            self.ac_opt.step(&mut params, &full)?;
            self.ac.assign(&params);
            loss_sum += loss;
            batches += 1;
        }
        self.iteration += 1;
        self.env_steps = self.iteration as u64; // offline: counts epochs, not interactions
        let report = evaluate(
            &self.ac.policy,
            &self.env,
            self.cfg.eval_episodes,
            self.meta.eval_seed,
        )?;
        Ok(Metrics {
            iteration: self.iteration,
            env_steps: self.env_steps,
            mean_return: report.mean_return,
            std_return: report.std_return,
            normalized_return: self.meta.normalized_return(report.mean_return),
            idm_nll: f64::NAN,
            reg_kl: loss_sum / batches.max(1) as f64,
            backend_diag: f64::NAN,
        })
    }
}

fn collect_rollout(
    worker: &mut Worker,
    env: &EnvSpec,
    policy: &GaussianPolicy,
    t_len: usize,
) -> Result<(Rollout, Vec<Transition>)> {
    let sd = env.state_dim;
    let ad = env.action_dim;
    let mut states = Mat::zeros(t_len, sd);
    let mut actions = Mat::zeros(t_len, ad);
    let mut logp_old = Vec::with_capacity(t_len);
    let mut dones = Vec::with_capacity(t_len);
    let mut next_states = Vec::with_capacity(t_len);
    let mut episode_starts = Vec::new();
    let mut triplets = Vec::with_capacity(t_len);

    // σ is state-independent: hoist it out of the stepping loop
    let log_std = policy.effective_log_std();
    let sigmas: Vec<f64> = log_std.iter().map(|l| l.exp()).collect();
    const LOG_2PI: f64 = 1.837877066409345483560659472811;

    for t in 0..t_len {
        if worker.needs_reset {
            let reset_seed = worker.rng.next_u64();
            worker.env_state = env_reset(env, reset_seed);
            episode_starts.push((t, worker.episodes_started));
            worker.episodes_started += 1;
            worker.needs_reset = false;
        }
        let obs = worker.env_state.observation();
        let mean = policy.mean_action(&obs)?;
        let mut action = Vec::with_capacity(ad);
        let mut logp = 0.0;
        for d in 0..ad {
            let z: f64 = worker.rng.sample(rand_distr::StandardNormal);
            action.push(mean[d] + sigmas[d] * z);
            logp += -0.5 * LOG_2PI - log_std[d] - 0.5 * z * z;
        }
        crate::error::ensure_finite(&action, "sampled action")?;
        let executed = env.clip_action(&action);
        let (next, done) = env_step(env, &worker.env_state, &action)?;
        let next_obs = next.observation();

        states.row_mut(t).copy_from_slice(&obs);
        actions.row_mut(t).copy_from_slice(&action);
        logp_old.push(logp);
        dones.push(done);
        next_states.push(next_obs.clone());
        triplets.push(Transition {
            state: obs,
            action: executed,
            next_state: next_obs,
        });

        worker.env_state = next;
        if done {
            worker.needs_reset = true;
        }
    }
    let final_state = worker.env_state.observation();
    Ok((
        Rollout {
            states,
            actions,
            logp_old,
            rewards: vec![0.0; t_len],
            dones,
            next_states,
            final_state,
            episode_starts,
        },
        triplets,
    ))
}

/// Collects `n` scripted-expert episodes (stochastic only through the seeded
/// initial state) as demonstration trajectories.
pub fn collect_expert_demos(env: &EnvSpec, n: usize, seed: u64) -> Result<Vec<DemoTrajectory>> {
    let demos: Vec<Result<DemoTrajectory>> = par::map_indexed(n, |i| {
        let mut state = env_reset(env, subseed(seed, tags::WORKER_BASE, &[i as u64]));
        let mut states = vec![state.observation()];
        let mut actions = Vec::with_capacity(env.horizon);
        let mut ep_return = 0.0;
        loop {
            let a = crate::envs::expert_action(env, &state);
            ep_return += crate::envs::task_reward(env, &state, &a);
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
    demos.into_iter().collect()
}
