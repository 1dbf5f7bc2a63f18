use serde::{Deserialize, Serialize};

use crate::envs::EnvSpec;
use crate::error::{Error, Result};
use crate::rewards::RewardBackend;

/// Algorithm roster: three regularized variants, their λ=0 baselines, and
/// the action-supervised references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    MaadAil,
    MaadTm,
    MaadOt,
    Gaifo,
    Tmo,
    Oto,
    Bc,
    GailBc,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::MaadAil => "maad-ail",
            Algorithm::MaadTm => "maad-tm",
            Algorithm::MaadOt => "maad-ot",
            Algorithm::Gaifo => "gaifo",
            Algorithm::Tmo => "tmo",
            Algorithm::Oto => "oto",
            Algorithm::Bc => "bc",
            Algorithm::GailBc => "gail-bc",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "maad-ail" => Algorithm::MaadAil,
            "maad-tm" => Algorithm::MaadTm,
            "maad-ot" => Algorithm::MaadOt,
            "gaifo" => Algorithm::Gaifo,
            "tmo" => Algorithm::Tmo,
            "oto" => Algorithm::Oto,
            "bc" => Algorithm::Bc,
            "gail-bc" => Algorithm::GailBc,
            other => return Err(Error::contract(format!("unknown algorithm '{other}'"))),
        })
    }

    /// Surrogate reward source; `None` for the offline BC path.
    pub fn backend(&self) -> Option<RewardBackend> {
        match self {
            Algorithm::MaadAil | Algorithm::Gaifo | Algorithm::GailBc => Some(RewardBackend::Ail),
            Algorithm::MaadTm | Algorithm::Tmo => Some(RewardBackend::Tm),
            Algorithm::MaadOt | Algorithm::Oto => Some(RewardBackend::Ot),
            Algorithm::Bc => None,
        }
    }

    /// Non-regularized baselines run with λ_reg forced to zero.
    pub fn forces_zero_reg(&self) -> bool {
        matches!(self, Algorithm::Gaifo | Algorithm::Tmo | Algorithm::Oto)
    }

    /// Whether the regularizer consumes true expert actions (Eq.-3 style).
    pub fn uses_action_regularizer(&self) -> bool {
        matches!(self, Algorithm::GailBc)
    }

    /// Offline supervised path; no environment interaction.
    pub fn is_offline(&self) -> bool {
        matches!(self, Algorithm::Bc)
    }

    /// Whether the dataset must carry expert actions.
    pub fn needs_actions(&self) -> bool {
        matches!(self, Algorithm::Bc | Algorithm::GailBc)
    }
}

fn default_gamma() -> f64 {
    0.99
}
fn default_gae_lambda() -> f64 {
    0.95
}
fn default_ppo_clip() -> f64 {
    0.2
}
fn default_ppo_epochs() -> usize {
    6
}
fn default_batch_size() -> usize {
    64
}
fn default_rollout_length() -> usize {
    2048
}
fn default_lr() -> f64 {
    1e-4
}
fn default_clip_norm() -> f64 {
    0.5
}
fn default_lambda_reg() -> f64 {
    1.0
}
fn default_entropy_coef() -> f64 {
    0.0
}
fn default_workers() -> usize {
    1
}
fn default_max_env_steps() -> u64 {
    300_000
}
fn default_policy_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_disc_hidden() -> Vec<usize> {
    vec![128, 128]
}
fn default_idm_hidden() -> Vec<usize> {
    vec![128]
}
fn default_idm_components() -> usize {
    1
}
fn default_idm_lr() -> f64 {
    1e-4
}
fn default_idm_max_epochs() -> usize {
    50
}
fn default_idm_patience() -> usize {
    3
}
fn default_idm_tol() -> f64 {
    1e-3
}
fn default_idm_holdout_frac() -> f64 {
    0.1
}
fn default_idm_sample_cap() -> usize {
    10_000
}
fn default_disc_lr() -> f64 {
    1e-4
}
fn default_gp_coef() -> f64 {
    10.0
}
fn default_disc_updates() -> usize {
    1
}
fn default_subsample_rate() -> usize {
    20
}
fn default_ot_epsilon() -> f64 {
    0.01
}
fn default_ot_iters() -> usize {
    100
}
fn default_ot_scale() -> f64 {
    20.0
}
fn default_replay_capacity() -> usize {
    100_000
}
fn default_eval_episodes() -> usize {
    10
}
fn default_bc_epochs() -> usize {
    200
}
fn default_mc_kl_samples() -> usize {
    128
}

/// Hyperparameters of one training run. Defaults mirror the shared table:
/// batch 64, rollout 2048, γ 0.99, lr 1e-4, {3,6,9}-sweep resolved to 6 PPO
/// epochs, clip 0.2, GAE λ 0.95, clip norm 0.5, gradient penalty 10,
/// replay 1e5, Sinkhorn (ε 0.01, 100 iterations, scale 20), λ_reg 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    /// Surrogate backend; inferred from the algorithm when omitted and
    /// validated against it when given.
    #[serde(default)]
    pub reward_backend: Option<RewardBackend>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_gae_lambda")]
    pub gae_lambda: f64,
    #[serde(default = "default_ppo_clip")]
    pub ppo_clip: f64,
    #[serde(default = "default_ppo_epochs")]
    pub ppo_epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_rollout_length")]
    pub rollout_length: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_lambda_reg")]
    pub lambda_reg: f64,
    #[serde(default = "default_entropy_coef")]
    pub entropy_coef: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_max_env_steps")]
    pub max_env_steps: u64,
    #[serde(default = "default_policy_hidden")]
    pub policy_hidden: Vec<usize>,
    #[serde(default = "default_disc_hidden")]
    pub disc_hidden: Vec<usize>,
    #[serde(default = "default_idm_hidden")]
    pub idm_hidden: Vec<usize>,
    #[serde(default = "default_idm_components")]
    pub idm_components: usize,
    #[serde(default = "default_idm_lr")]
    pub idm_lr: f64,
    #[serde(default = "default_idm_max_epochs")]
    pub idm_max_epochs: usize,
    #[serde(default = "default_idm_patience")]
    pub idm_patience: usize,
    #[serde(default = "default_idm_tol")]
    pub idm_tol: f64,
    #[serde(default = "default_idm_holdout_frac")]
    pub idm_holdout_frac: f64,
    #[serde(default = "default_idm_sample_cap")]
    pub idm_sample_cap: usize,
    #[serde(default = "default_disc_lr")]
    pub disc_lr: f64,
    #[serde(default = "default_gp_coef")]
    pub gp_coef: f64,
    #[serde(default = "default_disc_updates")]
    pub disc_updates: usize,
    #[serde(default = "default_subsample_rate")]
    pub subsample_rate: usize,
    #[serde(default = "default_ot_epsilon")]
    pub ot_epsilon: f64,
    #[serde(default = "default_ot_iters")]
    pub ot_iters: usize,
    #[serde(default = "default_ot_scale")]
    pub ot_scale: f64,
    #[serde(default = "default_replay_capacity")]
    pub replay_capacity: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_bc_epochs")]
    pub bc_epochs: usize,
    #[serde(default = "default_mc_kl_samples")]
    pub mc_kl_samples: usize,
}

impl TrainConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        TrainConfig {
            algorithm,
            reward_backend: algorithm.backend(),
            gamma: default_gamma(),
            gae_lambda: default_gae_lambda(),
            ppo_clip: default_ppo_clip(),
            ppo_epochs: default_ppo_epochs(),
            batch_size: default_batch_size(),
            rollout_length: default_rollout_length(),
            lr: default_lr(),
            clip_norm: default_clip_norm(),
            lambda_reg: default_lambda_reg(),
            entropy_coef: default_entropy_coef(),
            workers: default_workers(),
            max_env_steps: default_max_env_steps(),
            policy_hidden: default_policy_hidden(),
            disc_hidden: default_disc_hidden(),
            idm_hidden: default_idm_hidden(),
            idm_components: default_idm_components(),
            idm_lr: default_idm_lr(),
            idm_max_epochs: default_idm_max_epochs(),
            idm_patience: default_idm_patience(),
            idm_tol: default_idm_tol(),
            idm_holdout_frac: default_idm_holdout_frac(),
            idm_sample_cap: default_idm_sample_cap(),
            disc_lr: default_disc_lr(),
            gp_coef: default_gp_coef(),
            disc_updates: default_disc_updates(),
            subsample_rate: default_subsample_rate(),
            ot_epsilon: default_ot_epsilon(),
            ot_iters: default_ot_iters(),
            ot_scale: default_ot_scale(),
            replay_capacity: default_replay_capacity(),
            eval_episodes: default_eval_episodes(),
            bc_epochs: default_bc_epochs(),
            mc_kl_samples: default_mc_kl_samples(),
        }
    }

    /// Applies the algorithm forcing rules (non-regularized baselines run at
    /// λ_reg = 0; episode-based backends need horizon-aligned rollouts) and
    /// validates ranges. Idempotent.
    pub fn resolve(&mut self, env: &EnvSpec) -> Result<()> {
        env.validate()?;
        if self.algorithm.forces_zero_reg() {
            self.lambda_reg = 0.0;
        }
        match (self.reward_backend, self.algorithm.backend()) {
            (Some(given), expected) if Some(given) != expected => {
                return Err(Error::contract(format!(
                    "reward_backend {given:?} is inconsistent with algorithm {}",
                    self.algorithm.name()
                )));
            }
            (None, expected) => self.reward_backend = expected,
            _ => {}
        }
        if matches!(
            self.algorithm.backend(),
            Some(RewardBackend::Tm) | Some(RewardBackend::Ot)
        ) {
            if self.rollout_length < env.horizon {
                return Err(Error::contract(
                    "episode-based backends need rollout_length >= horizon",
                ));
            }
            self.rollout_length = (self.rollout_length / env.horizon) * env.horizon;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::contract(format!("config: {msg}")))
            }
        };
        check(
            self.gamma > 0.0 && self.gamma < 1.0,
            "gamma must lie in (0,1)",
        )?;
        check(
            (0.0..=1.0).contains(&self.gae_lambda),
            "gae_lambda must lie in [0,1]",
        )?;
        check(
            [0.1, 0.2].iter().any(|v| (v - self.ppo_clip).abs() < 1e-12),
            "ppo_clip must be 0.1 or 0.2",
        )?;
        check(
            [3, 6, 9].contains(&self.ppo_epochs),
            "ppo_epochs must be 3, 6 or 9",
        )?;
        check(
            [0.0, 1.0, 10.0]
                .iter()
                .any(|v| (v - self.lambda_reg).abs() < 1e-12),
            "lambda_reg must be 0, 1 or 10",
        )?;
        check(
            self.entropy_coef == 0.0,
            "entropy bonus weight is fixed at zero",
        )?;
        check(self.workers >= 1, "need at least one worker")?;
        check(self.batch_size >= 1, "batch_size must be positive")?;
        check(
            self.rollout_length >= self.batch_size,
            "rollout shorter than a minibatch",
        )?;
        check(
            self.lr > 0.0 && self.idm_lr > 0.0 && self.disc_lr > 0.0,
            "learning rates must be positive",
        )?;
        check(self.clip_norm > 0.0, "clip_norm must be positive")?;
        check(
            self.idm_components >= 1,
            "idm_components must be at least 1",
        )?;
        check(
            self.subsample_rate >= 1,
            "subsample_rate must be at least 1",
        )?;
        check(
            self.ot_epsilon > 0.0 && self.ot_iters >= 1,
            "sinkhorn settings out of range",
        )?;
        check(
            self.replay_capacity >= 1,
            "replay_capacity must be positive",
        )?;
        check(self.eval_episodes >= 1, "eval_episodes must be at least 1")?;
        Ok(())
    }
}

/// One row of the per-iteration training log.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub iteration: usize,
    pub env_steps: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub normalized_return: f64,
    pub idm_nll: f64,
    pub reg_kl: f64,
    /// Backend diagnostic: discriminator loss (AIL) or the mean surrogate
    /// reward of the iteration (TM/OT). NaN when not applicable.
    pub backend_diag: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "iteration,env_steps,mean_return,std_return,normalized_return,idm_nll,reg_kl,backend_diag";

impl Metrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.iteration,
            self.env_steps,
            self.mean_return,
            self.std_return,
            self.normalized_return,
            self.idm_nll,
            self.reg_kl,
            self.backend_diag
        )
    }
}

/// Serializes rows to the canonical CSV (header + one row per iteration).
pub fn metrics_to_csv(rows: &[Metrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Parses the canonical metrics CSV.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<Metrics>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == METRICS_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                msg: "missing metrics header".into(),
            });
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("{} fields", fields.len()),
            });
        }
        let parse_f = |s: &str, line: usize| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })
        };
        rows.push(Metrics {
            iteration: fields[0].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: "iteration".into(),
            })?,
            env_steps: fields[1].parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: "env_steps".into(),
            })?,
            mean_return: parse_f(fields[2], i + 1)?,
            std_return: parse_f(fields[3], i + 1)?,
            normalized_return: parse_f(fields[4], i + 1)?,
            idm_nll: parse_f(fields[5], i + 1)?,
            reg_kl: parse_f(fields[6], i + 1)?,
            backend_diag: parse_f(fields[7], i + 1)?,
        });
    }
    Ok(rows)
}
