//! Gaussian policy, value function, GAE, PPO updates, the regularized
//! training loop (rollout collection, replay, inverse-model fitting, policy
//! and discriminator updates), evaluation and R² analysis.

mod checkpoint;
mod config;
mod eval;
mod gae;
mod losses;
mod policy;
mod trainer;

pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use config::{
    metrics_to_csv, parse_metrics_csv, Algorithm, Metrics, TrainConfig, METRICS_CSV_HEADER,
};
pub use eval::{
    evaluate, evaluate_expert, evaluate_zero_policy, idm_expert_r2, policy_expert_r2, r_squared,
    EvalReport,
};
pub use gae::{gae, normalize_advantages};
pub use losses::{
    bc_loss, bc_loss_grad, ppo_policy_loss, ppo_policy_loss_grad, reg_loss, reg_loss_grad,
    value_loss, value_loss_grad,
};
pub use policy::{ActorCritic, GaussianPolicy, PolicyGrads};
pub use trainer::{collect_expert_demos, ExpertData, Trainer};
