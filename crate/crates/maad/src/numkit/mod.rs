//! Minimal differentiable-computation kit: multilayer perceptrons with
//! analytic gradients, the Adam optimizer, global-norm gradient clipping and
//! diagonal-Gaussian distribution math. Everything is double precision and
//! deterministic.

mod adam;
mod gaussian;
mod mat;
mod mlp;

pub use adam::{clip_global_norm, AdamState};
pub use gaussian::{clamp_log_std, DiagGaussian, LOG_STD_MAX, LOG_STD_MIN};
pub use mat::Mat;
pub use mlp::{BatchActs, InputGradCache, Mlp, MlpGrads};
