//! Shared test oracles: central finite differences over flat parameter
//! vectors, and random instance builders for every loss in the system. These
//! stay independent of the analytic-gradient code paths they check.

#![allow(dead_code)]

use maad::agent::GaussianPolicy;
use maad::data::Transition;
use maad::idm::MdnIdm;
use maad::numkit::Mat;
use maad::rng::stream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Central finite differences of `f` at `params`.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    let mut grad = vec![0.0; p.len()];
    for k in 0..p.len() {
        let orig = p[k];
        p[k] = orig + h;
        let fp = f(&p);
        p[k] = orig - h;
        let fm = f(&p);
        p[k] = orig;
        grad[k] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// `max_k |a_k - b_k| / max(|a_k|, |b_k|, 1)`.
pub fn max_rel_err(analytic: &[f64], fd: &[f64]) -> f64 {
    assert_eq!(analytic.len(), fd.len());
    analytic
        .iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1.0))
        .fold(0.0, f64::max)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn rand_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Mat {
    let data: Vec<Vec<f64>> = (0..rows).map(|_| rand_vec(rng, cols, scale)).collect();
    Mat::from_rows(&data)
}

/// Small random policy for gradient checks.
pub fn rand_policy(seed: u64, state_dim: usize, action_dim: usize) -> GaussianPolicy {
    let mut rng = stream(seed, 0xF0);
    let mut policy = GaussianPolicy::new(state_dim, action_dim, &[8, 6], &mut rng).unwrap();
    // randomize log-stds inside the clamp so gradients flow
    for ls in policy.log_std.iter_mut() {
        *ls = rng.gen_range(-1.0..0.5);
    }
    // the xavier output scale is tiny; renoise the full parameter vector
    let n = policy.param_count();
    let mut flat = Vec::with_capacity(n);
    policy.flatten_into(&mut flat);
    for v in flat.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    policy.assign_from(&flat);
    policy
}

/// Small random inverse model for gradient checks.
pub fn rand_idm(seed: u64, state_dim: usize, action_dim: usize, k: usize) -> MdnIdm {
    let mut rng = stream(seed, 0x1D);
    let mut idm = MdnIdm::new(state_dim, action_dim, k, &[8], &mut rng).unwrap();
    let mut flat = idm.flatten();
    for v in flat.iter_mut() {
        *v += rng.gen_range(-0.3..0.3);
    }
    idm.assign(&flat);
    idm
}

pub fn rand_transitions(
    seed: u64,
    n: usize,
    state_dim: usize,
    action_dim: usize,
) -> Vec<Transition> {
    let mut rng = stream(seed, 0x7A);
    (0..n)
        .map(|_| Transition {
            state: rand_vec(&mut rng, state_dim, 1.0),
            action: rand_vec(&mut rng, action_dim, 1.0),
            next_state: rand_vec(&mut rng, state_dim, 1.0),
        })
        .collect()
}
