//! Finite-difference verification of every analytic gradient path, plus the
//! generic backpropagation property over random network instances.

mod common;

use common::*;
use maad::agent::{
    bc_loss, bc_loss_grad, ppo_policy_loss, ppo_policy_loss_grad, reg_loss, reg_loss_grad,
    value_loss, value_loss_grad, GaussianPolicy,
};
use maad::numkit::{Mat, Mlp, MlpGrads};
use maad::rewards::{disc_loss, disc_loss_grad, Discriminator};
use maad::rng::stream;
use rand::Rng;

const TOL: f64 = 1e-4;

#[test]
fn generic_backprop_matches_finite_differences_on_100_networks() {
    for i in 0..100 {
        let mut rng = stream(2000 + i, 0x6E);
        let sizes = [
            vec![3, 5, 2],
            vec![4, 8, 8, 1],
            vec![2, 6, 3],
            vec![5, 4, 4, 2],
        ][i as usize % 4]
            .clone();
        let mut net = Mlp::xavier(&sizes, &mut rng, 1.0).unwrap();
        {
            // spread parameters away from the small-xavier regime
            let mut flat = Vec::new();
            net.flatten_into(&mut flat);
            for v in flat.iter_mut() {
                *v += rng.gen_range(-0.4..0.4);
            }
            net.assign_from(&flat);
        }
        let batch = rand_mat(&mut rng, 3, sizes[0], 1.0);
        let weights = rand_vec(&mut rng, 3 * sizes[sizes.len() - 1], 1.0);

        // loss = Σ_ij w_ij · y_ij(θ)
        let loss_of = |net: &Mlp| -> f64 {
            let acts = net.forward_batch(&batch).unwrap();
            acts.output()
                .data()
                .iter()
                .zip(&weights)
                .map(|(y, w)| y * w)
                .sum()
        };
        let acts = net.forward_batch(&batch).unwrap();
        let mut grads = MlpGrads::zeros_like(&net);
        let d_out = Mat::from_vec(3, sizes[sizes.len() - 1], weights.clone());
        net.backward_batch(&acts, &d_out, &mut grads);
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);

        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        let mut scratch = net.clone();
        let fd = finite_diff(
            |p| {
                scratch.assign_from(p);
                loss_of(&scratch)
            },
            &flat,
            FD_STEP,
        );
        let err = max_rel_err(&analytic, &fd);
        assert!(err <= TOL, "instance {i}: rel err {err}");
    }
}

fn check_policy_loss_grad(
    seed: u64,
    loss_and_grad: impl Fn(&GaussianPolicy) -> (f64, Vec<f64>),
    loss_only: impl Fn(&GaussianPolicy) -> f64,
) -> f64 {
    let policy = rand_policy(seed, 3, 2);
    let (_, analytic) = loss_and_grad(&policy);
    let mut flat = Vec::new();
    policy.flatten_into(&mut flat);
    let mut scratch = policy.clone();
    let fd = finite_diff(
        |p| {
            scratch.assign_from(p);
            loss_only(&scratch)
        },
        &flat,
        FD_STEP,
    );
    max_rel_err(&analytic, &fd)
}

#[test]
fn ppo_policy_gradient_matches_finite_differences() {
    for i in 0..20 {
        let mut rng = stream(300 + i, 0xA1);
        let states = rand_mat(&mut rng, 6, 3, 1.0);
        let actions = rand_mat(&mut rng, 6, 2, 1.0);
        let adv = rand_vec(&mut rng, 6, 2.0);
        let offsets = rand_vec(&mut rng, 6, 0.09);
        let policy0 = rand_policy(i, 3, 2);
        // ratios near 1 keep every sample away from the clip kink
        let old: Vec<f64> = (0..6)
            .map(|j| policy0.log_prob(states.row(j), actions.row(j)).unwrap() - offsets[j])
            .collect();
        let err = check_policy_loss_grad(
            i,
            |p| {
                let (l, g) = ppo_policy_loss_grad(p, &states, &actions, &old, &adv, 0.2).unwrap();
                let mut flat = Vec::new();
                g.flatten_into(&mut flat);
                (l, flat)
            },
            |p| ppo_policy_loss(p, &states, &actions, &old, &adv, 0.2).unwrap(),
        );
        assert!(err <= TOL, "instance {i}: rel err {err}");
    }
}

#[test]
fn value_gradient_matches_finite_differences() {
    for i in 0..20 {
        let mut rng = stream(400 + i, 0xA2);
        let mut net = Mlp::xavier(&[3, 8, 1], &mut rng, 1.0).unwrap();
        let mut flat = Vec::new();
        net.flatten_into(&mut flat);
        for v in flat.iter_mut() {
            *v += rng.gen_range(-0.4..0.4);
        }
        net.assign_from(&flat);
        let states = rand_mat(&mut rng, 8, 3, 1.0);
        let targets = rand_vec(&mut rng, 8, 2.0);

        let (_, grads) = value_loss_grad(&net, &states, &targets).unwrap();
        let mut analytic = Vec::new();
        grads.flatten_into(&mut analytic);
        let mut scratch = net.clone();
        let fd = finite_diff(
            |p| {
                scratch.assign_from(p);
                value_loss(&scratch, &states, &targets).unwrap()
            },
            &flat,
            FD_STEP,
        );
        let err = max_rel_err(&analytic, &fd);
        assert!(err <= TOL, "instance {i}: rel err {err}");
    }
}

#[test]
fn bc_gradient_matches_finite_differences() {
    for i in 0..20 {
        let mut rng = stream(500 + i, 0xA3);
        let states = rand_mat(&mut rng, 7, 3, 1.0);
        let actions = rand_mat(&mut rng, 7, 2, 1.0);
        let err = check_policy_loss_grad(
            100 + i,
            |p| {
                let (l, g) = bc_loss_grad(p, &states, &actions).unwrap();
                let mut flat = Vec::new();
                g.flatten_into(&mut flat);
                (l, flat)
            },
            |p| bc_loss(p, &states, &actions).unwrap(),
        );
        assert!(err <= TOL, "instance {i}: rel err {err}");
    }
}

#[test]
fn reg_gradient_matches_finite_differences() {
    for i in 0..20 {
        let mut rng = stream(600 + i, 0xA4);
        let idm = rand_idm(700 + i, 3, 2, 1);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| (rand_vec(&mut rng, 3, 1.0), rand_vec(&mut rng, 3, 1.0)))
            .collect();
        let err = check_policy_loss_grad(
            200 + i,
            |p| {
                let (l, g) = reg_loss_grad(p, &idm, &pairs, 0, 0).unwrap();
                let mut flat = Vec::new();
                g.flatten_into(&mut flat);
                (l, flat)
            },
            |p| reg_loss(p, &idm, &pairs, 0, 0).unwrap(),
        );
        assert!(err <= TOL, "instance {i}: rel err {err}");
    }
}

#[test]
fn idm_nll_gradient_matches_finite_differences() {
    for i in 0..20 {
        let k = if i % 3 == 0 { 2 } else { 1 };
        let mut idm = rand_idm(800 + i, 2, 1, k);
        let batch = rand_transitions(900 + i, 6, 2, 1);
        let (_, analytic) = idm.nll_grad(&batch).unwrap();
        let flat = idm.flatten();
        let fd = finite_diff(
            |p| {
                idm.assign(p);
                idm.nll(&batch).unwrap()
            },
            &flat,
            FD_STEP,
        );
        idm.assign(&flat);
        let err = max_rel_err(&analytic, &fd);
        assert!(err <= TOL, "instance {i} (k={k}): rel err {err}");
    }
}

#[test]
fn disc_gradient_matches_finite_differences_including_penalty() {
    for i in 0..20 {
        let mut rng = stream(1000 + i, 0xA5);
        let mut disc = Discriminator::new(2, &[6, 4], &mut rng).unwrap();
        let mut flat = disc.flatten();
        for v in flat.iter_mut() {
            *v += rng.gen_range(-0.4..0.4);
        }
        disc.assign(&flat);
        let expert: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| (rand_vec(&mut rng, 2, 1.0), rand_vec(&mut rng, 2, 1.0)))
            .collect();
        let agent: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| (rand_vec(&mut rng, 2, 1.0), rand_vec(&mut rng, 2, 1.0)))
            .collect();
        let gp_seed = 4242 + i;

        let (_, analytic) = disc_loss_grad(&disc, &expert, &agent, 10.0, gp_seed).unwrap();
        let fd = finite_diff(
            |p| {
                let mut d = disc.clone();
                d.assign(p);
                disc_loss(&d, &expert, &agent, 10.0, gp_seed).unwrap()
            },
            &flat,
            FD_STEP,
        );
        let err = max_rel_err(&analytic, &fd);
        assert!(err <= TOL, "instance {i}: rel err {err}");
    }
}
