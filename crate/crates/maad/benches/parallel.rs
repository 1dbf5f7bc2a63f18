//! Parallel-vs-sequential benchmarks over the data-parallel kernels: batch
//! gradient computation, Sinkhorn plans across episodes, policy evaluation
//! rollouts, and the tabular verification battery. The same code runs in
//! both modes via the runtime override, so the numbers isolate the effect of
//! the `parallel` feature's rayon execution.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use maad::agent::{evaluate, ppo_policy_loss_grad, value_loss_grad, GaussianPolicy};
use maad::envs::EnvSpec;
use maad::numkit::{Mat, Mlp};
use maad::oracle::run_battery;
use maad::par;
use maad::rewards::{sinkhorn, CostMatrix};
use maad::rng::stream;
use rand::Rng;

fn modes() -> [(&'static str, bool); 2] {
    [("parallel", false), ("sequential", true)]
}

fn bench_minibatch_grads(c: &mut Criterion) {
    let mut rng = stream(0, 1);
    let policy = GaussianPolicy::new(4, 2, &[128, 128], &mut rng).unwrap();
    let value = Mlp::xavier(&[4, 128, 128, 1], &mut rng, 1.0).unwrap();
    let states_v: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let actions_v: Vec<Vec<f64>> = (0..64)
        .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let states = Mat::from_rows(&states_v);
    let actions = Mat::from_rows(&actions_v);
    let old: Vec<f64> = (0..64)
        .map(|i| policy.log_prob(states.row(i), actions.row(i)).unwrap())
        .collect();
    let adv = vec![0.5; 64];
    let ret = vec![0.1; 64];

    let mut group = c.benchmark_group("minibatch_grads");
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| {
                let (p, v) = par::join(
                    || ppo_policy_loss_grad(&policy, &states, &actions, &old, &adv, 0.2).unwrap(),
                    || value_loss_grad(&value, &states, &ret).unwrap(),
                );
                (p.0, v.0)
            });
            par::force_sequential(false);
        });
    }
    group.finish();
}

fn bench_sinkhorn_episodes(c: &mut Criterion) {
    let mut rng = stream(1, 2);
    let costs: Vec<CostMatrix> = (0..8)
        .map(|_| {
            let mut m = Mat::zeros(100, 100);
            m.data_mut()
                .iter_mut()
                .for_each(|v| *v = rng.gen_range(0.0..2.0));
            CostMatrix::from_mat(m).unwrap()
        })
        .collect();

    let mut group = c.benchmark_group("sinkhorn_episode_batch");
    group.sample_size(10);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| {
                let plans = par::map_slice(&costs, |cm| sinkhorn(cm, 0.01, 50).unwrap());
                plans.iter().map(|p| p.violation).sum::<f64>()
            });
            par::force_sequential(false);
        });
    }
    group.finish();
}

fn bench_evaluation_rollouts(c: &mut Criterion) {
    let env = EnvSpec::linear_point();
    let mut rng = stream(2, 3);
    let policy = GaussianPolicy::new(4, 2, &[128, 128], &mut rng).unwrap();

    let mut group = c.benchmark_group("evaluation_rollouts");
    group.sample_size(10);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| evaluate(&policy, &env, 20, 0).unwrap().mean_return);
            par::force_sequential(false);
        });
    }
    group.finish();
}

fn bench_oracle_battery(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle_battery");
    group.sample_size(10);
    for (name, seq) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::force_sequential(seq);
            b.iter(|| run_battery(50, 0, 1e-9).unwrap().max_idd_residual);
            par::force_sequential(false);
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_minibatch_grads,
    bench_sinkhorn_episodes,
    bench_evaluation_rollouts,
    bench_oracle_battery
);
criterion_main!(benches);
