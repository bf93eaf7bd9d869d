//! Criterion benchmarks for the hot paths: planning, learning, evaluation,
//! labelling, and the bootstrap.

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ilbrl_core::data::{rollout, SourceLabel};
use ilbrl_core::ilbrl::{intrinsic_reward, phased_q_dataset_solver};
use ilbrl_core::ope::{esarsa_evaluate, OpeConfig};
use ilbrl_core::phased_q::{phased_q_learn, SampleSource};
use ilbrl_core::stats::stratified_bootstrap_iqm_ci;
use ilbrl_core::support::{label_dataset, FeatureDataset};
use ilbrl_core::{greedy_policy, value_iteration, StochasticPolicy, TabularMdp};

fn bench_value_iteration(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mdp = TabularMdp::random(50, 5, 0.95, &mut rng);
    c.bench_function("value_iteration_50x5", |b| {
        b.iter(|| value_iteration(black_box(&mdp), 1e-8, 10_000).unwrap())
    });
}

fn bench_phased_q_exact(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mdp = TabularMdp::random(20, 4, 0.9, &mut rng);
    c.bench_function("phased_q_exact_20x4_ell100", |b| {
        b.iter(|| {
            phased_q_learn(
                SampleSource::Exact(black_box(&mdp)),
                mdp.reward_table(),
                0.9,
                100,
                None,
            )
            .unwrap()
        })
    });
}

fn bench_dataset_solver(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mdp = TabularMdp::random(8, 3, 0.9, &mut rng);
    let explore = StochasticPolicy::uniform(8, 3);
    let d_x = rollout(&mdp, &explore, 40_000, None, SourceLabel::Exploratory, 3);
    let reward = intrinsic_reward(&d_x, 8, 3).unwrap();
    c.bench_function("phased_q_dataset_solver_40k", |b| {
        b.iter(|| phased_q_dataset_solver(black_box(&d_x), &reward, 0.9, 15, 99).unwrap())
    });
}

fn bench_esarsa(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mdp = TabularMdp::random(6, 2, 0.9, &mut rng);
    let explore = StochasticPolicy::uniform(6, 2);
    let d = rollout(&mdp, &explore, 10_000, Some(50), SourceLabel::Exploratory, 4);
    let policy = greedy_policy(&value_iteration(&mdp, 1e-10, 10_000).unwrap());
    let cfg = OpeConfig {
        learning_rate: 1.0,
        lr_decay: true,
        target_update: 0.5,
        expert_data_fraction: 0.5,
        passes: 20,
        divergence_threshold: 1e6,
        discount: 0.9,
    };
    c.bench_function("esarsa_10k_records_20_passes", |b| {
        b.iter(|| esarsa_evaluate(black_box(&d), &policy, &cfg, 7).unwrap())
    });
}

fn bench_bootstrap(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<Vec<f64>> = (0..5)
        .map(|_| (0..30).map(|_| rng.gen::<f64>() * 100.0).collect())
        .collect();
    c.bench_function("stratified_bootstrap_2000", |b| {
        b.iter(|| stratified_bootstrap_iqm_ci(black_box(&data), 2_000, 0.95, 7).unwrap())
    });
}

fn bench_support_labelling(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let points: Vec<Vec<f64>> = (0..2_000)
        .map(|_| (0..8).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mask: Vec<bool> = (0..2_000).map(|i| i < 200).collect();
    let ds = FeatureDataset::new(8, points, mask).unwrap();
    c.bench_function("label_dataset_2000x8", |b| {
        b.iter(|| label_dataset(black_box(&ds)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_value_iteration,
    bench_phased_q_exact,
    bench_dataset_solver,
    bench_esarsa,
    bench_bootstrap,
    bench_support_labelling
);
criterion_main!(benches);
