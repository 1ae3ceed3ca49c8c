use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use nftproj::context::fit_pca;
use nftproj::nn::{generate, loss_and_grad, randomize, Example, ModelParams};
use nftproj::series::{slice_quarter, Quarter};
use nftproj::synth::{make_benchmark_suite, SuiteRole};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn model(hidden: usize) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = ModelParams::init(hidden, 0.2, &mut rng);
    randomize(&mut m, 0.3, &mut rng);
    m
}

fn batch(n: usize, window: usize) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    (0..n)
        .map(|_| Example {
            context: std::array::from_fn(|_| rng.random_range(1.0..3.0)),
            window: (0..window).map(|_| [rng.random_range(0.0..2.0), rng.random_range(0.0..4.0)]).collect(),
            target: [rng.random_range(0.0..2.0), rng.random_range(0.0..4.0)],
        })
        .collect()
}

fn forward_backward(c: &mut Criterion) {
    let mut g = c.benchmark_group("loss_and_grad");
    for hidden in [16, 64] {
        let m = model(hidden);
        let b = batch(32, 20);
        g.bench_function(format!("h{hidden}_b32_w20"), |bench| {
            bench.iter_batched(
                || ChaCha8Rng::seed_from_u64(3),
                |mut rng| loss_and_grad(&m, &b, &mut rng).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn rollout(c: &mut Criterion) {
    let m = model(16);
    let window: Vec<[f64; 2]> = (0..20).map(|d| [0.1 * d as f64, (d / 5) as f64]).collect();
    c.bench_function("generate_h16_274_days", |b| b.iter(|| generate(&m, &[2.0; 6], &window, 274).unwrap()));
}

fn pca(c: &mut Criterion) {
    let suite = make_benchmark_suite(1);
    let q1: Vec<_> = suite
        .by_role(SuiteRole::Train)
        .iter()
        .map(|c| slice_quarter(&c.truth, Quarter::Q1))
        .collect();
    c.bench_function("fit_pca_5x1000_tokens", |b| b.iter(|| fit_pca(&q1).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = forward_backward, rollout, pca
}
criterion_main!(benches);
