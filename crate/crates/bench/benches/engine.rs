//! Criterion benchmarks for the optimization engine's hot paths: exact
//! hypervolume, archive updates, encoding, rollouts, and the scalar DP.

use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use nhde_core::autodiff::Tape;
use nhde_core::baselines::ws_dp_knapsack;
use nhde_core::hga::{decoder_weights, encode, rollout, BoundParams, ModelConfig, ModelParams, RolloutMode, Variant};
use nhde_core::mpo::{full_update_oracle, mpo_update, select_top_j, select_top_k, MpoMode};
use nhde_core::pareto::{hv_exact, nondominated_filter, ParetoArchive, ReferenceBox};
use nhde_core::problems::{generate, ProblemKind};
use nhde_core::rng::SeedStreams;
use nhde_core::scalarization::{DiversityFactor, Weight};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn random_front(rng: &mut ChaCha12Rng, m: usize, raw_count: usize) -> Vec<Vec<f64>> {
    let raw: Vec<Vec<f64>> = (0..raw_count)
        .map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    nondominated_filter(&raw)
}

fn bench_hv_exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("hv_exact");
    for &(m, raw) in &[(2usize, 50usize), (3, 50), (3, 200)] {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let front = random_front(&mut rng, m, raw);
        let r = vec![10.0; m];
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("M{m}_pts{}", front.len())),
            &front,
            |b, front| b.iter(|| hv_exact(front, &r).unwrap()),
        );
    }
    group.finish();
}

fn bench_archive_updates(c: &mut Criterion) {
    let mut group = c.benchmark_group("archive_update");
    let mut rng = ChaCha12Rng::seed_from_u64(11);
    let m = 2;
    let bx = ReferenceBox::new(vec![10.0; m], vec![0.0; m]).unwrap();
    let weight = Weight::new(vec![0.5, 0.5]).unwrap();
    let seeded: Vec<Vec<f64>> = (0..60)
        .map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();
    let candidates: Vec<Vec<f64>> = (0..40)
        .map(|_| (0..m).map(|_| rng.gen_range(0.0..10.0)).collect())
        .collect();

    group.bench_function("incremental_k5_j20", |b| {
        b.iter_batched(
            || {
                let mut archive = ParetoArchive::new();
                for (i, p) in seeded.iter().enumerate() {
                    archive.insert(p.clone(), i);
                }
                archive
            },
            |mut archive| {
                let surrogate = select_top_k(&archive, &weight, 5, &bx);
                let picked = select_top_j(&candidates, &weight, 20);
                let batch: Vec<(Vec<f64>, usize)> =
                    picked.iter().map(|&i| (candidates[i].clone(), i)).collect();
                mpo_update(&mut archive, &surrogate, batch, MpoMode::ArchivePreserving)
            },
            BatchSize::SmallInput,
        )
    });
    group.bench_function("full_recompute_oracle", |b| {
        let front: Vec<Vec<f64>> = nondominated_filter(&seeded);
        b.iter(|| full_update_oracle(&front, &candidates))
    });
    group.finish();
}

fn bench_encode_and_rollout(c: &mut Criterion) {
    let streams = SeedStreams::new(3);
    let cfg = ModelConfig { variant: Variant::NhdeP, ..ModelConfig::default() };
    let params = ModelParams::init(cfg.clone(), ProblemKind::Motsp, 2, &streams).unwrap();
    let instance = generate(ProblemKind::Motsp, 20, 2, 5).unwrap();
    let bx = ReferenceBox::for_problem(ProblemKind::Motsp, 20, 2).unwrap();
    let points = vec![
        vec![4.0, 16.0],
        vec![8.0, 11.0],
        vec![13.0, 6.0],
        vec![bx.r[0], bx.r[1]],
    ];
    let weight = Weight::new(vec![0.4, 0.6]).unwrap();
    let div = DiversityFactor::new(0.5, 0.5).unwrap();

    c.bench_function("encode_tsp20_k4", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, &params);
            encode(&mut tape, &bound, &cfg, &instance, &points, &bx, None)
        })
    });

    c.bench_function("rollout_tsp20_10starts", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let bound = BoundParams::bind(&mut tape, &params);
            let emb = encode(&mut tape, &bound, &cfg, &instance, &points, &bx, None);
            let dec = decoder_weights(
                &mut tape,
                &bound,
                &cfg,
                ProblemKind::Motsp,
                2,
                &weight,
                div,
            )
            .unwrap();
            let starts: Vec<usize> = (0..10).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(1);
            rollout(
                &mut tape,
                &cfg,
                &instance,
                &emb,
                &dec,
                &starts,
                RolloutMode::Greedy,
                false,
                &mut rng,
            )
            .unwrap()
        })
    });
}

fn bench_ws_dp(c: &mut Criterion) {
    let instance = generate(ProblemKind::Mokp, 50, 2, 9).unwrap();
    let weight = Weight::new(vec![0.3, 0.7]).unwrap();
    c.bench_function("ws_dp_knapsack_n50", |b| {
        b.iter(|| ws_dp_knapsack(&instance, &weight, 1e3).unwrap())
    });
}

criterion_group!(
    benches,
    bench_hv_exact,
    bench_archive_updates,
    bench_encode_and_rollout,
    bench_ws_dp
);
criterion_main!(benches);
