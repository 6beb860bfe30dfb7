use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dialeval::attack::{brute_force_attack_with, build_index, build_index_with, query_index, ResponseDatabase};
use dialeval::geometry::{spread_report_with, EmbeddingSet};
use dialeval::linalg::Matrix;
use dialeval::par::map_indexed;
use dialeval::scorer::ScorerParams;
use dialeval::stats::{permutation_p_value_with, Statistic};
use dialeval::text::Utterance;
use dialeval::Execution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn database(n: usize, dim: usize) -> ResponseDatabase {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let data = (0..n * dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    ResponseDatabase::from_f32(
        (0..n).map(|i| Utterance::from_tokens([format!("r{i}")])).collect(),
        dim,
        data,
    )
    .unwrap()
}

fn bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 50;
    let db = database(20_000, dim);
    let params = ScorerParams::new(
        Matrix::from_row_major(dim, gaussian(&mut rng, dim * dim)).unwrap(),
        Matrix::from_row_major(dim, gaussian(&mut rng, dim * dim)).unwrap(),
        0.0,
        1.0,
    )
    .unwrap();
    let (ctx, reference) = (gaussian(&mut rng, dim), gaussian(&mut rng, dim));
    let x = gaussian(&mut rng, 500);
    let y: Vec<f64> = x.iter().map(|v| v + rng.sample::<f64, _>(StandardNormal)).collect();
    let small = database(5_000, dim);
    let index = build_index(&db, 20, 16, 3).unwrap();
    let queries: Vec<Vec<f64>> = (0..200).map(|_| gaussian(&mut rng, dim)).collect();
    let set = EmbeddingSet::new((0..1500).map(|_| gaussian(&mut rng, dim)).collect()).unwrap();

    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("brute_force_20k", name), &exec, |b, &e| {
            b.iter(|| brute_force_attack_with(&ctx, &reference, &params, &db, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("permutation_test_999", name), &exec, |b, &e| {
            b.iter(|| permutation_p_value_with(&x, &y, Statistic::Spearman, 999, 4, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("index_build_5k_10_trees", name), &exec, |b, &e| {
            b.iter(|| build_index_with(&small, 10, 16, 5, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("queries_200", name), &exec, |b, &e| {
            b.iter(|| {
                map_indexed(e, queries.len(), |i| {
                    query_index(&index, &db, &queries[i], 10, 2000).unwrap()
                })
            })
        });
        group.bench_with_input(BenchmarkId::new("spread_report_1500", name), &exec, |b, &e| {
            b.iter(|| spread_report_with(&set, 6, e).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
