mod common;

use common::{gaussian_db, gaussian_vec, rng};
use dialeval::attack::{
    brute_force_attack_with, build_index, exact_neighbors, gradient_attack, query_index, realize_attack, RealizeConfig,
    RpForestIndex,
};
use dialeval::linalg::Matrix;
use dialeval::scorer::{score, ScorerParams};
use dialeval::Execution;
use proptest::prelude::*;
use rand::Rng;

fn params(rng: &mut rand_chacha::ChaCha8Rng, n: usize) -> ScorerParams {
    ScorerParams::new(
        Matrix::from_row_major(n, gaussian_vec(rng, n * n)).unwrap(),
        Matrix::from_row_major(n, gaussian_vec(rng, n * n)).unwrap(),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.5..2.0),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_hits_target(seed in any::<u64>(), target in -10.0f64..10.0) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=16);
        let p = params(&mut rng, n);
        let (c, r, s) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n));
        let x = gradient_attack(&c, &r, &p, &s, target).unwrap();
        prop_assert!((score(&c, &r, &x, &p).unwrap() - target).abs() < 1e-9);
    }

    #[test]
    fn dominance_chain(seed in any::<u64>(), k in 1usize..60, budget in 1usize..400) {
        let mut rng = rng(seed);
        let db = gaussian_db(400, 6, seed);
        let index = build_index(&db, 4, 12, seed).unwrap();
        let p = params(&mut rng, 6);
        let (c, r) = (gaussian_vec(&mut rng, 6), gaussian_vec(&mut rng, 6));
        let cfg = RealizeConfig { k, search_budget: budget, start: None };
        let res = realize_attack(&c, &r, &p, &db, &index, 4.0, &cfg).unwrap();
        let (_, brute) = brute_force_attack_with(&c, &r, &p, &db, Execution::Sequential).unwrap();
        prop_assert_eq!(res.neighbors.len(), k);
        prop_assert!(brute >= res.best_score);
        prop_assert!(res.neighbors.iter().all(|n| n.score <= res.best_score));
        prop_assert!(res.neighbors.windows(2).all(|w| w[0].distance <= w[1].distance));
        prop_assert!((res.achieved_exact_score - 4.0).abs() < 1e-9);
    }
}

#[test]
fn brute_force_is_partition_independent() {
    let mut rng = rng(3);
    // repeats make ties likely
    let base = gaussian_db(50, 4, 1);
    let data: Vec<f32> = (0..10_000).flat_map(|i| base.embedding(i % 50).to_vec()).collect();
    let db = dialeval::attack::ResponseDatabase::from_f32(
        (0..10_000).map(|i| base.response(i % 50).clone()).collect(),
        4,
        data,
    )
    .unwrap();
    for _ in 0..10 {
        let p = params(&mut rng, 4);
        let (c, r) = (gaussian_vec(&mut rng, 4), gaussian_vec(&mut rng, 4));
        let seq = brute_force_attack_with(&c, &r, &p, &db, Execution::Sequential).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| brute_force_attack_with(&c, &r, &p, &db, Execution::Parallel).unwrap());
        assert_eq!(seq, par);
        assert!(seq.0 < 50, "lowest id among equal scores");
    }
}

#[test]
fn index_persistence_round_trips() {
    let db = gaussian_db(3000, 10, 4);
    let index = build_index(&db, 6, 16, 21).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("forest.rpf");
    index.save(&path).unwrap();
    let loaded = RpForestIndex::load(&path).unwrap();
    assert_eq!(loaded, index);
    assert_eq!(
        std::fs::read(&path).unwrap(),
        build_index(&db, 6, 16, 21).unwrap().to_bytes()
    );
    let mut rng = rng(5);
    for _ in 0..100 {
        let q = gaussian_vec(&mut rng, 10);
        assert_eq!(
            query_index(&loaded, &db, &q, 15, 300).unwrap(),
            query_index(&index, &db, &q, 15, 300).unwrap()
        );
    }
}

#[test]
fn exhaustive_budget_equals_exact_search() {
    let db = gaussian_db(2000, 16, 8);
    let index = build_index(&db, 10, 16, 1).unwrap();
    let budget = index.node_count();
    let mut rng = rng(9);
    for _ in 0..100 {
        let q = gaussian_vec(&mut rng, 16);
        assert_eq!(
            query_index(&index, &db, &q, 20, budget).unwrap(),
            exact_neighbors(&db, &q, 20)
        );
    }
    // k beyond the database returns everything, ranked
    let all = query_index(&index, &db, &db.embedding_f64(7), 5000, 10).unwrap();
    assert_eq!(all.len(), 2000);
    assert_eq!(all[0].id, 7);
    assert_eq!(all[0].distance, 0.0);
}
