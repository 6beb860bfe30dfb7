mod common;

use common::{gaussian_vec, rng};
use dialeval::linalg::Matrix;
use dialeval::scorer::{affine_form, score, stable_step_size, train, ScorerParams, TrainConfig, TrainSample};
use proptest::prelude::*;
use rand::Rng;

fn params(seed: u64, n: usize, alpha: f64, beta: f64) -> ScorerParams {
    let mut rng = rng(seed);
    ScorerParams::new(
        Matrix::from_row_major(n, gaussian_vec(&mut rng, n * n)).unwrap(),
        Matrix::from_row_major(n, gaussian_vec(&mut rng, n * n)).unwrap(),
        alpha,
        beta,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn affine_in_the_candidate(seed in any::<u64>(), lambda in -2.0f64..3.0) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=12);
        let p = params(seed ^ 1, n, rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0));
        let (c, r, a, b) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n));
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
        let lhs = score(&c, &r, &mix, &p).unwrap();
        let rhs = lambda * score(&c, &r, &a, &p).unwrap() + (1.0 - lambda) * score(&c, &r, &b, &p).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
        let form = affine_form(&c, &r, &p).unwrap();
        prop_assert!((form.eval(&mix) - lhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn scaling_laws(seed in any::<u64>(), t in 0.1f64..10.0) {
        let mut rng = rng(seed);
        let n = rng.random_range(1..=12);
        let (alpha, beta) = (rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0));
        let p = params(seed ^ 2, n, alpha, beta);
        let (c, r, x) = (gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n), gaussian_vec(&mut rng, n));
        let s = score(&c, &r, &x, &p).unwrap();
        // candidate scaled by t scales score + α/β by t
        let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
        let st = score(&c, &r, &tx, &p).unwrap();
        prop_assert!(((st + alpha / beta) - t * (s + alpha / beta)).abs() < 1e-9 * (1.0 + st.abs()));
        // (tM, tN, tα, tβ) gives the same scores
        let mut m = p.m().clone();
        let mut nn = p.n().clone();
        m.scale(t);
        nn.scale(t);
        let q = ScorerParams::new(m, nn, t * alpha, t * beta).unwrap();
        prop_assert!((score(&c, &r, &x, &q).unwrap() - s).abs() < 1e-12 * (1.0 + s.abs()));
    }
}

#[test]
fn consistent_data_trains_to_zero_loss() {
    let truth = params(9, 3, 0.2, 1.0);
    let mut rng = rng(10);
    let data: Vec<TrainSample> = (0..40)
        .map(|_| {
            let (c, r, x) = (
                gaussian_vec(&mut rng, 3),
                gaussian_vec(&mut rng, 3),
                gaussian_vec(&mut rng, 3),
            );
            let human = score(&c, &r, &x, &truth).unwrap();
            TrainSample {
                context: c,
                reference: r,
                candidate: x,
                human,
            }
        })
        .collect();
    let cfg = TrainConfig {
        gamma: 0.0,
        step_size: stable_step_size(&data, 1.0, 0.0).unwrap(),
        epochs: 3000,
        seed: 0,
    };
    let out = train(&data, &cfg, ScorerParams::identity(3, 0.2, 1.0).unwrap()).unwrap();
    assert!(out.losses.windows(2).all(|w| w[1] <= w[0]));
    assert!(*out.losses.last().unwrap() < 1e-6 * out.initial_loss);
}
