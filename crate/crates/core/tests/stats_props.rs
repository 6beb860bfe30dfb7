use dialeval::stats::{average_ranks, pearson, spearman};
use proptest::prelude::*;

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (3usize..=12).prop_flat_map(|n| {
        let value = prop_oneof![(-5i32..5).prop_map(f64::from), -10.0f64..10.0];
        (prop::collection::vec(value.clone(), n), prop::collection::vec(value, n))
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn symmetric_and_affine_invariant((x, y) in pair(), scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let (Ok(p), Ok(s)) = (pearson(&x, &y), spearman(&x, &y)) else { return Ok(()); };
        prop_assert!(close(p, pearson(&y, &x).unwrap()));
        prop_assert!(close(s, spearman(&y, &x).unwrap()));
        let moved: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        prop_assert!(close(p, pearson(&moved, &y).unwrap()));
        prop_assert!(close(s, spearman(&moved, &y).unwrap()));
        prop_assert!((-1.0..=1.0).contains(&p) && (-1.0..=1.0).contains(&s));
    }

    #[test]
    fn spearman_is_pearson_on_untied_ranks(perm in Just((1..=10).map(f64::from).collect::<Vec<_>>()).prop_shuffle(),
                                           other in Just((1..=10).map(f64::from).collect::<Vec<_>>()).prop_shuffle()) {
        prop_assert_eq!(average_ranks(&perm), perm.clone());
        prop_assert_eq!(spearman(&perm, &other).unwrap(), pearson(&perm, &other).unwrap());
    }
}
