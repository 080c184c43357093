mod common;

use proptest::prelude::*;
use pubbias::datasets::education;
use pubbias::likelihood::ProbeRay;
use pubbias::{LogLikContext, MetaDataset};

fn dataset_strategy() -> impl Strategy<Value = MetaDataset> {
    (3usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(|(y, u)| MetaDataset::from_effects(&y, &u).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_sum_to_one(data in dataset_strategy(), theta in -3.0f64..3.0, sigma2 in 0.0f64..3.0) {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        let h = ctx.h_matrix(theta, sigma2).unwrap();
        for i in 0..h.n() {
            prop_assert!((h.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn scaling_shifts_by_log_c(
        data in dataset_strategy(),
        theta in -1.0f64..1.0,
        sigma2 in 0.0f64..1.0,
        seed in any::<u64>(),
        c in 0.1f64..10.0,
    ) {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        let w: Vec<f64> = (0..ctx.k()).map(|j| 0.05 + 0.9 * ((seed >> (j % 60)) & 1) as f64).collect();
        let cw: Vec<f64> = w.iter().map(|x| c * x).collect();
        let base = ctx.log_likelihood(&w, theta, sigma2);
        let diff = ctx.log_likelihood(&cw, theta, sigma2) - base;
        prop_assert!((diff - ctx.scaling_shift(c)).abs() <= 1e-10 * (1.0 + base.abs()));
        prop_assert!((ctx.scaling_shift(c) - c.ln()).abs() <= 1e-12);
    }

    #[test]
    fn other_lambda1_shifts_by_excess(theta in -1.0f64..1.0, sigma2 in 0.0f64..1.0, lambda1 in 0.5f64..4.0, c in 0.1f64..10.0) {
        let ctx = LogLikContext::new(&education(), lambda1).unwrap();
        let w = [0.2, 0.3, 0.3, 0.6, 0.9, 1.0];
        let cw: Vec<f64> = w.iter().map(|x| c * x).collect();
        let diff = ctx.log_likelihood(&cw, theta, sigma2) - ctx.log_likelihood(&w, theta, sigma2);
        prop_assert!((diff - c.ln() * (lambda1 - 1.0)).abs() <= 1e-10);
    }
}

#[test]
fn likelihood_is_coercive_on_simulated_data() {
    for data in common::test_datasets() {
        let ctx = LogLikContext::with_default_lambda(&data).unwrap();
        let k = ctx.k();
        let w: Vec<f64> = (0..k)
            .map(|j| 0.3 + 0.7 * j as f64 / (k - 1) as f64)
            .collect();
        for ray in [
            ProbeRay::Theta { direction: 1.0 },
            ProbeRay::Theta { direction: -1.0 },
            ProbeRay::Sigma2,
            ProbeRay::WeightToZero { group: 0 },
        ] {
            let r = ctx.coercivity_probe(&w, 0.1, 0.1, ray, 30).unwrap();
            assert!(r.eventually_decreasing, "{ray:?}: {:?}", r.points);
            assert!(r.drop > 10.0, "{ray:?}: drop {}", r.drop);
        }
    }
}
