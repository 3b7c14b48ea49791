use proptest::prelude::*;
use stable_cir::experiments::{ks_normal, rep_seed};
use stable_cir::inference::{brownian_error_term, estimate_sigma2, mle_b, Method};
use stable_cir::model::theta0;
use stable_cir::simulate::{integrate_path, replay, simulate_path};
use stable_cir::transforms::{k_fun, k_inverse, laplace_y};
use stable_cir::ModelParams;

fn params() -> impl Strategy<Value = ModelParams> {
    (0.0f64..2.0, -1.0f64..1.0, 0.0f64..1.5, 0.1f64..1.5, 1.1f64..1.9, 0.0f64..3.0)
        .prop_map(|(a, b, s, d, al, y0)| ModelParams::new(a, b, s, d, al, y0).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 48,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn paths_are_nonnegative_and_replayable(p in params(), seed in any::<u64>(), n in 1usize..800) {
        let path = simulate_path(&p, 2.0, n, seed).unwrap();
        prop_assert_eq!(path.values.len(), n + 1);
        prop_assert!(path.values.iter().all(|y| *y >= 0.0 && y.is_finite()));
        prop_assert_eq!(replay(&path).unwrap(), path.values.clone());
        prop_assert_eq!(simulate_path(&p, 2.0, n, seed).unwrap(), path);
    }

    #[test]
    fn full_information_error_identity(p in params(), seed in any::<u64>()) {
        prop_assume!(p.sigma > 0.0);
        let path = simulate_path(&p, 3.0, 3000, seed).unwrap();
        prop_assume!(path.projections == 0 && integrate_path(&path) > 1e-3);
        let r = mle_b(&path, Method::FullInformation, &p, None).unwrap();
        let err = brownian_error_term(&path).unwrap();
        let scale: f64 = path.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / r.integral_y
            + p.a * 3.0 / r.integral_y + p.b.abs();
        prop_assert!(((r.b_hat - p.b) - err).abs() <= 3000.0 * f64::EPSILON * scale);
    }

    #[test]
    fn sigma2_is_nonnegative(p in params(), seed in any::<u64>()) {
        let path = simulate_path(&p, 1.0, 500, seed).unwrap();
        if let Ok(s) = estimate_sigma2(&path) {
            prop_assert!(s >= 0.0);
        }
    }

    #[test]
    fn laplace_y_is_a_probability_transform(p in params(), l in 0.0f64..5.0, t in 0.0f64..5.0) {
        let v = laplace_y(&p, l, t).unwrap().value;
        prop_assert!(v > 0.0 && v <= 1.0 + 1e-12);
        if t == 0.0 {
            prop_assert!((v - (-l * p.y0).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn k_inverse_round_trip(b in -1.5f64..-0.1, sigma in 0.0f64..1.5, alpha in 1.2f64..1.8, lx in -4.0f64..4.0) {
        let p = ModelParams::new(1.0, b, sigma, 1.0, alpha, 1.0).unwrap();
        let x = 10f64.powf(lx);
        let l = k_inverse(&p, x).unwrap();
        prop_assert!(l > 0.0 && l < theta0(&p).unwrap());
        prop_assert!((k_fun(&p, l).unwrap() - x).abs() <= 1e-8 * x);
    }

    #[test]
    fn ks_p_value_is_a_probability(xs in proptest::collection::vec(-5.0f64..5.0, 20..200)) {
        let r = ks_normal(&xs).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
        prop_assert!(r.statistic > 0.0 && r.statistic <= 1.0);
    }

    #[test]
    fn replication_seeds_differ_across_reps(base in any::<u64>(), rep in 0usize..10_000) {
        prop_assert_ne!(rep_seed(base, rep, 0), rep_seed(base, rep + 1, 0));
        prop_assert_ne!(rep_seed(base, rep, 0), rep_seed(base, rep, 1));
    }
}
