use proptest::prelude::*;

use variant_forecast::model::{kton_predictive_mean, total_predictive_mean, CountPair, Hyperparams, Predictor};
use variant_forecast::numerics::QuadratureConfig;

fn cfg() -> QuadratureConfig {
    QuadratureConfig::default()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn pair(a: u64, b: u64) -> CountPair {
    CountPair::new(a, b)
}

// Adaptive Gauss-Kronrod on the explicit thinned-rate integrand, 30 digits.
#[test]
fn kton_reference_values() {
    let flat = Hyperparams::new(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
    let skewed = Hyperparams::new(5.0, 0.4, 0.6, 0.5, 0.7, 1.5, 2.0).unwrap();
    let sparse = Hyperparams::new(10.0, 0.3, 0.6, 0.1, 0.1, 1.0, 1.0).unwrap();
    let cases = [
        (pair(0, 0), pair(1, 1), pair(1, 0), flat, 0.965_143_500_112_804_5),
        (pair(2, 3), pair(2, 1), pair(1, 1), skewed, 0.233_122_353_298_172_94),
        (pair(4, 1), pair(3, 2), pair(0, 1), skewed, 10.513_280_660_582_47),
        (pair(10, 5), pair(20, 10), pair(2, 0), sparse, 0.538_166_000_731_397_9),
    ];
    for (n, m, k, phi, expected) in cases {
        let got = kton_predictive_mean(n, m, k, &phi, &cfg()).unwrap();
        assert!(rel(got.lambda, expected) < 1e-9, "N {n} M {m} k {k}: {} vs {expected}", got.lambda);
        assert!(got.quad_error < 1e-8 * expected);
    }
}

#[test]
fn first_moment_is_closed_form() {
    // ∫∫ θ₂ (θ₁+θ₂)^{-5/2} = 4 - 2√2
    let flat = Hyperparams::new(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
    let expected = 4.0 - 2.0 * 2f64.sqrt();
    for (m, k) in [(pair(0, 1), pair(0, 1)), (pair(1, 0), pair(1, 0))] {
        let got = kton_predictive_mean(CountPair::ZERO, m, k, &flat, &cfg()).unwrap();
        assert!(rel(got.lambda, expected) < 1e-9, "{}", got.lambda);
    }
}

#[test]
fn total_matches_kton_sum_at_three_by_three() {
    let flat = Hyperparams::new(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
    let m = pair(3, 3);
    let mut sum = 0.0;
    for k1 in 0..=3 {
        for k2 in 0..=3 {
            if k1 + k2 > 0 {
                sum += kton_predictive_mean(CountPair::ZERO, m, pair(k1, k2), &flat, &cfg()).unwrap().lambda;
            }
        }
    }
    let total = total_predictive_mean(CountPair::ZERO, m, &flat, &cfg()).unwrap().lambda;
    assert!(rel(total, sum) < 1e-8, "{total} vs {sum}");
}

#[test]
fn empty_follow_up_and_large_studies() {
    let phi = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0).unwrap();
    assert_eq!(total_predictive_mean(pair(7, 3), CountPair::ZERO, &phi, &cfg()).unwrap().lambda, 0.0);
    let big = kton_predictive_mean(pair(2000, 2000), pair(3000, 3000), pair(1, 1), &phi, &cfg()).unwrap();
    assert!(big.lambda.is_finite() && big.lambda > 0.0);
}

fn hyperparams() -> impl Strategy<Value = Hyperparams> {
    (
        0.1f64..50.0,
        0.05f64..0.95,
        0.05f64..0.95,
        0.2f64..3.0,
        0.2f64..3.0,
        0.2f64..5.0,
        0.2f64..5.0,
    )
        .prop_map(|(a, s1, s2, f1, f2, c1, c2)| Hyperparams::new(a, s1, s2, f1, f2, c1, c2).unwrap())
}

fn loose() -> QuadratureConfig {
    QuadratureConfig::default().with_rel_tol(1e-9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn swapping_populations_with_equal_rates(
        phi in hyperparams(),
        n in (0u64..6, 0u64..6),
        m in (1u64..5, 1u64..5),
        k in (0u64..3, 0u64..3),
    ) {
        prop_assume!(k.0 + k.1 > 0 && k.0 <= m.0 && k.1 <= m.1);
        let phi = Hyperparams { sigma2: phi.sigma1, ..phi };
        let (n, m, k) = (pair(n.0, n.1), pair(m.0, m.1), pair(k.0, k.1));
        let a = kton_predictive_mean(n, m, k, &phi, &loose()).unwrap();
        let b = kton_predictive_mean(n.swapped(), m.swapped(), k.swapped(), &phi.swapped(), &loose()).unwrap();
        prop_assert!(rel(a.lambda, b.lambda) < 1e-7, "{} vs {}", a.lambda, b.lambda);
    }

    #[test]
    fn more_pilot_data_means_fewer_new_variants(
        phi in hyperparams(),
        n in (0u64..5, 0u64..5),
        m in (1u64..4, 1u64..4),
        k in (0u64..3, 0u64..3),
    ) {
        prop_assume!(k.0 + k.1 > 0 && k.0 <= m.0 && k.1 <= m.1);
        let (m, k) = (pair(m.0, m.1), pair(k.0, k.1));
        let p = Predictor::new(&phi, &loose()).unwrap();
        let base = p.kton(pair(n.0, n.1), m, k).unwrap().lambda;
        let more1 = p.kton(pair(n.0 + 1, n.1), m, k).unwrap().lambda;
        let more2 = p.kton(pair(n.0, n.1 + 1), m, k).unwrap().lambda;
        prop_assert!(more1 <= base * (1.0 + 1e-8));
        prop_assert!(more2 <= base * (1.0 + 1e-8));
    }

    #[test]
    fn means_scale_linearly_in_mass(
        phi in hyperparams(),
        scale in 0.01f64..100.0,
        n in (0u64..5, 0u64..5),
        m in (0u64..4, 0u64..4),
    ) {
        let (n, m) = (pair(n.0, n.1), pair(m.0, m.1));
        let a = total_predictive_mean(n, m, &phi, &loose()).unwrap().lambda;
        let b = total_predictive_mean(n, m, &phi.with_alpha(phi.alpha * scale), &loose()).unwrap().lambda;
        prop_assert!((b - scale * a).abs() <= 1e-12 * b.abs().max(1e-300));
    }

    // The total follows population 1 first, then population 2; the k-sum
    // does not depend on any order.
    #[test]
    fn total_path_agrees_with_kton_sum(
        phi in hyperparams(),
        n in (0u64..4, 0u64..4),
        m in (0u64..5, 0u64..5),
    ) {
        let (n, m) = (pair(n.0, n.1), pair(m.0, m.1));
        let cfg = QuadratureConfig::default();
        let p = Predictor::new(&phi, &cfg).unwrap();
        let total = p.total(n, m).unwrap().lambda;
        let mut sum = 0.0;
        for k1 in 0..=m.p1 {
            for k2 in 0..=m.p2 {
                if k1 + k2 > 0 {
                    sum += p.kton(n, m, pair(k1, k2)).unwrap().lambda;
                }
            }
        }
        prop_assert!((total - sum).abs() <= 1e-8 * total.max(1e-300), "{total} vs {sum}");
    }

    #[test]
    fn means_are_nonnegative_with_nonnegative_error(
        phi in hyperparams(),
        n in (0u64..50, 0u64..50),
        m in (1u64..20, 1u64..20),
    ) {
        let got = Predictor::new(&phi, &loose()).unwrap().kton_grid(pair(n.0, n.1), pair(m.0, m.1), 2).unwrap();
        prop_assert_eq!(got.len(), 9);
        prop_assert_eq!(got[0].lambda, 0.0);
        for g in got {
            prop_assert!(g.lambda >= 0.0 && g.quad_error >= 0.0);
        }
    }
}
