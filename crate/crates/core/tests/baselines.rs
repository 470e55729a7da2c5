use proptest::prelude::*;

use variant_forecast::baselines::{
    d3bp_kton_mean, d3bp_total_mean, i3bp_kton_mean, i3bp_total_mean, Bp3Params, I3bpParams,
};
use variant_forecast::model::CountPair;

fn bp3() -> impl Strategy<Value = Bp3Params> {
    (0.1f64..100.0, 0.05f64..10.0, 0.0f64..0.95).prop_map(|(a, c, s)| Bp3Params::new(a, c, s).unwrap())
}

fn pair() -> impl Strategy<Value = CountPair> {
    (0u64..30, 0u64..30).prop_map(|(a, b)| CountPair::new(a, b))
}

#[test]
fn no_discount_kton_sum_equals_total() {
    let p = Bp3Params::new(3.0, 2.0, 0.0).unwrap();
    for (n, m) in [((0, 0), (2, 3)), ((1, 2), (3, 1)), ((4, 0), (2, 2))] {
        let (n, m) = (CountPair::new(n.0, n.1), CountPair::new(m.0, m.1));
        let mut sum = 0.0;
        for k1 in 0..=m.p1 {
            for k2 in 0..=m.p2 {
                if k1 + k2 > 0 {
                    sum += d3bp_kton_mean(n, m, CountPair::new(k1, k2), &p).unwrap();
                }
            }
        }
        let total = d3bp_total_mean(n, m, &p).unwrap();
        assert!(((sum - total) / total).abs() < 1e-12, "{sum} vs {total}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn d3bp_ignores_population_labels(p in bp3(), n in pair(), m in pair(), k in pair()) {
        prop_assume!(k.fits_within(&m) && k.total() > 0);
        let a = d3bp_kton_mean(n, m, k, &p).unwrap();
        let b = d3bp_kton_mean(n.swapped(), m.swapped(), k.swapped(), &p).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn i3bp_total_is_additive(p1 in bp3(), p2 in bp3(), n in pair(), m in pair()) {
        let q = I3bpParams { pop1: p1, pop2: p2 };
        let whole = i3bp_total_mean(n, m, &q).unwrap();
        let one = d3bp_total_mean(CountPair::new(n.p1, 0), CountPair::new(m.p1, 0), &p1).unwrap();
        let two = d3bp_total_mean(CountPair::new(n.p2, 0), CountPair::new(m.p2, 0), &p2).unwrap();
        prop_assert_eq!(whole, one + two);
    }

    #[test]
    fn baseline_means_are_nonnegative_and_linear_in_mass(
        p in bp3(),
        scale in 0.01f64..100.0,
        n in pair(),
        m in pair(),
        k in pair(),
    ) {
        prop_assume!(k.fits_within(&m) && k.total() > 0);
        let q = I3bpParams { pop1: p, pop2: p };
        let scaled = p.with_alpha(p.alpha * scale);
        let qs = I3bpParams { pop1: scaled, pop2: scaled };
        let pairs = [
            (d3bp_kton_mean(n, m, k, &p).unwrap(), d3bp_kton_mean(n, m, k, &scaled).unwrap()),
            (d3bp_total_mean(n, m, &p).unwrap(), d3bp_total_mean(n, m, &scaled).unwrap()),
            (i3bp_kton_mean(n, m, k, &q).unwrap(), i3bp_kton_mean(n, m, k, &qs).unwrap()),
            (i3bp_total_mean(n, m, &q).unwrap(), i3bp_total_mean(n, m, &qs).unwrap()),
        ];
        for (a, b) in pairs {
            prop_assert!(a >= 0.0);
            prop_assert!((b - scale * a).abs() <= 1e-12 * b.max(1e-300));
        }
    }
}
