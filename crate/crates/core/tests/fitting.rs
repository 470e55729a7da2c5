use proptest::prelude::*;

use variant_forecast::baselines::{Bp3Params, I3bpParams};
use variant_forecast::data::{count_new_ktons, KtonTable};
use variant_forecast::fitting::{
    central_gradient, fit_d3bp, fit_i3bp, fit_proposed, five_point_gradient, hyperparams_from_unconstrained,
    hyperparams_to_unconstrained, proposed_objective, split_pilot, FitConfig, FittedParams, Objective, ProposedLoss,
};
use variant_forecast::model::{CountPair, Hyperparams};
use variant_forecast::numerics::QuadratureConfig;
use variant_forecast::simulation::{sample_i3bp, sample_ibp_3bp, sample_observed, split_pooled, SimConfig};

fn training_set(v: u64) -> (CountPair, CountPair, KtonTable) {
    let truth = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0).unwrap();
    let data = sample_observed(&truth, &SimConfig::new(CountPair::new(60, 60), 9).with_subdivisions(4)).unwrap();
    let (train, test) = split_pilot(&data, &FitConfig::default()).unwrap();
    let counts = count_new_ktons(&train, &test, v).unwrap();
    (train.sizes(), test.sizes(), counts)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[test]
fn objective_is_deterministic() {
    let (n, m, counts) = training_set(4);
    let cfg = QuadratureConfig::default();
    let a = proposed_objective(n, m, &counts, &Hyperparams::INIT, 4, &cfg).unwrap();
    let b = proposed_objective(n, m, &counts, &Hyperparams::INIT, 4, &cfg).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn central_gradient_agrees_with_five_point_stencil() {
    let (n, m, counts) = training_set(10);
    let mut loss = ProposedLoss::new(n, m, counts, QuadratureConfig::default()).unwrap();
    let z0 = hyperparams_to_unconstrained(&Hyperparams::INIT);
    loss.anchor(&z0);
    let g2 = central_gradient(&loss, &z0, 1e-4);
    let g4 = five_point_gradient(&loss, &z0, 1e-3);
    let scale = g4.iter().fold(0.0f64, |a, g| a.max(g.abs()));
    for (i, (a, b)) in g2.iter().zip(&g4).enumerate() {
        assert!((a - b).abs() <= 1e-4 * b.abs().max(1e-6 * scale), "coordinate {i}: {a} vs {b}");
    }
}

#[test]
fn short_fits_respect_parameter_ranges() {
    let truth = Hyperparams::new(100.0, 0.4, 0.6, 0.5, 0.5, 1.0, 1.0).unwrap();
    let data = sample_observed(&truth, &SimConfig::new(CountPair::new(40, 40), 1).with_subdivisions(4)).unwrap();
    let cfg = FitConfig {
        v: 3,
        optimizer_max_iter: 8,
        ..FitConfig::default()
    };
    let r = fit_proposed(&data, &cfg, &QuadratureConfig::default().with_rel_tol(1e-6)).unwrap();
    let FittedParams::Proposed(phi) = r.params else { panic!("wrong model") };
    phi.validate().unwrap();
    assert!(r.objective_final >= r.objective_init);

    let r = fit_d3bp(&data, &cfg).unwrap();
    let FittedParams::D3bp(p) = r.params else { panic!("wrong model") };
    p.validate().unwrap();
    assert!(r.objective_final >= r.objective_init);
}

#[test]
fn independent_fit_recovers_the_discount() {
    let p = Bp3Params::new(20.0, 1.0, 0.6).unwrap();
    let truth = I3bpParams { pop1: p, pop2: p };
    let mut sigmas = [Vec::new(), Vec::new()];
    for seed in 0..20 {
        let data = sample_i3bp(&truth, CountPair::new(300, 300), seed).unwrap();
        let r = fit_i3bp(&data, &FitConfig { seed, ..FitConfig::default() }).unwrap();
        let FittedParams::I3bp(q) = r.params else { panic!("wrong model") };
        sigmas[0].push(q.pop1.sigma);
        sigmas[1].push(q.pop2.sigma);
    }
    for s in sigmas {
        let med = median(s);
        assert!((med - 0.6).abs() <= 0.15, "median σ {med}");
    }
}

#[test]
fn pooled_fit_recovers_the_discount() {
    let p = Bp3Params::new(20.0, 1.0, 0.5).unwrap();
    let mut sigmas = Vec::new();
    for seed in 0..20 {
        let pooled = sample_ibp_3bp(&p, 600, seed).unwrap();
        let data = split_pooled(&pooled, CountPair::new(300, 300), seed).unwrap();
        let r = fit_d3bp(&data, &FitConfig { seed, ..FitConfig::default() }).unwrap();
        let FittedParams::D3bp(q) = r.params else { panic!("wrong model") };
        sigmas.push(q.sigma);
    }
    let med = median(sigmas);
    assert!((med - 0.5).abs() <= 0.15, "median σ {med}");
}

fn hyperparams() -> impl Strategy<Value = Hyperparams> {
    (
        1.0f64..2000.0,
        0.05f64..0.95,
        0.05f64..0.95,
        0.2f64..3.0,
        0.2f64..3.0,
        0.2f64..5.0,
        0.2f64..5.0,
    )
        .prop_map(|(a, s1, s2, f1, f2, c1, c2)| Hyperparams::new(a, s1, s2, f1, f2, c1, c2).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_survives_the_unconstrained_round_trip(phi in hyperparams()) {
        let (n, m, counts) = training_set(3);
        let cfg = QuadratureConfig::default();
        let back = hyperparams_from_unconstrained(&hyperparams_to_unconstrained(&phi)).unwrap();
        let a = proposed_objective(n, m, &counts, &phi, 3, &cfg).unwrap();
        let b = proposed_objective(n, m, &counts, &back, 3, &cfg).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn every_unconstrained_point_is_valid(z in proptest::collection::vec(-30.0f64..30.0, 7)) {
        let phi = hyperparams_from_unconstrained(&z).unwrap();
        prop_assert!(phi.validate().is_ok());
    }
}
