//! Empirical-Bayes hyperparameter fits for the proposed model and the two
//! 3BP baselines.

mod lbfgs;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{d3bp_kton_mean, single_population_curve, Bp3Params, I3bpParams, RisingConvention};
use crate::data::{count_new_ktons, count_new_ktons_full, KtonTable, VariantDataset};
use crate::error::{Error, Result};
use crate::model::{CountPair, Hyperparams, PredictiveMean, Predictor};
use crate::numerics::{ln_poisson_pmf, QuadratureConfig};

pub use lbfgs::{central_gradient, five_point_gradient, minimize, LbfgsOptions, Minimum, Objective};

/// Log-likelihood charged to a cell with a positive count and zero mean.
pub const ZERO_MEAN_PENALTY: f64 = -1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// k-tons with a component above `v` are left out of the likelihood.
    pub v: u64,
    /// Share of each population's pilot used as training data.
    pub train_fraction: f64,
    pub optimizer_max_iter: usize,
    /// Central-difference step in the unconstrained coordinates.
    pub fd_step: f64,
    /// Gradient tolerance of the optimizer.
    pub grad_tol: f64,
    /// Highest quadrature level used while optimizing the proposed model.
    pub max_quad_level: u32,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            v: 10,
            train_fraction: 0.5,
            optimizer_max_iter: 200,
            fd_step: 1e-4,
            grad_tol: 1e-5,
            max_quad_level: 7,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.v < 1 {
            return Err(Error::InvalidArgument("v must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "train_fraction must lie in (0, 1) (got {})",
                self.train_fraction
            )));
        }
        if !(self.fd_step > 0.0) {
            return Err(Error::InvalidArgument(format!("fd_step must be positive (got {})", self.fd_step)));
        }
        Ok(())
    }

    fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions {
            max_iter: self.optimizer_max_iter,
            grad_tol: self.grad_tol,
            fd_step: self.fd_step,
            ..LbfgsOptions::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FittedParams {
    Proposed(Hyperparams),
    D3bp(Bp3Params),
    I3bp(I3bpParams),
}

impl FittedParams {
    pub fn model_name(&self) -> &'static str {
        match self {
            FittedParams::Proposed(_) => "proposed",
            FittedParams::D3bp(_) => "d3bp",
            FittedParams::I3bp(_) => "i3bp",
        }
    }
}

/// Outcome of a fit. Objectives are maximized; for the i3BP fit they are the
/// negated squared-error losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: FittedParams,
    pub objective_init: f64,
    pub objective_final: f64,
    pub iterations: usize,
    pub converged: bool,
    pub seed: u64,
}

impl FitResult {
    fn new(params: FittedParams, m: &Minimum, seed: u64) -> Self {
        FitResult {
            model: params.model_name().into(),
            params,
            objective_init: -m.f_init,
            objective_final: -m.f,
            iterations: m.iterations,
            converged: m.converged,
            seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Seeded per-population split into training and held-out samples, with
/// `⌊train_fraction · N_p⌋` training samples in population `p`.
pub fn split_pilot(data: &VariantDataset, cfg: &FitConfig) -> Result<(VariantDataset, VariantDataset)> {
    cfg.validate()?;
    let sizes = data.sizes();
    for p in 0..2 {
        if sizes.get(p) < 2 {
            return Err(Error::InsufficientData(format!(
                "population {} has {} samples; at least 2 are needed",
                p + 1,
                sizes.get(p)
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut parts: [[Vec<usize>; 2]; 2] = Default::default();
    for p in 0..2 {
        let n = sizes.get(p) as usize;
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let n_train = (cfg.train_fraction * n as f64).floor() as usize;
        let (a, b) = idx.split_at(n_train);
        parts[0][p] = a.to_vec();
        parts[1][p] = b.to_vec();
    }
    Ok((
        data.select([&parts[0][0], &parts[0][1]])?,
        data.select([&parts[1][0], &parts[1][1]])?,
    ))
}

/// Sum of Poisson log-probabilities of observed counts given means.
fn poisson_log_likelihood(counts: &KtonTable, mut means: impl FnMut(CountPair) -> f64) -> f64 {
    counts
        .iter()
        .map(|(k, u)| {
            let l = ln_poisson_pmf(u, means(k));
            if l.is_finite() {
                l
            } else {
                ZERO_MEAN_PENALTY
            }
        })
        .sum()
}

fn grid_lookup(means: &[PredictiveMean], v: u64) -> impl Fn(CountPair) -> f64 + '_ {
    move |k: CountPair| means[(k.p1 * (v + 1) + k.p2) as usize].lambda
}

/// Poisson log-likelihood of held-out k-ton counts under the proposed model,
/// over `k` in `0..=v` squared minus the origin.
pub fn proposed_objective(
    train_n: CountPair,
    test_m: CountPair,
    counts: &KtonTable,
    phi: &Hyperparams,
    v: u64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    check_grid(counts, v)?;
    let means = Predictor::new(phi, cfg)?.kton_grid(train_n, test_m, v)?;
    Ok(poisson_log_likelihood(counts, grid_lookup(&means, v)))
}

/// Same likelihood with d3BP means.
pub fn d3bp_objective(train_n: CountPair, test_m: CountPair, counts: &KtonTable, p: &Bp3Params, v: u64) -> Result<f64> {
    check_grid(counts, v)?;
    p.validate()?;
    let mut err = None;
    let ll = poisson_log_likelihood(counts, |k| {
        if !k.fits_within(&test_m) {
            return 0.0;
        }
        d3bp_kton_mean(train_n, test_m, k, p).unwrap_or_else(|e| {
            err = Some(e);
            f64::NAN
        })
    });
    match err {
        Some(e) => Err(e),
        None => Ok(ll),
    }
}

fn check_grid(counts: &KtonTable, v: u64) -> Result<()> {
    if counts.v() != v {
        return Err(Error::InvalidArgument(format!(
            "count table covers 0..={} but v = {v}",
            counts.v()
        )));
    }
    Ok(())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `(ln α, logit σ₁, logit σ₂, ln φ₁, ln φ₂, ln c₁, ln c₂)`.
pub fn hyperparams_to_unconstrained(phi: &Hyperparams) -> [f64; 7] {
    [
        phi.alpha.ln(),
        logit(phi.sigma1),
        logit(phi.sigma2),
        phi.phi1.ln(),
        phi.phi2.ln(),
        phi.c1.ln(),
        phi.c2.ln(),
    ]
}

pub fn hyperparams_from_unconstrained(z: &[f64]) -> Result<Hyperparams> {
    if z.len() != 7 {
        return Err(Error::InvalidArgument(format!("expected 7 coordinates, got {}", z.len())));
    }
    Hyperparams::new(
        z[0].exp(),
        logistic(z[1]),
        logistic(z[2]),
        z[3].exp(),
        z[4].exp(),
        z[5].exp(),
        z[6].exp(),
    )
}

/// `(ln α, logit σ, ln c)`; the fit keeps `c > 0`.
pub fn bp3_to_unconstrained(p: &Bp3Params) -> [f64; 3] {
    [p.alpha.ln(), logit(p.sigma), p.c.ln()]
}

pub fn bp3_from_unconstrained(z: &[f64]) -> Result<Bp3Params> {
    if z.len() != 3 {
        return Err(Error::InvalidArgument(format!("expected 3 coordinates, got {}", z.len())));
    }
    Bp3Params::new(z[0].exp(), z[2].exp(), logistic(z[1]))
}

/// Negated proposed-model likelihood on the unconstrained coordinates. The
/// quadrature level is chosen adaptively at each anchor and held fixed in
/// between, so finite differences see one smooth function.
pub struct ProposedLoss {
    train_n: CountPair,
    test_m: CountPair,
    counts: KtonTable,
    v: u64,
    qcfg: QuadratureConfig,
    level: u32,
}

impl ProposedLoss {
    pub fn new(train_n: CountPair, test_m: CountPair, counts: KtonTable, qcfg: QuadratureConfig) -> Result<Self> {
        qcfg.validate()?;
        Ok(ProposedLoss {
            train_n,
            test_m,
            v: counts.v(),
            counts,
            level: qcfg.max_level,
            qcfg,
        })
    }

    /// Quadrature level fixed by the last anchor.
    pub fn level(&self) -> u32 {
        self.level
    }

    fn loglik(&self, means: &[PredictiveMean]) -> f64 {
        poisson_log_likelihood(&self.counts, grid_lookup(means, self.v))
    }
}

impl Objective for ProposedLoss {
    fn value(&self, z: &[f64]) -> f64 {
        let Ok(phi) = hyperparams_from_unconstrained(z) else {
            return f64::INFINITY;
        };
        Predictor::new(&phi, &self.qcfg)
            .and_then(|p| p.kton_grid_at_level(self.train_n, self.test_m, self.v, self.level))
            .map_or(f64::INFINITY, |m| -self.loglik(&m))
    }

    fn anchor(&mut self, z: &[f64]) -> f64 {
        let Ok(phi) = hyperparams_from_unconstrained(z) else {
            return f64::INFINITY;
        };
        match Predictor::new(&phi, &self.qcfg).and_then(|p| p.kton_grid_best_effort(self.train_n, self.test_m, self.v)) {
            Ok((means, level, _)) => {
                self.level = level;
                -self.loglik(&means)
            }
            Err(_) => f64::INFINITY,
        }
    }
}

fn training_counts(data: &VariantDataset, cfg: &FitConfig) -> Result<(CountPair, CountPair, KtonTable)> {
    let (train, test) = split_pilot(data, cfg)?;
    let counts = count_new_ktons(&train, &test, cfg.v)?;
    Ok((train.sizes(), test.sizes(), counts))
}

/// Maximizes the held-out k-ton likelihood of the proposed model from
/// [`Hyperparams::INIT`].
pub fn fit_proposed(data: &VariantDataset, cfg: &FitConfig, qcfg: &QuadratureConfig) -> Result<FitResult> {
    let (train_n, test_m, counts) = training_counts(data, cfg)?;
    let qcfg = QuadratureConfig {
        max_level: qcfg.max_level.min(cfg.max_quad_level),
        ..*qcfg
    };
    let mut loss = ProposedLoss::new(train_n, test_m, counts, qcfg)?;
    let z0 = hyperparams_to_unconstrained(&Hyperparams::INIT);
    let m = minimize(&mut loss, &z0, &cfg.lbfgs());
    let phi = hyperparams_from_unconstrained(&m.x)?;
    Ok(FitResult::new(FittedParams::Proposed(phi), &m, cfg.seed))
}

/// Maximizes the same likelihood under the d3BP from `(α, σ, c) = (1000, 0.5, 1)`.
pub fn fit_d3bp(data: &VariantDataset, cfg: &FitConfig) -> Result<FitResult> {
    let (train_n, test_m, counts) = training_counts(data, cfg)?;
    let v = cfg.v;
    let mut loss = |z: &[f64]| match bp3_from_unconstrained(z) {
        Ok(p) => d3bp_objective(train_n, test_m, &counts, &p, v).map_or(f64::INFINITY, |l| -l),
        Err(_) => f64::INFINITY,
    };
    let m = minimize(&mut loss, &bp3_to_unconstrained(&Bp3Params::INIT), &cfg.lbfgs());
    Ok(FitResult::new(FittedParams::D3bp(bp3_from_unconstrained(&m.x)?), &m, cfg.seed))
}

/// New-variant growth on a held-out third of one population, averaged over
/// every order of the held-out samples, and the size of the other two thirds.
///
/// A variant carried by `x` of the `m` held-out samples is among the first
/// `j` with probability `1 - C(m-x, j) / C(m, j)`.
fn validation_curve(data: &VariantDataset, pop: usize, seed: u64) -> Result<(u64, Vec<f64>)> {
    let n = data.sizes().get(pop) as usize;
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "population {} has {n} samples; at least 3 are needed for a 2/3 split",
            pop + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pop as u64 + 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    let n_train = 2 * n / 3;
    let mut pick: [Vec<usize>; 2] = Default::default();
    pick[pop] = idx[..n_train].to_vec();
    let mini = data.select([&pick[0], &pick[1]])?;
    pick[pop] = idx[n_train..].to_vec();
    let val = data.select([&pick[0], &pick[1]])?;
    let m = n - n_train;
    let carriers: Vec<(usize, u64)> = count_new_ktons_full(&mini, &val)?
        .into_iter()
        .map(|(k, count)| (k.get(pop) as usize, count))
        .collect();
    let curve = (1..=m)
        .map(|j| {
            carriers
                .iter()
                .map(|&(x, count)| {
                    let missed: f64 = (0..x).map(|i| (m - j).saturating_sub(i) as f64 / (m - i) as f64).product();
                    count as f64 * (1.0 - missed)
                })
                .sum()
        })
        .collect();
    Ok((n_train as u64, curve))
}

/// Squared error of the best-scaled predicted curve, and that scale.
fn profiled_curve_loss(n_train: u64, observed: &[f64], sigma: f64, c: f64) -> Result<(f64, f64)> {
    let unit = Bp3Params::new(1.0, c, sigma)?;
    let shape = single_population_curve(n_train, observed.len() as u64, &unit, RisingConvention::Pochhammer)?;
    let so: f64 = shape.iter().zip(observed).map(|(s, o)| s * o).sum();
    let ss: f64 = shape.iter().map(|s| s * s).sum();
    let alpha = (so / ss).max(f64::MIN_POSITIVE);
    let loss = shape.iter().zip(observed).map(|(s, o)| (alpha * s - o).powi(2)).sum();
    Ok((loss, alpha))
}

/// Per population, the 3BP whose predicted growth curve best matches (in
/// squared error) the new variants seen on a random held-out third.
pub fn fit_i3bp(data: &VariantDataset, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let mut pops = Vec::with_capacity(2);
    let (mut f_init, mut f, mut iterations, mut converged) = (0.0, 0.0, 0, true);
    for pop in 0..2 {
        let (n_train, observed) = validation_curve(data, pop, cfg.seed)?;
        let loss = |z: &[f64]| {
            profiled_curve_loss(n_train, &observed, logistic(z[0]), z[1].exp()).map_or(f64::INFINITY, |r| r.0)
        };
        let z0 = [logit(Bp3Params::INIT.sigma), Bp3Params::INIT.c.ln()];
        let m = minimize(&mut { loss }, &z0, &cfg.lbfgs());
        let (sigma, c) = (logistic(m.x[0]), m.x[1].exp());
        let (_, alpha) = profiled_curve_loss(n_train, &observed, sigma, c)?;
        pops.push(Bp3Params::new(alpha, c, sigma)?);
        f_init += m.f_init;
        f += m.f;
        iterations += m.iterations;
        converged &= m.converged;
    }
    let params = FittedParams::I3bp(I3bpParams {
        pop1: pops[0],
        pop2: pops[1],
    });
    Ok(FitResult::new(
        params,
        &Minimum {
            x: Vec::new(),
            f,
            f_init,
            iterations,
            converged,
        },
        cfg.seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Registry;
    use std::sync::Arc;

    fn dataset(n1: usize, n2: usize) -> VariantDataset {
        let mut d = VariantDataset::new(Arc::new(Registry::numbered(n1 + n2)));
        for i in 0..n1 {
            d.push_sample(0, format!("a{i}"), vec![i as u32]).unwrap();
        }
        for i in 0..n2 {
            d.push_sample(1, format!("b{i}"), vec![(n1 + i) as u32]).unwrap();
        }
        d
    }

    #[test]
    fn split_sizes() {
        let cfg = FitConfig::default();
        let (a, b) = split_pilot(&dataset(10, 8), &cfg).unwrap();
        assert_eq!(a.sizes(), CountPair::new(5, 4));
        assert_eq!(b.sizes(), CountPair::new(5, 4));
        let (a, b) = split_pilot(&dataset(2, 2), &cfg).unwrap();
        assert_eq!((a.sizes(), b.sizes()), (CountPair::new(1, 1), CountPair::new(1, 1)));
        assert!(matches!(split_pilot(&dataset(1, 5), &cfg), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let d = dataset(9, 7);
        let cfg = FitConfig {
            seed: 11,
            ..FitConfig::default()
        };
        let (a, b) = split_pilot(&d, &cfg).unwrap();
        let (a2, _) = split_pilot(&d, &cfg).unwrap();
        assert!(a.same_content(&a2));
        for p in 0..2 {
            let mut ids: Vec<&str> = a.samples(p).iter().chain(b.samples(p)).map(|s| s.id.as_str()).collect();
            ids.sort_unstable();
            ids.dedup();
            assert_eq!(ids.len(), d.sizes().get(p) as usize);
        }
    }

    #[test]
    fn transforms_round_trip() {
        let phi = Hyperparams::new(123.0, 0.37, 0.81, 0.2, 3.0, 0.7, 5.5).unwrap();
        let back = hyperparams_from_unconstrained(&hyperparams_to_unconstrained(&phi)).unwrap();
        for (a, b) in phi.to_array().iter().zip(back.to_array()) {
            assert!(((a - b) / a).abs() < 1e-14);
        }
        let p = Bp3Params::new(20.0, 1.5, 0.3).unwrap();
        let q = bp3_from_unconstrained(&bp3_to_unconstrained(&p)).unwrap();
        assert!((p.alpha - q.alpha).abs() < 1e-12 && (p.c - q.c).abs() < 1e-14 && (p.sigma - q.sigma).abs() < 1e-15);
        assert_eq!(hyperparams_to_unconstrained(&Hyperparams::INIT)[0], 1000f64.ln());
    }

    #[test]
    fn objective_at_the_mode() {
        // One cell with u = λ: the likelihood is the Poisson pmf at its mode.
        let phi = Hyperparams::new(3.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        let qcfg = QuadratureConfig::default();
        let n = CountPair::new(2, 1);
        let m = CountPair::new(1, 0);
        let lambda = Predictor::new(&phi, &qcfg).unwrap().kton(n, m, m).unwrap().lambda;
        let mut counts = KtonTable::zeros(1);
        counts.set(CountPair::new(1, 0), lambda.round()).unwrap();
        let got = proposed_objective(n, m, &counts, &phi.with_alpha(3.0 * lambda.round() / lambda), 1, &qcfg).unwrap();
        let u = lambda.round();
        let expected = u * u.ln() - u - crate::numerics::ln_gamma(u + 1.0);
        assert!((got - expected).abs() < 1e-9, "{got} vs {expected}");
    }

    #[test]
    fn zero_mean_penalty() {
        let mut counts = KtonTable::zeros(2);
        counts.set(CountPair::new(2, 0), 1.0).unwrap();
        let p = Bp3Params::new(5.0, 1.0, 0.5).unwrap();
        // M = (1, 1): no (2, 0)-tons are possible.
        let l = d3bp_objective(CountPair::new(1, 1), CountPair::new(1, 1), &counts, &p, 2).unwrap();
        assert!(l <= ZERO_MEAN_PENALTY);
        assert!(d3bp_objective(CountPair::new(1, 1), CountPair::new(1, 1), &counts, &p, 3).is_err());
    }

    #[test]
    fn cell_count_at_v10() {
        let t = KtonTable::zeros(10);
        assert_eq!(t.iter().count(), 120);
    }

    #[test]
    fn fit_result_json() {
        let r = FitResult {
            model: "d3bp".into(),
            params: FittedParams::D3bp(Bp3Params::INIT),
            objective_init: -5.0,
            objective_final: -1.0,
            iterations: 3,
            converged: true,
            seed: 4,
        };
        let s = r.to_json().unwrap();
        for key in ["model", "params", "objective_init", "objective_final", "iterations", "converged", "seed"] {
            assert!(s.contains(&format!("\"{key}\"")), "{key}");
        }
        assert_eq!(FitResult::from_json(&s).unwrap(), r);
        let p = FitResult {
            params: FittedParams::Proposed(Hyperparams::INIT),
            ..r.clone()
        };
        assert_eq!(FitResult::from_json(&p.to_json().unwrap()).unwrap(), p);
    }

    #[test]
    fn i3bp_loss_is_zero_on_its_own_curve() {
        let p = Bp3Params::new(7.0, 2.0, 0.4).unwrap();
        let obs = single_population_curve(6, 5, &p, RisingConvention::Pochhammer).unwrap();
        let (loss, alpha) = profiled_curve_loss(6, &obs, 0.4, 2.0).unwrap();
        assert!(loss < 1e-20);
        assert!((alpha - 7.0).abs() < 1e-12);
        let (loss, _) = profiled_curve_loss(6, &obs, 0.6, 2.0).unwrap();
        assert!(loss > 1e-8);
    }
}
