//! Single-population three-parameter beta process (3BP) predictors, extended
//! to two populations by pooling (d3BP) or by treating them as unrelated
//! (i3BP).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::CountPair;
use crate::numerics::{ln_binomial, ln_pochhammer, ln_rising_factorial};

/// Mass, concentration and discount of a 3BP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bp3Params {
    pub alpha: f64,
    pub c: f64,
    pub sigma: f64,
}

impl Bp3Params {
    /// Starting point of the d3BP fit.
    pub const INIT: Bp3Params = Bp3Params {
        alpha: 1000.0,
        c: 1.0,
        sigma: 0.5,
    };

    pub fn new(alpha: f64, c: f64, sigma: f64) -> Result<Self> {
        let p = Bp3Params { alpha, c, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha must be positive (got {})", self.alpha)));
        }
        if !(self.sigma >= 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidArgument(format!("sigma must lie in [0, 1) (got {})", self.sigma)));
        }
        if !(self.c > -self.sigma && self.c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "c must exceed -sigma (got c = {}, sigma = {})",
                self.c, self.sigma
            )));
        }
        Ok(())
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }
}

/// Independent 3BPs, one per population.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct I3bpParams {
    pub pop1: Bp3Params,
    pub pop2: Bp3Params,
}

impl I3bpParams {
    pub fn validate(&self) -> Result<()> {
        self.pop1.validate()?;
        self.pop2.validate()
    }
}

/// Which rising factorial the 3BP formulas are written with.
///
/// `Pochhammer` is `Γ(a+b)/Γ(a)`; `Shifted` is `Γ(a+b)/Γ(a+1)`. The two differ
/// by a constant factor in every formula below, and only `Pochhammer`
/// reproduces the Indian-buffet simulation, so it is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RisingConvention {
    #[default]
    Pochhammer,
    Shifted,
}

impl RisingConvention {
    fn ln_rise(self, a: f64, b: u64) -> Result<f64> {
        match self {
            RisingConvention::Pochhammer => ln_pochhammer(a, b as f64),
            RisingConvention::Shifted => ln_rising_factorial(a, b),
        }
    }
}

fn check_k(m: CountPair, k: CountPair) -> Result<()> {
    if !k.fits_within(&m) {
        return Err(Error::InvalidArgument(format!(
            "occurrence counts k = {k} exceed follow-up sizes M = {m}"
        )));
    }
    if k.total() == 0 {
        return Err(Error::InvalidArgument("k must have k1 + k2 >= 1".into()));
    }
    Ok(())
}

/// d3BP mean number of new variants seen `k` times, under `conv`.
pub fn d3bp_kton_mean_with(
    n: CountPair,
    m: CountPair,
    k: CountPair,
    p: &Bp3Params,
    conv: RisingConvention,
) -> Result<f64> {
    p.validate()?;
    check_k(m, k)?;
    let total = n.total() + m.total();
    let kk = k.total();
    let ln = p.alpha.ln()
        + (ln_binomial(m.p1, k.p1) + ln_binomial(m.p2, k.p2))
        + conv.ln_rise(p.c + p.sigma, total - kk)?
        + conv.ln_rise(1.0 - p.sigma, kk - 1)?
        - conv.ln_rise(p.c + 1.0, total - 1)?;
    Ok(ln.exp())
}

/// d3BP mean number of new variants seen `k` times.
pub fn d3bp_kton_mean(n: CountPair, m: CountPair, k: CountPair, p: &Bp3Params) -> Result<f64> {
    d3bp_kton_mean_with(n, m, k, p, RisingConvention::default())
}

/// Expected number of new variants contributed by the next sample after
/// `n_prev` samples of one population.
pub fn single_population_new_rate(n_prev: u64, p: &Bp3Params, conv: RisingConvention) -> Result<f64> {
    p.validate()?;
    Ok(p.alpha * (conv.ln_rise(p.c + p.sigma, n_prev)? - conv.ln_rise(p.c + 1.0, n_prev)?).exp())
}

/// Cumulative single-population totals: entry `j` is the expected number of
/// new variants in `j + 1` follow-up samples after `n_pilot`.
pub fn single_population_curve(n_pilot: u64, follow: u64, p: &Bp3Params, conv: RisingConvention) -> Result<Vec<f64>> {
    let mut acc = 0.0;
    (0..follow)
        .map(|j| {
            acc += single_population_new_rate(n_pilot + j, p, conv)?;
            Ok(acc)
        })
        .collect()
}

/// d3BP total: both populations pooled into one.
pub fn d3bp_total_mean_with(n: CountPair, m: CountPair, p: &Bp3Params, conv: RisingConvention) -> Result<f64> {
    p.validate()?;
    Ok(single_population_curve(n.total(), m.total(), p, conv)?
        .last()
        .copied()
        .unwrap_or(0.0))
}

pub fn d3bp_total_mean(n: CountPair, m: CountPair, p: &Bp3Params) -> Result<f64> {
    d3bp_total_mean_with(n, m, p, RisingConvention::default())
}

/// i3BP total: the sum of two single-population totals.
pub fn i3bp_total_mean(n: CountPair, m: CountPair, p: &I3bpParams) -> Result<f64> {
    p.validate()?;
    let one = d3bp_total_mean(CountPair::new(n.p1, 0), CountPair::new(m.p1, 0), &p.pop1)?;
    let two = d3bp_total_mean(CountPair::new(n.p2, 0), CountPair::new(m.p2, 0), &p.pop2)?;
    Ok(one + two)
}

/// i3BP k-ton mean: zero for shared cells, otherwise the single-population
/// mean of the population involved.
pub fn i3bp_kton_mean(n: CountPair, m: CountPair, k: CountPair, p: &I3bpParams) -> Result<f64> {
    p.validate()?;
    check_k(m, k)?;
    match (k.p1, k.p2) {
        (a, b) if a > 0 && b > 0 => Ok(0.0),
        (_, 0) => d3bp_kton_mean(CountPair::new(n.p1, 0), CountPair::new(m.p1, 0), k, &p.pop1),
        _ => d3bp_kton_mean(
            CountPair::new(n.p2, 0),
            CountPair::new(m.p2, 0),
            k.swapped(),
            &p.pop2,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{integrate_1d_log, ln_gamma, QuadratureConfig};

    fn p() -> Bp3Params {
        Bp3Params::new(20.0, 1.0, 0.5).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(Bp3Params::new(1.0, -0.2, 0.5).is_ok());
        assert!(Bp3Params::new(1.0, -0.6, 0.5).is_err());
        assert!(Bp3Params::new(1.0, 1.0, 1.0).is_err());
        assert!(Bp3Params::new(0.0, 1.0, 0.5).is_err());
        assert!(Bp3Params::new(1.0, 1.0, 0.0).is_ok());
    }

    #[test]
    fn single_cell_has_empty_rising_factorials() {
        let one = CountPair::new(1, 0);
        let got = d3bp_kton_mean(CountPair::ZERO, one, one, &p()).unwrap();
        assert!((got - 20.0).abs() < 1e-12);
        let shifted = d3bp_kton_mean_with(CountPair::ZERO, one, one, &p(), RisingConvention::Shifted).unwrap();
        // The shifted convention's empty products are 1/a, not 1.
        let factor = 2.0 / (1.5 * 0.5);
        assert!((shifted - 20.0 * factor).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_one_dimensional_quadrature() {
        // ∫ μ(θ) C(m,k) θ^k (1-θ)^{n+m-k} dθ for the single-population rate
        // α Γ(1+c)/(Γ(1-σ)Γ(c+σ)) θ^{-1-σ}(1-θ)^{c+σ-1}.
        let cfg = QuadratureConfig::default();
        for (prm, n, m, k) in [(p(), 3u64, 5u64, 2u64), (Bp3Params::new(7.0, 0.3, 0.2).unwrap(), 0, 4, 1)] {
            let ln_c = prm.alpha.ln() + ln_gamma(1.0 + prm.c) - ln_gamma(1.0 - prm.sigma) - ln_gamma(prm.c + prm.sigma);
            let ln_bin = ln_binomial(m, k);
            let q = integrate_1d_log(
                |nd| {
                    ln_c + ln_bin + (k as f64 - 1.0 - prm.sigma) * nd.ln_x
                        + ((n + m - k) as f64 + prm.c + prm.sigma - 1.0) * nd.ln_complement
                },
                &cfg,
            )
            .unwrap();
            assert!(q.converged);
            let f = d3bp_kton_mean(CountPair::new(n, 0), CountPair::new(m, 0), CountPair::new(k, 0), &prm).unwrap();
            assert!(((f - q.value) / q.value).abs() < 1e-9, "{f} vs {}", q.value);
        }
    }

    #[test]
    fn label_invariance() {
        let n = CountPair::new(3, 5);
        let m = CountPair::new(4, 2);
        let k = CountPair::new(2, 1);
        let a = d3bp_kton_mean(n, m, k, &p()).unwrap();
        let b = d3bp_kton_mean(n.swapped(), m.swapped(), k.swapped(), &p()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn total_equals_kton_sum() {
        for prm in [p(), Bp3Params::new(5.0, 2.0, 0.0).unwrap()] {
            let n = CountPair::new(2, 1);
            let m = CountPair::new(3, 2);
            let mut s = 0.0;
            for k1 in 0..=3 {
                for k2 in 0..=2 {
                    if k1 + k2 > 0 {
                        s += d3bp_kton_mean(n, m, CountPair::new(k1, k2), &prm).unwrap();
                    }
                }
            }
            let t = d3bp_total_mean(n, m, &prm).unwrap();
            assert!(((s - t) / t).abs() < 1e-12);
        }
    }

    #[test]
    fn totals_basic_identities() {
        assert_eq!(d3bp_total_mean(CountPair::new(4, 4), CountPair::ZERO, &p()).unwrap(), 0.0);
        let t = d3bp_total_mean(CountPair::new(1, 2), CountPair::new(3, 1), &p()).unwrap();
        let t2 = d3bp_total_mean(CountPair::new(1, 2), CountPair::new(3, 1), &p().with_alpha(40.0)).unwrap();
        assert!((t2 / t - 2.0).abs() < 1e-14);
        let ip = I3bpParams {
            pop1: p(),
            pop2: Bp3Params::new(3.0, 2.0, 0.3).unwrap(),
        };
        let only2 = i3bp_total_mean(CountPair::new(2, 3), CountPair::new(0, 4), &ip).unwrap();
        let direct = d3bp_total_mean(CountPair::new(3, 0), CountPair::new(4, 0), &ip.pop2).unwrap();
        assert!((only2 - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn classic_ibp_rate() {
        // σ = 0, c = 1: α / n for the n-th customer.
        let prm = Bp3Params::new(3.0, 1.0, 0.0).unwrap();
        for n_prev in 0..6u64 {
            let r = single_population_new_rate(n_prev, &prm, RisingConvention::Pochhammer).unwrap();
            assert!((r - 3.0 / (n_prev + 1) as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn i3bp_kton_cases() {
        let ip = I3bpParams {
            pop1: p(),
            pop2: Bp3Params::new(3.0, 2.0, 0.3).unwrap(),
        };
        let n = CountPair::new(2, 3);
        let m = CountPair::new(4, 5);
        assert_eq!(i3bp_kton_mean(n, m, CountPair::new(2, 3), &ip).unwrap(), 0.0);
        let a = i3bp_kton_mean(n, m, CountPair::new(1, 0), &ip).unwrap();
        let b = d3bp_kton_mean(CountPair::new(2, 0), CountPair::new(4, 0), CountPair::new(1, 0), &ip.pop1).unwrap();
        assert_eq!(a, b);
        let a = i3bp_kton_mean(n, m, CountPair::new(0, 2), &ip).unwrap();
        let b = d3bp_kton_mean(CountPair::new(3, 0), CountPair::new(5, 0), CountPair::new(2, 0), &ip.pop2).unwrap();
        assert_eq!(a, b);
        assert!(i3bp_kton_mean(n, m, CountPair::new(5, 0), &ip).is_err());
    }
}
