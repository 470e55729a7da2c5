use crate::error::{Error, Result};
use crate::numerics::quadrature::Node;
use crate::numerics::{integrate_2d_log, ln_add_exp, ln_beta, QuadResult, QuadratureConfig};

use super::{kton_predictive_mean, CountPair, Hyperparams};

/// `ln α - ln B(φ₁,c₁) - ln B(φ₂,c₂)`.
pub(crate) fn ln_normalizer(phi: &Hyperparams) -> Result<f64> {
    Ok(phi.alpha.ln() - ln_beta(phi.phi1, phi.c1)? - ln_beta(phi.phi2, phi.c2)?)
}

/// Log of the coupling kernel `(x + y^{σ₂/σ₁})^{-σ₁} (x + y)^{-(φ₁+φ₂)}`,
/// from `ln x` and `ln y`.
#[inline]
pub(crate) fn ln_kernel(phi: &Hyperparams, ln_x: f64, ln_y: f64) -> f64 {
    let r = phi.sigma2 / phi.sigma1;
    -phi.sigma1 * ln_add_exp(ln_x, r * ln_y) - (phi.phi1 + phi.phi2) * ln_add_exp(ln_x, ln_y)
}

/// Log density from the logs of `θ₁, 1-θ₁, θ₂, 1-θ₂`.
#[inline]
pub(crate) fn ln_density_parts(phi: &Hyperparams, ln_norm: f64, lt1: f64, lc1: f64, lt2: f64, lc2: f64) -> f64 {
    ln_norm
        + ln_kernel(phi, lt1, lt2)
        + (phi.phi1 - 1.0) * lt1
        + (phi.c1 - 1.0) * lc1
        + (phi.phi2 - 1.0) * lt2
        + (phi.c2 - 1.0) * lc2
}

fn check_theta(theta: [f64; 2]) -> Result<()> {
    if theta.iter().all(|t| *t > 0.0 && *t < 1.0) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "theta must lie in the open unit square (got ({}, {}))",
            theta[0], theta[1]
        )))
    }
}

/// Log of the rate density at `theta`.
pub fn ln_rate_density(theta: [f64; 2], phi: &Hyperparams) -> Result<f64> {
    phi.validate()?;
    check_theta(theta)?;
    let [t1, t2] = theta;
    Ok(ln_density_parts(
        phi,
        ln_normalizer(phi)?,
        t1.ln(),
        (-t1).ln_1p(),
        t2.ln(),
        (-t2).ln_1p(),
    ))
}

/// Density of the rate measure at `theta` in the open unit square.
pub fn rate_density(theta: [f64; 2], phi: &Hyperparams) -> Result<f64> {
    ln_rate_density(theta, phi).map(f64::exp)
}

/// Unnormalized log posterior density of a variant's frequencies after `n`
/// pilot samples in which it occurred `occurrences` times per population.
pub fn posterior_log_density(
    theta: [f64; 2],
    n: CountPair,
    occurrences: CountPair,
    phi: &Hyperparams,
) -> Result<f64> {
    if !occurrences.fits_within(&n) {
        return Err(Error::InvalidArgument(format!(
            "occurrence counts {occurrences} exceed sample sizes {n}"
        )));
    }
    let prior = ln_rate_density(theta, phi)?;
    let [t1, t2] = theta;
    let term = |s: u64, n: u64, t: f64| {
        let mut v = 0.0;
        if s > 0 {
            v += s as f64 * t.ln();
        }
        if n > s {
            v += (n - s) as f64 * (-t).ln_1p();
        }
        v
    };
    Ok(prior + term(occurrences.p1, n.p1, t1) + term(occurrences.p2, n.p2, t2))
}

/// Numerical evidence that the rate measure is proper but infinite.
#[derive(Debug, Clone)]
pub struct RateDiagnostics {
    /// `∫ θ_p ν(dθ)` for p = 1, 2.
    pub first_moments: [QuadResult; 2],
    /// `(ε, ∫_{[ε,1)²} ν(dθ))` along the requested grid.
    pub truncated_masses: Vec<(f64, QuadResult)>,
}

impl RateDiagnostics {
    pub fn all_converged(&self) -> bool {
        self.first_moments.iter().all(|r| r.converged) && self.truncated_masses.iter().all(|(_, r)| r.converged)
    }

    pub fn first_moments_finite(&self) -> bool {
        self.first_moments.iter().all(|r| r.converged && r.value.is_finite())
    }

    /// `m(ε_{i+1}) / m(ε_i)` for consecutive grid points.
    pub fn growth_ratios(&self) -> Vec<f64> {
        self.truncated_masses
            .windows(2)
            .map(|w| w[1].1.value / w[0].1.value)
            .collect()
    }
}

/// Logs of `t` and `1 - t` for `t = lo + (hi - lo) x`.
fn ln_affine(lo: f64, hi: f64, node: &Node) -> (f64, f64) {
    let span = hi - lo;
    let lt = if lo == 0.0 {
        span.ln() + node.ln_x
    } else {
        (lo + span * node.x).ln()
    };
    let lc = if hi == 1.0 {
        span.ln() + node.ln_complement
    } else {
        (-(lo + span * node.x)).ln_1p()
    };
    (lt, lc)
}

/// Mass of the rate measure on the box `[x0, x1) × [y0, y1)` inside the unit
/// square.
fn box_mass(phi: &Hyperparams, x: [f64; 2], y: [f64; 2], cfg: &QuadratureConfig) -> Result<QuadResult> {
    let ln_norm = ln_normalizer(phi)?;
    let ln_area = (x[1] - x[0]).ln() + (y[1] - y[0]).ln();
    integrate_2d_log(
        |nx, ny| {
            let (lt1, lc1) = ln_affine(x[0], x[1], nx);
            let (lt2, lc2) = ln_affine(y[0], y[1], ny);
            ln_density_parts(phi, ln_norm, lt1, lc1, lt2, lc2) + ln_area
        },
        cfg,
    )
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("eps must lie in (0, 1) (got {eps})")))
    }
}

/// Mass of the rate measure on `[eps, 1)²`.
pub fn truncated_mass(phi: &Hyperparams, eps: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    phi.validate()?;
    check_eps(eps)?;
    box_mass(phi, [eps, 1.0], [eps, 1.0], cfg)
}

/// Mass of the rate measure outside `(0, eps)²`: the expected number of
/// atoms with at least one frequency of `eps` or more.
pub fn retained_mass(phi: &Hyperparams, eps: f64, cfg: &QuadratureConfig) -> Result<QuadResult> {
    phi.validate()?;
    check_eps(eps)?;
    let parts = [
        box_mass(phi, [eps, 1.0], [eps, 1.0], cfg)?,
        box_mass(phi, [0.0, eps], [eps, 1.0], cfg)?,
        box_mass(phi, [eps, 1.0], [0.0, eps], cfg)?,
    ];
    Ok(QuadResult {
        value: parts.iter().map(|r| r.value).sum(),
        error: parts.iter().map(|r| r.error).sum(),
        converged: parts.iter().all(|r| r.converged),
        level: parts.iter().map(|r| r.level).max().unwrap_or(0),
    })
}

/// First moments and truncated masses of the rate measure. `eps_grid` must
/// be strictly decreasing within (0, 0.5].
pub fn rate_measure_diagnostics(phi: &Hyperparams, cfg: &QuadratureConfig, eps_grid: &[f64]) -> Result<RateDiagnostics> {
    phi.validate()?;
    if eps_grid.iter().any(|e| !(*e > 0.0 && *e <= 0.5)) || eps_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "eps_grid must be strictly decreasing within (0, 0.5]".into(),
        ));
    }
    // ∫ θ₁ ν(dθ) is the k = (1,0) mean for a single follow-up sample and no pilot.
    let moment = |m: CountPair| -> Result<QuadResult> {
        match kton_predictive_mean(CountPair::ZERO, m, m, phi, cfg) {
            Ok(p) => Ok(QuadResult {
                value: p.lambda,
                error: p.quad_error,
                converged: true,
                level: 0,
            }),
            Err(Error::NonConvergence { partial, error, .. }) => Ok(QuadResult {
                value: partial,
                error,
                converged: false,
                level: 0,
            }),
            Err(e) => Err(e),
        }
    };
    let first_moments = [moment(CountPair::new(1, 0))?, moment(CountPair::new(0, 1))?];
    let truncated_masses = eps_grid
        .iter()
        .map(|&eps| truncated_mass(phi, eps, cfg).map(|r| (eps, r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RateDiagnostics {
        first_moments,
        truncated_masses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat() -> Hyperparams {
        Hyperparams::new(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn density_trivial_values() {
        assert!((rate_density([0.5, 0.5], &flat()).unwrap() - 1.0).abs() < 1e-14);
        assert!((rate_density([0.5, 0.5], &flat().with_alpha(2.0)).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn density_oracle() {
        // mpmath at 40 digits
        let phi = Hyperparams::new(1.0, 0.2, 0.2, 1.0, 1.0, 1.0, 1.0).unwrap();
        let expected = 7.507_027_712_383_945;
        let got = rate_density([0.1, 0.3], &phi).unwrap();
        assert!(((got - expected) / expected).abs() < 1e-13, "{got}");
    }

    #[test]
    fn density_rejects_boundary() {
        for theta in [[0.0, 0.5], [0.5, 1.0], [-0.1, 0.5], [0.5, f64::NAN]] {
            assert!(matches!(rate_density(theta, &flat()), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn posterior_reduces_to_prior() {
        let phi = Hyperparams::new(3.0, 0.3, 0.7, 0.4, 0.8, 2.0, 0.5).unwrap();
        let theta = [0.25, 0.6];
        let prior = ln_rate_density(theta, &phi).unwrap();
        let p0 = posterior_log_density(theta, CountPair::ZERO, CountPair::ZERO, &phi).unwrap();
        assert_eq!(p0, prior);
        let p = posterior_log_density(theta, CountPair::new(4, 7), CountPair::ZERO, &phi).unwrap();
        let expected = prior + 4.0 * (0.75f64).ln() + 7.0 * (0.4f64).ln();
        assert!((p - expected).abs() < 1e-12);
        assert!(posterior_log_density(theta, CountPair::new(1, 1), CountPair::new(2, 0), &phi).is_err());
    }

    #[test]
    fn posterior_oracle() {
        // mpmath at 40 digits
        let phi = Hyperparams::new(1.0, 0.5, 0.5, 1.0, 1.0, 1.0, 1.0).unwrap();
        let got = posterior_log_density([0.2, 0.4], CountPair::new(3, 2), CountPair::new(1, 0), &phi).unwrap();
        let expected = -1.800_312_203_179_524_5;
        assert!((got - expected).abs() < 1e-12, "{got}");
    }
}
