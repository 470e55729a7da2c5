//! Log-space gamma-family functions.
//!
//! Everything here works with logarithms so that predictive means for pilot
//! and follow-up sizes in the thousands never overflow. `ln_beta` uses the
//! Stirling-remainder formulation for large arguments, which avoids the
//! cancellation in `lnΓ(a) + lnΓ(b) - lnΓ(a+b)` when one argument is huge.

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Remainder of Stirling's series, `lnΓ(x) - [(x-½)ln x - x + ½ln 2π]`,
/// valid for `x >= 10`.
fn stirling_remainder(x: f64) -> f64 {
    // Bernoulli coefficients B_{2k} / (2k (2k-1)).
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * inv2 + c;
    }
    acc * inv
}

fn ln_beta_unchecked(a: f64, b: f64) -> f64 {
    let (p, q) = if a <= b { (a, b) } else { (b, a) };
    if p >= 10.0 {
        let corr = stirling_remainder(p) + stirling_remainder(q) - stirling_remainder(p + q);
        let r = p / (p + q);
        -0.5 * q.ln() + LN_SQRT_2PI + corr + (p - 0.5) * r.ln() + q * (-r).ln_1p()
    } else if q >= 10.0 {
        let corr = stirling_remainder(q) - stirling_remainder(p + q);
        ln_gamma(p) + corr + p - p * (p + q).ln() + (q - 0.5) * (-p / (p + q)).ln_1p()
    } else {
        ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)
    }
}

/// `ln B(a, b)` for `a, b > 0`.
pub fn ln_beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::Domain(format!("ln_beta requires a, b > 0 (got {a}, {b})")));
    }
    Ok(ln_beta_unchecked(a, b))
}

/// Standard Pochhammer symbol in log space: `ln Γ(a+b) − ln Γ(a)`.
pub fn ln_pochhammer(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0) || !(b >= 0.0) {
        return Err(Error::Domain(format!("ln_pochhammer requires a > 0, b >= 0 (got {a}, {b})")));
    }
    if b == 0.0 {
        return Ok(0.0);
    }
    Ok(ln_gamma(b) - ln_beta_unchecked(a, b))
}

/// Rising factorial under the shifted convention `(a)_{b↑} := Γ(a+b)/Γ(a+1)`,
/// returned as `ln Γ(a+b) − ln Γ(a+1)`.
///
/// This differs from [`ln_pochhammer`] by exactly `ln a`; see
/// [`crate::baselines::RisingConvention`] for which one the 3BP baselines use.
pub fn ln_rising_factorial(a: f64, b: u64) -> Result<f64> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("ln_rising_factorial requires a > 0 (got {a})")));
    }
    Ok(ln_pochhammer(a, b as f64)? - a.ln())
}

/// `ln C(n, k)`, or `-inf` when `k > n`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    -((n + 1) as f64).ln() - ln_beta_unchecked((n - k + 1) as f64, (k + 1) as f64)
}

/// Log of the Poisson probability mass `P(X = u | λ)`.
///
/// Returns `-inf` for `λ = 0, u > 0`; callers that need a finite value
/// substitute their own floor.
pub fn ln_poisson_pmf(u: f64, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return if u == 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    u * lambda.ln() - lambda - ln_gamma(u + 1.0)
}
