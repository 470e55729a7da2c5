//! Special functions and tanh-sinh quadrature.

pub mod quadrature;
pub mod special;

pub use quadrature::{integrate_1d, integrate_1d_log, integrate_2d, integrate_2d_log, QuadResult, QuadratureConfig};
pub use special::{ln_beta, ln_binomial, ln_gamma, ln_pochhammer, ln_poisson_pmf, ln_rising_factorial};

/// `ln(e^a + e^b)` without overflow.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
