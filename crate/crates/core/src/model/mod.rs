//! The two-population rate measure and its predictive distributions.

mod predictive;
mod rate;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use predictive::{
    kton_grid, kton_predictive_mean, total_predictive_curve, total_predictive_mean, Cell, Predictor, TotalCurve,
};
pub use rate::{ln_rate_density, posterior_log_density, rate_density, rate_measure_diagnostics, retained_mass, truncated_mass, RateDiagnostics};

/// The seven hyperparameters of the two-population prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Mass.
    pub alpha: f64,
    /// Power-law rates, each in (0, 1).
    pub sigma1: f64,
    pub sigma2: f64,
    /// Correlation parameters.
    pub phi1: f64,
    pub phi2: f64,
    /// Concentrations.
    pub c1: f64,
    pub c2: f64,
}

impl Hyperparams {
    /// Starting point of the empirical-Bayes fit.
    pub const INIT: Hyperparams = Hyperparams {
        alpha: 1000.0,
        sigma1: 0.5,
        sigma2: 0.5,
        phi1: 0.5,
        phi2: 0.5,
        c1: 1.0,
        c2: 1.0,
    };

    pub fn new(alpha: f64, sigma1: f64, sigma2: f64, phi1: f64, phi2: f64, c1: f64, c2: f64) -> Result<Self> {
        let p = Hyperparams {
            alpha,
            sigma1,
            sigma2,
            phi1,
            phi2,
            c1,
            c2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive and finite (got {v})")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("phi1", self.phi1)?;
        positive("phi2", self.phi2)?;
        positive("c1", self.c1)?;
        positive("c2", self.c2)?;
        for (name, s) in [("sigma1", self.sigma1), ("sigma2", self.sigma2)] {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1) (got {s})")));
            }
        }
        Ok(())
    }

    /// `[alpha, sigma1, sigma2, phi1, phi2, c1, c2]`.
    pub fn to_array(&self) -> [f64; 7] {
        [self.alpha, self.sigma1, self.sigma2, self.phi1, self.phi2, self.c1, self.c2]
    }

    pub fn from_array(v: [f64; 7]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    /// Exchanges the roles of the two populations.
    pub fn swapped(&self) -> Self {
        Hyperparams {
            alpha: self.alpha,
            sigma1: self.sigma2,
            sigma2: self.sigma1,
            phi1: self.phi2,
            phi2: self.phi1,
            c1: self.c2,
            c2: self.c1,
        }
    }
}

/// A nonnegative integer per population: sample sizes `N`, `M` or occurrence
/// counts `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct CountPair {
    pub p1: u64,
    pub p2: u64,
}

impl CountPair {
    pub const ZERO: CountPair = CountPair { p1: 0, p2: 0 };

    pub const fn new(p1: u64, p2: u64) -> Self {
        CountPair { p1, p2 }
    }

    pub fn total(&self) -> u64 {
        self.p1 + self.p2
    }

    pub fn swapped(&self) -> Self {
        CountPair::new(self.p2, self.p1)
    }

    pub fn get(&self, pop: usize) -> u64 {
        match pop {
            0 => self.p1,
            1 => self.p2,
            _ => panic!("population index {pop} out of range"),
        }
    }

    /// Componentwise `self <= other`.
    pub fn fits_within(&self, other: &CountPair) -> bool {
        self.p1 <= other.p1 && self.p2 <= other.p2
    }
}

impl std::ops::Add for CountPair {
    type Output = CountPair;
    fn add(self, o: CountPair) -> CountPair {
        CountPair::new(self.p1 + o.p1, self.p2 + o.p2)
    }
}

impl std::fmt::Display for CountPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.p1, self.p2)
    }
}

/// A Poisson mean with its propagated quadrature error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictiveMean {
    pub lambda: f64,
    pub quad_error: f64,
}

impl std::ops::Add for PredictiveMean {
    type Output = PredictiveMean;
    fn add(self, o: PredictiveMean) -> PredictiveMean {
        PredictiveMean {
            lambda: self.lambda + o.lambda,
            quad_error: self.quad_error + o.quad_error,
        }
    }
}

impl std::iter::Sum for PredictiveMean {
    fn sum<I: Iterator<Item = PredictiveMean>>(iter: I) -> Self {
        iter.fold(PredictiveMean::default(), |a, b| a + b)
    }
}
