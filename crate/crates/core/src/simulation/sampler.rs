//! Dominated rejection sampling of a Poisson point process on a log mesh.
//!
//! Within each mesh cell the proposal is a product of one-dimensional power
//! laws, `θ^{φ-1}` or `(1-θ)^{c-1}` per axis, times a constant that bounds
//! every remaining factor of the intensity on the cell. Each remaining factor
//! is monotone in each coordinate, so its supremum sits at a cell corner.

use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{CountPair, Hyperparams};
use crate::numerics::{ln_add_exp, ln_beta};

/// Refuse to simulate more than this many expected proposals per call.
const MAX_EXPECTED_PROPOSALS: f64 = 2e8;

/// Rejection ratios may exceed 1 by this much through rounding alone.
const RATIO_SLACK: f64 = 1e-9;

/// `(θ₁+θ₂^r)^{-σ₁} (θ₁+θ₂)^{-s}`, decreasing in both coordinates.
#[derive(Debug, Clone, Copy)]
struct Coupling {
    sigma1: f64,
    ratio: f64,
    phi_sum: f64,
}

impl Coupling {
    fn ln_eval(&self, lx: f64, ly: f64) -> f64 {
        -self.sigma1 * ln_add_exp(lx, self.ratio * ly) - self.phi_sum * ln_add_exp(lx, ly)
    }
}

/// An intensity `exp(ln_norm) · coupling · Π_p θ_p^{φ_p-1}(1-θ_p)^{c_p-1}`,
/// optionally thinned by the chance of being seen in `n` samples.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Intensity {
    ln_norm: f64,
    phi: [f64; 2],
    c: [f64; 2],
    coupling: Option<Coupling>,
    observed_in: Option<CountPair>,
}

impl Intensity {
    pub(crate) fn proposed(phi: &Hyperparams) -> Result<Self> {
        phi.validate()?;
        Ok(Intensity {
            ln_norm: phi.alpha.ln() - ln_beta(phi.phi1, phi.c1)? - ln_beta(phi.phi2, phi.c2)?,
            phi: [phi.phi1, phi.phi2],
            c: [phi.c1, phi.c2],
            coupling: Some(Coupling {
                sigma1: phi.sigma1,
                ratio: phi.sigma2 / phi.sigma1,
                phi_sum: phi.phi1 + phi.phi2,
            }),
            observed_in: None,
        })
    }

    /// `mass` times the product of two beta densities.
    pub(crate) fn beta_product(mass: f64, a: [f64; 2], b: [f64; 2]) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidArgument(format!("mass must be positive (got {mass})")));
        }
        Ok(Intensity {
            ln_norm: mass.ln() - ln_beta(a[0], b[0])? - ln_beta(a[1], b[1])?,
            phi: a,
            c: b,
            coupling: None,
            observed_in: None,
        })
    }

    pub(crate) fn observed_in(mut self, n: CountPair) -> Self {
        self.observed_in = Some(n);
        self
    }

    fn ln_thinning(&self, x: f64, y: f64) -> f64 {
        match self.observed_in {
            None => 0.0,
            Some(n) => {
                // A population with no samples contributes nothing, even at θ = 1.
                let term = |count: u64, t: f64| if count == 0 { 0.0 } else { count as f64 * (-t).ln_1p() };
                let ln_miss = term(n.p1, x) + term(n.p2, y);
                (-ln_miss.exp_m1()).ln()
            }
        }
    }

    fn ln_density(&self, x: f64, y: f64) -> f64 {
        let (lx, ly) = (x.ln(), y.ln());
        let mut v = self.ln_norm
            + (self.phi[0] - 1.0) * lx
            + (self.c[0] - 1.0) * (-x).ln_1p()
            + (self.phi[1] - 1.0) * ly
            + (self.c[1] - 1.0) * (-y).ln_1p()
            + self.ln_thinning(x, y);
        if let Some(k) = &self.coupling {
            v += k.ln_eval(lx, ly);
        }
        v
    }
}

/// Proposal on one axis interval.
#[derive(Debug, Clone, Copy)]
enum AxisProposal {
    /// Density `∝ θ^{e}` with `e = φ - 1`.
    Power { e: f64 },
    /// Density `∝ (1-θ)^{c-1}` on an interval ending at 1.
    Reflected { c: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    proposal: AxisProposal,
    /// `ln ∫_{lo}^{hi}` of the unnormalized proposal.
    ln_mass: f64,
    /// `ln sup` over the interval of the factor left out of the proposal.
    ln_rest_bound: f64,
}

/// `ln ∫_a^b t^{e} dt` for `0 < a < b`, stable for any real `e`.
fn ln_power_mass(a: f64, b: f64, e: f64) -> f64 {
    let q = e + 1.0;
    let (la, lb) = (a.ln(), b.ln());
    if q.abs() < 1e-12 {
        return (lb - la).ln();
    }
    // ∫ = (b^q - a^q)/q
    let (hi, lo) = if q > 0.0 { (q * lb, q * la) } else { (q * la, q * lb) };
    hi + (-(lo - hi).exp()).ln_1p() - q.abs().ln()
}

/// Inverse-CDF draw from density `∝ t^{e}` on `[a, b]`.
fn draw_power(a: f64, b: f64, e: f64, u: f64) -> f64 {
    let q = e + 1.0;
    let (la, lb) = (a.ln(), b.ln());
    if q.abs() < 1e-12 {
        return (la + u * (lb - la)).exp();
    }
    let (l0, l1) = (q * la, q * lb);
    // t^q = a^q + u (b^q - a^q), in logs anchored at the larger end.
    let t = if l1 >= l0 {
        l1 + ((1.0 - u) * (l0 - l1).exp() + u).ln()
    } else {
        l0 + ((1.0 - u) + u * (l1 - l0).exp()).ln()
    };
    (t / q).exp().clamp(a, b)
}

impl Axis {
    fn new(lo: f64, hi: f64, phi: f64, c: f64) -> Self {
        if hi >= 1.0 && c < 1.0 {
            // (1-θ)^{c-1} is unbounded at 1: propose from it, bound θ^{φ-1}.
            let at = if phi < 1.0 { lo } else { hi };
            Axis {
                lo,
                hi,
                proposal: AxisProposal::Reflected { c },
                ln_mass: c * (-lo).ln_1p() - c.ln(),
                ln_rest_bound: (phi - 1.0) * at.ln(),
            }
        } else {
            let e = phi - 1.0;
            let at = if c >= 1.0 { lo } else { hi };
            Axis {
                lo,
                hi,
                proposal: AxisProposal::Power { e },
                ln_mass: ln_power_mass(lo, hi, e),
                ln_rest_bound: (c - 1.0) * (-at).ln_1p(),
            }
        }
    }

    fn draw(&self, u: f64) -> f64 {
        match self.proposal {
            AxisProposal::Power { e } => draw_power(self.lo, self.hi, e, u),
            AxisProposal::Reflected { c } => {
                // 1-θ has density ∝ r^{c-1} on (0, 1-lo].
                let ln_r = (-self.lo).ln_1p() + u.ln() / c;
                (1.0 - ln_r.exp()).clamp(self.lo, self.hi)
            }
        }
    }

    fn ln_proposal(&self, t: f64) -> f64 {
        match self.proposal {
            AxisProposal::Power { e } => e * t.ln(),
            AxisProposal::Reflected { c } => (c - 1.0) * (-t).ln_1p(),
        }
    }
}

/// Rejection sampler for an [`Intensity`] on `(0, 1)²` minus `(0, mesh₀)²`.
#[derive(Debug, Clone)]
pub(crate) struct MeshSampler {
    intensity: Intensity,
    axes: [Vec<Axis>; 2],
    /// `ln` of the envelope constant per cell, row-major.
    ln_bound: Vec<f64>,
    /// Expected proposals per cell.
    expected: Vec<f64>,
    cell_index: WeightedIndex<f64>,
}

impl MeshSampler {
    pub(crate) fn new(intensity: Intensity, mesh: &[f64]) -> Result<Self> {
        // Each axis also gets the interval [0, mesh₀]. Only the cell where
        // both coordinates lie below the floor is left out.
        let axes: [Vec<Axis>; 2] = std::array::from_fn(|p| {
            std::iter::once(0.0)
                .chain(mesh.iter().copied())
                .collect::<Vec<f64>>()
                .windows(2)
                .map(|w| Axis::new(w[0], w[1], intensity.phi[p], intensity.c[p]))
                .collect()
        });
        let k = mesh.len();
        let mut ln_bound = Vec::with_capacity(k * k);
        let mut expected = Vec::with_capacity(k * k);
        for (i, a) in axes[0].iter().enumerate() {
            for (j, b) in axes[1].iter().enumerate() {
                if i == 0 && j == 0 {
                    ln_bound.push(f64::NEG_INFINITY);
                    expected.push(0.0);
                    continue;
                }
                let mut lb = intensity.ln_norm + a.ln_rest_bound + b.ln_rest_bound;
                if let Some(cp) = &intensity.coupling {
                    lb += cp.ln_eval(a.lo.ln(), b.lo.ln());
                }
                lb += intensity.ln_thinning(a.hi.min(1.0), b.hi.min(1.0));
                let e = (lb + a.ln_mass + b.ln_mass).exp();
                if !e.is_finite() {
                    return Err(Error::Simulation {
                        cell: i * k + j,
                        message: format!("envelope is not finite (ln bound {lb})"),
                    });
                }
                ln_bound.push(lb);
                expected.push(e);
            }
        }
        let total: f64 = expected.iter().sum();
        if total > MAX_EXPECTED_PROPOSALS {
            return Err(Error::InvalidArgument(format!(
                "about {total:.3e} candidate atoms expected; raise the truncation floor or sample observed variants only"
            )));
        }
        let cell_index = WeightedIndex::new(&expected).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(MeshSampler {
            intensity,
            axes,
            ln_bound,
            expected,
            cell_index,
        })
    }

    /// Expected number of proposals per draw, summed over cells.
    pub(crate) fn expected_proposals(&self) -> f64 {
        self.expected.iter().sum()
    }

    /// One realization. The total number of proposals is Poisson with the
    /// summed envelope mass; each proposal picks its cell with probability
    /// proportional to that cell's share. Points come out in proposal order.
    pub(crate) fn sample<R: Rng>(&self, rng: &mut R) -> Result<Vec<[f64; 2]>> {
        let mut out = Vec::new();
        let total = self.expected_proposals();
        if total <= 0.0 {
            return Ok(out);
        }
        let count = Poisson::new(total)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .sample(rng) as u64;
        let k = self.axes[1].len();
        for _ in 0..count {
            let cell = self.cell_index.sample(rng);
            let (a, b) = (&self.axes[0][cell / k], &self.axes[1][cell % k]);
            let x = a.draw(1.0 - rng.random::<f64>());
            let y = b.draw(1.0 - rng.random::<f64>());
            let u: f64 = rng.random();
            if x >= 1.0 || y >= 1.0 || x <= 0.0 || y <= 0.0 {
                // Rounded onto the boundary, where the density is undefined.
                continue;
            }
            let ln_env = self.ln_bound[cell] + a.ln_proposal(x) + b.ln_proposal(y);
            let ratio = (self.intensity.ln_density(x, y) - ln_env).exp();
            if !(ratio <= 1.0 + RATIO_SLACK) {
                return Err(Error::Simulation {
                    cell,
                    message: format!("density exceeds its envelope by a factor {ratio} at ({x:e}, {y:e})"),
                });
            }
            if u < ratio {
                out.push([x, y]);
            }
        }
        Ok(out)
    }
}

/// Positions in `start..n` at which independent Bernoulli(θ) trials succeed,
/// by geometric skipping.
pub(crate) fn bernoulli_positions<R: Rng>(rng: &mut R, start: usize, n: usize, theta: f64, out: &mut Vec<u32>) {
    if theta <= 0.0 {
        return;
    }
    if theta >= 0.25 {
        for i in start..n {
            if rng.random::<f64>() < theta {
                out.push(i as u32);
            }
        }
        return;
    }
    let ln_q = (-theta).ln_1p();
    let mut pos = start;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        let skip = (u.ln() / ln_q).floor();
        if skip >= (n - pos) as f64 {
            return;
        }
        pos += skip as usize;
        out.push(pos as u32);
        pos += 1;
        if pos >= n {
            return;
        }
    }
}

/// Like [`bernoulli_positions`] over `0..n`, conditioned on at least one
/// success.
pub(crate) fn bernoulli_positions_nonempty<R: Rng>(rng: &mut R, n: usize, theta: f64, out: &mut Vec<u32>) {
    debug_assert!(n > 0 && theta > 0.0);
    let ln_q = (-theta).ln_1p();
    let p_any = -(n as f64 * ln_q).exp_m1();
    let u: f64 = rng.random();
    // First success J has P(J ≤ j) = (1 - (1-θ)^j) / (1 - (1-θ)^n).
    let j = if ln_q.is_finite() {
        ((-u * p_any).ln_1p() / ln_q).ceil().clamp(1.0, n as f64) as usize
    } else {
        1
    };
    out.push((j - 1) as u32);
    bernoulli_positions(rng, j, n, theta, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn power_mass_and_draws() {
        for e in [-0.9, -0.5, 0.0, 1.5, -1.0, -1.3] {
            let (a, b): (f64, f64) = (1e-3, 0.2);
            let exact = if (e + 1.0f64).abs() < 1e-12 {
                (b / a).ln()
            } else {
                (b.powf(e + 1.0) - a.powf(e + 1.0)) / (e + 1.0)
            };
            assert!((ln_power_mass(a, b, e) - exact.ln()).abs() < 1e-12, "{e}");
            assert!((draw_power(a, b, e, 0.0) - a).abs() < 1e-15);
            assert!((draw_power(a, b, e, 1.0) - b).abs() < 1e-15);
            // Median: half the mass below.
            let m = draw_power(a, b, e, 0.5);
            let half = ln_power_mass(a, m, e);
            assert!((half - exact.ln() - 0.5f64.ln()).abs() < 1e-9, "{e}");
        }
    }

    #[test]
    fn reflected_axis_mass() {
        let ax = Axis::new(0.1, 1.0, 0.5, 0.3);
        let exact = 0.9f64.powf(0.3) / 0.3;
        assert!((ax.ln_mass - exact.ln()).abs() < 1e-12);
        for u in [0.0, 0.3, 0.999] {
            let t = ax.draw(u);
            assert!((0.1..=1.0).contains(&t));
        }
    }

    #[test]
    fn bernoulli_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut out = Vec::new();
        bernoulli_positions(&mut rng, 0, 10, 1.0, &mut out);
        assert_eq!(out, (0..10).collect::<Vec<u32>>());
        out.clear();
        bernoulli_positions(&mut rng, 0, 10, 0.0, &mut out);
        assert!(out.is_empty());
        out.clear();
        bernoulli_positions_nonempty(&mut rng, 5, 1e-12, &mut out);
        assert_eq!(out.len(), 1);
        out.clear();
        bernoulli_positions_nonempty(&mut rng, 4, 1.0, &mut out);
        assert_eq!(out, vec![0, 1, 2, 3]);
    }

    #[test]
    fn bernoulli_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for theta in [0.01, 0.2, 0.6] {
            let mut out = Vec::new();
            let n = 200_000;
            bernoulli_positions(&mut rng, 0, n, theta, &mut out);
            let p = out.len() as f64 / n as f64;
            let se = (theta * (1.0 - theta) / n as f64).sqrt();
            assert!((p - theta).abs() < 4.0 * se, "{theta}: {p}");
            assert!(out.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn nonempty_matches_conditional_mean() {
        // E[S | S ≥ 1] = nθ / (1 - (1-θ)^n).
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, theta) = (6usize, 0.1);
        let reps = 100_000;
        let mut tot = 0usize;
        let mut first_zero = 0usize;
        for _ in 0..reps {
            let mut out = Vec::new();
            bernoulli_positions_nonempty(&mut rng, n, theta, &mut out);
            tot += out.len();
            first_zero += usize::from(out[0] == 0);
        }
        let p_any = 1.0 - 0.9f64.powi(6);
        let mean = tot as f64 / reps as f64;
        assert!((mean - 0.6 / p_any).abs() < 0.01, "{mean}");
        // P(first position is 0 | S ≥ 1) = θ / p_any.
        let f = first_zero as f64 / reps as f64;
        assert!((f - 0.1 / p_any).abs() < 0.006, "{f}");
    }
}
