//! Poisson means of new-variant counts.
//!
//! Every mean reduces to `E[K(Z, W)]` with `Z ~ Beta(φ₁+k₁, b₁)` and
//! `W ~ Beta(φ₂+k₂, b₂)` independent, where `K` is the coupling kernel of the
//! rate measure. On a tanh-sinh product grid this is `g₁ᵀ K̂ g₂`: the matrix
//! `K̂` depends only on the hyperparameters, the vectors only on `(k_p, b_p)`.
//! Many cells share a factor (all `j₁` terms of a total share `g₂`, all cells
//! of a k-ton grid share one of `(v+1)` vectors per side), so the matrix is
//! built once and reused through matrix-vector products.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::quadrature::{full_nodes, Node, MIN_LEVEL, ROUNDING_FLOOR};
use crate::numerics::{ln_beta, ln_binomial, QuadratureConfig};

use super::{CountPair, Hyperparams, PredictiveMean};

/// Nodes with `ln x` below this are dropped. The kernel entries then stay
/// below `exp(600)`, and the dropped tail `∫₀^{e^-560} z^{φ-1} dz` is
/// negligible unless `φ < 0.04`.
const LN_X_FLOOR: f64 = -560.0;

/// Deepest level whose kernel matrix is kept in memory (about 90 MB).
/// Deeper levels recompute rows on the fly.
const MAX_STORED_LEVEL: u32 = 8;

const MAX_LEVEL: usize = 20;

/// One beta factor `x^k (1-x)^b` of the integrand.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Factor {
    k: u64,
    b: f64,
}

impl Factor {
    fn key(&self) -> (u64, u64) {
        (self.k, self.b.to_bits())
    }
}

/// One expectation: the beta factors for both coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub n: CountPair,
    pub m: CountPair,
    pub k: CountPair,
}

impl Cell {
    pub fn new(n: CountPair, m: CountPair, k: CountPair) -> Self {
        Cell { n, m, k }
    }

    fn validate(&self) -> Result<()> {
        if !self.k.fits_within(&self.m) {
            return Err(Error::InvalidArgument(format!(
                "occurrence counts k = {} exceed follow-up sizes M = {}",
                self.k, self.m
            )));
        }
        if self.k.total() == 0 {
            return Err(Error::InvalidArgument("k must have k1 + k2 >= 1".into()));
        }
        Ok(())
    }

    fn factors(&self, phi: &Hyperparams) -> (Factor, Factor) {
        let b = |c: f64, n: u64, m: u64, k: u64| c + (n + m - k) as f64;
        (
            Factor {
                k: self.k.p1,
                b: b(phi.c1, self.n.p1, self.m.p1, self.k.p1),
            },
            Factor {
                k: self.k.p2,
                b: b(phi.c2, self.n.p2, self.m.p2, self.k.p2),
            },
        )
    }

    /// `ln α + ln C(M₁,k₁) + ln C(M₂,k₂) - ln B(φ₁,c₁) - ln B(φ₂,c₂)`.
    fn ln_prefactor(&self, ln_norm: f64) -> f64 {
        ln_norm + ln_binomial(self.m.p1, self.k.p1) + ln_binomial(self.m.p2, self.k.p2)
    }
}

/// Product-rule evaluation at one level: estimate, estimate from the
/// half-resolution subgrid, and the log scale both carry.
#[derive(Debug, Clone, Copy)]
struct Estimate {
    ln_scale: f64,
    fine: f64,
    coarse: f64,
    level: u32,
}

impl Estimate {
    fn error(&self) -> f64 {
        (self.fine - self.coarse).abs()
    }

    fn converged(&self, cfg: &QuadratureConfig) -> bool {
        let err = self.error();
        self.level >= MIN_LEVEL
            && (err <= cfg.rel_tol * self.fine.abs() || err.ln() + self.ln_scale <= cfg.abs_tol.ln())
    }

    /// Further levels cannot shrink an error this close to `f64` resolution.
    fn at_rounding_floor(&self) -> bool {
        self.level >= MIN_LEVEL && self.error() <= ROUNDING_FLOOR * self.fine.abs()
    }

    fn mean(&self, ln_prefactor: f64) -> PredictiveMean {
        let s = (ln_prefactor + self.ln_scale).exp();
        PredictiveMean {
            lambda: s * self.fine,
            quad_error: s * self.error(),
        }
    }
}

struct Grid {
    level: u32,
    h: f64,
    ln_x: Vec<f64>,
    ln_c: Vec<f64>,
    x: Vec<f64>,
    /// `y^{σ₂/σ₁}` at each node.
    y_pow: Vec<f64>,
    /// `φ₁ ln x + ln(π cosh t)` and the same with `φ₂`.
    row_shift: Vec<f64>,
    col_shift: Vec<f64>,
    /// Whether the node also belongs to the level below.
    coarse: Vec<bool>,
    sigma1: f64,
    phi_sum: f64,
    kernel: Option<Vec<f64>>,
}

impl Grid {
    fn build(phi: &Hyperparams, level: u32) -> Grid {
        let kmax = (6.5 * (level as f64).exp2()).floor() as i64;
        let nodes: Vec<(i64, Node)> = full_nodes(level)
            .into_iter()
            .enumerate()
            .map(|(i, n)| (i as i64 - kmax, n))
            .filter(|(_, n)| n.ln_x >= LN_X_FLOOR)
            .collect();
        let r = phi.sigma2 / phi.sigma1;
        let ln_dt = |n: &Node| n.ln_weight - n.ln_x - n.ln_complement;
        let mut g = Grid {
            level,
            h: (-(level as f64)).exp2(),
            ln_x: nodes.iter().map(|(_, n)| n.ln_x).collect(),
            ln_c: nodes.iter().map(|(_, n)| n.ln_complement).collect(),
            x: nodes.iter().map(|(_, n)| n.x).collect(),
            y_pow: nodes.iter().map(|(_, n)| (r * n.ln_x).exp()).collect(),
            row_shift: nodes.iter().map(|(_, n)| phi.phi1 * n.ln_x + ln_dt(n)).collect(),
            col_shift: nodes.iter().map(|(_, n)| phi.phi2 * n.ln_x + ln_dt(n)).collect(),
            coarse: nodes.iter().map(|(k, _)| k % 2 == 0).collect(),
            sigma1: phi.sigma1,
            phi_sum: phi.phi1 + phi.phi2,
            kernel: None,
        };
        if level <= MAX_STORED_LEVEL {
            let n = g.len();
            let mut k = vec![0.0; n * n];
            k.par_chunks_mut(n).enumerate().for_each(|(i, row)| g.fill_row(i, row));
            g.kernel = Some(k);
        }
        g
    }

    fn len(&self) -> usize {
        self.x.len()
    }

    fn fill_row(&self, i: usize, row: &mut [f64]) {
        let xi = self.x[i];
        let si = self.row_shift[i];
        for (j, out) in row.iter_mut().enumerate() {
            let ln_k = -self.sigma1 * (xi + self.y_pow[j]).ln() - self.phi_sum * (xi + self.x[j]).ln();
            *out = (ln_k + si + self.col_shift[j]).exp();
        }
    }

    fn with_row<T>(&self, i: usize, buf: &mut Vec<f64>, f: impl FnOnce(&[f64]) -> T) -> T {
        match &self.kernel {
            Some(k) => {
                let n = self.len();
                f(&k[i * n..(i + 1) * n])
            }
            None => {
                buf.resize(self.len(), 0.0);
                self.fill_row(i, buf);
                f(buf)
            }
        }
    }

    /// Scaled factor values and their log scale.
    fn factor(&self, f: Factor) -> (Vec<f64>, f64) {
        let ln_vals: Vec<f64> = self
            .ln_x
            .iter()
            .zip(&self.ln_c)
            .map(|(lx, lc)| {
                let a = if f.k == 0 { 0.0 } else { f.k as f64 * lx };
                a + f.b * lc
            })
            .collect();
        let scale = ln_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (ln_vals.iter().map(|v| (v - scale).exp()).collect(), scale)
    }

    /// `K̂ g` on the full grid and on the coarse subgrid (coarse rows only).
    fn apply_right(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut fine = vec![0.0; n];
        let mut coarse = vec![0.0; n];
        fine.par_iter_mut()
            .zip(coarse.par_iter_mut())
            .enumerate()
            .for_each_init(Vec::new, |buf, (i, (f, c))| {
                self.with_row(i, buf, |row| {
                    let mut s = 0.0;
                    let mut sc = 0.0;
                    for j in 0..n {
                        let t = row[j] * g[j];
                        s += t;
                        if self.coarse[j] {
                            sc += t;
                        }
                    }
                    *f = s;
                    *c = if self.coarse[i] { sc } else { 0.0 };
                })
            });
        (fine, coarse)
    }

    /// `gᵀ K̂` on the full grid and on the coarse subgrid (coarse columns only).
    fn apply_left(&self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let (fine, coarse) = (0..n)
            .into_par_iter()
            .fold(
                || (vec![0.0; n], vec![0.0; n], Vec::new()),
                |(mut fine, mut coarse, mut buf), i| {
                    let gi = g[i];
                    if gi != 0.0 {
                        self.with_row(i, &mut buf, |row| {
                            for j in 0..n {
                                fine[j] += gi * row[j];
                            }
                            if self.coarse[i] {
                                for j in 0..n {
                                    if self.coarse[j] {
                                        coarse[j] += gi * row[j];
                                    }
                                }
                            }
                        });
                    }
                    (fine, coarse, buf)
                },
            )
            .map(|(f, c, _)| (f, c))
            .reduce(
                || (vec![0.0; n], vec![0.0; n]),
                |(mut a, mut b), (c, d)| {
                    a.iter_mut().zip(&c).for_each(|(x, y)| *x += y);
                    b.iter_mut().zip(&d).for_each(|(x, y)| *x += y);
                    (a, b)
                },
            );
        (fine, coarse)
    }

    fn dot(&self, a: &[f64], b: &[f64], b_coarse: &[f64]) -> (f64, f64) {
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for i in 0..self.len() {
            fine += a[i] * b[i];
            if self.coarse[i] {
                coarse += a[i] * b_coarse[i];
            }
        }
        let h2 = self.h * self.h;
        (h2 * fine, 4.0 * h2 * coarse)
    }

    /// Product-rule estimates for every pair of factors.
    fn evaluate(&self, pairs: &[(Factor, Factor)]) -> Vec<Estimate> {
        let mut lefts: HashMap<(u64, u64), usize> = HashMap::new();
        let mut rights: HashMap<(u64, u64), usize> = HashMap::new();
        let mut left_list = Vec::new();
        let mut right_list = Vec::new();
        let idx: Vec<(usize, usize)> = pairs
            .iter()
            .map(|(l, r)| {
                let li = *lefts.entry(l.key()).or_insert_with(|| {
                    left_list.push(*l);
                    left_list.len() - 1
                });
                let ri = *rights.entry(r.key()).or_insert_with(|| {
                    right_list.push(*r);
                    right_list.len() - 1
                });
                (li, ri)
            })
            .collect();
        let left_vecs: Vec<(Vec<f64>, f64)> = left_list.iter().map(|f| self.factor(*f)).collect();
        let right_vecs: Vec<(Vec<f64>, f64)> = right_list.iter().map(|f| self.factor(*f)).collect();
        let mut out = vec![
            Estimate {
                ln_scale: 0.0,
                fine: 0.0,
                coarse: 0.0,
                level: self.level,
            };
            pairs.len()
        ];
        // Multiply the matrix against whichever side has fewer distinct factors.
        let by_right = right_list.len() <= left_list.len();
        let groups = if by_right { right_vecs.len() } else { left_vecs.len() };
        for gidx in 0..groups {
            let (applied, applied_coarse) = if by_right {
                self.apply_right(&right_vecs[gidx].0)
            } else {
                self.apply_left(&left_vecs[gidx].0)
            };
            for (c, &(li, ri)) in idx.iter().enumerate() {
                if (by_right && ri != gidx) || (!by_right && li != gidx) {
                    continue;
                }
                let other = if by_right { &left_vecs[li].0 } else { &right_vecs[ri].0 };
                let (fine, coarse) = self.dot(other, &applied, &applied_coarse);
                out[c] = Estimate {
                    ln_scale: left_vecs[li].1 + right_vecs[ri].1,
                    fine,
                    coarse,
                    level: self.level,
                };
            }
        }
        out
    }
}

/// Predictive means for one set of hyperparameters. Kernel grids are built
/// lazily per level and shared by every query made through this value.
pub struct Predictor {
    phi: Hyperparams,
    cfg: QuadratureConfig,
    ln_norm: f64,
    grids: Vec<OnceLock<Grid>>,
}

/// Cumulative totals along the sweep `(1,0), …, (F₁,0), (F₁,1), …, (F₁,F₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalCurve {
    pub pilot: CountPair,
    /// `first[j]` is the total at `M = (j+1, 0)`.
    pub first: Vec<PredictiveMean>,
    /// `second[j]` is the total at `M = (F₁, j+1)`.
    pub second: Vec<PredictiveMean>,
}

impl TotalCurve {
    /// Total at `m`, when `m` lies on the sweep.
    pub fn at(&self, m: CountPair) -> Option<PredictiveMean> {
        let f1 = self.first.len() as u64;
        match (m.p1, m.p2) {
            (0, 0) => Some(PredictiveMean::default()),
            (m1, 0) if m1 <= f1 => Some(self.first[m1 as usize - 1]),
            (m1, m2) if m1 == f1 && m2 as usize <= self.second.len() => {
                let base = self.first.last().copied().unwrap_or_default();
                Some(self.second[m2 as usize - 1] + base)
            }
            _ => None,
        }
    }

    /// Every sweep point in order, with its follow-up size.
    pub fn points(&self) -> Vec<(CountPair, PredictiveMean)> {
        let f1 = self.first.len() as u64;
        let base = self.first.last().copied().unwrap_or_default();
        let a = self.first.iter().enumerate().map(|(j, p)| (CountPair::new(j as u64 + 1, 0), *p));
        let b = self
            .second
            .iter()
            .enumerate()
            .map(move |(j, p)| (CountPair::new(f1, j as u64 + 1), *p + base));
        a.chain(b).collect()
    }
}

impl Predictor {
    pub fn new(phi: &Hyperparams, cfg: &QuadratureConfig) -> Result<Self> {
        phi.validate()?;
        cfg.validate()?;
        Ok(Predictor {
            phi: *phi,
            cfg: *cfg,
            ln_norm: phi.alpha.ln() - ln_beta(phi.phi1, phi.c1)? - ln_beta(phi.phi2, phi.c2)?,
            grids: (0..=MAX_LEVEL).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.phi
    }

    fn grid(&self, level: u32) -> &Grid {
        self.grids[level as usize].get_or_init(|| Grid::build(&self.phi, level))
    }

    /// Raises the level for each pair until its estimate meets the tolerance.
    fn evaluate_adaptive(&self, pairs: &[(Factor, Factor)]) -> Vec<Estimate> {
        let mut best: Vec<Option<Estimate>> = vec![None; pairs.len()];
        let mut pending: Vec<usize> = (0..pairs.len()).collect();
        for level in MIN_LEVEL.min(self.cfg.max_level)..=self.cfg.max_level {
            if pending.is_empty() {
                break;
            }
            let subset: Vec<(Factor, Factor)> = pending.iter().map(|&i| pairs[i]).collect();
            let est = self.grid(level).evaluate(&subset);
            let mut still = Vec::new();
            for (&i, e) in pending.iter().zip(est) {
                if !e.converged(&self.cfg) && !e.at_rounding_floor() {
                    still.push(i);
                }
                best[i] = Some(e);
            }
            pending = still;
        }
        best.into_iter().map(|e| e.expect("every pair evaluated at least once")).collect()
    }

    fn pairs(&self, cells: &[Cell]) -> Result<Vec<(Factor, Factor)>> {
        cells
            .iter()
            .map(|c| {
                c.validate()?;
                Ok(c.factors(&self.phi))
            })
            .collect()
    }

    /// Means for many cells. Fails on the first cell that did not converge.
    pub fn ktons(&self, cells: &[Cell]) -> Result<Vec<PredictiveMean>> {
        let pairs = self.pairs(cells)?;
        let est = self.evaluate_adaptive(&pairs);
        cells
            .iter()
            .zip(est)
            .map(|(c, e)| {
                let mean = e.mean(c.ln_prefactor(self.ln_norm));
                if e.converged(&self.cfg) {
                    Ok(mean)
                } else {
                    Err(Error::NonConvergence {
                        context: format!("k-ton mean N = {}, M = {}, k = {}", c.n, c.m, c.k),
                        partial: mean.lambda,
                        error: mean.quad_error,
                    })
                }
            })
            .collect()
    }

    pub fn kton(&self, n: CountPair, m: CountPair, k: CountPair) -> Result<PredictiveMean> {
        Ok(self.ktons(&[Cell::new(n, m, k)])?[0])
    }

    fn grid_cells(n: CountPair, m: CountPair, v: u64) -> Vec<(usize, Cell)> {
        let side = v as usize + 1;
        let mut out = Vec::new();
        for k1 in 0..=v.min(m.p1) {
            for k2 in 0..=v.min(m.p2) {
                if k1 + k2 > 0 {
                    out.push((k1 as usize * side + k2 as usize, Cell::new(n, m, CountPair::new(k1, k2))));
                }
            }
        }
        out
    }

    /// Means for `k` in `0..=v` squared, row-major by `k₁`. Cells with
    /// `k_p > M_p` and the `(0,0)` cell are zero.
    ///
    /// Returns the highest level used and whether every cell converged
    /// instead of failing, so optimizers can carry on with best-effort values.
    pub fn kton_grid_best_effort(&self, n: CountPair, m: CountPair, v: u64) -> Result<(Vec<PredictiveMean>, u32, bool)> {
        let side = v as usize + 1;
        let cells = Self::grid_cells(n, m, v);
        let plain: Vec<Cell> = cells.iter().map(|(_, c)| *c).collect();
        let est = self.evaluate_adaptive(&self.pairs(&plain)?);
        let mut out = vec![PredictiveMean::default(); side * side];
        let mut level = MIN_LEVEL.min(self.cfg.max_level);
        let mut ok = true;
        for ((pos, c), e) in cells.iter().zip(est) {
            out[*pos] = e.mean(c.ln_prefactor(self.ln_norm));
            level = level.max(e.level);
            ok &= e.converged(&self.cfg);
        }
        Ok((out, level, ok))
    }

    /// Like [`Predictor::kton_grid_best_effort`] on one fixed level with no
    /// convergence check. Used where the same rule must be applied across
    /// nearby hyperparameters (finite-difference gradients).
    pub fn kton_grid_at_level(&self, n: CountPair, m: CountPair, v: u64, level: u32) -> Result<Vec<PredictiveMean>> {
        if level as usize > MAX_LEVEL {
            return Err(Error::InvalidArgument(format!("level {level} exceeds {MAX_LEVEL}")));
        }
        let side = v as usize + 1;
        let cells = Self::grid_cells(n, m, v);
        let plain: Vec<Cell> = cells.iter().map(|(_, c)| *c).collect();
        let est = self.grid(level).evaluate(&self.pairs(&plain)?);
        let mut out = vec![PredictiveMean::default(); side * side];
        for ((pos, c), e) in cells.iter().zip(est) {
            out[*pos] = e.mean(c.ln_prefactor(self.ln_norm));
        }
        Ok(out)
    }

    pub fn kton_grid(&self, n: CountPair, m: CountPair, v: u64) -> Result<Vec<PredictiveMean>> {
        let side = v as usize + 1;
        let cells = Self::grid_cells(n, m, v);
        let plain: Vec<Cell> = cells.iter().map(|(_, c)| *c).collect();
        let means = self.ktons(&plain)?;
        let mut out = vec![PredictiveMean::default(); side * side];
        for ((pos, _), p) in cells.iter().zip(means) {
            out[*pos] = p;
        }
        Ok(out)
    }

    /// Cumulative totals along the sweep up to `follow_max`.
    pub fn total_curve(&self, n: CountPair, follow_max: CountPair) -> Result<TotalCurve> {
        self.total_curve_impl(n, follow_max, true).map(|(c, _)| c)
    }

    /// Like [`Predictor::total_curve`], keeping unconverged terms and
    /// reporting whether every term converged.
    pub fn total_curve_best_effort(&self, n: CountPair, follow_max: CountPair) -> Result<(TotalCurve, bool)> {
        self.total_curve_impl(n, follow_max, false)
    }

    fn total_curve_impl(&self, n: CountPair, follow_max: CountPair, strict: bool) -> Result<(TotalCurve, bool)> {
        let one = CountPair::new(1, 0);
        let two = CountPair::new(0, 1);
        let mut cells: Vec<Cell> = (1..=follow_max.p1)
            .map(|j| Cell::new(CountPair::new(n.p1 + j - 1, n.p2), one, one))
            .collect();
        cells.extend(
            (1..=follow_max.p2).map(|j| Cell::new(CountPair::new(n.p1 + follow_max.p1, n.p2 + j - 1), two, two)),
        );
        let pairs = self.pairs(&cells)?;
        let est = self.evaluate_adaptive(&pairs);
        let mut terms = Vec::with_capacity(cells.len());
        let mut ok = true;
        for (idx, (c, e)) in cells.iter().zip(est).enumerate() {
            let mean = e.mean(c.ln_prefactor(self.ln_norm));
            if !e.converged(&self.cfg) {
                ok = false;
                if strict {
                    let (pop, j) = if (idx as u64) < follow_max.p1 {
                        (1, idx as u64 + 1)
                    } else {
                        (2, idx as u64 + 1 - follow_max.p1)
                    };
                    return Err(Error::NonConvergence {
                        context: format!("total term j{pop} = {j} (N = {n}, M = {follow_max})"),
                        partial: mean.lambda,
                        error: mean.quad_error,
                    });
                }
            }
            terms.push(mean);
        }
        let prefix = |ts: &[PredictiveMean]| {
            ts.iter()
                .scan(PredictiveMean::default(), |acc, t| {
                    *acc = *acc + *t;
                    Some(*acc)
                })
                .collect::<Vec<_>>()
        };
        let split = follow_max.p1 as usize;
        Ok((
            TotalCurve {
                pilot: n,
                first: prefix(&terms[..split]),
                second: prefix(&terms[split..]),
            },
            ok,
        ))
    }

    pub fn total(&self, n: CountPair, m: CountPair) -> Result<PredictiveMean> {
        if m.total() == 0 {
            return Ok(PredictiveMean::default());
        }
        let curve = self.total_curve(n, m)?;
        Ok(curve.at(m).expect("endpoint lies on its own sweep"))
    }
}

/// Poisson mean of the number of new variants seen exactly `k` times in a
/// follow-up of size `m`, after a pilot of size `n`.
pub fn kton_predictive_mean(
    n: CountPair,
    m: CountPair,
    k: CountPair,
    phi: &Hyperparams,
    cfg: &QuadratureConfig,
) -> Result<PredictiveMean> {
    Cell::new(n, m, k).validate()?;
    Predictor::new(phi, cfg)?.kton(n, m, k)
}

/// Poisson mean of the total number of new variants in a follow-up of size
/// `m`; zero for an empty follow-up.
pub fn total_predictive_mean(
    n: CountPair,
    m: CountPair,
    phi: &Hyperparams,
    cfg: &QuadratureConfig,
) -> Result<PredictiveMean> {
    Predictor::new(phi, cfg)?.total(n, m)
}

/// See [`Predictor::total_curve`].
pub fn total_predictive_curve(
    n: CountPair,
    follow_max: CountPair,
    phi: &Hyperparams,
    cfg: &QuadratureConfig,
) -> Result<TotalCurve> {
    Predictor::new(phi, cfg)?.total_curve(n, follow_max)
}

/// See [`Predictor::kton_grid`].
pub fn kton_grid(
    n: CountPair,
    m: CountPair,
    v: u64,
    phi: &Hyperparams,
    cfg: &QuadratureConfig,
) -> Result<Vec<PredictiveMean>> {
    Predictor::new(phi, cfg)?.kton_grid(n, m, v)
}
