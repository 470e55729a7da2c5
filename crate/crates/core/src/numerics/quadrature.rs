//! Tanh-sinh (double exponential) quadrature on the open unit interval and
//! the unit square.
//!
//! Abscissae come from `x = 1 / (1 + exp(π sinh t))`, so `x` and `1 - x` are
//! both computed without cancellation and their logarithms stay finite far
//! beyond the range of `f64`. The `*_log` entry points take an integrand that
//! returns `ln f`; they are used for beta-kernel integrands whose factors
//! underflow long before their product does.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of the truncated `t` range. At `t = 6.5` the abscissa is about
/// `exp(-1043)`, far below anything an `f64` integrand can resolve.
const T_MAX: f64 = 6.5;

/// Levels below this never report convergence: two coarse estimates can agree
/// by accident.
pub const MIN_LEVEL: u32 = 3;

/// Relative error at which refinement stops even if the tolerance is tighter.
pub const ROUNDING_FLOOR: f64 = 64.0 * f64::EPSILON;

/// Tolerances and refinement depth for the tanh-sinh rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step size at the deepest level is `2^-max_level`.
    pub max_level: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_level: 12,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(Error::InvalidArgument(format!("rel_tol must be positive (got {})", self.rel_tol)));
        }
        if !(self.abs_tol >= 0.0) || !self.abs_tol.is_finite() {
            return Err(Error::InvalidArgument(format!("abs_tol must be nonnegative (got {})", self.abs_tol)));
        }
        if !(1..=20).contains(&self.max_level) {
            return Err(Error::InvalidArgument(format!(
                "max_level must be in 1..=20 (got {})",
                self.max_level
            )));
        }
        Ok(())
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    fn tolerance(&self, estimate: f64) -> f64 {
        (self.rel_tol * estimate.abs()).max(self.abs_tol)
    }
}

/// Estimate plus error bound. `converged` is false when the tolerance was not
/// met by `max_level`; `value` is then the best available estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub level: u32,
}

impl QuadResult {
    /// Turns a non-converged result into [`Error::NonConvergence`].
    pub fn require(self, context: impl Into<String>) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::NonConvergence {
                context: context.into(),
                partial: self.value,
                error: self.error,
            })
        }
    }
}

/// One tanh-sinh abscissa on (0, 1) with its weight, all in log form as well.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    /// `1 - x`, computed directly.
    pub complement: f64,
    pub ln_x: f64,
    pub ln_complement: f64,
    /// Log of the weight `dx/dt` (the step `h` is applied separately).
    pub ln_weight: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Node {
    pub fn at(t: f64) -> Self {
        let two_s = std::f64::consts::PI * t.sinh();
        let ln_x = -softplus(two_s);
        let ln_complement = -softplus(-two_s);
        let ln_weight = std::f64::consts::PI.ln() + t.cosh().ln() + ln_x + ln_complement;
        Node {
            x: ln_x.exp(),
            complement: ln_complement.exp(),
            ln_x,
            ln_complement,
            ln_weight,
        }
    }
}

/// Nodes first appearing at `level`: every node for level 0, odd multiples
/// of `2^-level` afterwards.
pub fn level_nodes(level: u32) -> impl Iterator<Item = Node> {
    let h = (-(level as f64)).exp2();
    let kmax = (T_MAX / h).floor() as i64;
    let step = if level == 0 { 1 } else { 2 };
    let start = if level == 0 { -kmax } else { -kmax + (kmax + 1).rem_euclid(2) };
    (0..)
        .map(move |i| start + step * i)
        .take_while(move |&k| k <= kmax)
        .map(move |k| Node::at(k as f64 * h))
}

/// All nodes of the rule with step `2^-level`, ordered by `t`.
pub fn full_nodes(level: u32) -> Vec<Node> {
    let h = (-(level as f64)).exp2();
    let kmax = (T_MAX / h).floor() as i64;
    (-kmax..=kmax).map(|k| Node::at(k as f64 * h)).collect()
}

fn check(value: f64, x: f64, y: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteIntegrand { x, y, value })
    }
}

/// Level-doubling driver. `sum_level` returns the weighted sum over the nodes
/// new at that level, plus any error already accumulated inside it (used by
/// the iterated 2-D rule) and whether those inner pieces converged.
fn refine<F>(cfg: &QuadratureConfig, mut sum_level: F) -> Result<QuadResult>
where
    F: FnMut(u32) -> Result<(f64, f64, bool)>,
{
    cfg.validate()?;
    let mut sum = 0.0;
    let mut inner_err = 0.0;
    let mut inner_ok = true;
    let mut prev = f64::NAN;
    let mut last = QuadResult {
        value: 0.0,
        error: f64::INFINITY,
        converged: false,
        level: 0,
    };
    for level in 0..=cfg.max_level {
        let (s, e, ok) = sum_level(level)?;
        sum += s;
        inner_err += e;
        inner_ok &= ok;
        let h = (-(level as f64)).exp2();
        let estimate = h * sum;
        let diff = if level == 0 { f64::INFINITY } else { (estimate - prev).abs() };
        let error = diff + h * inner_err;
        last = QuadResult {
            value: estimate,
            error,
            converged: false,
            level,
        };
        if level >= MIN_LEVEL.min(cfg.max_level) && level > 0 && error <= cfg.tolerance(estimate) {
            last.converged = inner_ok;
            if inner_ok {
                return Ok(last);
            }
        }
        if level >= MIN_LEVEL && error <= ROUNDING_FLOOR * estimate.abs() {
            return Ok(last);
        }
        prev = estimate;
    }
    Ok(last)
}

/// ∫₀¹ f(x) dx. `f` is only called strictly inside (0, 1): nodes that round
/// onto an endpoint carry negligible weight and are skipped.
pub fn integrate_1d<F>(mut f: F, cfg: &QuadratureConfig) -> Result<QuadResult>
where
    F: FnMut(f64) -> f64,
{
    refine(cfg, |level| {
        let mut s = 0.0;
        for node in level_nodes(level) {
            let w = node.ln_weight.exp();
            if w == 0.0 || node.x == 0.0 || node.x == 1.0 {
                continue;
            }
            s += w * check(f(node.x), node.x, f64::NAN)?;
        }
        Ok((s, 0.0, true))
    })
}

/// ∫₀¹ exp(g(node)) dx for a nonnegative integrand given by its logarithm.
/// `g` may return `-inf` for a zero integrand.
pub fn integrate_1d_log<G>(mut ln_f: G, cfg: &QuadratureConfig) -> Result<QuadResult>
where
    G: FnMut(&Node) -> f64,
{
    refine(cfg, |level| {
        let mut s = 0.0;
        for node in level_nodes(level) {
            let v = ln_f(&node);
            if v.is_nan() || v == f64::INFINITY {
                return Err(Error::NonFiniteIntegrand {
                    x: node.x,
                    y: f64::NAN,
                    value: v,
                });
            }
            s += (v + node.ln_weight).exp();
        }
        Ok((s, 0.0, true))
    })
}

/// ∫∫ over (0,1)² of f(x, y), as an iterated rule: every outer node in `y`
/// gets its own converged inner integral in `x`.
pub fn integrate_2d<F>(f: F, cfg: &QuadratureConfig) -> Result<QuadResult>
where
    F: Fn(f64, f64) -> f64,
{
    let inner_cfg = cfg.with_rel_tol(cfg.rel_tol / 4.0);
    refine(cfg, |level| {
        let (mut s, mut e, mut ok) = (0.0, 0.0, true);
        for node in level_nodes(level) {
            let w = node.ln_weight.exp();
            if w == 0.0 || node.x == 0.0 || node.x == 1.0 {
                continue;
            }
            let y = node.x;
            let inner = refine(&inner_cfg, |lv| {
                let mut si = 0.0;
                for nx in level_nodes(lv) {
                    let wx = nx.ln_weight.exp();
                    if wx == 0.0 || nx.x == 0.0 || nx.x == 1.0 {
                        continue;
                    }
                    si += wx * check(f(nx.x, y), nx.x, y)?;
                }
                Ok((si, 0.0, true))
            })?;
            s += w * inner.value;
            e += w * inner.error;
            ok &= inner.converged;
        }
        Ok((s, e, ok))
    })
}

/// Log-integrand version of [`integrate_2d`]; `ln_f(x_node, y_node)`.
pub fn integrate_2d_log<G>(ln_f: G, cfg: &QuadratureConfig) -> Result<QuadResult>
where
    G: Fn(&Node, &Node) -> f64,
{
    let inner_cfg = cfg.with_rel_tol(cfg.rel_tol / 4.0);
    refine(cfg, |level| {
        let (mut s, mut e, mut ok) = (0.0, 0.0, true);
        for ny in level_nodes(level) {
            // The outer weight goes inside the exponent: near the ends the
            // inner integral alone can overflow while the product is tiny.
            let inner = integrate_1d_log(|nx| ln_f(nx, &ny) + ny.ln_weight, &inner_cfg)?;
            s += inner.value;
            e += inner.error;
            ok &= inner.converged;
        }
        Ok((s, e, ok))
    })
}
