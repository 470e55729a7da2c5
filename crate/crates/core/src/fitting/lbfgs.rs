//! Limited-memory BFGS with finite-difference gradients.

use std::collections::VecDeque;

/// A function to minimize.
///
/// `anchor` is called once at every accepted iterate and may fix internal
/// state (a quadrature level, say) that `value` then uses for the gradient
/// and the line search around that iterate.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn anchor(&mut self, x: &[f64]) -> f64 {
        self.value(x)
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    /// Number of correction pairs kept.
    pub memory: usize,
    /// Stop when every gradient component is at most this in magnitude.
    pub grad_tol: f64,
    /// Stop when an accepted step lowers `f` by at most this, relative to
    /// `max(|f|, 1)`.
    pub f_rel_tol: f64,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions {
            max_iter: 200,
            memory: 10,
            grad_tol: 1e-5,
            f_rel_tol: 1e7 * f64::EPSILON,
            fd_step: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    /// Best point seen.
    pub x: Vec<f64>,
    pub f: f64,
    pub f_init: f64,
    pub iterations: usize,
    /// A stopping test was met (rather than the iteration cap or a failed
    /// line search).
    pub converged: bool,
}

/// `(f(x+h eᵢ) − f(x−h eᵢ)) / 2h` for each coordinate.
pub fn central_gradient<O: Objective + ?Sized>(f: &O, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f.value(&xp);
            xp[i] = x[i] - h;
            let down = f.value(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Fourth-order stencil `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h`.
pub fn five_point_gradient<O: Objective + ?Sized>(f: &O, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut at = |i: usize, d: f64| {
        xp[i] = x[i] + d;
        let v = f.value(&xp);
        xp[i] = x[i];
        v
    };
    (0..x.len())
        .map(|i| (-at(i, 2.0 * h) + 8.0 * at(i, h) - 8.0 * at(i, -h) + at(i, -2.0 * h)) / (12.0 * h))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Two-loop recursion: `-H g` for the current inverse-Hessian estimate.
fn direction(g: &[f64], history: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = history.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Minimizes `f` from `x0` with backtracking Armijo line searches.
pub fn minimize<O: Objective + ?Sized>(f: &mut O, x0: &[f64], opts: &LbfgsOptions) -> Minimum {
    let mut x = x0.to_vec();
    let mut fx = f.anchor(&x);
    let f_init = fx;
    let mut best = (x.clone(), fx);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut g = central_gradient(f, &x, opts.fd_step);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
            break;
        }
        if g.iter().all(|v| v.abs() <= opts.grad_tol) {
            converged = true;
            break;
        }
        let mut d = direction(&g, &history);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            history.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut step = if history.is_empty() {
            (1.0 / dot(&g, &g).sqrt()).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..40 {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            let fv = f.value(&xn);
            if fv.is_finite() && fv <= fx + 1e-4 * step * slope {
                accepted = Some((xn, fv));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, f_trial)) = accepted else {
            break;
        };
        iterations += 1;
        let f_new = f.anchor(&xn);
        let gn = central_gradient(f, &xn, opts.fd_step);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if history.len() == opts.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - f_trial;
        x = xn;
        fx = f_new;
        g = gn;
        if fx < best.1 {
            best = (x.clone(), fx);
        }
        if decrease <= opts.f_rel_tol * fx.abs().max(f_trial.abs()).max(1.0) {
            converged = true;
            break;
        }
    }
    Minimum {
        x: best.0,
        f: best.1,
        f_init,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2) + 10.0 * (x[1] + 1.0).powi(2) + x[0] * x[1];
        let m = minimize(&mut { f }, &[0.0, 0.0], &LbfgsOptions::default());
        assert!(m.converged);
        // ∇ = 0: 2(x-3) + y = 0, 20(y+1) + x = 0.
        assert!((2.0 * (m.x[0] - 3.0) + m.x[1]).abs() < 1e-4);
        assert!((20.0 * (m.x[1] + 1.0) + m.x[0]).abs() < 1e-4);
        assert!(m.f <= m.f_init);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = LbfgsOptions {
            grad_tol: 1e-7,
            f_rel_tol: 0.0,
            fd_step: 1e-6,
            ..LbfgsOptions::default()
        };
        let m = minimize(&mut { f }, &[-1.2, 1.0], &opts);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn gradients_agree() {
        let f = |x: &[f64]| (x[0] * 2.0).sin() + x[1].exp() * x[0];
        let x = [0.3, -0.2];
        let a = central_gradient(&f, &x, 1e-4);
        let b = five_point_gradient(&f, &x, 1e-3);
        let exact = [2.0 * 0.6f64.cos() + (-0.2f64).exp(), (-0.2f64).exp() * 0.3];
        for i in 0..2 {
            assert!((a[i] - exact[i]).abs() < 1e-7);
            assert!((b[i] - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn never_returns_worse_than_start() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { -x[0] };
        let m = minimize(&mut { f }, &[0.0], &LbfgsOptions::default());
        assert!(m.f <= m.f_init);
    }
}
