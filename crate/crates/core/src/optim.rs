//! Limited-memory quasi-Newton minimisation under box constraints.
//!
//! Directions come from the two-loop recursion restricted to the free
//! variables (those not held at a bound by the gradient), and steps follow
//! the projected path `P(x + αd)` with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the projected gradient's ∞-norm falls below this.
    pub gtol: f64,
    /// Stop when `|f_k − f_{k+1}| ≤ ftol · max(|f_k|, 1)`.
    pub ftol: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        LbfgsOptions { memory: 10, max_iter: 500, gtol: 1e-6, ftol: 1e-10, max_backtracks: 50 }
    }
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub message: String,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Variables pinned at a bound with the gradient pushing outward.
fn pinned(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..x.len()).map(|i| (x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)).collect()
}

fn projected_grad_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let pin = pinned(x, g, lo, hi);
    g.iter().zip(pin).map(|(v, p)| if p { 0.0 } else { v.abs() }).fold(0.0, f64::max)
}

/// Minimise `f` (returning value and gradient, or `None` where undefined)
/// over `lo ≤ x ≤ hi`. Undefined points are rejected by the line search.
pub fn minimize<F>(mut f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &LbfgsOptions) -> Option<Minimum>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut g) = f(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let mut evals = 1;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut message = "iteration limit".to_string();
    let mut converged = false;
    let mut iter = 0;
    while iter < opts.max_iter {
        if projected_grad_norm(&x, &g, lo, hi) < opts.gtol {
            converged = true;
            message = "gradient tolerance".into();
            break;
        }
        iter += 1;
        let pin = pinned(&x, &g, lo, hi);
        let mask = |v: &mut Vec<f64>| {
            for i in 0..n {
                if pin[i] {
                    v[i] = 0.0;
                }
            }
        };
        // two-loop recursion
        let mut q = g.clone();
        mask(&mut q);
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        mask(&mut d);
        if dot(&d, &g) >= 0.0 {
            mem.clear();
            d = g.iter().map(|v| -v).collect();
            mask(&mut d);
        }
        let mut step = if mem.is_empty() { 1.0 / d.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0) } else { 1.0 };
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            let mut xn: Vec<f64> = (0..n).map(|i| x[i] + step * d[i]).collect();
            project(&mut xn, lo, hi);
            let dx: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
            if dx.iter().all(|v| *v == 0.0) {
                break;
            }
            evals += 1;
            if let Some((fn_, gn)) = f(&xn) {
                if fn_.is_finite() && fn_ <= fx + 1e-4 * dot(&g, &dx) {
                    accepted = Some((xn, fn_, gn, dx));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn, s)) = accepted else {
            message = "line search failed".into();
            break;
        };
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if mem.len() == opts.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }
        let df = (fx - fn_).abs();
        let scale = fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        g = gn;
        if df <= opts.ftol * scale {
            converged = true;
            message = "function tolerance".into();
            break;
        }
    }
    Some(Minimum { x, f: fx, grad: g, iterations: iter, evaluations: evals, converged, message })
}
