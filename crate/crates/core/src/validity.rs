//! Nesting-validity diagnostics.
//!
//! An edge `h = ψ_v⁻¹ ∘ ψ_c` serving a subtree of `d_e` leaves must have
//! `(−1)^m h^{(m+1)} ≥ 0` for `m < d_e`. The check evaluates those margins
//! on a grid of child arguments `t` and the penalty sums the squared
//! negative parts.

use crate::bell::{edge_series, EdgePath};
use crate::data::Dataset;
use crate::error::Result;
use crate::generators::Generator;
use crate::jet::Jet;
use crate::num::{Lift, Log, Real};
use crate::tree::{clamp_u, forward_pass, Child, CopulaTree, NodeState};
use serde::Serialize;

/// `margin_m = (−1)^m p_{m+1}` for `m = 0..d_e`, on Taylor coefficients.
pub fn sign_alternation_check<S: Real>(p: &Jet<S>, d_e: usize) -> Vec<S> {
    (0..d_e)
        .map(|m| {
            let c = p.c.get(m + 1).cloned().unwrap_or_else(S::zero);
            if m % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect()
}

pub const GRID_POINTS: usize = 32;
/// Ratio of the smallest to the largest log-spaced grid point.
pub const GRID_SPAN: f64 = 1e-6;
/// Grid extent when no data are supplied.
pub const DEFAULT_T_MAX: f64 = 10.0;

/// `GRID_POINTS` log-spaced points ending at `t_max`.
pub fn log_grid(t_max: f64) -> Vec<f64> {
    let lo = (t_max * GRID_SPAN).ln();
    let hi = t_max.ln();
    (0..GRID_POINTS).map(|i| (lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64).exp()).collect()
}

/// Evaluation points per edge, indexed by child node (empty for the root).
pub fn edge_grid(tree: &CopulaTree, data: Option<&Dataset>) -> Result<Vec<Vec<f64>>> {
    let n = tree.nodes().len();
    let mut pts = vec![Vec::new(); n];
    if let Some(ds) = data {
        let gens = tree.generators(tree.params())?;
        for (u, m) in ds.rows() {
            let uc: Vec<f64> = u.iter().map(|x| clamp_u(*x)).collect();
            let st: Vec<NodeState<f64>> = forward_pass(tree, &gens, &uc, m);
            for k in 1..n {
                if st[k].t.is_finite() && st[k].t > 0.0 {
                    pts[k].push(st[k].t);
                }
            }
        }
    }
    for p in pts.iter_mut().skip(1) {
        let t_max = p.iter().copied().fold(0.0, f64::max);
        let t_max = if t_max > 0.0 { 4.0 * t_max } else { DEFAULT_T_MAX };
        p.extend(log_grid(t_max));
    }
    Ok(pts)
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeReport {
    pub parent: usize,
    pub child: usize,
    pub order: usize,
    pub points_checked: usize,
    /// Most negative margin seen (positive when every margin is positive).
    pub worst_margin: f64,
    pub worst_t: f64,
    pub penalty: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidityReport {
    pub edges: Vec<EdgeReport>,
    pub penalty: f64,
    pub pass: bool,
}

fn edges(tree: &CopulaTree) -> Vec<(usize, usize)> {
    let mut e = Vec::new();
    for (v, n) in tree.nodes().iter().enumerate() {
        for c in &n.children {
            if let Child::Node(k) = c {
                e.push((v, *k));
            }
        }
    }
    e
}

fn edge_margins<T: Real + Lift<T>>(outer: &Generator<T>, inner: &Generator<T>, t: f64, order: usize, path: EdgePath) -> Result<Vec<T>>
where
    Log<T>: crate::generators::GenScalar<T>,
{
    let tl = Log::<T>::from_f64(t);
    let c = inner.psi_of(&tl);
    let p = edge_series(outer, inner, &tl, &c, order, path)?;
    Ok(sign_alternation_check(&p, order).iter().map(|m| m.to_raw()).collect())
}

/// `Σ_e Σ_t Σ_m min(0, margin)²` at free parameters `params`, generic so
/// that it can be differentiated.
pub fn nesting_penalty<T>(tree: &CopulaTree, params: &[T], grid: &[Vec<f64>]) -> Result<T>
where
    T: Real + Lift<T>,
    Log<T>: crate::generators::GenScalar<T>,
{
    let gens = tree.generators(params)?;
    let mut total = T::zero();
    for (v, k) in edges(tree) {
        let order = tree.nodes()[k].leaves;
        for &t in &grid[k] {
            for m in edge_margins(&gens[v], &gens[k], t, order, EdgePath::Auto)? {
                if m.value() < 0.0 {
                    total = total + m.clone() * m;
                }
            }
        }
    }
    Ok(total)
}

/// Per-edge report at the tree's own parameters.
pub fn validity_report(tree: &CopulaTree, data: Option<&Dataset>, path: EdgePath) -> Result<ValidityReport> {
    let grid = edge_grid(tree, data)?;
    let gens = tree.generators(tree.params())?;
    let mut out = Vec::new();
    for (v, k) in edges(tree) {
        let order = tree.nodes()[k].leaves;
        let (mut worst, mut worst_t, mut pen) = (f64::INFINITY, f64::NAN, 0.0);
        for &t in &grid[k] {
            for m in edge_margins(&gens[v], &gens[k], t, order, path)? {
                if m < worst {
                    worst = m;
                    worst_t = t;
                }
                if m < 0.0 {
                    pen += m * m;
                }
            }
        }
        out.push(EdgeReport { parent: v, child: k, order, points_checked: grid[k].len(), worst_margin: worst, worst_t, penalty: pen });
    }
    let penalty: f64 = out.iter().map(|e| e.penalty).sum();
    Ok(ValidityReport { edges: out, penalty, pass: penalty == 0.0 })
}
