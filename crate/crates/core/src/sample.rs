//! Sampling by the Rosenblatt conditional-distribution method, plus the
//! Clayton frailty construction as an independent reference sampler.
//!
//! Each row draws from its own ChaCha stream (`seed`, stream = row index),
//! so output is identical for any thread count.

use crate::bell::{log_density_gens, EvalOptions};
use crate::error::{Error, Result};
use crate::generators::{nelsen9_theta_max, Family, GenScalar, Generator};
use crate::num::{Log, Real};
use crate::tree::{clamp_u, CopulaTree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use rayon::prelude::*;
use std::sync::atomic::{AtomicUsize, Ordering};

pub const BISECTION_TOL: f64 = 1e-10;
pub const BISECTION_CAP: usize = 200;

static CAP_HITS: AtomicUsize = AtomicUsize::new(0);

/// Number of bisections that stopped at the iteration cap so far.
pub fn bisection_cap_hits() -> usize {
    CAP_HITS.load(Ordering::Relaxed)
}

/// Deterministic per-row generator.
pub fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(row as u64);
    r
}

fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let v: f64 = rng.random();
        if v > 0.0 {
            return v;
        }
    }
}

/// Root of an increasing `f` on (0, 1) with `f(0+) < 0 < f(1)`.
fn bisect(mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..BISECTION_CAP {
        let m = 0.5 * (a + b);
        if b - a < BISECTION_TOL {
            return Ok(m);
        }
        let v = f(m)?;
        if v.is_nan() {
            return Err(Error::Internal(format!("conditional distribution is NaN at u={m}")));
        }
        if v < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    CAP_HITS.fetch_add(1, Ordering::Relaxed);
    Ok(0.5 * (a + b))
}

fn par_rows<F>(n: usize, seed: u64, f: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    (0..n).into_par_iter().map(|i| f(&mut row_rng(seed, i))).collect()
}

/// Flat Archimedean copula: `u_1 = V_1`, then `u_j` solves
/// `ψ^{(j−1)}(t + ψ⁻¹(u)) / ψ^{(j−1)}(t) = V_j` with `t = Σ_{i<j} ψ⁻¹(u_i)`.
pub fn rosenblatt_flat(g: &Generator, d: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if d == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    if g.family == Family::Nelsen9 && g.theta > nelsen9_theta_max(d) {
        return Err(Error::Domain(format!("nelsen9 θ={} is not {d}-monotone", g.theta)));
    }
    par_rows(n, seed, |rng| {
        let mut row = Vec::with_capacity(d);
        let mut t = 0.0;
        for j in 0..d {
            let v = open_uniform(rng);
            let u = if j == 0 {
                v
            } else {
                let base = Log::<f64>::generator_jet(g, &Log::from_f64(t), j).c[j].ln_abs_f64();
                let lv = v.ln();
                bisect(|u| {
                    let s = g.psi_inv(u)?;
                    let top = Log::<f64>::generator_jet(g, &Log::from_f64(t + s), j).c[j].ln_abs_f64();
                    Ok(top - base - lv)
                })?
            };
            let u = clamp_u(u);
            t += g.psi_inv(u)?;
            row.push(u);
        }
        Ok(row)
    })
}

trait LnAbs {
    fn ln_abs_f64(&self) -> f64;
}

impl LnAbs for Log<f64> {
    fn ln_abs_f64(&self) -> f64 {
        *self.log_abs()
    }
}

/// Nested copula: leaves in depth-first order; leaf `j` solves
/// `D_j(u) / D_j(1) = V_j` where `D_j` differentiates the leaves already
/// drawn, with the current leaf at `u` and the rest at 1.
pub fn rosenblatt_nested(tree: &CopulaTree, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let gens = tree.generators(tree.params())?;
    let order = tree.leaf_order().to_vec();
    let d = tree.dim();
    let opts = EvalOptions::default();
    par_rows(n, seed, |rng| {
        let mut u = vec![1.0; d];
        let mut mask = vec![false; d];
        for (step, &j) in order.iter().enumerate() {
            let v = open_uniform(rng);
            let x = if step == 0 {
                v
            } else {
                let base = log_density_gens(tree, &gens, &u, &mask, &opts)?;
                let lv = v.ln();
                let mut probe = u.clone();
                bisect(|x| {
                    probe[j] = x;
                    Ok(log_density_gens(tree, &gens, &probe, &mask, &opts)? - base - lv)
                })?
            };
            u[j] = clamp_u(x);
            mask[j] = true;
        }
        Ok(u)
    })
}

/// Clayton by the gamma frailty: `u_j = (1 + E_j / V)^{−1/θ}`,
/// `V ~ Gamma(1/θ, 1)`, `E_j ~ Exp(1)`.
pub fn clayton_frailty_sample(theta: f64, d: usize, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!("clayton frailty needs θ > 0, got {theta}")));
    }
    let gamma = Gamma::new(1.0 / theta, 1.0).map_err(|e| Error::Domain(e.to_string()))?;
    par_rows(n, seed, |rng| {
        let v: f64 = gamma.sample(rng);
        Ok((0..d)
            .map(|_| {
                let e: f64 = Exp1.sample(rng);
                clamp_u(((e / v).ln_1p() * (-1.0 / theta)).exp())
            })
            .collect())
    })
}

/// Column `j` of a row-major sample.
pub fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

/// `C(u)` for each row, the usual scalar summary for two-sample checks.
pub fn cdf_values(tree: &CopulaTree, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let gens = tree.generators(tree.params())?;
    let opts = EvalOptions::default();
    let mask = vec![false; tree.dim()];
    rows.iter().map(|r| log_density_gens(tree, &gens, r, &mask, &opts).map(|v: f64| v.exp())).collect()
}
