//! Log-likelihoods and their exact parameter gradients.
//!
//! Gradients come from running the density engine on [`Dual`] scalars
//! seeded with one tangent slot per free parameter. Observations are
//! evaluated in parallel and reduced sequentially in row order, so the
//! totals do not depend on the thread count.

use crate::bell::{log_density_gens, EvalOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::num::Dual;
use crate::tree::{clamp_u, CopulaTree};
use rayon::prelude::*;

pub fn dual_params(params: &[f64]) -> Vec<Dual> {
    let n = params.len();
    params.iter().enumerate().map(|(i, p)| Dual::variable(*p, i, n)).collect()
}

fn clamped(u: &[f64]) -> Vec<f64> {
    u.iter().map(|x| clamp_u(*x)).collect()
}

/// `(log c_δ(u), ∂/∂params)` at free parameters `params`.
pub fn density_with_gradient(tree: &CopulaTree, u: &[f64], mask: &[bool], params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let gens = tree.generators(&dual_params(params))?;
    let v = log_density_gens(tree, &gens, &clamped(u), mask, &EvalOptions::default())?;
    Ok((v.re, v.gradient(params.len())))
}

/// Central differences `[f(p + εe_i) − f(p − εe_i)] / 2ε`.
pub fn finite_difference_gradient<F>(f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let mut p = params.to_vec();
    let mut g = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        p[i] = params[i] + eps;
        let hi = f(&p)?;
        p[i] = params[i] - eps;
        let lo = f(&p)?;
        p[i] = params[i];
        if !(hi.is_finite() && lo.is_finite()) {
            return Err(Error::Domain(format!("non-finite probe along parameter {i}")));
        }
        g.push((hi - lo) / (2.0 * eps));
    }
    Ok(g)
}

/// `max_i |a_i − b_i| / max(|a_i|, 1e-10)`.
pub fn max_relative_error(ad: &[f64], fd: &[f64]) -> f64 {
    ad.iter().zip(fd).map(|(a, b)| (a - b).abs() / a.abs().max(1e-10)).fold(0.0, f64::max)
}

/// Per-row log-densities in row order.
pub fn log_densities(tree: &CopulaTree, data: &Dataset, params: &[f64], opts: &EvalOptions) -> Result<Vec<f64>> {
    check_dims(tree, data)?;
    let gens = tree.generators(params)?;
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            let (u, m) = data.row(i);
            log_density_gens(tree, &gens, &clamped(u), m, opts).map_err(|e| Error::Row { row: i, source: Box::new(e) })
        })
        .collect()
}

/// `Σ_i log c_{δ_i}(u_i)`, summed in row order.
pub fn log_likelihood(tree: &CopulaTree, data: &Dataset, params: &[f64]) -> Result<f64> {
    Ok(log_densities(tree, data, params, &EvalOptions::default())?.iter().sum())
}

/// Per-row `(log-density, gradient)` in row order.
pub fn log_densities_with_gradient(tree: &CopulaTree, data: &Dataset, params: &[f64]) -> Result<Vec<(f64, Vec<f64>)>> {
    log_densities_with_gradient_opts(tree, data, params, &EvalOptions::default())
}

pub fn log_densities_with_gradient_opts(
    tree: &CopulaTree,
    data: &Dataset,
    params: &[f64],
    opts: &EvalOptions,
) -> Result<Vec<(f64, Vec<f64>)>> {
    check_dims(tree, data)?;
    let np = params.len();
    let gens = tree.generators(&dual_params(params))?;
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            let (u, m) = data.row(i);
            log_density_gens(tree, &gens, &clamped(u), m, opts)
                .map(|v| (v.re, v.gradient(np)))
                .map_err(|e| Error::Row { row: i, source: Box::new(e) })
        })
        .collect()
}

/// Total log-likelihood and its gradient.
pub fn log_likelihood_with_gradient(tree: &CopulaTree, data: &Dataset, params: &[f64]) -> Result<(f64, Vec<f64>)> {
    let rows = log_densities_with_gradient(tree, data, params)?;
    let mut ll = 0.0;
    let mut g = vec![0.0; params.len()];
    for (v, gi) in rows {
        ll += v;
        for (a, b) in g.iter_mut().zip(gi) {
            *a += b;
        }
    }
    Ok((ll, g))
}

fn check_dims(tree: &CopulaTree, data: &Dataset) -> Result<()> {
    if tree.dim() != data.dim() {
        return Err(Error::Input(format!("model has {} leaves but data has {} columns", tree.dim(), data.dim())));
    }
    Ok(())
}
