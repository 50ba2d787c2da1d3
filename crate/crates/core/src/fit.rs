//! Censored maximum likelihood, observed-Fisher standard errors and
//! Kaplan–Meier marginals.
//!
//! The optimiser works on the free parameters; ordering constraints live in
//! the node transforms, so only plain domain boxes remain on identity
//! parameters. Standard errors are reported for the node θs by the delta
//! method through the transform Jacobian.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::grad::{dual_params, log_likelihood, log_likelihood_with_gradient};
use crate::optim::{minimize, LbfgsOptions};
use crate::tree::{CopulaTree, Transform};
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub optimizer: LbfgsOptions,
    /// Central-difference step for the Hessian of the log-likelihood.
    pub hessian_step: f64,
    /// Per-parameter boxes; `None` derives them from the node domains.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub standard_errors: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { optimizer: LbfgsOptions::default(), hessian_step: 1e-4, bounds: None, standard_errors: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    pub param_names: Vec<String>,
    /// Free parameters at the optimum.
    pub params: Vec<f64>,
    /// Node θs (pre-order) at the optimum.
    pub theta_hat: Vec<f64>,
    pub nll: f64,
    pub converged: bool,
    pub iterations: usize,
    pub message: String,
    pub hessian_pd: bool,
    /// θ-space standard errors, present only with a positive-definite Hessian.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_params: Option<Vec<f64>>,
}

/// `−Σ_i log c_{δ_i}(u_i; θ)`.
pub fn negative_log_likelihood(tree: &CopulaTree, data: &Dataset, params: &[f64]) -> Result<f64> {
    Ok(-log_likelihood(tree, data, params)?)
}

/// Boxes implied by the node domains for identity-mapped parameters.
pub fn default_bounds(tree: &CopulaTree) -> Vec<(f64, f64)> {
    let mut b = vec![(f64::NEG_INFINITY, f64::INFINITY); tree.n_params()];
    for n in tree.nodes() {
        if n.transform != Transform::Identity {
            continue;
        }
        let (lo, lo_in, hi, hi_in) = n.family.domain();
        let lo = if lo_in { lo } else { lo + 1e-6 * lo.abs().max(1.0) };
        let hi = if hi_in || !hi.is_finite() { hi } else { hi - 1e-6 };
        let e = &mut b[n.slot];
        e.0 = e.0.max(lo);
        e.1 = e.1.min(hi);
    }
    b
}

/// Maximum-likelihood fit from `init` (free parameters).
pub fn fit_mle(tree: &CopulaTree, data: &Dataset, init: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if init.len() != tree.n_params() {
        return Err(Error::Input(format!("{} initial values for {} parameters", init.len(), tree.n_params())));
    }
    let bounds = opts.bounds.clone().unwrap_or_else(|| default_bounds(tree));
    let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
    let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
    if init.iter().zip(&bounds).any(|(x, b)| *x < b.0 || *x > b.1) {
        return Err(Error::Fit(format!("initial values {init:?} outside bounds {bounds:?}")));
    }
    if tree.dim() != data.dim() {
        return Err(Error::Input(format!("model has {} leaves but data has {} columns", tree.dim(), data.dim())));
    }
    let start = log_likelihood_with_gradient(tree, data, init).map_err(|e| Error::Fit(format!("NLL not finite at the initial values: {e}")))?;
    if !start.0.is_finite() {
        return Err(Error::Fit("NLL not finite at the initial values".into()));
    }
    let objective = |p: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (ll, g) = log_likelihood_with_gradient(tree, data, p).ok()?;
        (ll.is_finite() && g.iter().all(|v| v.is_finite())).then(|| (-ll, g.iter().map(|v| -v).collect()))
    };
    let m = minimize(objective, init, &lo, &hi, &opts.optimizer).ok_or_else(|| Error::Fit("objective undefined at start".into()))?;
    let theta_hat = tree.thetas(&m.x);
    let (mut se, mut se_params, mut pd) = (None, None, false);
    if opts.standard_errors {
        if let Ok(r) = observed_fisher_se(tree, data, &m.x, opts.hessian_step) {
            pd = r.pd;
            if r.pd {
                se = Some(r.se);
                se_params = Some(r.se_params);
            }
        }
    }
    Ok(FitResult {
        param_names: tree.param_names(),
        params: m.x,
        theta_hat,
        nll: m.f,
        converged: m.converged,
        iterations: m.iterations,
        message: m.message,
        hessian_pd: pd,
        se,
        se_params,
    })
}

#[derive(Clone, Debug)]
pub struct FisherSe {
    /// Node θ standard errors.
    pub se: Vec<f64>,
    /// Free-parameter standard errors.
    pub se_params: Vec<f64>,
    pub pd: bool,
    /// Observed information (negative log-likelihood Hessian) in free parameters.
    pub information: Vec<Vec<f64>>,
}

/// Observed information by central differences of the exact gradient,
/// symmetrised; standard errors from its inverse mapped through the
/// transform Jacobian, `se = sqrt(diag(J H⁻¹ Jᵀ))`.
pub fn observed_fisher_se(tree: &CopulaTree, data: &Dataset, params: &[f64], step: f64) -> Result<FisherSe> {
    let k = params.len();
    let mut h = vec![vec![0.0; k]; k];
    let mut p = params.to_vec();
    for i in 0..k {
        p[i] = params[i] + step;
        let (_, gp) = log_likelihood_with_gradient(tree, data, &p)?;
        p[i] = params[i] - step;
        let (_, gm) = log_likelihood_with_gradient(tree, data, &p)?;
        p[i] = params[i];
        for j in 0..k {
            h[i][j] = -(gp[j] - gm[j]) / (2.0 * step);
        }
    }
    for i in 0..k {
        for j in 0..i {
            let s = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = s;
            h[j][i] = s;
        }
    }
    let Some(l) = cholesky(&h) else {
        return Ok(FisherSe { se: vec![], se_params: vec![], pd: false, information: h });
    };
    let cov = cholesky_inverse(&l);
    let th = tree.thetas(&dual_params(params));
    let jac: Vec<Vec<f64>> = th.iter().map(|t| t.gradient(k)).collect();
    let se = jac
        .iter()
        .map(|row| {
            let v: f64 = (0..k).map(|a| (0..k).map(|b| row[a] * cov[a][b] * row[b]).sum::<f64>()).sum();
            v.max(0.0).sqrt()
        })
        .collect();
    let se_params = (0..k).map(|i| cov[i][i].sqrt()).collect();
    Ok(FisherSe { se, se_params, pd: true, information: h })
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_inverse(l: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = l.len();
    let mut inv = vec![vec![0.0; n]; n];
    for c in 0..n {
        // solve L y = e_c, then Lᵀ x = y
        let mut y = vec![0.0; n];
        for i in 0..n {
            let e = if i == c { 1.0 } else { 0.0 };
            y[i] = (e - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
        }
        for i in (0..n).rev() {
            let x = (y[i] - ((i + 1)..n).map(|k| l[k][i] * inv[k][c]).sum::<f64>()) / l[i][i];
            inv[i][c] = x;
        }
    }
    inv
}

/// Right-continuous product-limit survival curve.
#[derive(Clone, Debug, PartialEq)]
pub struct KaplanMeier {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// `S` just after each event time.
    pub surv: Vec<f64>,
}

impl KaplanMeier {
    pub fn fit(times: &[f64], events: &[bool]) -> Result<Self> {
        if times.is_empty() || times.len() != events.len() {
            return Err(Error::Input("Kaplan-Meier needs equally long, non-empty times and events".into()));
        }
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::Input("Kaplan-Meier times must be finite and non-negative".into()));
        }
        let mut idx: Vec<usize> = (0..times.len()).collect();
        idx.sort_by(|a, b| times[*a].total_cmp(&times[*b]));
        let mut at_risk = times.len() as f64;
        let mut s = 1.0;
        let (mut out_t, mut out_s) = (Vec::new(), Vec::new());
        let mut i = 0;
        while i < idx.len() {
            let t = times[idx[i]];
            let (mut deaths, mut total) = (0.0, 0.0);
            while i < idx.len() && times[idx[i]] == t {
                deaths += events[idx[i]] as u8 as f64;
                total += 1.0;
                i += 1;
            }
            if deaths > 0.0 {
                s *= 1.0 - deaths / at_risk;
                out_t.push(t);
                out_s.push(s);
            }
            at_risk -= total;
        }
        Ok(KaplanMeier { times: out_t, surv: out_s })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.times.partition_point(|x| *x <= t) {
            0 => 1.0,
            k => self.surv[k - 1],
        }
    }

    /// `S(t_i)` for each observation, clamped into the open unit interval.
    pub fn pseudo_observations(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|t| crate::tree::clamp_u(self.eval(*t))).collect()
    }
}
