//! Mixed-partial density engine.
//!
//! For an observation with censoring mask δ the likelihood is the
//! |δ|-th mixed partial of the nested CDF in the uncensored coordinates.
//! It is assembled bottom-up:
//!
//! - every node `v` owns a β-vector with `∂^{D_v} g(t_v) = Σ_k g^{(k)}(t_v) β_k`
//!   for any outer function `g` (leaf derivative factors pulled out);
//! - a child subtree `c` enters its parent through the edge composition
//!   `h = ψ_v⁻¹ ∘ ψ_c`, mapping β^{(c)} to an α-vector with partial Bell
//!   polynomials, `α_k = (1/k!) Σ_j j! β_j [ε^j] P(ε)^k` where `P` is the
//!   Taylor series of `h` at `t_c` without its constant term;
//! - siblings combine by Cauchy product, `β^{(v)} = α^{(1)} * α^{(2)} * …`;
//! - at the root, `c_δ = Σ_k ψ_r^{(k)}(t_r) β_k · Π (ψ_par⁻¹)′(u_ℓ)`.
//!
//! The default path runs in sign/log-magnitude arithmetic, rescales the
//! edge series by powers of `p_1` before powering, and renormalises every
//! α- and β-vector, accumulating the log scales into a single Λ.

use crate::error::{Error, Result};
use crate::generators::{ln_power_series, series_terms, Family, GenScalar, Generator, SERIES_CUTOFF};
use crate::jet::Jet;
use crate::num::{ln_factorial, Lift, Log, Real, Scalar};
use crate::tree::{clamp_u, forward_pass, Child, CopulaTree, NodeState};

/// How edge Taylor series are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EdgePath {
    /// Registered closed form when available, else the implicit solve.
    Auto,
    /// Always the implicit triangular solve.
    Implicit,
    /// Jet of `ψ_v⁻¹ ∘ ψ_c` by direct composition (reference only).
    Explicit,
}

#[derive(Clone, Copy, Debug)]
pub struct EvalOptions {
    /// Sign/log-magnitude arithmetic with rescaling (default). When off, the
    /// plain recursion runs in the parameter scalar with no normalisation.
    pub log_domain: bool,
    /// Renormalise α and β vectors (log-domain path only).
    pub normalize: bool,
    pub edge_path: EdgePath,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { log_domain: true, normalize: true, edge_path: EdgePath::Auto }
    }
}

impl EvalOptions {
    pub fn raw() -> Self {
        EvalOptions { log_domain: false, normalize: false, edge_path: EdgePath::Auto }
    }
}

/// Closed-form same-family edge compositions, `r = θ_v / θ_c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Composition {
    /// (1+t)^r − 1
    Clayton,
    /// t^r
    Gumbel,
    /// −ln(1 − (1 − e^{−t})^r)
    Joe,
    /// ln a_v − ln(−expm1(r ln1p(−a_c e^{−t})))
    Frank,
    /// t + ln(r + (1−r) e^{−t})
    Nelsen9,
}

/// Built-in registrations; other pairs go through the implicit solve.
/// Nelsen12 and Nelsen13 pairs reduce to the Gumbel and Clayton forms.
pub fn registered_composition(outer: Family, inner: Family) -> Option<Composition> {
    if outer != inner {
        return None;
    }
    match outer {
        Family::Clayton => Some(Composition::Clayton),
        Family::Gumbel => Some(Composition::Gumbel),
        Family::Joe => Some(Composition::Joe),
        Family::Frank => Some(Composition::Frank),
        Family::Nelsen9 => Some(Composition::Nelsen9),
        Family::Nelsen12 => Some(Composition::Gumbel),
        Family::Nelsen13 => Some(Composition::Clayton),
        _ => None,
    }
}

fn log1m_exp<R: Real>(y: R) -> R {
    if y.value() > -std::f64::consts::LN_2 {
        (-y.exp_m1()).ln()
    } else {
        (-y.exp()).ln_1p()
    }
}

impl Composition {
    /// `h(t)` on any scalar; `outer`/`inner` supply θ_v and θ_c.
    pub fn apply<T: Real, R: Real + Lift<T>>(&self, outer: &T, inner: &T, t: &R) -> R {
        let r = outer.clone() / inner.clone();
        let rl = R::lift(&r);
        let t = t.clone();
        match self {
            Composition::Clayton => (t.ln_1p() * rl).exp_m1(),
            Composition::Gumbel => t.powf(&rl),
            Composition::Joe => -log1m_exp(log1m_exp(-t) * rl),
            Composition::Frank => {
                let a_v = -(-outer.clone()).exp_m1();
                let a_c = -(-inner.clone()).exp_m1();
                let u0 = a_c.value() * (-t.value()).exp();
                if let Some(terms) = series_terms(u0, t.jet_order()).filter(|_| u0 < SERIES_CUTOFF) {
                    // h = t + ln(a_v/a_c) − ln K(u), K(u) = (1 − (1−u)^r)/u = Σ_j (−1)^j C(r, j+1) u^j
                    let mut k = vec![r.clone()];
                    for j in 0..terms {
                        let next = -(k[j].clone() * (r.clone() - T::from_f64(j as f64 + 1.0))).scale(1.0 / (j as f64 + 2.0));
                        k.push(next);
                    }
                    let u = (-t.clone()).exp() * R::lift(&a_c);
                    return t + R::lift(&(a_v.ln() - a_c.ln())) - ln_power_series(k, &u);
                }
                let inner_log = ((-t).exp() * R::lift(&-a_c)).ln_1p();
                R::lift(&a_v.ln()) - (-(inner_log * rl).exp_m1()).ln()
            }
            Composition::Nelsen9 => {
                let one_m = R::lift(&(T::one() - r));
                t.clone() + (rl + one_m * (-t).exp()).ln()
            }
        }
    }
}

/// Edge series by a registered closed form: one jet through `h`.
pub fn edge_taylor_closed<T: Real, S: Real + Lift<T>>(
    comp: Composition,
    outer: &Generator<T>,
    inner: &Generator<T>,
    t: &S,
    n: usize,
) -> Jet<S> {
    comp.apply(&outer.theta, &inner.theta, &Jet::variable(t.clone(), n)).truncate(n)
}

/// Edge series by composing the closed-form ψ_c and ψ_v⁻¹ on a jet. Loses
/// range when ψ_c(t) underflows.
pub fn edge_taylor_explicit<T: Real, S: Real + Lift<T>>(
    outer: &Generator<T>,
    inner: &Generator<T>,
    t: &S,
    n: usize,
) -> Jet<S> {
    outer.psi_inv_of(&inner.psi_of(&Jet::variable(t.clone(), n))).truncate(n)
}

/// Edge series from the implicit relation ln ψ_v(h(t)) = ln ψ_c(t).
///
/// With `a` the jet of ln ψ_v at `h_0` and `b` the jet of ln ψ_c at `t`,
/// `q_1 = b_1/a_1` and `q_k = (b_k − Σ_{m≥2} a_m [ε^k] Q^m) / a_1`, where
/// the power table `[ε^j] Q^m` gains one column per step. The log form keeps
/// the coefficients of both sides on the scale of `h` itself, and `h_0`
/// comes from ln ψ_c(t), so an underflowed ψ_c(t) does not break it.
pub fn edge_taylor_implicit<T: Real, S: GenScalar<T>>(outer: &Generator<T>, inner: &Generator<T>, t: &S, n: usize) -> Result<Jet<S>> {
    let b = inner.log_psi_of(&Jet::variable(t.clone(), n)).truncate(n);
    let h0 = outer.psi_inv_of_log(&b.c[0]);
    if n == 0 {
        return Ok(Jet::from_coeffs(vec![h0]));
    }
    let a = outer.log_psi_of(&Jet::variable(h0.clone(), n)).truncate(n);
    if a.c[1].is_zero() || !a.c[1].value().is_finite() {
        return Err(Error::SingularEdge(format!(
            "{} derivative vanishes at h0={}",
            outer.family,
            h0.value()
        )));
    }
    let inv_a1 = a.c[1].recip();
    // pw[m][j] = [ε^j] Q^m for m ≥ 1
    let mut pw: Vec<Vec<S>> = vec![vec![S::zero(); n + 1]; n + 1];
    let mut q: Vec<S> = vec![S::zero(); n + 1];
    q[0] = h0;
    for k in 1..=n {
        let corr = S::sum_iter((2..=k).map(|m| a.c[m].clone() * pw[m][k].clone()));
        q[k] = (b.c[k].clone() - corr) * inv_a1.clone();
        pw[1][k] = q[k].clone();
        if k < n {
            for m in 2..=(k + 1) {
                let v = S::sum_iter((1..=k + 2 - m).map(|i| q[i].clone() * pw[m - 1][k + 1 - i].clone()));
                pw[m][k + 1] = v;
            }
        }
    }
    Ok(Jet::from_coeffs(q))
}

/// Edge series for `outer ∘ inner` at child state `(t, C)` by the chosen path.
pub fn edge_series<T: Real, S: GenScalar<T>>(
    outer: &Generator<T>,
    inner: &Generator<T>,
    t: &S,
    c_inner: &S,
    n: usize,
    path: EdgePath,
) -> Result<Jet<S>> {
    match path {
        // an underflowed inner CDF carries no information for the inverse
        EdgePath::Explicit if c_inner.is_zero() => edge_taylor_implicit(outer, inner, t, n),
        EdgePath::Explicit => Ok(edge_taylor_explicit(outer, inner, t, n)),
        EdgePath::Implicit => edge_taylor_implicit(outer, inner, t, n),
        EdgePath::Auto => match registered_composition(outer.family, inner.family) {
            Some(comp) => Ok(edge_taylor_closed(comp, outer, inner, t, n)),
            None => edge_taylor_implicit(outer, inner, t, n),
        },
    }
}

/// Bell transform without rescaling: `α_k = (1/k!) Σ_j j! β_j [ε^j] P^k`.
pub fn bell_transform_raw<S: Real>(beta: &[S], p: &Jet<S>) -> Vec<S> {
    let n = beta.len() - 1;
    if n == 0 {
        return vec![beta[0].clone()];
    }
    let mut pp = p.clone().truncate(n);
    pp.c[0] = S::zero();
    let bt: Vec<S> = beta.iter().enumerate().map(|(j, b)| b.scale_exp(ln_factorial(j))).collect();
    let mut alpha = vec![beta[0].clone()];
    let mut q = pp.clone();
    for k in 1..=n {
        let s = S::sum_iter((k..=n).map(|j| bt[j].clone() * q.c[j].clone()));
        alpha.push(s.scale_exp(-ln_factorial(k)));
        if k < n {
            q = q.mul_trunc(&pp, n);
        }
    }
    alpha
}

/// Bell transform with per-index rescaling `p̂_j = p_j / p_1^j`, so that
/// `[ε^j] P^k = p_1^j [ε^j] P̂^k` and `P̂` has unit linear coefficient.
pub fn bell_transform_scaled<S: Real>(beta: &[S], p: &Jet<S>) -> Vec<S> {
    let n = beta.len() - 1;
    if n == 0 {
        return vec![beta[0].clone()];
    }
    let p1 = p.c[1].clone();
    let inv = p1.recip();
    let mut phat = vec![S::zero(); n + 1];
    let mut ipow = S::one();
    let mut w = vec![beta[0].clone(); n + 1];
    let mut fpow = S::one();
    for j in 1..=n {
        ipow = ipow * inv.clone();
        fpow = fpow * p1.clone();
        phat[j] = p.c[j].clone() * ipow.clone();
        w[j] = (beta[j].clone() * fpow.clone()).scale_exp(ln_factorial(j));
    }
    let phat = Jet::from_coeffs(phat);
    let mut alpha = vec![beta[0].clone()];
    let mut q = phat.clone();
    for k in 1..=n {
        let s = S::sum_iter((k..=n).map(|j| w[j].clone() * q.c[j].clone()));
        alpha.push(s.scale_exp(-ln_factorial(k)));
        if k < n {
            q = q.mul_trunc(&phat, n);
        }
    }
    alpha
}

/// Truncated Cauchy product of two coefficient vectors.
pub fn convolve<S: Real>(a: &[S], b: &[S]) -> Vec<S> {
    if a.len() == 1 {
        return b.iter().map(|x| a[0].clone() * x.clone()).collect();
    }
    if b.len() == 1 {
        return a.iter().map(|x| x.clone() * b[0].clone()).collect();
    }
    let n = a.len() + b.len() - 2;
    (0..=n)
        .map(|k| {
            let lo = k.saturating_sub(b.len() - 1);
            let hi = k.min(a.len() - 1);
            S::sum_iter((lo..=hi).map(|i| a[i].clone() * b[k - i].clone()))
        })
        .collect()
}

/// `√ε_min`, the floor on normalisation scales.
pub const NORMALIZE_FLOOR: f64 = 1.4916681462400413e-154;

/// Divide by the largest magnitude (floored) and return its log. The index
/// of the maximum is a constant of the evaluation; ties go to the lowest.
fn normalize<T: Real, S: Scalar<T>>(v: &mut [S]) -> T {
    let floor = NORMALIZE_FLOOR.ln();
    let mut best: Option<usize> = None;
    let mut best_v = floor;
    for (i, x) in v.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        let l = x.ln_abs().value();
        if l > best_v {
            best_v = l;
            best = Some(i);
        }
    }
    let scale = match best {
        Some(i) => v[i].ln_abs(),
        None => T::from_f64(floor),
    };
    for x in v.iter_mut() {
        *x = x.unscale(&scale);
    }
    scale
}

/// Cauchy product of α-vectors with per-step normalisation; returns β and
/// the accumulated log scale.
pub fn cauchy_product<T: Real, S: Scalar<T>>(alphas: &[Vec<S>], normalize_steps: bool) -> (Vec<S>, T) {
    let mut lam = T::zero();
    let mut beta = vec![S::one()];
    for a in alphas {
        beta = convolve(&beta, a);
        if normalize_steps {
            lam = lam + normalize(&mut beta);
        }
    }
    (beta, lam)
}

/// Per-node intermediate, kept for diagnostics and the validity module.
struct NodeResult<S, T> {
    beta: Vec<S>,
    lam: T,
}

/// `log c_δ(u)` for generators already mapped from the free parameters.
/// `u` is used as given (no clamping); `u_j = 1` is allowed for censored
/// coordinates.
pub fn log_density_gens<T>(
    tree: &CopulaTree,
    gens: &[Generator<T>],
    u: &[f64],
    mask: &[bool],
    opts: &EvalOptions,
) -> Result<T>
where
    T: GenScalar<T> + Lift<T>,
{
    if u.len() != tree.dim() || mask.len() != tree.dim() {
        return Err(Error::Input(format!(
            "observation has {} values and {} mask bits for a {}-leaf tree",
            u.len(),
            mask.len(),
            tree.dim()
        )));
    }
    if opts.log_domain {
        evaluate::<T, Log<T>>(tree, gens, u, mask, opts, opts.normalize)
    } else {
        evaluate::<T, T>(tree, gens, u, mask, opts, false)
    }
}

fn evaluate<T, S>(
    tree: &CopulaTree,
    gens: &[Generator<T>],
    u: &[f64],
    mask: &[bool],
    opts: &EvalOptions,
    norm: bool,
) -> Result<T>
where
    T: GenScalar<T> + Lift<T>,
    S: GenScalar<T>,
{
    let states: Vec<NodeState<S>> = forward_pass(tree, gens, u, mask);
    let nodes = tree.nodes();
    let mut results: Vec<Option<NodeResult<S, T>>> = (0..nodes.len()).map(|_| None).collect();
    let scaled = opts.log_domain;
    for v in (0..nodes.len()).rev() {
        let mut alphas: Vec<Vec<S>> = Vec::new();
        let mut shift = 0;
        let mut lam = T::zero();
        for c in &nodes[v].children {
            match c {
                Child::Leaf(j) => shift += mask[*j] as usize,
                Child::Node(k) => {
                    let dc = states[*k].d;
                    let child = results[*k].take().expect("children evaluated first");
                    if dc == 0 {
                        continue;
                    }
                    let p = edge_series(&gens[v], &gens[*k], &states[*k].t, &states[*k].c, dc, opts.edge_path)
                        .map_err(|e| Error::eval(format!("edge {v}->{k}"), e.to_string()))?;
                    let mut alpha = if scaled {
                        bell_transform_scaled(&child.beta, &p)
                    } else {
                        bell_transform_raw(&child.beta, &p)
                    };
                    lam = lam + child.lam;
                    if norm {
                        lam = lam + normalize(&mut alpha);
                    }
                    alphas.push(alpha);
                }
            }
        }
        let (mut beta, l) = cauchy_product::<T, S>(&alphas, norm);
        lam = lam + l;
        if shift > 0 {
            let mut shifted = vec![S::zero(); shift];
            shifted.append(&mut beta);
            beta = shifted;
        }
        if !lam.value().is_finite() || beta.iter().any(|b| b.value().is_nan()) {
            return Err(Error::eval(format!("node {v}"), "non-finite β-vector or scale"));
        }
        results[v] = Some(NodeResult { beta, lam });
    }
    let root = results[0].take().expect("root evaluated");
    let dr = states[0].d;
    let q = S::generator_jet(&gens[0], &states[0].t, dr);
    let start = if dr == 0 { 0 } else { 1 };
    let sum = S::sum_iter((start..=dr).map(|k| (q.c[k].clone() * root.beta[k].clone()).scale_exp(ln_factorial(k))));
    let sign = sum.signum() as i32 * if dr % 2 == 0 { 1 } else { -1 };
    if sign <= 0 {
        return Err(Error::eval("root", format!("density sign {sign} (sum {:e})", sum.value())));
    }
    let mut out = sum.ln_abs() + root.lam;
    for j in 0..tree.dim() {
        if mask[j] {
            let g = &gens[tree.leaf_parent(j)];
            let d = g.psi_inv_of(&Jet::variable(T::from_f64(u[j]), 1)).c[1].clone();
            out = out + (-d).ln();
        }
    }
    if !out.value().is_finite() {
        return Err(Error::eval("root", format!("non-finite log-density {}", out.value())));
    }
    Ok(out)
}

/// `log c_δ(u)` at the tree's own parameters with default options;
/// `u` is clamped into `[1e-12, 1 − 1e-12]`.
pub fn log_density(tree: &CopulaTree, u: &[f64], mask: &[bool]) -> Result<f64> {
    log_density_with(tree, tree.params(), u, mask, &EvalOptions::default())
}

/// `log c_δ(u)` at free parameters `params` (any gradient-capable scalar).
pub fn log_density_with<T>(tree: &CopulaTree, params: &[T], u: &[f64], mask: &[bool], opts: &EvalOptions) -> Result<T>
where
    T: GenScalar<T> + Lift<T>,
{
    let gens = tree.generators(params)?;
    let uc: Vec<f64> = u.iter().map(|x| clamp_u(*x)).collect();
    log_density_gens(tree, &gens, &uc, mask, opts)
}

/// Log of the partial derivative of the CDF in the masked coordinates; the
/// all-zero mask gives `log C(u)`. Shares the density machinery.
pub fn log_partial_cdf(tree: &CopulaTree, u: &[f64], mask: &[bool]) -> Result<f64> {
    log_density(tree, u, mask)
}
