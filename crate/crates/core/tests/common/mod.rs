//! Shared oracles for the integration tests.
//!
//! `MultiDual` is a truncated polynomial in nilpotent variables
//! `ε_1..ε_m` with `ε_i² = 0`. Evaluating the nested CDF with `u_j + ε_j`
//! for every differentiated coordinate leaves the exact mixed partial in
//! the coefficient of `ε_1⋯ε_m`, with no differencing error.

#![allow(dead_code)]

use nestcop::generators::{Family, Generator};
use nestcop::jet::Jet;
use nestcop::num::{Lift, Real};
use nestcop::tree::{Child, CopulaTree};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Debug)]
pub struct MultiDual {
    pub m: usize,
    /// Coefficient per subset bitmask.
    pub c: Vec<f64>,
}

impl MultiDual {
    pub fn constant(m: usize, x: f64) -> Self {
        let mut c = vec![0.0; 1 << m];
        c[0] = x;
        MultiDual { m, c }
    }

    pub fn variable(m: usize, x: f64, i: usize) -> Self {
        let mut v = MultiDual::constant(m, x);
        v.c[1 << i] = 1.0;
        v
    }

    pub fn top(&self) -> f64 {
        self.c[(1 << self.m) - 1]
    }

    fn dims(a: &Self, b: &Self) -> usize {
        a.m.max(b.m)
    }

    fn widen(&self, m: usize) -> Self {
        if self.m == m {
            return self.clone();
        }
        let mut c = vec![0.0; 1 << m];
        c[..self.c.len()].copy_from_slice(&self.c);
        MultiDual { m, c }
    }

    /// `f(a_0 + n) = Σ_k f^{(k)}(a_0)/k! n^k`, the jet of `f` supplying the
    /// Taylor coefficients.
    fn apply(&self, f: impl Fn(&Jet<f64>) -> Jet<f64>) -> Self {
        let jet = f(&Jet::variable(self.c[0], self.m));
        let mut nil = self.clone();
        nil.c[0] = 0.0;
        let k = self.m;
        let mut r = MultiDual::constant(self.m, jet.c.get(k).copied().unwrap_or(0.0));
        for j in (0..k).rev() {
            r = r * nil.clone();
            r.c[0] += jet.c[j];
        }
        r
    }
}

impl Add for MultiDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let m = Self::dims(&self, &o);
        let (a, b) = (self.widen(m), o.widen(m));
        MultiDual { m, c: a.c.iter().zip(&b.c).map(|(x, y)| x + y).collect() }
    }
}

impl Sub for MultiDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl Neg for MultiDual {
    type Output = Self;
    fn neg(self) -> Self {
        MultiDual { m: self.m, c: self.c.iter().map(|x| -x).collect() }
    }
}

impl Mul for MultiDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let m = Self::dims(&self, &o);
        let (a, b) = (self.widen(m), o.widen(m));
        let n = 1usize << m;
        let mut c = vec![0.0; n];
        for s in 0..n {
            // all submasks of s
            let mut sub = s;
            loop {
                c[s] += a.c[sub] * b.c[s ^ sub];
                if sub == 0 {
                    break;
                }
                sub = (sub - 1) & s;
            }
        }
        MultiDual { m, c }
    }
}

impl Div for MultiDual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Real for MultiDual {
    fn from_f64(x: f64) -> Self {
        MultiDual::constant(0, x)
    }
    fn value(&self) -> f64 {
        self.c[0]
    }
    fn exp(&self) -> Self {
        self.apply(|j| j.exp())
    }
    fn ln(&self) -> Self {
        self.apply(|j| j.ln())
    }
    fn ln_1p(&self) -> Self {
        self.apply(|j| j.ln_1p())
    }
    fn exp_m1(&self) -> Self {
        self.apply(|j| j.exp_m1())
    }
    fn sqrt(&self) -> Self {
        self.apply(|j| j.sqrt())
    }
    fn powf(&self, e: &Self) -> Self {
        if e.c[1..].iter().all(|x| *x == 0.0) {
            let p = e.c[0];
            self.apply(|j| j.powf(&Jet::constant(p)))
        } else {
            (e.clone() * self.ln()).exp()
        }
    }
    fn abs(&self) -> Self {
        if self.c[0] < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }
    fn recip(&self) -> Self {
        self.apply(|j| j.recip())
    }
}

impl Lift<f64> for MultiDual {
    fn lift(x: &f64) -> Self {
        MultiDual::constant(0, *x)
    }
}

/// Nested CDF evaluated on arbitrary scalars, straight from the definition
/// `C_v = ψ_v(Σ_children ψ_v⁻¹(C_child))`.
pub fn nested_cdf<R: Real + Lift<f64>>(tree: &CopulaTree, gens: &[Generator], u: &[R]) -> R {
    fn node<R: Real + Lift<f64>>(tree: &CopulaTree, gens: &[Generator], u: &[R], v: usize) -> R {
        let g = &gens[v];
        let mut t = R::zero();
        for c in &tree.nodes()[v].children {
            let x = match c {
                Child::Leaf(j) => u[*j].clone(),
                Child::Node(k) => node(tree, gens, u, *k),
            };
            t = t + g.psi_inv_of(&x);
        }
        g.psi_of(&t)
    }
    node(tree, gens, u, 0)
}

/// Exact `∂^{|δ|} C / ∂u_δ` by multidual evaluation.
pub fn multidual_partial(tree: &CopulaTree, u: &[f64], mask: &[bool]) -> f64 {
    let gens: Vec<Generator> = tree.generators(tree.params()).unwrap();
    let m = mask.iter().filter(|b| **b).count();
    let mut k = 0;
    let x: Vec<MultiDual> = u
        .iter()
        .zip(mask)
        .map(|(v, b)| {
            if *b {
                k += 1;
                MultiDual::variable(m, *v, k - 1)
            } else {
                MultiDual::constant(m, *v)
            }
        })
        .collect();
    nested_cdf(tree, &gens, &x).widen(m).top()
}

/// Flat Clayton `log ∂^k C / ∂u_S` in closed form:
/// `ψ^{(k)}(t) = (−1)^k (1/θ)_k (1+t)^{−1/θ−k}`, `(ψ⁻¹)′(u) = −θ u^{−θ−1}`.
pub fn clayton_flat_log_partial(theta: f64, u: &[f64], mask: &[bool]) -> f64 {
    let t: f64 = u.iter().map(|x| f64::powf(*x, -theta) - 1.0).sum();
    let k = mask.iter().filter(|b| **b).count();
    let a = 1.0 / theta;
    let mut l = (0..k).map(|i| f64::ln(a + i as f64)).sum::<f64>() - (a + k as f64) * f64::ln_1p(t);
    for (x, b) in u.iter().zip(mask) {
        if *b {
            l += f64::ln(theta) - (theta + 1.0) * f64::ln(*x);
        }
    }
    l
}

pub fn gen(f: Family, th: f64) -> Generator {
    Generator::new(f, th).unwrap()
}
