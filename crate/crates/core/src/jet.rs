//! Truncated univariate Taylor series ("jets").
//!
//! A [`Jet`] stores factorial-scaled coefficients `c[k] = f^(k)(x)/k!` of a
//! function around an implicit expansion point. Jets implement [`Real`], so
//! any closed form written against that trait can be evaluated on
//! `x + ε` to produce all derivatives in one pass. A length-1 jet is a
//! constant and broadcasts against longer jets; two non-constant operands
//! truncate to the shorter order.
//!
//! Over `Log<T>` coefficients the same code yields the sign/log-magnitude
//! series ([`LogSeries`]); every recurrence sum then runs through a single
//! signed log-sum-exp.

use crate::error::Error;
use crate::num::{Lift, Log, Real};
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Debug)]
pub struct Jet<S> {
    pub c: Vec<S>,
}

/// Jet with sign/log-magnitude coefficients.
pub type LogSeries<T = f64> = Jet<Log<T>>;

/// Primitive functions with classical O(n²) composition recurrences.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    Exp,
    Log,
    Log1p,
    Expm1,
    Reciprocal,
    Power(f64),
    Sqrt,
}

impl<S: Real> Jet<S> {
    pub fn constant(x: S) -> Self {
        Jet { c: vec![x] }
    }

    /// The identity function at `x`, `[x, 1, 0, ..., 0]`, of order `n`.
    pub fn variable(x: S, n: usize) -> Self {
        let mut c = vec![S::zero(); n + 1];
        c[0] = x;
        if n >= 1 {
            c[1] = S::one();
        }
        Jet { c }
    }

    pub fn from_coeffs(c: Vec<S>) -> Self {
        assert!(!c.is_empty(), "a jet needs at least one coefficient");
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn coeffs(&self) -> &[S] {
        &self.c
    }

    pub fn into_coeffs(self) -> Vec<S> {
        self.c
    }

    /// Keep coefficients `0..=n`, zero-padding if shorter.
    pub fn truncate(mut self, n: usize) -> Self {
        self.c.resize(n + 1, S::zero());
        self
    }

    fn is_const(&self) -> bool {
        self.c.len() == 1
    }

    pub fn map<R>(&self, f: impl Fn(&S) -> R) -> Jet<R> {
        Jet { c: self.c.iter().map(f).collect() }
    }

    /// Truncated Cauchy product keeping orders `0..=n`.
    pub fn mul_trunc(&self, other: &Self, n: usize) -> Self {
        let c = (0..=n)
            .map(|k| {
                let lo = k.saturating_sub(other.c.len() - 1);
                let hi = k.min(self.c.len() - 1);
                if lo > hi {
                    return S::zero();
                }
                S::sum_iter((lo..=hi).map(|i| self.c[i].clone() * other.c[k - i].clone()))
            })
            .collect();
        Jet { c }
    }

    /// `f^k`, by repeated truncated products.
    pub fn powi_trunc(&self, k: usize, n: usize) -> Self {
        let mut acc = Jet::constant(S::one()).truncate(n);
        for _ in 0..k {
            acc = acc.mul_trunc(self, n);
        }
        acc
    }

    /// `exp ∘ f`: b_k = (1/k) Σ_{j=1..k} j a_j b_{k-j}.
    fn exp_with(&self, b0: S, shift_zero: bool) -> Self {
        let n = self.c.len();
        let ja: Vec<S> = self.c.iter().enumerate().map(|(j, a)| a.scale(j as f64)).collect();
        // for expm1 the recurrence runs on e^{a_0}, not b_0 = e^{a_0} - 1
        let e0 = if shift_zero { self.c[0].exp() } else { b0.clone() };
        let mut b = Vec::with_capacity(n);
        b.push(b0);
        for k in 1..n {
            let s = S::sum_iter((1..=k).map(|j| {
                let prev = if j == k { e0.clone() } else { b[k - j].clone() };
                ja[j].clone() * prev
            }));
            b.push(s.scale(1.0 / k as f64));
        }
        Jet { c: b }
    }

    /// `log ∘ f` given `b_0` and the divisor `a_0` (or `1 + a_0`).
    fn log_with(&self, b0: S, denom: S) -> Self {
        let n = self.c.len();
        let inv = denom.recip();
        let mut b: Vec<S> = Vec::with_capacity(n);
        b.push(b0);
        let mut jb: Vec<S> = vec![S::zero()];
        for k in 1..n {
            let s = S::sum_iter((1..k).map(|j| jb[j].clone() * self.c[k - j].clone()));
            let bk = (self.c[k].clone() - s.scale(1.0 / k as f64)) * inv.clone();
            jb.push(bk.scale(k as f64));
            b.push(bk);
        }
        Jet { c: b }
    }

    /// `f^α` for a constant exponent:
    /// b_k = (1/(k a_0)) Σ_{j=1..k} (α j − (k − j)) a_j b_{k−j}.
    pub fn pow_const(&self, alpha: &S) -> Self {
        let n = self.c.len();
        let a0 = &self.c[0];
        let inv = a0.recip();
        let mut b = Vec::with_capacity(n);
        b.push(a0.powf(alpha));
        for k in 1..n {
            let s = S::sum_iter((1..=k).map(|j| {
                let w = alpha.scale(j as f64) - S::from_f64((k - j) as f64);
                w * self.c[j].clone() * b[k - j].clone()
            }));
            b.push(s * inv.clone().scale(1.0 / k as f64));
        }
        Jet { c: b }
    }

    /// `1 / f`.
    fn recip_jet(&self) -> Self {
        let n = self.c.len();
        let inv = self.c[0].recip();
        let mut b: Vec<S> = Vec::with_capacity(n);
        b.push(inv.clone());
        for k in 1..n {
            let s = S::sum_iter((1..=k).map(|j| self.c[j].clone() * b[k - j].clone()));
            b.push(-(s * inv.clone()));
        }
        Jet { c: b }
    }

    /// `f / g`: c_k = (a_k − Σ_{j=1..k} b_j c_{k−j}) / b_0.
    fn div_jet(&self, g: &Self) -> Self {
        let n = self.c.len().min(g.c.len());
        let inv = g.c[0].recip();
        let mut c: Vec<S> = Vec::with_capacity(n);
        for k in 0..n {
            let s = S::sum_iter((1..=k).map(|j| g.c[j].clone() * c[k - j].clone()));
            c.push((self.c[k].clone() - s) * inv.clone());
        }
        Jet { c }
    }
}

/// Checked primitive composition; the constant term must lie in the domain.
pub fn jet_primitive<S: Real>(kind: Primitive, a: &Jet<S>) -> Result<Jet<S>, Error> {
    let a0 = a.c[0].value();
    let ok = match kind {
        Primitive::Exp | Primitive::Expm1 => true,
        Primitive::Log | Primitive::Sqrt => a0 > 0.0,
        Primitive::Log1p => a0 > -1.0,
        Primitive::Reciprocal => a0 != 0.0,
        Primitive::Power(alpha) => {
            a0 > 0.0 || (alpha.fract() == 0.0 && (alpha >= 0.0 || a0 != 0.0))
        }
    };
    if !ok || a0.is_nan() {
        return Err(Error::Domain(format!("{kind:?} undefined at constant term {a0}")));
    }
    Ok(match kind {
        Primitive::Exp => a.exp(),
        Primitive::Log => a.ln(),
        Primitive::Log1p => a.ln_1p(),
        Primitive::Expm1 => a.exp_m1(),
        Primitive::Reciprocal => a.recip(),
        Primitive::Sqrt => a.sqrt(),
        Primitive::Power(alpha) if alpha.fract() == 0.0 && alpha >= 0.0 && a0 <= 0.0 => {
            a.powi_trunc(alpha as usize, a.order())
        }
        Primitive::Power(alpha) => a.pow_const(&S::from_f64(alpha)),
    })
}

/// `[ε^k]` coefficients of `a` in log form.
pub fn to_log<T: Real>(a: &Jet<T>) -> LogSeries<T> {
    a.map(|x| Log::from_raw(x.clone()))
}

/// Back to raw coefficients; entries may denormalize or overflow.
pub fn to_raw<T: Real>(a: &LogSeries<T>) -> Jet<T> {
    a.map(|x| x.to_raw())
}

impl<T: Real> LogSeries<T> {
    pub fn signs(&self) -> Vec<i8> {
        self.c.iter().map(|x| x.sign()).collect()
    }

    pub fn logmags(&self) -> Vec<T> {
        self.c.iter().map(|x| x.log_abs().clone()).collect()
    }
}

impl<S: Real> Add for Jet<S> {
    type Output = Jet<S>;
    fn add(self, o: Jet<S>) -> Jet<S> {
        if o.is_const() {
            let mut r = self;
            r.c[0] = r.c[0].clone() + o.c[0].clone();
            return r;
        }
        if self.is_const() {
            let mut r = o;
            r.c[0] = self.c[0].clone() + r.c[0].clone();
            return r;
        }
        let n = self.c.len().min(o.c.len());
        Jet { c: self.c.into_iter().zip(o.c).take(n).map(|(x, y)| x + y).collect() }
    }
}

impl<S: Real> Sub for Jet<S> {
    type Output = Jet<S>;
    fn sub(self, o: Jet<S>) -> Jet<S> {
        self + (-o)
    }
}

impl<S: Real> Neg for Jet<S> {
    type Output = Jet<S>;
    fn neg(self) -> Jet<S> {
        Jet { c: self.c.into_iter().map(|x| -x).collect() }
    }
}

impl<S: Real> Mul for Jet<S> {
    type Output = Jet<S>;
    fn mul(self, o: Jet<S>) -> Jet<S> {
        if o.is_const() {
            let k = &o.c[0];
            return self.map(|x| x.clone() * k.clone());
        }
        if self.is_const() {
            let k = &self.c[0];
            return o.map(|x| k.clone() * x.clone());
        }
        let n = self.c.len().min(o.c.len()) - 1;
        self.mul_trunc(&o, n)
    }
}

impl<S: Real> Div for Jet<S> {
    type Output = Jet<S>;
    fn div(self, o: Jet<S>) -> Jet<S> {
        if o.is_const() {
            let k = o.c[0].recip();
            return self.map(|x| x.clone() * k.clone());
        }
        if self.is_const() {
            let k = &self.c[0];
            return o.recip_jet().map(|x| k.clone() * x.clone());
        }
        self.div_jet(&o)
    }
}

impl<S: Real> Real for Jet<S> {
    fn from_f64(x: f64) -> Self {
        Jet::constant(S::from_f64(x))
    }

    fn value(&self) -> f64 {
        self.c[0].value()
    }

    fn is_zero(&self) -> bool {
        self.c.iter().all(|x| x.is_zero())
    }

    fn exp(&self) -> Self {
        self.exp_with(self.c[0].exp(), false)
    }

    fn ln(&self) -> Self {
        self.log_with(self.c[0].ln(), self.c[0].clone())
    }

    fn ln_1p(&self) -> Self {
        // 1 + a_0 = exp(ln1p(a_0)) keeps precision when a_0 is near -1
        let b0 = self.c[0].ln_1p();
        let denom = b0.exp();
        self.log_with(b0, denom)
    }

    fn exp_m1(&self) -> Self {
        self.exp_with(self.c[0].exp_m1(), true)
    }

    fn sqrt(&self) -> Self {
        self.pow_const(&S::from_f64(0.5))
    }

    fn powf(&self, e: &Self) -> Self {
        if e.is_const() {
            self.pow_const(&e.c[0])
        } else {
            (e.clone() * self.ln()).exp()
        }
    }

    fn abs(&self) -> Self {
        if self.c[0].value() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn recip(&self) -> Self {
        self.recip_jet()
    }

    fn scale(&self, c: f64) -> Self {
        self.map(|x| x.scale(c))
    }

    fn scale_exp(&self, l: f64) -> Self {
        self.map(|x| x.scale_exp(l))
    }

    fn jet_order(&self) -> usize {
        self.order()
    }
}

impl<T: Real, S: Lift<T>> Lift<T> for Jet<S> {
    fn lift(x: &T) -> Self {
        Jet::constant(S::lift(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::Dual;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn raw(v: &[f64]) -> Jet<f64> {
        Jet::from_coeffs(v.to_vec())
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len(), "{a:?} vs {b:?}");
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol * y.abs().max(1.0), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn binomial_square() {
        let p = raw(&[1.0, 1.0]);
        close(p.mul_trunc(&p, 2).coeffs(), &[1.0, 2.0, 1.0], 0.0);
    }

    #[test]
    fn multiplicative_identity() {
        let p = raw(&[0.3, -1.2, 4.0, 0.5]);
        let one = raw(&[1.0, 0.0, 0.0, 0.0]);
        close((p.clone() * one).coeffs(), p.coeffs(), 0.0);
    }

    #[test]
    fn exp_squared_is_exp_2x() {
        let e = Jet::variable(0.0, 4).exp();
        let sq = e.clone() * e;
        close(sq.coeffs(), &[1.0, 2.0, 2.0, 4.0 / 3.0, 2.0 / 3.0], 1e-15);
    }

    #[test]
    fn exp_of_identity() {
        let e = jet_primitive(Primitive::Exp, &raw(&[0.0, 1.0, 0.0, 0.0])).unwrap();
        close(e.coeffs(), &[1.0, 1.0, 0.5, 1.0 / 6.0], 1e-16);
    }

    #[test]
    fn log_of_exp_series() {
        let l = jet_primitive(Primitive::Log, &raw(&[1.0, 1.0, 0.5, 1.0 / 6.0])).unwrap();
        close(l.coeffs(), &[0.0, 1.0, 0.0, 0.0], 1e-15);
    }

    #[test]
    fn inverse_sqrt_binomial() {
        let p = raw(&[1.0, 2.0]).truncate(3);
        let r = jet_primitive(Primitive::Power(-0.5), &p).unwrap();
        close(r.coeffs(), &[1.0, -1.0, 1.5, -2.5], 1e-15);
    }

    #[test]
    fn domain_errors() {
        assert!(jet_primitive(Primitive::Log, &raw(&[-1.0, 1.0])).is_err());
        assert!(jet_primitive(Primitive::Log1p, &raw(&[-1.0, 1.0])).is_err());
        assert!(jet_primitive(Primitive::Reciprocal, &raw(&[0.0, 1.0])).is_err());
        assert!(jet_primitive(Primitive::Sqrt, &raw(&[0.0, 1.0])).is_err());
        assert!(jet_primitive(Primitive::Power(-0.5), &raw(&[-2.0, 1.0])).is_err());
    }

    #[test]
    fn integer_power_at_zero() {
        let r = jet_primitive(Primitive::Power(2.0), &raw(&[0.0, 1.0, 0.0])).unwrap();
        close(r.coeffs(), &[0.0, 0.0, 1.0], 0.0);
    }

    #[test]
    fn log1p_expm1_roundtrip() {
        let a = raw(&[0.2, -0.7, 0.3, 1.1, -0.4]);
        let r = jet_primitive(Primitive::Log1p, &jet_primitive(Primitive::Expm1, &a).unwrap()).unwrap();
        close(r.coeffs(), a.coeffs(), 1e-14);
    }

    #[test]
    fn division_matches_reciprocal_product() {
        let a = raw(&[1.5, 0.2, -0.3, 0.8]);
        let b = raw(&[2.0, -1.0, 0.5, 0.25]);
        let q = a.clone() / b.clone();
        let r = a.mul_trunc(&jet_primitive(Primitive::Reciprocal, &b).unwrap(), 3);
        close(q.coeffs(), r.coeffs(), 1e-15);
        close(q.mul_trunc(&b, 3).coeffs(), a.coeffs(), 1e-15);
    }

    #[test]
    fn log_series_convolution() {
        let p = to_log(&raw(&[1.0, 1.0]));
        let sq = to_raw(&p.mul_trunc(&p, 2));
        close(sq.coeffs(), &[1.0, 2.0, 1.0], 1e-15);
        let s = p.mul_trunc(&p, 2);
        assert_eq!(s.signs(), vec![1, 1, 1]);
    }

    #[test]
    fn log_series_zero_coefficients() {
        let p = to_log(&raw(&[2.0, 0.0, -1.0]));
        assert_eq!(p.signs(), vec![1, 0, -1]);
        assert_eq!(p.logmags()[1], f64::NEG_INFINITY);
    }

    #[test]
    fn clayton_pochhammer() {
        // psi(t) = (1+t)^{-1/θ}; psi^(k)/k! = (-1)^k (1/θ)_k (1+t)^{-1/θ-k} / k!
        for &(theta, t) in &[(2.0, 1.0), (0.5, 0.3), (7.0, 12.0)] {
            let n = 30;
            let alpha = -1.0 / theta;
            let j = (Jet::variable(Log::<f64>::from_f64(t), n) + Jet::from_f64(1.0))
                .pow_const(&Log::from_f64(alpha));
            let mut lpoch = 0.0;
            for k in 0..=n {
                if k > 0 {
                    lpoch += (1.0 / theta + (k - 1) as f64).ln() - (k as f64).ln();
                }
                let lexp = lpoch + (alpha - k as f64) * (1.0 + t).ln();
                let c = &j.c[k];
                assert_eq!(c.sign(), if k % 2 == 0 { 1 } else { -1 });
                let rel = (c.log_abs() - lexp).exp_m1().abs();
                assert!(rel < 1e-12, "θ={theta} t={t} k={k} rel={rel}");
            }
        }
    }

    #[test]
    fn dual_coefficients_carry_tangents() {
        // d/dθ of [ε^1] (1+t+ε)^{-θ} = d/dθ (−θ (1+t)^{−θ−1})
        let theta = Dual::variable(1.3, 0, 1);
        let t = 0.7f64;
        let j = (Jet::variable(Dual::constant(t), 2) + Jet::from_f64(1.0)).pow_const(&-theta.clone());
        let d = j.c[1].gradient(1)[0];
        let expect = -(1.7f64).powf(-2.3) + 1.3 * (1.7f64).powf(-2.3) * 1.7f64.ln();
        assert_relative_eq!(d, expect, max_relative = 1e-13);
    }

    proptest! {
        #[test]
        fn raw_power_matches_log_power(
            coeffs in proptest::collection::vec(0.05f64..2.0, 2..8),
            k in 1usize..6,
        ) {
            let n = coeffs.len() - 1;
            let p = Jet::from_coeffs(coeffs);
            let rawp = p.powi_trunc(k, n);
            let logp = to_raw(&to_log(&p).powi_trunc(k, n));
            for (a, b) in rawp.coeffs().iter().zip(logp.coeffs()) {
                if *a != 0.0 {
                    prop_assert!(((a - b) / a).abs() < 1e-12, "{} vs {}", a, b);
                }
            }
        }

        #[test]
        fn raw_power_matches_log_power_signed(
            coeffs in proptest::collection::vec(-2.0f64..2.0, 2..8),
            k in 1usize..6,
        ) {
            // with mixed signs the error is relative to the cancellation-free magnitude
            let n = coeffs.len() - 1;
            let mag = Jet::from_coeffs(coeffs.iter().map(|x| x.abs()).collect()).powi_trunc(k, n);
            let p = Jet::from_coeffs(coeffs);
            let rawp = p.powi_trunc(k, n);
            let logp = to_raw(&to_log(&p).powi_trunc(k, n));
            for ((a, b), m) in rawp.coeffs().iter().zip(logp.coeffs()).zip(mag.coeffs()) {
                prop_assert!((a - b).abs() <= 1e-12 * m, "{} vs {} (scale {})", a, b, m);
            }
        }

        #[test]
        fn log_of_exp_identity(coeffs in proptest::collection::vec(-3.0f64..3.0, 1..10)) {
            let a = Jet::from_coeffs(coeffs);
            let r = jet_primitive(Primitive::Log, &jet_primitive(Primitive::Exp, &a).unwrap()).unwrap();
            for (x, y) in r.coeffs().iter().zip(a.coeffs()) {
                prop_assert!((x - y).abs() < 1e-12 * y.abs().max(1.0) * 10.0);
            }
        }
    }
}
