//! Scalar types shared by every numeric layer of the engine.
//!
//! All of the jet, Bell and likelihood code is written once against the
//! [`Real`] trait and instantiated with three scalars:
//!
//! - `f64` for plain evaluation,
//! - [`Dual`] for forward-mode parameter gradients,
//! - [`Log<T>`] for sign/log-magnitude arithmetic that cannot under- or
//!   overflow, layered over either of the other two.

use smallvec::SmallVec;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::OnceLock;

/// Arithmetic needed by the generic numeric kernels.
pub trait Real:
    Clone
    + fmt::Debug
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;

    /// Primal value as a plain float (may under/overflow for [`Log`]).
    fn value(&self) -> f64;

    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn ln_1p(&self) -> Self;
    fn exp_m1(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powf(&self, e: &Self) -> Self;
    fn abs(&self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn recip(&self) -> Self {
        Self::one() / self.clone()
    }

    fn is_zero(&self) -> bool {
        self.value() == 0.0
    }

    fn scale(&self, c: f64) -> Self {
        self.clone() * Self::from_f64(c)
    }

    /// `x · e^l`, in steps small enough that the float factor stays finite.
    fn scale_exp(&self, l: f64) -> Self {
        let steps = (l.abs() / 600.0).ceil().max(1.0);
        let f = (l / steps).exp();
        let mut x = self.clone();
        for _ in 0..steps as usize {
            x = x.scale(f);
        }
        x
    }

    /// Truncation order in the jet variable; plain scalars have none.
    fn jet_order(&self) -> usize {
        0
    }

    /// Sum of an iterator of terms. [`Log`] overrides this with a single
    /// signed log-sum-exp so long alternating sums lose no range.
    fn sum_iter<I: IntoIterator<Item = Self>>(items: I) -> Self {
        let mut acc = Self::zero();
        for x in items {
            if !x.is_zero() {
                acc = acc + x;
            }
        }
        acc
    }
}

/// Conversion of a parameter scalar into a richer scalar (log form, jets).
pub trait Lift<T>: Real {
    fn lift(x: &T) -> Self;
}

impl Real for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    #[inline]
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    #[inline]
    fn ln_1p(&self) -> Self {
        f64::ln_1p(*self)
    }
    #[inline]
    fn exp_m1(&self) -> Self {
        f64::exp_m1(*self)
    }
    #[inline]
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    #[inline]
    fn powf(&self, e: &Self) -> Self {
        f64::powf(*self, *e)
    }
    #[inline]
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn scale(&self, c: f64) -> Self {
        self * c
    }
    fn sum_iter<I: IntoIterator<Item = Self>>(items: I) -> Self {
        items.into_iter().sum()
    }
}

impl Lift<f64> for f64 {
    #[inline]
    fn lift(x: &f64) -> Self {
        *x
    }
}

type Tangent = SmallVec<[f64; 4]>;

/// Forward-mode dual number with a dense tangent vector.
///
/// An empty tangent stands for the zero vector, so constants never allocate
/// and mixed-length operands are zero-padded.
#[derive(Clone, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub eps: Tangent,
}

impl fmt::Debug for Dual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Dual({}, {:?})", self.re, self.eps.as_slice())
    }
}

impl Dual {
    pub fn constant(re: f64) -> Self {
        Dual { re, eps: Tangent::new() }
    }

    /// Seed for parameter `index` out of `n`.
    pub fn variable(re: f64, index: usize, n: usize) -> Self {
        let mut eps: Tangent = SmallVec::from_elem(0.0, n);
        eps[index] = 1.0;
        Dual { re, eps }
    }

    /// Tangent padded to `n` slots.
    pub fn gradient(&self, n: usize) -> Vec<f64> {
        let mut g = vec![0.0; n];
        for (slot, v) in g.iter_mut().zip(&self.eps) {
            *slot = *v;
        }
        g
    }

    #[inline]
    fn chain(&self, re: f64, d: f64) -> Dual {
        Dual { re, eps: self.eps.iter().map(|e| e * d).collect() }
    }

    /// `ca * a.eps + cb * b.eps` with zero padding.
    #[inline]
    fn lincomb(a: &Tangent, ca: f64, b: &Tangent, cb: f64) -> Tangent {
        let n = a.len().max(b.len());
        let mut out = Tangent::with_capacity(n);
        for i in 0..n {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            out.push(ca * x + cb * y);
        }
        out
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        if o.eps.is_empty() {
            return Dual { re: self.re + o.re, eps: self.eps };
        }
        if self.eps.is_empty() {
            return Dual { re: self.re + o.re, eps: o.eps };
        }
        Dual { re: self.re + o.re, eps: Dual::lincomb(&self.eps, 1.0, &o.eps, 1.0) }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        if o.eps.is_empty() {
            return Dual { re: self.re - o.re, eps: self.eps };
        }
        Dual { re: self.re - o.re, eps: Dual::lincomb(&self.eps, 1.0, &o.eps, -1.0) }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { re: self.re * o.re, eps: Dual::lincomb(&self.eps, o.re, &o.eps, self.re) }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let re = self.re / o.re;
        let inv = 1.0 / o.re;
        Dual { re, eps: Dual::lincomb(&self.eps, inv, &o.eps, -re * inv) }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { re: -self.re, eps: self.eps.iter().map(|e| -e).collect() }
    }
}

impl Real for Dual {
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn exp(&self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(&self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
    fn ln_1p(&self) -> Self {
        self.chain(self.re.ln_1p(), 1.0 / (1.0 + self.re))
    }
    fn exp_m1(&self) -> Self {
        self.chain(self.re.exp_m1(), self.re.exp())
    }
    fn sqrt(&self) -> Self {
        let s = self.re.sqrt();
        self.chain(s, 0.5 / s)
    }
    fn powf(&self, e: &Self) -> Self {
        let re = self.re.powf(e.re);
        if e.eps.is_empty() {
            return self.chain(re, e.re * self.re.powf(e.re - 1.0));
        }
        // d(x^y) = y x^(y-1) dx + x^y ln x dy
        let da = if self.eps.is_empty() { 0.0 } else { e.re * self.re.powf(e.re - 1.0) };
        let db = if re == 0.0 { 0.0 } else { re * self.re.ln() };
        Dual { re, eps: Dual::lincomb(&self.eps, da, &e.eps, db) }
    }
    fn abs(&self) -> Self {
        if self.re < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }
    fn scale(&self, c: f64) -> Self {
        self.chain(self.re * c, c)
    }
}

impl Lift<Dual> for Dual {
    fn lift(x: &Dual) -> Self {
        x.clone()
    }
}

/// Signed log-magnitude scalar: `value = sign * exp(mag)`.
///
/// Exact zero is `(0, -inf)`, the additive identity. Every operation
/// branches on the sign channel and never exponentiates `-inf`.
#[derive(Clone, Debug)]
pub struct Log<T> {
    sign: i8,
    mag: T,
}

impl<T: Real> Log<T> {
    pub fn new(sign: i8, mag: T) -> Self {
        if sign == 0 {
            Self::zero_elem()
        } else {
            Log { sign: sign.signum(), mag }
        }
    }

    fn zero_elem() -> Self {
        Log { sign: 0, mag: T::from_f64(f64::NEG_INFINITY) }
    }

    fn nan() -> Self {
        Log { sign: 1, mag: T::from_f64(f64::NAN) }
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    /// Natural log of the magnitude (`-inf` for zero).
    pub fn log_abs(&self) -> &T {
        &self.mag
    }

    pub fn from_raw(x: T) -> Self {
        let v = x.value();
        if v == 0.0 {
            Self::zero_elem()
        } else if v.is_nan() {
            Self::nan()
        } else if v > 0.0 {
            Log { sign: 1, mag: x.ln() }
        } else {
            Log { sign: -1, mag: (-x).ln() }
        }
    }

    /// Raw value in `T`; may denormalize or overflow.
    pub fn to_raw(&self) -> T {
        match self.sign {
            0 => T::zero(),
            1 => self.mag.exp(),
            _ => -self.mag.exp(),
        }
    }
}

impl<T: Real> Add for Log<T> {
    type Output = Log<T>;
    fn add(self, o: Log<T>) -> Log<T> {
        if self.sign == 0 {
            return o;
        }
        if o.sign == 0 {
            return self;
        }
        let (big, small) = if self.mag.value() >= o.mag.value() { (self, o) } else { (o, self) };
        let d = (small.mag - big.mag.clone()).exp();
        if small.sign == big.sign {
            Log { sign: big.sign, mag: big.mag + d.ln_1p() }
        } else {
            if d.value() == 1.0 {
                return Log::zero_elem();
            }
            Log { sign: big.sign, mag: big.mag + (-d).ln_1p() }
        }
    }
}

impl<T: Real> Sub for Log<T> {
    type Output = Log<T>;
    fn sub(self, o: Log<T>) -> Log<T> {
        self + (-o)
    }
}

impl<T: Real> Neg for Log<T> {
    type Output = Log<T>;
    fn neg(self) -> Log<T> {
        Log { sign: -self.sign, mag: self.mag }
    }
}

impl<T: Real> Mul for Log<T> {
    type Output = Log<T>;
    fn mul(self, o: Log<T>) -> Log<T> {
        if self.sign == 0 || o.sign == 0 {
            return Log::zero_elem();
        }
        Log { sign: self.sign * o.sign, mag: self.mag + o.mag }
    }
}

impl<T: Real> Div for Log<T> {
    type Output = Log<T>;
    fn div(self, o: Log<T>) -> Log<T> {
        if o.sign == 0 {
            return Log { sign: if self.sign == 0 { 1 } else { self.sign }, mag: T::from_f64(f64::INFINITY) };
        }
        if self.sign == 0 {
            return Log::zero_elem();
        }
        Log { sign: self.sign * o.sign, mag: self.mag - o.mag }
    }
}

impl<T: Real> Real for Log<T> {
    fn from_f64(x: f64) -> Self {
        Log::from_raw(T::from_f64(x))
    }

    fn zero() -> Self {
        Log::zero_elem()
    }

    fn one() -> Self {
        Log { sign: 1, mag: T::zero() }
    }

    fn value(&self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => s as f64 * self.mag.value().exp(),
        }
    }

    fn is_zero(&self) -> bool {
        self.sign == 0
    }

    fn exp(&self) -> Self {
        Log { sign: 1, mag: self.to_raw() }
    }

    fn ln(&self) -> Self {
        match self.sign {
            1 => Log::from_raw(self.mag.clone()),
            0 => Log { sign: -1, mag: T::from_f64(f64::INFINITY) },
            _ => Log::nan(),
        }
    }

    fn ln_1p(&self) -> Self {
        if self.sign == 0 {
            return Log::zero_elem();
        }
        let m = self.mag.value();
        if m < -20.0 {
            // x - x^2/2 + x^3/3 is exact to double precision here
            let x = self.clone();
            let x2 = x.clone() * x.clone();
            return x.clone() - x2.scale(0.5) + (x2 * x).scale(1.0 / 3.0);
        }
        if m < 0.0 {
            return Log::from_raw(self.to_raw().ln_1p());
        }
        (Log::one() + self.clone()).ln()
    }

    fn exp_m1(&self) -> Self {
        if self.sign == 0 {
            return Log::zero_elem();
        }
        let m = self.mag.value();
        if m < -20.0 {
            let x = self.clone();
            let x2 = x.clone() * x.clone();
            return x.clone() + x2.scale(0.5) + (x2 * x).scale(1.0 / 6.0);
        }
        if m < 6.5 {
            return Log::from_raw(self.to_raw().exp_m1());
        }
        self.exp() - Log::one()
    }

    fn sqrt(&self) -> Self {
        match self.sign {
            0 => Log::zero_elem(),
            1 => Log { sign: 1, mag: self.mag.scale(0.5) },
            _ => Log::nan(),
        }
    }

    fn powf(&self, e: &Self) -> Self {
        match self.sign {
            0 => {
                if e.value() > 0.0 {
                    Log::zero_elem()
                } else {
                    Log::one()
                }
            }
            1 => Log { sign: 1, mag: self.mag.clone() * e.to_raw() },
            _ => Log::nan(),
        }
    }

    fn abs(&self) -> Self {
        Log { sign: self.sign.abs(), mag: self.mag.clone() }
    }

    fn recip(&self) -> Self {
        if self.sign == 0 {
            return Log { sign: 1, mag: T::from_f64(f64::INFINITY) };
        }
        Log { sign: self.sign, mag: -self.mag.clone() }
    }

    fn scale(&self, c: f64) -> Self {
        if c == 0.0 || self.sign == 0 {
            return Log::zero_elem();
        }
        let s = if c < 0.0 { -self.sign } else { self.sign };
        Log { sign: s, mag: self.mag.clone() + T::from_f64(c.abs().ln()) }
    }

    fn scale_exp(&self, l: f64) -> Self {
        if self.sign == 0 {
            return Log::zero_elem();
        }
        Log { sign: self.sign, mag: self.mag.clone() + T::from_f64(l) }
    }

    fn sum_iter<I: IntoIterator<Item = Self>>(items: I) -> Self {
        let terms: SmallVec<[(i8, T); 32]> =
            items.into_iter().filter(|x| x.sign != 0).map(|x| (x.sign, x.mag)).collect();
        signed_lse_terms(&terms)
    }
}

impl<T: Real> Lift<T> for Log<T> {
    fn lift(x: &T) -> Self {
        Log::from_raw(x.clone())
    }
}

/// A working scalar `S` over a parameter scalar `T`: either `T` itself (raw
/// path) or `Log<T>` (log-domain path).
pub trait Scalar<T: Real>: Real + Lift<T> {
    /// `ln|x|` as a parameter scalar.
    fn ln_abs(&self) -> T;
    fn signum(&self) -> i8;
    /// `x / e^{l}`.
    fn unscale(&self, l: &T) -> Self;
}

impl Scalar<f64> for f64 {
    fn ln_abs(&self) -> f64 {
        self.abs().ln()
    }
    fn signum(&self) -> i8 {
        sign_of(*self)
    }
    fn unscale(&self, l: &f64) -> f64 {
        self * (-l).exp()
    }
}

impl Scalar<Dual> for Dual {
    fn ln_abs(&self) -> Dual {
        Real::abs(self).ln()
    }
    fn signum(&self) -> i8 {
        sign_of(self.re)
    }
    fn unscale(&self, l: &Dual) -> Dual {
        self.clone() * (-l.clone()).exp()
    }
}

impl<T: Real> Scalar<T> for Log<T> {
    fn ln_abs(&self) -> T {
        self.mag.clone()
    }
    fn signum(&self) -> i8 {
        self.sign
    }
    fn unscale(&self, l: &T) -> Self {
        if self.sign == 0 {
            return self.clone();
        }
        Log { sign: self.sign, mag: self.mag.clone() - l.clone() }
    }
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Signed log-sum-exp over `(sign, log|x|)` terms; the max term is treated as
/// locally constant, ties resolved by lowest index.
pub(crate) fn signed_lse_terms<T: Real>(terms: &[(i8, T)]) -> Log<T> {
    let mut best: Option<usize> = None;
    for (i, (_, l)) in terms.iter().enumerate() {
        let v = l.value();
        if v.is_nan() {
            return Log::nan();
        }
        match best {
            None => best = Some(i),
            Some(b) if v > terms[b].1.value() => best = Some(i),
            _ => {}
        }
    }
    let Some(b) = best else {
        return Log::zero_elem();
    };
    let m = terms[b].1.clone();
    if m.value() == f64::NEG_INFINITY {
        return Log::zero_elem();
    }
    if m.value() == f64::INFINITY {
        return Log { sign: terms[b].0, mag: m };
    }
    if terms.len() == 1 {
        return Log { sign: terms[0].0, mag: m };
    }
    let mut s = T::from_f64(terms[b].0 as f64);
    for (i, (sg, l)) in terms.iter().enumerate() {
        if i == b {
            continue;
        }
        let e = (l.clone() - m.clone()).exp();
        s = if *sg > 0 { s + e } else { s - e };
    }
    let sv = s.value();
    if sv == 0.0 {
        return Log::zero_elem();
    }
    let sign = if sv > 0.0 { 1 } else { -1 };
    Log { sign, mag: m + s.abs().ln() }
}

/// `log|Σ σ_j e^{ℓ_j}|` and its sign, shifted by the max log before exponentiating.
pub fn signed_logsumexp(logs: &[f64], signs: &[i8]) -> (f64, i8) {
    assert_eq!(logs.len(), signs.len(), "signed_logsumexp: length mismatch");
    let terms: Vec<(i8, f64)> =
        logs.iter().zip(signs).filter(|(_, s)| **s != 0).map(|(l, s)| (*s, *l)).collect();
    let r = signed_lse_terms(&terms);
    (*r.log_abs(), r.sign())
}

pub fn softplus<T: Real>(x: &T) -> T {
    // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
    let v = x.value();
    if v > 0.0 {
        x.clone() + (-x.clone()).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of softplus, `log(e^y - 1)`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

const LN_FACT_CACHE: usize = 4096;

/// `ln k!`
pub fn ln_factorial(k: usize) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_CACHE);
        t.push(0.0);
        for i in 1..LN_FACT_CACHE {
            t.push(t[i - 1] + (i as f64).ln());
        }
        t
    });
    if k < LN_FACT_CACHE {
        table[k]
    } else {
        table[LN_FACT_CACHE - 1] + (LN_FACT_CACHE..=k).map(|i| (i as f64).ln()).sum::<f64>()
    }
}
