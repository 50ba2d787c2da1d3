//! The ten one-parameter Archimedean generator families.
//!
//! Every closed form is written once against [`Real`] in a cancellation-free
//! arrangement, so the same expression evaluates plain values, gradients,
//! log-magnitude values and Taylor jets. With `L = −ln u`:
//!
//! | family           | ψ(t)                                  | ψ⁻¹(u)                          |
//! |------------------|---------------------------------------|---------------------------------|
//! | Clayton          | (1+t)^{−1/θ}                          | expm1(θL)                       |
//! | Frank            | −ln1p(−a e^{−t})/θ, a = −expm1(−θ)    | ln a − ln(−expm1(−θu))          |
//! | Gumbel           | exp(−t^{1/θ})                         | L^θ                             |
//! | Joe              | 1 − (1 − e^{−t})^{1/θ}                | −ln(1 − (1−u)^θ)                |
//! | AMH              | (1−θ)e^{−t} / (1 − θe^{−t})           | ln(1−θ+θu) + L                  |
//! | InverseGaussian  | exp(−2t / (1 + √(1+2θt)))             | L + θL²/2                       |
//! | Nelsen9          | exp(−expm1(t)/θ)                      | ln1p(θL)                        |
//! | Nelsen12         | 1 / (1 + t^{1/θ})                     | expm1(L)^θ                      |
//! | Nelsen13         | exp(−expm1(ln1p(t)/θ))                | expm1(θ ln1p(L))                |
//! | Nelsen17         | expm1(−ln1p(−b e^{−t})/θ), b = 1−2^{−θ} | ln b − ln(−expm1(−θ ln1p u))  |
//!
//! AMH and Nelsen9 additionally provide direct Taylor-coefficient hooks used
//! by the log-domain path.

use crate::error::{Error, Result};
use crate::jet::{Jet, LogSeries};
use crate::num::{ln_factorial, Dual, Lift, Log, Real, Scalar};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Clayton,
    Frank,
    Gumbel,
    Joe,
    Amh,
    InverseGaussian,
    Nelsen9,
    Nelsen12,
    Nelsen13,
    Nelsen17,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::Clayton,
        Family::Frank,
        Family::Gumbel,
        Family::Joe,
        Family::Amh,
        Family::InverseGaussian,
        Family::Nelsen9,
        Family::Nelsen12,
        Family::Nelsen13,
        Family::Nelsen17,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Clayton => "clayton",
            Family::Frank => "frank",
            Family::Gumbel => "gumbel",
            Family::Joe => "joe",
            Family::Amh => "amh",
            Family::InverseGaussian => "inverse_gaussian",
            Family::Nelsen9 => "nelsen9",
            Family::Nelsen12 => "nelsen12",
            Family::Nelsen13 => "nelsen13",
            Family::Nelsen17 => "nelsen17",
        }
    }

    /// Admissible θ interval as `(lo, lo_inclusive, hi, hi_inclusive)`.
    pub fn domain(self) -> (f64, bool, f64, bool) {
        match self {
            Family::Clayton
            | Family::Frank
            | Family::InverseGaussian
            | Family::Nelsen9
            | Family::Nelsen17 => (0.0, false, f64::INFINITY, false),
            Family::Gumbel | Family::Joe | Family::Nelsen12 | Family::Nelsen13 => {
                (1.0, true, f64::INFINITY, false)
            }
            Family::Amh => (0.0, true, 1.0, false),
        }
    }

    pub fn check_theta(self, theta: f64) -> Result<()> {
        let (lo, lo_in, hi, hi_in) = self.domain();
        let ok = theta.is_finite()
            && (theta > lo || (lo_in && theta == lo))
            && (theta < hi || (hi_in && theta == hi));
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("{} parameter {theta} outside its domain", self.name())))
        }
    }

    /// Families whose edge compositions are admissible when the parent
    /// parameter does not exceed the child's.
    pub fn ordering(self) -> Option<Ordering> {
        match self {
            Family::Clayton
            | Family::Gumbel
            | Family::Frank
            | Family::Joe
            | Family::Amh
            | Family::Nelsen12
            | Family::Nelsen13 => Some(Ordering::ParentBelowChild),
            Family::Nelsen9 => Some(Ordering::ParentAboveChild),
            _ => None,
        }
    }
}

/// Same-family nesting order required for a d-monotone edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ordering {
    ParentBelowChild,
    ParentAboveChild,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace(['-', ' '], "_");
        let f = match k.as_str() {
            "clayton" => Family::Clayton,
            "frank" => Family::Frank,
            "gumbel" => Family::Gumbel,
            "joe" => Family::Joe,
            "amh" | "ali_mikhail_haq" => Family::Amh,
            "inverse_gaussian" | "inversegaussian" => Family::InverseGaussian,
            "nelsen9" => Family::Nelsen9,
            "nelsen12" => Family::Nelsen12,
            "nelsen13" => Family::Nelsen13,
            "nelsen17" => Family::Nelsen17,
            _ => return Err(Error::Model(format!("unknown family '{s}'"))),
        };
        Ok(f)
    }
}

/// A family with a concrete parameter value of scalar type `T`.
#[derive(Clone, Debug)]
pub struct Generator<T = f64> {
    pub family: Family,
    pub theta: T,
}

impl Generator<f64> {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        family.check_theta(theta)?;
        Ok(Generator { family, theta })
    }

    /// ψ(t) = e^{−t}, the product copula.
    pub fn independence() -> Self {
        Generator { family: Family::Amh, theta: 0.0 }
    }

    pub fn psi(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("psi argument {t} is negative")));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        Ok(self.psi_of(&t))
    }

    pub fn psi_inv(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("psi_inv argument {u} outside (0, 1]")));
        }
        if u == 1.0 {
            return Ok(0.0);
        }
        Ok(self.psi_inv_of(&u))
    }

    /// ψ⁻¹ by bracketing bisection on ψ, to relative tolerance `tol`.
    pub fn psi_inv_bisect(&self, u: f64, tol: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return Err(Error::Domain(format!("psi_inv argument {u} outside (0, 1]")));
        }
        Ok(bisect_psi(self, u, tol))
    }

    /// (ψ⁻¹)′(u) = 1/ψ′(ψ⁻¹(u)).
    pub fn psi_inv_deriv(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("psi_inv_deriv argument {u} outside (0, 1)")));
        }
        Ok(self.psi_inv_of(&Jet::variable(u, 1)).c[1])
    }
}

fn bisect_psi(g: &Generator<f64>, u: f64, tol: f64) -> f64 {
    if u == 1.0 {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while g.psi_of(&hi) > u && hi < 1e300 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if g.psi_of(&mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol * hi.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    0.5 * (lo + hi)
}

impl<T: Real> Generator<T> {
    pub fn with_theta(family: Family, theta: T) -> Self {
        Generator { family, theta }
    }

    /// Parameter as a plain float.
    pub fn theta_value(&self) -> f64 {
        self.theta.value()
    }

    pub fn value(&self) -> Generator<f64> {
        Generator { family: self.family, theta: self.theta.value() }
    }

    fn lift<R: Lift<T>>(&self, x: T) -> R {
        R::lift(&x)
    }

    /// ψ(t) on any scalar that can absorb the parameter type.
    pub fn psi_of<R: Real + Lift<T>>(&self, t: &R) -> R {
        let th = &self.theta;
        let t = t.clone();
        match self.family {
            Family::Clayton => {
                let e: R = self.lift(-th.recip());
                (t + R::one()).powf(&e)
            }
            Family::Frank => {
                let a = -(-th.clone()).exp_m1();
                let na: R = self.lift(-a);
                let k: R = self.lift(-th.recip());
                ((-t).exp() * na).ln_1p() * k
            }
            Family::Gumbel => {
                let e: R = self.lift(th.recip());
                (-t.powf(&e)).exp()
            }
            Family::Joe => {
                let x = log1m_exp(-t);
                let k: R = self.lift(th.recip());
                -(x * k).exp_m1()
            }
            Family::Amh => {
                if th.value() == 0.0 {
                    return (-t).exp();
                }
                let one_minus: R = self.lift(T::one() - th.clone());
                let lth: R = self.lift(th.ln());
                // 1 − θe^{−t} = −expm1(ln θ − t)
                let den = -(lth - t.clone()).exp_m1();
                one_minus * (-t).exp() / den
            }
            Family::InverseGaussian => {
                let k: R = self.lift(th.scale(2.0));
                let s = (t.clone() * k + R::one()).sqrt();
                (-(t.scale(2.0) / (s + R::one()))).exp()
            }
            Family::Nelsen9 => {
                let k: R = self.lift(-th.recip());
                (t.exp_m1() * k).exp()
            }
            Family::Nelsen12 => {
                let e: R = self.lift(th.recip());
                (t.powf(&e) + R::one()).recip()
            }
            Family::Nelsen13 => {
                let k: R = self.lift(th.recip());
                (-(t.ln_1p() * k).exp_m1()).exp()
            }
            Family::Nelsen17 => {
                let b = -(th.scale(-std::f64::consts::LN_2)).exp_m1();
                let nb: R = self.lift(-b);
                let k: R = self.lift(-th.recip());
                (((-t).exp() * nb).ln_1p() * k).exp_m1()
            }
        }
    }

    /// ψ⁻¹(u) on any scalar that can absorb the parameter type.
    pub fn psi_inv_of<R: Real + Lift<T>>(&self, u: &R) -> R {
        let th = &self.theta;
        let u = u.clone();
        let big_l = || -u.ln();
        match self.family {
            Family::Clayton => (big_l() * self.lift::<R>(th.clone())).exp_m1(),
            Family::Frank => {
                let la = (-(-th.clone()).exp_m1()).ln();
                let k: R = self.lift(-th.clone());
                self.lift::<R>(la) - (-(u.clone() * k).exp_m1()).ln()
            }
            Family::Gumbel => big_l().powf(&self.lift(th.clone())),
            Family::Joe => {
                let k: R = self.lift(th.clone());
                let y = (-u).ln_1p() * k;
                -log1m_exp(y)
            }
            Family::Amh => {
                let k: R = self.lift(th.clone());
                ((u.clone() - R::one()) * k).ln_1p() + big_l()
            }
            Family::InverseGaussian => {
                let l = big_l();
                let k: R = self.lift(th.scale(0.5));
                l.clone() + l.clone() * l * k
            }
            Family::Nelsen9 => (big_l() * self.lift::<R>(th.clone())).ln_1p(),
            Family::Nelsen12 => (big_l().exp_m1().ln() * self.lift::<R>(th.clone())).exp(),
            Family::Nelsen13 => (big_l().ln_1p() * self.lift::<R>(th.clone())).exp_m1(),
            Family::Nelsen17 => {
                let lb = (-(th.scale(-std::f64::consts::LN_2)).exp_m1()).ln();
                let k: R = self.lift(-th.clone());
                self.lift::<R>(lb) - (-(u.ln_1p() * k).exp_m1()).ln()
            }
        }
    }

    /// ln ψ(t), in closed form where the family allows it.
    pub fn log_psi_of<R: Real + Lift<T>>(&self, t: &R) -> R {
        let th = &self.theta;
        let t = t.clone();
        match self.family {
            Family::Clayton => t.ln_1p() * self.lift::<R>(-th.recip()),
            Family::Gumbel => -t.powf(&self.lift(th.recip())),
            Family::Joe => log1m_exp(log1m_exp(-t) * self.lift::<R>(th.recip())),
            Family::Amh if th.value() != 0.0 => {
                let l1m: R = self.lift((T::one() - th.clone()).ln());
                let lth: R = self.lift(th.ln());
                l1m - t.clone() - (-(lth - t).exp_m1()).ln()
            }
            Family::Amh => -t,
            Family::InverseGaussian => {
                let s = (t.clone() * self.lift::<R>(th.scale(2.0)) + R::one()).sqrt();
                -(t.scale(2.0) / (s + R::one()))
            }
            Family::Nelsen9 => t.exp_m1() * self.lift::<R>(-th.recip()),
            Family::Nelsen12 => -t.powf(&self.lift(th.recip())).ln_1p(),
            Family::Nelsen13 => -(t.ln_1p() * self.lift::<R>(th.recip())).exp_m1(),
            Family::Frank => {
                let a = -(-th.clone()).exp_m1();
                let x0 = a.value() * (-t.value()).exp();
                let Some(terms) = series_terms(x0, t.jet_order()).filter(|_| x0 < SERIES_CUTOFF) else {
                    return self.psi_of(&t).ln();
                };
                // ln ψ = ln(a/θ) − t + ln M(x), M(x) = −ln1p(−x)/x = Σ_j x^j/(j+1), x = a e^{−t}
                let p: Vec<T> = (0..=terms).map(|j| T::from_f64(1.0 / (j as f64 + 1.0))).collect();
                let x = (-t.clone()).exp() * self.lift::<R>(a.clone());
                self.lift::<R>(a.ln() - th.ln()) - t + ln_power_series(p, &x)
            }
            Family::Nelsen17 => self.psi_of(&t).ln(),
        }
    }

    /// ψ⁻¹(e^l), taking the log argument directly where the inverse only
    /// needs −ln u.
    pub fn psi_inv_of_log<R: Real + Lift<T>>(&self, l: &R) -> R {
        let th = &self.theta;
        let big_l = -l.clone();
        match self.family {
            Family::Clayton => (big_l * self.lift::<R>(th.clone())).exp_m1(),
            Family::Gumbel => big_l.powf(&self.lift(th.clone())),
            Family::InverseGaussian => big_l.clone() + big_l.clone() * big_l * self.lift::<R>(th.scale(0.5)),
            Family::Nelsen9 => (big_l * self.lift::<R>(th.clone())).ln_1p(),
            Family::Nelsen12 => (big_l.exp_m1().ln() * self.lift::<R>(th.clone())).exp(),
            Family::Nelsen13 => (big_l.ln_1p() * self.lift::<R>(th.clone())).exp_m1(),
            _ => self.psi_inv_of(&l.exp()),
        }
    }

    /// Taylor coefficients ψ^(k)(t)/k!, k = 0..=n, by jet composition.
    pub fn psi_jet<S: Real + Lift<T>>(&self, t: &S, n: usize) -> Jet<S> {
        self.psi_of(&Jet::variable(t.clone(), n)).truncate(n)
    }

    /// Log-form Taylor coefficients of ψ at `t`, through the family hook when
    /// one exists and `hooks` is set.
    pub fn psi_log_series(&self, t: &Log<T>, n: usize, hooks: bool) -> LogSeries<T> {
        match self.family {
            Family::Amh if hooks => amh_series(&self.theta, &t.to_raw(), n),
            Family::Nelsen9 if hooks => nelsen9_series(&self.theta, &t.to_raw(), n),
            _ => self.psi_jet(t, n),
        }
    }

    /// ψ⁻¹ with the bisection fallback; the parameter tangent is recovered
    /// from one Newton step in `T`, i.e. ∂s/∂θ = −(∂ψ/∂θ)/ψ′(s).
    pub fn psi_inv_bisect_of(&self, u: &T, tol: f64) -> T
    where
        T: Lift<T>,
    {
        let s = bisect_psi(&self.value(), u.value(), tol);
        if s == 0.0 {
            return T::zero();
        }
        let st = T::from_f64(s);
        let j = self.psi_jet(&st, 1);
        st - (j.c[0].clone() - u.clone()) / j.c[1].clone()
    }
}

/// Below this argument the Frank forms expand in `a e^{−t}`, where the
/// direct forms lose the O(e^{−t}) derivatives to rounding.
pub(crate) const SERIES_CUTOFF: f64 = 0.25;

/// Largest expansion the Frank series forms will use before falling back.
pub(crate) const SERIES_MAX_TERMS: usize = 600;

/// Terms that take a unit-radius power series in `x = x0 e^{−s}` to double
/// precision through order `n` in `s`, where term `j` weighs `j^n x0^j`;
/// `None` past [`SERIES_MAX_TERMS`].
pub(crate) fn series_terms(x0: f64, n: usize) -> Option<usize> {
    let lx = x0.ln();
    let w = |j: usize| n as f64 * (j as f64).ln() + j as f64 * lx;
    let peak = ((n as f64 / -lx).floor() as usize).max(1);
    let top = w(peak).max(w(peak + 1));
    let floor = top + (f64::EPSILON * 1e-2).ln();
    (peak..=SERIES_MAX_TERMS).find(|&j| w(j) < floor)
}

/// `ln Σ_j p_j x^j` (`p_0 > 0`) through the power series of the logarithm.
/// For log-convex `p` those coefficients are nonnegative, so a jet `x` with
/// alternating coefficients adds terms of one sign per order.
pub(crate) fn ln_power_series<T: Real, R: Real + Lift<T>>(p: Vec<T>, x: &R) -> R {
    let e = Jet::from_coeffs(p).ln();
    let mut acc = R::lift(&e.c[e.c.len() - 1]);
    for c in e.c[..e.c.len() - 1].iter().rev() {
        acc = acc * x.clone() + R::lift(c);
    }
    acc
}

/// ln(1 − e^{y}) for y < 0, switching form at −ln 2.
fn log1m_exp<R: Real>(y: R) -> R {
    if y.value() > -std::f64::consts::LN_2 {
        (-y.exp_m1()).ln()
    } else {
        (-y.exp()).ln_1p()
    }
}

/// Raw scalars evaluate ψ jets by composition; [`Log`] scalars go through the
/// per-family hooks.
pub trait GenScalar<T: Real>: Scalar<T> {
    fn generator_jet(g: &Generator<T>, t: &Self, n: usize) -> Jet<Self>;
}

impl GenScalar<f64> for f64 {
    fn generator_jet(g: &Generator<f64>, t: &f64, n: usize) -> Jet<f64> {
        g.psi_jet(t, n)
    }
}

impl GenScalar<Dual> for Dual {
    fn generator_jet(g: &Generator<Dual>, t: &Dual, n: usize) -> Jet<Dual> {
        g.psi_jet(t, n)
    }
}

impl<T: Real> GenScalar<T> for Log<T> {
    fn generator_jet(g: &Generator<T>, t: &Log<T>, n: usize) -> Jet<Log<T>> {
        g.psi_log_series(t, n, true)
    }
}

/// Lazily extended table of `ln` of a positive integer triangle.
struct LogTriangle {
    rows: Mutex<Option<Arc<Vec<Vec<f64>>>>>,
    next: fn(&[f64], usize) -> Vec<f64>,
}

impl LogTriangle {
    const fn new(next: fn(&[f64], usize) -> Vec<f64>) -> Self {
        LogTriangle { rows: Mutex::new(None), next }
    }

    fn upto(&self, n: usize) -> Arc<Vec<Vec<f64>>> {
        let mut guard = self.rows.lock().expect("table lock poisoned");
        let have = guard.as_ref().map_or(0, |r| r.len());
        if have <= n {
            let mut rows: Vec<Vec<f64>> = guard.as_ref().map(|r| (**r).clone()).unwrap_or_default();
            if rows.is_empty() {
                rows.push(vec![0.0]);
            }
            while rows.len() <= n {
                let k = rows.len();
                let r = (self.next)(&rows[k - 1], k);
                rows.push(r);
            }
            *guard = Some(Arc::new(rows));
        }
        guard.clone().expect("table initialised")
    }
}

fn lse2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// ln S(n, j) for j = 0..=n (Stirling numbers of the second kind).
fn stirling_row(prev: &[f64], n: usize) -> Vec<f64> {
    let at = |j: usize| prev.get(j).copied().unwrap_or(f64::NEG_INFINITY);
    (0..=n)
        .map(|j| {
            if j == 0 {
                return f64::NEG_INFINITY;
            }
            lse2((j as f64).ln() + at(j), at(j - 1))
        })
        .collect()
}

/// ln A(n, i) for i = 0..n (Eulerian numbers); row 0 is `[0]`.
fn eulerian_row(prev: &[f64], n: usize) -> Vec<f64> {
    let at = |i: isize| {
        if i < 0 {
            f64::NEG_INFINITY
        } else {
            prev.get(i as usize).copied().unwrap_or(f64::NEG_INFINITY)
        }
    };
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| {
            let ii = i as isize;
            lse2(((n - i) as f64).ln() + at(ii - 1), ((i + 1) as f64).ln() + at(ii))
        })
        .collect()
}

static STIRLING2: LogTriangle = LogTriangle::new(stirling_row);
static EULERIAN: LogTriangle = LogTriangle::new(eulerian_row);

/// ln S(n, j).
pub fn ln_stirling2(n: usize, j: usize) -> f64 {
    STIRLING2.upto(n)[n].get(j).copied().unwrap_or(f64::NEG_INFINITY)
}

/// AMH coefficients from the geometric frailty series
/// ψ^{(k)}(t) = (−1)^k (1−θ) e^{−t} A_k(ρ) / (1−ρ)^{k+1}, ρ = θ e^{−t},
/// with A_k the Eulerian polynomial; every summand has the same sign.
pub fn amh_series<T: Real>(theta: &T, t: &T, n: usize) -> LogSeries<T> {
    let table = EULERIAN.upto(n);
    let lrho = Log::from_raw(theta.clone()).log_abs().clone() - t.clone();
    let theta_zero = theta.value() == 0.0;
    let l1mrho = if theta_zero { T::zero() } else { (-lrho.exp_m1()).ln() };
    let lbase = (T::one() - theta.clone()).ln() - t.clone();
    let c = (0..=n)
        .map(|k| {
            let row = &table[k];
            let la = if theta_zero {
                T::zero()
            } else {
                let terms = row.iter().enumerate().map(|(i, &lc)| {
                    Log::new(1, T::from_f64(lc) + lrho.scale(i as f64))
                });
                Log::sum_iter(terms).log_abs().clone()
            };
            let mag = lbase.clone() + la - l1mrho.scale((k + 1) as f64) - T::from_f64(ln_factorial(k));
            Log::new(if k % 2 == 0 { 1 } else { -1 }, mag)
        })
        .collect();
    Jet::from_coeffs(c)
}

/// AMH coefficients by direct truncated summation of the frailty series,
/// ψ^{(k)}(t) = (−1)^k Σ_{x≥1} x^k (1−θ) θ^{x−1} e^{−tx}.
pub fn amh_series_direct(theta: f64, t: f64, n: usize, terms: usize) -> Vec<f64> {
    (0..=n)
        .map(|k| {
            let logs: Vec<f64> = (1..=terms)
                .map(|x| {
                    let xf = x as f64;
                    k as f64 * xf.ln() + (1.0 - theta).ln() + (xf - 1.0) * theta.ln() - t * xf
                })
                .collect();
            let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = logs.iter().map(|l| (l - m).exp()).sum();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * (m + s.ln() - ln_factorial(k)).exp()
        })
        .collect()
}

/// Nelsen9 coefficients via the Touchard factorization
/// ψ^{(n)}(t) = exp((1 − e^t)/θ) · T_n(−e^t/θ), T_n(y) = Σ_j S(n,j) y^j.
pub fn nelsen9_series<T: Real>(theta: &T, t: &T, n: usize) -> LogSeries<T> {
    let table = STIRLING2.upto(n);
    let lead = -(t.exp_m1() / theta.clone());
    // ln|y| = t − ln θ, y < 0
    let ly = t.clone() - theta.ln();
    let c = (0..=n)
        .map(|k| {
            if k == 0 {
                return Log::new(1, lead.clone());
            }
            let terms = (1..=k).map(|j| {
                Log::new(if j % 2 == 0 { 1 } else { -1 }, T::from_f64(table[k][j]) + ly.scale(j as f64))
            });
            let tn = Log::sum_iter(terms);
            Log::new(tn.sign(), tn.log_abs().clone() + lead.clone() - T::from_f64(ln_factorial(k)))
        })
        .collect();
    Jet::from_coeffs(c)
}

/// Largest Nelsen9 θ for which ψ is d-monotone: 1/|r_d| with r_d the most
/// negative root of the Touchard polynomial T_d.
pub fn nelsen9_theta_max(d: usize) -> f64 {
    if d <= 1 {
        return f64::INFINITY;
    }
    let table = STIRLING2.upto(d);
    // P(y) = T_d(y)/y = Σ_{j=1..d} S(d,j) y^{j−1}; real-rooted, so Newton from
    // the left of every root converges monotonically
    let coef: Vec<f64> = (1..=d).map(|j| table[d][j].exp()).collect();
    let eval = |y: f64| {
        let mut p = 0.0;
        let mut dp = 0.0;
        for c in coef.iter().rev() {
            dp = dp * y + p;
            p = p * y + c;
        }
        (p, dp)
    };
    let mut y = -((d * (d - 1)) as f64) / 2.0 - 1.0;
    for _ in 0..500 {
        let (p, dp) = eval(y);
        let step = p / dp;
        y -= step;
        if step.abs() <= 1e-15 * y.abs() {
            break;
        }
    }
    1.0 / y.abs()
}
