//! Rank statistics and dependence-measure formulas used by the samplers'
//! checks and by model construction helpers.

use crate::error::{Error, Result};
use crate::generators::{Family, Generator};

/// Kendall's τ-a of two equally long samples.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "samples differ in length");
    let n = x.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let p = (x[i] - x[j]) * (y[i] - y[j]);
            s += (p > 0.0) as i64 - (p < 0.0) as i64;
        }
    }
    2.0 * s as f64 / (n as f64 * (n as f64 - 1.0))
}

/// Asymptotic Kolmogorov survival function `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Kolmogorov–Smirnov test statistic.
#[derive(Clone, Copy, Debug)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

fn ks_p(d: f64, ne: f64) -> f64 {
    let sq = ne.sqrt();
    kolmogorov_sf((sq + 0.12 + 0.11 / sq) * d)
}

/// One-sample test against U(0, 1).
pub fn ks_uniform(x: &[f64]) -> KsResult {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let f = u.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max);
    KsResult { statistic: d, p_value: ks_p(d, n) }
}

/// Two-sample test.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> KsResult {
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let t = a[i].min(b[j]);
        while i < n && a[i] <= t {
            i += 1;
        }
        while j < m && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    KsResult { statistic: d, p_value: ks_p(d, ne) }
}

/// Gumbel upper-tail dependence `2 − 2^{1/θ}`.
pub fn gumbel_upper_tail(theta: f64) -> f64 {
    2.0 - 2f64.powf(1.0 / theta)
}

/// Clayton lower-tail dependence `2^{−1/θ}`.
pub fn clayton_lower_tail(theta: f64) -> f64 {
    2f64.powf(-1.0 / theta)
}

/// Kendall's τ of a bivariate Archimedean copula,
/// `τ = 1 + 4 ∫₀¹ φ(u)/φ′(u) du` with `φ = ψ⁻¹`.
pub fn kendall_tau_of(family: Family, theta: f64) -> Result<f64> {
    family.check_theta(theta)?;
    match family {
        Family::Clayton => return Ok(theta / (theta + 2.0)),
        Family::Gumbel => return Ok(1.0 - 1.0 / theta),
        Family::Nelsen12 => return Ok(1.0 - 2.0 / (3.0 * theta)),
        _ => {}
    }
    let g = Generator::new(family, theta)?;
    let f = |u: f64| -> f64 {
        if u <= 0.0 || u >= 1.0 {
            return 0.0;
        }
        match (g.psi_inv(u), g.psi_inv_deriv(u)) {
            (Ok(a), Ok(b)) if b != 0.0 && a.is_finite() && b.is_finite() => a / b,
            _ => 0.0,
        }
    };
    Ok(1.0 + 4.0 * gauss_legendre(&f, 0.0, 1.0, 256))
}

/// Composite 8-point Gauss–Legendre on `panels` equal panels.
fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    const X: [f64; 4] = [0.1834346424956498, 0.525532409916329, 0.7966664774136267, 0.9602898564975363];
    const W: [f64; 4] = [0.362683783378362, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763];
    let h = (b - a) / panels as f64;
    let mut s = 0.0;
    for p in 0..panels {
        let m = a + (p as f64 + 0.5) * h;
        for k in 0..4 {
            s += W[k] * (f(m - 0.5 * h * X[k]) + f(m + 0.5 * h * X[k]));
        }
    }
    0.5 * h * s
}

/// θ with the given Kendall τ, by bisection over the family's domain.
/// Targets outside the family's attainable range are errors.
pub fn theta_for_tau(family: Family, tau: f64) -> Result<f64> {
    match family {
        Family::Clayton => return Ok(2.0 * tau / (1.0 - tau)),
        Family::Gumbel => return Ok(1.0 / (1.0 - tau)),
        Family::Nelsen12 if tau >= 1.0 / 3.0 => return Ok(2.0 / (3.0 * (1.0 - tau))),
        _ => {}
    }
    let (lo, lo_in, hi, _) = family.domain();
    let mut a = if lo_in { lo } else { lo + 1e-9 };
    let mut b = if hi.is_finite() { hi - 1e-9 } else { a + 1.0 };
    let tau_at = |th: f64| kendall_tau_of(family, th);
    let ta = tau_at(a)?;
    let increasing = tau_at(b)? >= ta;
    if !increasing {
        return Err(Error::Domain(format!("{family} τ is not increasing in θ")));
    }
    if !hi.is_finite() {
        while tau_at(b)? < tau {
            a = b;
            b *= 2.0;
            if b > 1e6 {
                return Err(Error::Domain(format!("{family} cannot reach τ={tau}")));
            }
        }
    } else if tau_at(b)? < tau {
        return Err(Error::Domain(format!("{family} cannot reach τ={tau}")));
    }
    if ta > tau {
        return Err(Error::Domain(format!("{family} τ at the domain floor exceeds {tau}")));
    }
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if tau_at(m)? < tau {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-12 * b.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (a + b))
}

/// Mean and sample standard deviation.
pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Median of a non-empty sample.
pub fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
