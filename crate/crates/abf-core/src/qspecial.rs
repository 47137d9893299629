//! q-series primitives shared by every other module.
//!
//! Everything here is a pure function of its arguments. Complex powers of the
//! elliptic base are taken as `exp(w * ln x)` with `ln x < 0`, so there are no
//! branch cuts to worry about.

use crate::error::{domain, pole, AbfError, Result};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

pub const I: C64 = C64::new(0.0, 1.0);

/// Cutoffs for every truncated series and product in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    pub eps: f64,
    pub max_terms: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            eps: 1e-14,
            max_terms: 4096,
        }
    }
}

impl TruncationPolicy {
    pub const ENV_EPS: &'static str = "ABF_EPS";
    pub const ENV_MAX_TERMS: &'static str = "ABF_MAX_TERMS";

    pub fn new(eps: f64, max_terms: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(domain(format!("eps must be positive, got {eps}")));
        }
        if max_terms == 0 {
            return Err(domain("max_terms must be at least 1"));
        }
        Ok(TruncationPolicy { eps, max_terms })
    }

    /// Defaults, overridden by `ABF_EPS` / `ABF_MAX_TERMS` when set.
    pub fn from_env() -> Result<Self> {
        let mut t = Self::default();
        if let Ok(s) = std::env::var(Self::ENV_EPS) {
            t.eps = s
                .trim()
                .parse()
                .map_err(|_| domain(format!("{}={s} is not a number", Self::ENV_EPS)))?;
        }
        if let Ok(s) = std::env::var(Self::ENV_MAX_TERMS) {
            t.max_terms = s
                .trim()
                .parse()
                .map_err(|_| domain(format!("{}={s} is not an integer", Self::ENV_MAX_TERMS)))?;
        }
        Self::new(t.eps, t.max_terms)
    }

    pub fn doubled(self) -> Self {
        TruncationPolicy {
            max_terms: self.max_terms * 2,
            ..self
        }
    }
}

/// Level `k` and elliptic base `x` together with the derived scalars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    k: u32,
    x: f64,
}

impl ModelParams {
    pub fn new(k: u32, x: f64) -> Result<Self> {
        if k < 2 {
            return Err(AbfError::Level {
                k,
                reason: "the level must be at least 2",
            });
        }
        if !(x > 0.0 && x < 1.0) {
            return Err(domain(format!("x must lie in (0,1), got {x}")));
        }
        Ok(ModelParams { k, x })
    }

    /// Traces of type II vertex operators only converge for k >= 3.
    pub fn require_trace_level(&self) -> Result<()> {
        if self.k < 3 {
            return Err(AbfError::Level {
                k: self.k,
                reason: "trace form factors assume k >= 3 (no convergence domain at k = 2)",
            });
        }
        Ok(())
    }

    pub fn k(&self) -> u32 {
        self.k
    }
    pub fn kf(&self) -> f64 {
        self.k as f64
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn r(&self) -> f64 {
        self.kf() + 2.0
    }
    pub fn log_x(&self) -> f64 {
        self.x.ln()
    }

    /// tau = -(ik/pi) ln x, so that x^{2k} = e^{2 pi i tau}.
    pub fn tau(&self) -> C64 {
        C64::new(0.0, -self.kf() * self.log_x() / PI)
    }

    /// Conjugate nome; tends to 0 as x -> 1.
    pub fn p(&self) -> f64 {
        (PI * PI / (self.r() * self.log_x())).exp()
    }

    pub fn omega(&self) -> C64 {
        (I * PI / self.kf()).exp()
    }

    pub fn central_charge(&self) -> f64 {
        2.0 * (self.kf() - 1.0) / self.r()
    }

    /// Conformal dimension of the neutral primary with weight label l.
    pub fn dim(&self, l: i64) -> f64 {
        let l1 = (l + 1) as f64;
        (l1 * l1 - 1.0) / (4.0 * self.r())
    }

    pub fn xpow(&self, w: C64) -> C64 {
        (w * self.log_x()).exp()
    }

    pub fn xpow_re(&self, w: f64) -> f64 {
        (w * self.log_x()).exp()
    }
}

// ---------------------------------------------------------------------------
// Pochhammer products
// ---------------------------------------------------------------------------

/// (z; p_1, ..., p_m)_inf, the product of (1 - p_1^{l_1}...p_m^{l_m} z).
pub fn qpoch(z: C64, bases: &[f64], trunc: &TruncationPolicy) -> C64 {
    qpoch_tracked(z, bases, trunc).0
}

/// Pochhammer product used as a denominator: a factor below `eps` is a pole.
pub(crate) fn qpoch_denominator(
    z: C64,
    bases: &[f64],
    trunc: &TruncationPolicy,
    what: impl FnOnce() -> String,
) -> Result<C64> {
    let (v, m) = qpoch_tracked(z, bases, trunc);
    if m < trunc.eps {
        return Err(pole(what()));
    }
    Ok(v)
}

/// Same product, also returning the smallest factor modulus seen.
fn qpoch_tracked(z: C64, bases: &[f64], trunc: &TruncationPolicy) -> (C64, f64) {
    let tol = trunc.eps * bases.iter().map(|p| 1.0 - p).product::<f64>();
    qpoch_rec(z, bases, tol, trunc.max_terms)
}

fn qpoch_rec(z: C64, bases: &[f64], tol: f64, max_terms: usize) -> (C64, f64) {
    let Some((&p, rest)) = bases.split_first() else {
        let f = C64::new(1.0, 0.0) - z;
        return (f, f.norm());
    };
    assert!(p > 0.0 && p < 1.0, "Pochhammer base {p} outside (0,1)");
    let mut acc = C64::new(1.0, 0.0);
    let mut min_factor = f64::INFINITY;
    let mut t = z;
    for _ in 0..max_terms {
        if t.norm() < tol {
            break;
        }
        let (f, m) = qpoch_rec(t, rest, tol, max_terms);
        acc *= f;
        min_factor = min_factor.min(m);
        t *= p;
    }
    (acc, min_factor)
}

/// Theta_p(z) = (z;p)(p/z;p)(p;p).
pub fn theta_p(z: C64, p: f64, trunc: &TruncationPolicy) -> Result<C64> {
    if z == C64::new(0.0, 0.0) {
        return Err(domain("theta_p is undefined at z = 0"));
    }
    Ok(theta_nz(z, p, trunc))
}

fn theta_nz(z: C64, p: f64, trunc: &TruncationPolicy) -> C64 {
    let pc = C64::new(p, 0.0);
    qpoch(z, &[p], trunc) * qpoch(pc / z, &[p], trunc) * qpoch(pc, &[p], trunc)
}

/// [u] = x^{u^2/r - u} Theta_{x^{2r}}(x^{2u}), r = k + 2.
pub fn bracket(u: C64, params: &ModelParams, trunc: &TruncationPolicy) -> C64 {
    bracket_with(u, params.r(), params, trunc)
}

/// [u]^* : the same function with r replaced by k.
pub fn bracket_star(u: C64, params: &ModelParams, trunc: &TruncationPolicy) -> C64 {
    bracket_with(u, params.kf(), params, trunc)
}

/// [u]^* used as a denominator; a vanishing theta factor is reported as a pole.
pub(crate) fn bracket_star_denominator(
    u: C64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
    what: impl Fn() -> String,
) -> Result<C64> {
    let k = params.kf();
    let p = params.xpow_re(2.0 * k);
    let z = params.xpow(2.0 * u);
    let a = qpoch_denominator(z, &[p], trunc, &what)?;
    let b = qpoch_denominator(C64::new(p, 0.0) / z, &[p], trunc, &what)?;
    Ok(params.xpow(u * u / k - u) * a * b * qpoch(C64::new(p, 0.0), &[p], trunc))
}

fn bracket_with(u: C64, r: f64, params: &ModelParams, trunc: &TruncationPolicy) -> C64 {
    let pref = params.xpow(u * u / r - u);
    pref * theta_nz(params.xpow(2.0 * u), params.xpow_re(2.0 * r), trunc)
}

// ---------------------------------------------------------------------------
// Series in the conjugate modulus
// ---------------------------------------------------------------------------

/// Pairwise summation; keeps the error growth logarithmic in the length.
pub fn pairwise_sum(v: &[C64]) -> C64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// theta_1(u; tau') = 2 sum_{n>=1} (-1)^n e^{i pi tau' (n-1/2)^2} sin((2n-1)u).
pub fn theta1(u: C64, modular_arg: C64, trunc: &TruncationPolicy) -> Result<C64> {
    if !(modular_arg.im > 0.0) {
        return Err(domain(format!(
            "theta1 needs Im(tau') > 0, got {modular_arg}"
        )));
    }
    let mut terms = Vec::new();
    let mut peak = 0.0f64;
    let mut prev = f64::INFINITY;
    for n in 1..=trunc.max_terms {
        let h = n as f64 - 0.5;
        let gauss = (I * PI * modular_arg * h * h).exp();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let term = sign * gauss * ((2.0 * n as f64 - 1.0) * u).sin();
        let mag = term.norm();
        terms.push(term);
        peak = peak.max(mag);
        if mag <= trunc.eps * peak && mag < prev {
            break;
        }
        prev = mag;
    }
    Ok(2.0 * pairwise_sum(&terms))
}

/// eta(t) = q^{1/24} (q;q)_inf with q = e^{2 pi i t}, via the pentagonal series.
pub fn dedekind_eta(modular_arg: C64, trunc: &TruncationPolicy) -> Result<C64> {
    if !(modular_arg.im > 0.0) {
        return Err(domain(format!(
            "dedekind_eta needs Im(t) > 0, got {modular_arg}"
        )));
    }
    let e = |m: f64| (2.0 * PI * I * modular_arg * m).exp();
    let qabs = (-2.0 * PI * modular_arg.im).exp();
    let mut terms = vec![C64::new(1.0, 0.0)];
    for n in 1..=trunc.max_terms {
        let nf = n as f64;
        let lo = nf * (3.0 * nf - 1.0) / 2.0;
        if qabs.powf(lo) < trunc.eps {
            break;
        }
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        terms.push(sign * e(lo));
        terms.push(sign * e(nf * (3.0 * nf + 1.0) / 2.0));
    }
    Ok(e(1.0 / 24.0) * pairwise_sum(&terms))
}

/// [u] through theta_1 in the conjugate modulus -k/(tau r).
///
/// `theta1` follows the (-1)^n, n >= 1 series, which is minus the usual
/// theta_1; the leading minus sign here compensates.
pub fn bracket_conjugate(u: C64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    let (k, r, tau) = (params.kf(), params.r(), params.tau());
    let pref = -(I * k / (tau * r)).sqrt() * (-I * PI * tau * r / (4.0 * k)).exp();
    Ok(pref * theta1(PI * u / r, -k / (tau * r), trunc)?)
}

/// [u]^* through theta_1 in the conjugate modulus -1/tau.
pub fn bracket_star_conjugate(
    u: C64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    let (k, tau) = (params.kf(), params.tau());
    let pref = -(I / tau).sqrt() * (-I * PI * tau / 4.0).exp();
    Ok(pref * theta1(PI * u / k, -1.0 / tau, trunc)?)
}

// ---------------------------------------------------------------------------
// F(v) and constants
// ---------------------------------------------------------------------------

/// F(v) = (x^{2(k+1+v)}, x^{2(k+1-v)}; q, q) / (x^{2(k-1+v)}, x^{2(k-1-v)}; q, q), q = x^{2k}.
///
/// Poles sit at v = +-(k-1+kL), L >= 0; zeros at v = +-(k+1+kL).
pub fn f_pair(v: C64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    let k = params.kf();
    let q = params.xpow_re(2.0 * k);
    let b = [q, q];
    let num = qpoch(params.xpow(2.0 * (k + 1.0 + v)), &b, trunc)
        * qpoch(params.xpow(2.0 * (k + 1.0 - v)), &b, trunc);
    let (d1, m1) = qpoch_tracked(params.xpow(2.0 * (k - 1.0 + v)), &b, trunc);
    let (d2, m2) = qpoch_tracked(params.xpow(2.0 * (k - 1.0 - v)), &b, trunc);
    if m1.min(m2) < trunc.eps {
        return Err(pole(format!("F(v), v = {v}")));
    }
    Ok(num / (d1 * d2))
}

/// 1/F(v); the zeros of F at v = +-(k+1+kL) become poles.
pub fn f_pair_recip(v: C64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    let k = params.kf();
    let q = params.xpow_re(2.0 * k);
    let b = [q, q];
    let what = || format!("1/F(v), v = {v}");
    let n1 = qpoch_denominator(params.xpow(2.0 * (k + 1.0 + v)), &b, trunc, what)?;
    let n2 = qpoch_denominator(params.xpow(2.0 * (k + 1.0 - v)), &b, trunc, what)?;
    let den = qpoch(params.xpow(2.0 * (k - 1.0 + v)), &b, trunc)
        * qpoch(params.xpow(2.0 * (k - 1.0 - v)), &b, trunc);
    Ok(den / (n1 * n2))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub g: f64,
    pub g_star: f64,
    pub c: f64,
    pub c1: f64,
}

pub fn constants(params: &ModelParams, trunc: &TruncationPolicy) -> Constants {
    let k = params.kf();
    let x = params.x();
    let xp = |w: f64| C64::new(params.xpow_re(w), 0.0);
    let q = |z: C64, b: &[f64]| qpoch(z, b, trunc).re;
    let b2 = [params.xpow_re(2.0 * k), params.xpow_re(2.0 * k + 4.0)];
    let s = [params.xpow_re(2.0 * k + 4.0)];

    let g = (x - 1.0 / x)
        * params.xpow_re(-1.0 / (k + 2.0))
        * q(xp(2.0 * k + 2.0), &b2)
        * q(xp(4.0 * k + 2.0), &b2)
        / (q(xp(2.0 * k), &b2) * q(xp(4.0 * k + 4.0), &b2))
        * q(xp(2.0 * k + 2.0), &s).powi(2)
        * q(xp(2.0 * k + 4.0), &s);

    let qk = [params.xpow_re(2.0 * k)];
    let g_star = PI / (k * params.log_x()) * q(xp(2.0 * k - 2.0), &qk) / q(xp(2.0), &qk);

    let qq = [qk[0], qk[0]];
    let c = q(xp(2.0 * k), &qk) * q(xp(2.0 + 4.0 * k), &qq) / q(xp(2.0 * k - 2.0), &qq);

    let c1 = 1.0 / (2.0 * (PI / k).sin()).sqrt();
    Constants { g, g_star, c, c1 }
}
