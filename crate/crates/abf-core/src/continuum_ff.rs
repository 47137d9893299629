//! The Z_k-symmetric massive theory obtained in the scaling limit.
//!
//! Particles a = 1..k-1 with masses M sin(pi a/k)/sin(pi/k), their
//! S-matrices, minimal two-particle form factors and the form factors of the
//! neutral B-bar/B sector, built two ways: by Wick contraction of
//! Zamolodchikov-Faddeev components and by the closed form with R polynomials.

use crate::cyclo::{Cyclo, CycloField};
use crate::error::{domain, pole, AbfError, Result};
use crate::lattice_ff::{hat_q, HatRoute};
use crate::qspecial::{f_pair, ModelParams, TruncationPolicy, I};
use num_complex::Complex64 as C64;
use num_rational::BigRational;
use num_traits::One;
use std::f64::consts::PI;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Below this modulus a denominator counts as zero.
const POLE_TOL: f64 = 1e-13;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// The level k of the scaling theory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContinuumParams {
    k: u32,
}

impl ContinuumParams {
    pub fn new(k: u32) -> Result<Self> {
        if k < 2 {
            return Err(AbfError::Level {
                k,
                reason: "the level must be at least 2",
            });
        }
        Ok(ContinuumParams { k })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn kf(&self) -> f64 {
        self.k as f64
    }

    pub fn omega(&self) -> C64 {
        C64::from_polar(1.0, PI / self.kf())
    }

    /// {l} = omega^l - omega^{-l} = 2i sin(pi l/k)
    pub fn brace(&self, l: f64) -> C64 {
        C64::new(0.0, 2.0 * (PI * l / self.kf()).sin())
    }

    fn check_particle(&self, a: i64) -> Result<()> {
        if a < 1 || a >= self.k as i64 {
            return Err(domain(format!("particle label a={a} outside 1..{}", self.k - 1)));
        }
        Ok(())
    }
}

impl From<&ModelParams> for ContinuumParams {
    fn from(p: &ModelParams) -> Self {
        ContinuumParams { k: p.k() }
    }
}

/// Mass scale M and lattice spacing delta, tied by
/// p^{(k+2)/k} / delta = k M / (2 sin(pi/k)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingParams {
    pub mass_scale: f64,
    pub delta: f64,
}

impl ScalingParams {
    pub fn from_lattice(params: &ModelParams, mass_scale: f64) -> Result<Self> {
        if !(mass_scale > 0.0) {
            return Err(domain(format!("mass scale must be positive, got {mass_scale}")));
        }
        let k = params.kf();
        let delta =
            2.0 * (PI / k).sin() * params.p().powf((k + 2.0) / k) / (k * mass_scale);
        Ok(ScalingParams { mass_scale, delta })
    }
}

pub fn mass(a: i64, params: &ContinuumParams, mass_scale: f64) -> Result<f64> {
    params.check_particle(a)?;
    let k = params.kf();
    Ok(mass_scale * (PI * a as f64 / k).sin() / (PI / k).sin())
}

/// Lattice spectral parameter for rapidity beta: (ik/2pi) beta - i pi/(2 ln x).
pub fn rapidity_to_spectral(beta: C64, params: &ModelParams) -> C64 {
    I * params.kf() / (2.0 * PI) * beta - I * PI / (2.0 * params.log_x())
}

// ---------------------------------------------------------------------------
// S-matrices
// ---------------------------------------------------------------------------

fn sinh_ratio(num: C64, den: C64, what: impl FnOnce() -> String) -> Result<C64> {
    let d = den.sinh();
    if d.norm() < POLE_TOL {
        return Err(pole(what()));
    }
    Ok(num.sinh() / d)
}

/// f_A(beta) = sinh(beta/2 + i pi A/2k) / sinh(beta/2 - i pi A/2k)
fn f_block(big_a: i64, beta: C64, params: &ContinuumParams) -> Result<C64> {
    if big_a.rem_euclid(2 * params.k as i64) == 0 {
        return Ok(ONE);
    }
    let s = I * PI * big_a as f64 / (2.0 * params.kf());
    sinh_ratio(beta / 2.0 + s, beta / 2.0 - s, || {
        format!("S-matrix block f_{big_a} at beta = {beta}")
    })
}

/// S_ab(beta) in the factored form f_{a+b} f_{|a-b|} prod f_{|a-b|+2s}^2.
pub fn s_matrix(a: i64, b: i64, beta: C64, params: &ContinuumParams) -> Result<C64> {
    params.check_particle(a)?;
    params.check_particle(b)?;
    let d = (a - b).abs();
    let mut s = f_block(a + b, beta, params)? * f_block(d, beta, params)?;
    for j in 1..a.min(b) {
        s *= f_block(d + 2 * j, beta, params)?.powi(2);
    }
    Ok(s)
}

/// S_ab(beta) as the a x b double product coming from fusing the lattice
/// vertex operators. Equal shifts in numerator and denominator are cancelled
/// before evaluation, so removable 0/0 factors at beta = 0 never appear.
pub fn s_matrix_product_form(a: i64, b: i64, beta: C64, params: &ContinuumParams) -> Result<C64> {
    params.check_particle(a)?;
    params.check_particle(b)?;
    let k = params.kf();
    // shifts doubled to stay integral
    let mut num = Vec::new();
    let mut den = Vec::new();
    for i in 1..=a {
        for j in 1..=b {
            let c2 = 2 + (a - b) - 2 * (i - j);
            num.push(c2);
            den.push(c2 - 4);
        }
    }
    let mut s = ONE;
    for c2 in num {
        if let Some(pos) = den.iter().position(|&d| d == c2) {
            den.swap_remove(pos);
        } else {
            s *= (beta / 2.0 + I * PI * c2 as f64 / (2.0 * k)).sinh();
        }
    }
    for d2 in den {
        let d = (beta / 2.0 + I * PI * d2 as f64 / (2.0 * k)).sinh();
        if d.norm() < POLE_TOL {
            return Err(pole(format!("S_{a}{b} product form at beta = {beta}")));
        }
        s /= d;
    }
    Ok(s)
}

/// S_{1 1bar}(beta) = S_11(i pi - beta).
pub fn s_matrix_1bar1(beta: C64, params: &ContinuumParams) -> Result<C64> {
    s_matrix(1, 1, I * PI - beta, params)
}

// ---------------------------------------------------------------------------
// Log-gamma and infinite Gamma products
// ---------------------------------------------------------------------------

/// B_2, B_4, ..., B_16
const STIRLING: [f64; 8] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
];

/// Principal-ish complex log Gamma. Only exp() of sums of these is used, so
/// the branch of the imaginary part does not matter.
pub fn ln_gamma(z: C64) -> C64 {
    if z.re < 0.5 {
        // reflection
        let s = (PI * z).sin();
        return re(PI.ln()) - s.ln() - ln_gamma(ONE - z);
    }
    let mut w = z;
    let mut shift = ZERO;
    while w.re < 15.0 {
        shift += w.ln();
        w += 1.0;
    }
    // Stirling series, B_{2j} / (2j (2j-1) w^{2j-1})
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut pw = inv;
    let mut series = ZERO;
    for (j, b) in STIRLING.iter().enumerate() {
        let m = 2.0 * (j + 1) as f64;
        series += *b / (m * (m - 1.0)) * pw;
        pw *= inv2;
    }
    (w - 0.5) * w.ln() - w + 0.5 * (2.0 * PI).ln() + series - shift
}

fn is_gamma_pole(z: C64) -> bool {
    let n = z.re.round();
    n <= 0.0 && (z - n).norm() < 1e-12
}

const BERNOULLI: [f64; 10] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
    0.0,
];

fn binom(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bernoulli_poly(m: usize, c: C64) -> C64 {
    (0..=m)
        .map(|i| binom(m, i) * BERNOULLI[i] * c.powu((m - i) as u32))
        .sum()
}

/// sum_{n >= a} n^{-s} for s >= 2 and large a, by Euler-Maclaurin.
fn hurwitz_tail(s: usize, a: f64) -> f64 {
    let s_f = s as f64;
    a.powf(1.0 - s_f) / (s_f - 1.0) + a.powf(-s_f) / 2.0 + s_f * a.powf(-s_f - 1.0) / 12.0
        - s_f * (s_f + 1.0) * (s_f + 2.0) * a.powf(-s_f - 3.0) / 720.0
        + s_f * (s_f + 1.0) * (s_f + 2.0) * (s_f + 3.0) * (s_f + 4.0) * a.powf(-s_f - 5.0)
            / 30240.0
}

/// prod_{n >= 1} prod_i Gamma(n + num_i) / prod_i Gamma(n + den_i).
///
/// The factors behave like 1 + O(n^-2) when the offsets balance. The sum of
/// logs is cut at N, the remainder is summed from the large-n expansion of
/// log Gamma(n + c) in Bernoulli polynomials, and N is doubled until the
/// result is stable.
pub fn gamma_ratio_product(num: &[C64], den: &[C64], trunc: &TruncationPolicy) -> Result<C64> {
    if num.len() != den.len() {
        return Err(domain("unbalanced Gamma product"));
    }
    // coefficients of n^{-j} in the log of one factor
    const J: usize = 8;
    let mut coef = [ZERO; J + 1];
    for (j, c) in coef.iter_mut().enumerate().skip(1) {
        let bsum: C64 = num.iter().map(|&c| bernoulli_poly(j + 1, c)).sum::<C64>()
            - den.iter().map(|&d| bernoulli_poly(j + 1, d)).sum::<C64>();
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        *c = sign * bsum / (j * (j + 1)) as f64;
    }
    let drift: C64 = num.iter().sum::<C64>() - den.iter().sum::<C64>();
    if drift.norm() > 1e-12 || coef[1].norm() > 1e-10 {
        return Err(domain("Gamma product does not converge for these offsets"));
    }

    let mut log_sum = ZERO;
    let mut n_done = 0usize;
    let scale = num.iter().chain(den).map(|c| c.norm()).fold(1.0, f64::max);
    let mut n_cut = ((32.0 * scale).ceil() as usize).min(trunc.max_terms.max(1));
    let mut prev: Option<C64> = None;
    loop {
        for n in n_done + 1..=n_cut {
            let nf = n as f64;
            if let Some(c) = num.iter().find(|&&c| is_gamma_pole(c + nf)) {
                return Err(pole(format!("Gamma({}) in a form factor product", c + nf)));
            }
            if den.iter().any(|&d| is_gamma_pole(d + nf)) {
                return Ok(ZERO);
            }
            log_sum += ln_gamma_group(nf, num, den);
        }
        n_done = n_cut;
        let a = n_cut as f64 + 1.0;
        let tail: C64 = (2..=J).map(|j| coef[j] * hurwitz_tail(j, a)).sum();
        let val = (log_sum + tail).exp();
        if let Some(p) = prev {
            if (val - p).norm() <= trunc.eps * val.norm() {
                return Ok(val);
            }
        }
        if n_cut >= trunc.max_terms {
            return Ok(val);
        }
        prev = Some(val);
        n_cut = (n_cut * 2).min(trunc.max_terms);
    }
}

/// ln(1 + z) without cancellation for small z.
fn ln_1p(z: C64) -> C64 {
    C64::new(
        0.5 * (2.0 * z.re + z.norm_sqr()).ln_1p(),
        z.im.atan2(1.0 + z.re),
    )
}

/// sum_i [log Gamma(n + c_i) - log Gamma(n + d_i)] for offsets with
/// sum c_i = sum d_i. The pieces proportional to sum (c_i - d_i) are dropped,
/// since they cancel exactly but would leave a rounding drift growing with n.
fn ln_gamma_group(n: f64, num: &[C64], den: &[C64]) -> C64 {
    let lo = num.iter().chain(den).map(|c| c.re).fold(f64::INFINITY, f64::min);
    if n + lo < 0.5 {
        return num.iter().map(|&c| ln_gamma(c + n)).sum::<C64>()
            - den.iter().map(|&d| ln_gamma(d + n)).sum::<C64>();
    }
    let mut acc = ZERO;
    let mut w = n;
    while w + lo < 15.0 {
        for (&c, &d) in num.iter().zip(den) {
            acc -= ((c + w) / (d + w)).ln();
        }
        w += 1.0;
    }
    let stirling = |c: C64| {
        let l = ln_1p(c / w);
        let inv = (c + w).inv();
        let inv2 = inv * inv;
        let mut pw = inv;
        let mut series = ZERO;
        for (j, b) in STIRLING.iter().enumerate() {
            let m = 2.0 * (j + 1) as f64;
            series += *b / (m * (m - 1.0)) * pw;
            pw *= inv2;
        }
        (w - 0.5) * l + c * l + series
    };
    num.iter().map(|&c| stirling(c)).sum::<C64>() - den.iter().map(|&d| stirling(d)).sum::<C64>()
        + acc
}

/// The Gamma-product part of F^min_11, without the sinh prefactors.
fn fmin_11_core(beta: C64, params: &ContinuumParams, trunc: &TruncationPolicy) -> Result<C64> {
    let a = I * beta / (2.0 * PI);
    let t = re(1.0 / params.kf());
    gamma_ratio_product(&[a - t, -a - t, t, t], &[a + t, -a + t, -t, -t], trunc)
}

/// F^min_11(beta) = sinh(beta/2) sinh(beta/2 + i pi/k) x Gamma product.
pub fn fmin_11(beta: C64, params: &ContinuumParams, trunc: &TruncationPolicy) -> Result<C64> {
    let pre = (beta / 2.0).sinh() * (beta / 2.0 + I * PI / params.kf()).sinh();
    Ok(pre * fmin_11_core(beta, params, trunc)?)
}

/// F^min_{1 1bar}(beta), normalized to 1 at beta = i pi.
pub fn fmin_1bar1(beta: C64, params: &ContinuumParams, trunc: &TruncationPolicy) -> Result<C64> {
    let a = I * beta / (2.0 * PI);
    let t = re(1.0 / params.kf());
    let h = re(0.5);
    gamma_ratio_product(
        &[a + t + h, -a + t - h, -t, -t],
        &[a - t + h, -a - t - h, t, t],
        trunc,
    )
}

// ---------------------------------------------------------------------------
// Symmetric functions, partitions, R polynomials
// ---------------------------------------------------------------------------

/// sigma_0..sigma_n with prod (t + x_j) = sum t^{n-r} sigma_r.
pub fn elementary_symmetric(values: &[C64]) -> Vec<C64> {
    let mut c = vec![ONE];
    for &x in values {
        c.push(ZERO);
        for r in (1..c.len()).rev() {
            let prev = c[r - 1];
            c[r] += x * prev;
        }
    }
    c
}

/// Rapidities of the n B-bar insertions (beta) and n B insertions (beta').
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuumConfig {
    pub beta: Vec<C64>,
    pub beta_p: Vec<C64>,
}

impl ContinuumConfig {
    pub fn new(beta: Vec<C64>, beta_p: Vec<C64>) -> Result<Self> {
        if beta.len() != beta_p.len() {
            return Err(domain(format!(
                "neutral sector needs equal counts, got {} and {}",
                beta.len(),
                beta_p.len()
            )));
        }
        Ok(ContinuumConfig { beta, beta_p })
    }

    pub fn from_real(beta: &[f64], beta_p: &[f64]) -> Result<Self> {
        Self::new(beta.iter().map(|&b| re(b)).collect(), beta_p.iter().map(|&b| re(b)).collect())
    }

    pub fn n(&self) -> usize {
        self.beta.len()
    }

    pub fn x(&self) -> Vec<C64> {
        self.beta.iter().map(|b| b.exp()).collect()
    }

    pub fn y(&self) -> Vec<C64> {
        self.beta_p.iter().map(|b| b.exp()).collect()
    }

    pub fn sigma(&self) -> Vec<C64> {
        elementary_symmetric(&self.x())
    }

    pub fn tau(&self) -> Vec<C64> {
        elementary_symmetric(&self.y())
    }
}

/// alpha = (a+1)/2
pub fn alpha_of(a: i64) -> f64 {
    (a as f64 + 1.0) / 2.0
}

/// A weakly decreasing sequence of nonnegative parts. Trailing zeros are
/// kept, so the length is meaningful.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    parts: Vec<u32>,
}

impl Partition {
    pub fn new(parts: Vec<u32>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(domain(format!("parts {parts:?} are not weakly decreasing")));
        }
        Ok(Partition { parts })
    }

    pub fn empty() -> Self {
        Partition { parts: vec![] }
    }

    pub fn parts(&self) -> &[u32] {
        &self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn size(&self) -> u32 {
        self.parts.iter().sum()
    }

    /// lambda'_i = #{j : lambda_j >= i}, for i = 1..len.
    pub fn conjugate(&self, len: usize) -> Partition {
        Partition {
            parts: (1..=len as u32)
                .map(|i| self.parts.iter().filter(|&&p| p >= i).count() as u32)
                .collect(),
        }
    }

    /// For lambda in Lambda(m, n): (m - lambda'_n, ..., m - lambda'_1), in Lambda(n, m).
    pub fn tilde_conjugate(&self, m: usize, n: usize) -> Partition {
        let lc = self.conjugate(n);
        Partition {
            parts: (0..n).map(|i| m as u32 - lc.parts[n - 1 - i]).collect(),
        }
    }

    /// Lambda(m, n): length m, parts at most n, in lexicographically increasing order.
    pub fn all_in_box(m: usize, n: u32) -> Vec<Partition> {
        fn rec(m: usize, max: u32, acc: &mut Vec<u32>, out: &mut Vec<Partition>) {
            if acc.len() == m {
                out.push(Partition { parts: acc.clone() });
                return;
            }
            for p in 0..=max {
                acc.push(p);
                rec(m, p, acc, out);
                acc.pop();
            }
        }
        let mut out = Vec::new();
        rec(m, n, &mut Vec::new(), &mut out);
        out.sort_by(|a, b| a.parts.cmp(&b.parts));
        out
    }
}

fn det(mut a: Vec<Vec<C64>>) -> C64 {
    let n = a.len();
    let mut d = ONE;
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].norm().partial_cmp(&a[j][c].norm()).unwrap())
            .unwrap();
        if a[piv][c] == ZERO {
            return ZERO;
        }
        if piv != c {
            a.swap(piv, c);
            d = -d;
        }
        d *= a[c][c];
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != ZERO {
                for j in c..n {
                    let v = a[c][j];
                    a[r][j] -= f * v;
                }
            }
        }
    }
    d
}

fn sigma_at(sig: &[C64], r: i64) -> C64 {
    if r >= 0 && (r as usize) < sig.len() {
        sig[r as usize]
    } else {
        ZERO
    }
}

/// det( {alpha - lambda'_i + i - 2j} / {alpha - i} * sigma_{lambda'_i - i + j} ), 1 <= i,j <= size.
pub fn schur_like(
    lambda: &Partition,
    values: &[C64],
    alpha: f64,
    size: usize,
    params: &ContinuumParams,
) -> Result<C64> {
    if size < values.len() {
        return Err(domain(format!(
            "determinant size {size} below the number of variables {}",
            values.len()
        )));
    }
    let mut rows = schur_rows(lambda, values, alpha, size, params);
    for (i, row) in rows.iter_mut().enumerate() {
        let d = params.brace(alpha - (i + 1) as f64);
        if d.norm() < POLE_TOL {
            return Err(AbfError::Singular(format!(
                "{{alpha - {}}} vanishes at alpha = {alpha}",
                i + 1
            )));
        }
        for v in row.iter_mut() {
            *v /= d;
        }
    }
    Ok(det(rows))
}

/// Rows of the S determinant before division by {alpha - i}.
fn schur_rows(
    lambda: &Partition,
    values: &[C64],
    alpha: f64,
    size: usize,
    params: &ContinuumParams,
) -> Vec<Vec<C64>> {
    let sig = elementary_symmetric(values);
    let lc = lambda.conjugate(size);
    (1..=size as i64)
        .map(|i| {
            let l = lc.parts[i as usize - 1] as i64;
            (1..=size as i64)
                .map(|j| params.brace(alpha - l as f64 + (i - 2 * j) as f64) * sigma_at(&sig, l - i + j))
                .collect()
        })
        .collect()
}

fn r_poly_det_at(alpha: f64, m: usize, n: usize, x: &[C64], y: &[C64], params: &ContinuumParams) -> Option<C64> {
    // The prefactor prod {alpha+n-i} prod {alpha+m-j} is moved into the
    // determinant rows; what is left over is a ratio of braces, identically
    // 1 when m = n.
    let leftover = if m == n {
        ONE
    } else {
        let b = |shift: usize, top: usize| -> C64 {
            (1..=top).map(|i| params.brace(alpha + shift as f64 - i as f64)).product()
        };
        b(n, m) * b(m, n) / (b(n, n) * b(m, m))
    };
    if !leftover.is_finite() {
        return None;
    }
    let mut tot = ZERO;
    for lam in Partition::all_in_box(m, n as u32) {
        let lt = lam.tilde_conjugate(m, n);
        let sx = det(schur_rows(&lam, x, alpha + n as f64, n, params));
        let sy = det(schur_rows(&lt, y, alpha + m as f64, m, params));
        tot += sx * sy;
    }
    Some(leftover * tot)
}

/// R_alpha^{(m,n)} as a sum over Lambda(m,n) of products of two determinants.
///
/// When a leftover {.} in the normalization vanishes (only possible for
/// m != n at special alpha) the value is the analytic limit in alpha, taken
/// by symmetric Richardson extrapolation.
pub fn r_poly_det(alpha: f64, m: usize, n: usize, x: &[C64], y: &[C64], params: &ContinuumParams) -> Result<C64> {
    check_lengths(m, n, x, y)?;
    let singular = |a: f64| {
        (1..=m.max(n)).any(|i| {
            params.brace(a + n as f64 - i as f64).norm() < 1e-9
                || params.brace(a + m as f64 - i as f64).norm() < 1e-9
        })
    };
    if m == n || !singular(alpha) {
        return r_poly_det_at(alpha, m, n, x, y, params)
            .ok_or_else(|| AbfError::Singular(format!("R^({m},{n}) at alpha = {alpha}")));
    }
    let sym = |h: f64| -> Result<C64> {
        let p = r_poly_det_at(alpha + h, m, n, x, y, params);
        let q = r_poly_det_at(alpha - h, m, n, x, y, params);
        match (p, q) {
            (Some(p), Some(q)) => Ok((p + q) / 2.0),
            _ => Err(AbfError::Singular(format!("R^({m},{n}) near alpha = {alpha}"))),
        }
    };
    richardson(sym, 1e-2)
}

/// Three-level Richardson table for an even function of h.
fn richardson(f: impl Fn(f64) -> Result<C64>, h: f64) -> Result<C64> {
    let a0 = f(h)?;
    let a1 = f(h / 2.0)?;
    let a2 = f(h / 4.0)?;
    let b0 = (4.0 * a1 - a0) / 3.0;
    let b1 = (4.0 * a2 - a1) / 3.0;
    Ok((16.0 * b1 - b0) / 15.0)
}

fn check_lengths<T>(m: usize, n: usize, x: &[T], y: &[T]) -> Result<()> {
    if x.len() != m || y.len() != n {
        return Err(domain(format!(
            "R^({m},{n}) needs {m} x-values and {n} y-values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(())
}

fn sign_vectors(len: usize) -> impl Iterator<Item = Vec<i32>> {
    (0..1u32 << len).map(move |bits| {
        (0..len)
            .map(|i| if bits >> i & 1 == 1 { -1 } else { 1 })
            .collect()
    })
}

/// The defining 2^{m+n}-term sum. Coincident x_i = x_j (or y_i = y_j) is a
/// pole error here; see `r_poly_direct` for the limit.
pub fn r_poly_direct_strict(alpha: f64, m: usize, n: usize, x: &[C64], y: &[C64], params: &ContinuumParams) -> Result<C64> {
    check_lengths(m, n, x, y)?;
    let om = |e: f64| C64::from_polar(1.0, PI * e / params.kf());
    let diff = |v: &[C64], what: &str| -> Result<()> {
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                if (v[i] - v[j]).norm() < POLE_TOL * (1.0 + v[i].norm()) {
                    return Err(pole(format!("{what}_{} = {what}_{} in R^({m},{n})", i + 1, j + 1)));
                }
            }
        }
        Ok(())
    };
    diff(x, "x")?;
    diff(y, "y")?;
    let wx = alpha - m as f64 + n as f64;
    let wy = alpha + m as f64 - n as f64;
    let vdm = |v: &[C64], s: &[i32]| {
        let mut t = ONE;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                if s[i] == s[j] {
                    t *= om(s[i] as f64);
                } else {
                    t *= (v[i] * om(s[i] as f64) - v[j] * om(s[j] as f64)) / (v[i] - v[j]);
                }
            }
        }
        t
    };
    let mut tot = ZERO;
    for mu in sign_vectors(m) {
        let mut tm = vdm(x, &mu);
        for &s in &mu {
            tm *= s as f64 * om(wx * s as f64);
        }
        for nu in sign_vectors(n) {
            let mut t = tm * vdm(y, &nu);
            for &s in &nu {
                t *= s as f64 * om(wy * s as f64);
            }
            for i in 0..m {
                for j in 0..n {
                    t *= x[i] * om(-mu[i] as f64) + y[j] * om(-nu[j] as f64);
                }
            }
            tot += t;
        }
    }
    Ok(tot)
}

/// Points closer than this are treated as coincident in `r_poly_direct`.
pub const COINCIDENCE_TOL: f64 = 1e-6;

fn spread(v: &[C64], h: f64) -> Vec<C64> {
    let scale = v.iter().map(|z| z.norm()).fold(1.0, f64::max);
    v.iter()
        .enumerate()
        .map(|(i, &z)| z + C64::new(0.7, 0.3) * (h * scale * (i + 1) as f64))
        .collect()
}

fn has_coincidence(v: &[C64]) -> bool {
    (0..v.len()).any(|i| (i + 1..v.len()).any(|j| (v[i] - v[j]).norm() < COINCIDENCE_TOL * (1.0 + v[i].norm())))
}

/// R_alpha^{(m,n)}(x; y). Removable singularities at coincident points are
/// resolved by moving the points apart along a line and extrapolating.
pub fn r_poly_direct(alpha: f64, m: usize, n: usize, x: &[C64], y: &[C64], params: &ContinuumParams) -> Result<C64> {
    check_lengths(m, n, x, y)?;
    let cx = has_coincidence(x);
    let cy = has_coincidence(y);
    if !cx && !cy {
        return r_poly_direct_strict(alpha, m, n, x, y, params);
    }
    let at = |h: f64| -> Result<C64> {
        let xs = |h| if cx { spread(x, h) } else { x.to_vec() };
        let ys = |h| if cy { spread(y, h) } else { y.to_vec() };
        let p = r_poly_direct_strict(alpha, m, n, &xs(h), &ys(h), params)?;
        let q = r_poly_direct_strict(alpha, m, n, &xs(-h), &ys(-h), params)?;
        Ok((p + q) / 2.0)
    };
    richardson(at, 1e-2)
}

/// Exact R_alpha^{(m,n)} for integer alpha and rational arguments.
pub fn r_poly_direct_exact(
    alpha: i64,
    m: usize,
    n: usize,
    x: &[BigRational],
    y: &[BigRational],
    field: &CycloField,
) -> Result<Cyclo> {
    check_lengths(m, n, x, y)?;
    for v in [x, y] {
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                if v[i] == v[j] {
                    return Err(pole(format!("coincident arguments {i},{j} in exact R^({m},{n})")));
                }
            }
        }
    }
    let f = field;
    let wx = alpha - m as i64 + n as i64;
    let wy = alpha + m as i64 - n as i64;
    let vdm = |v: &[BigRational], s: &[i32]| {
        let mut t = f.one();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let num = f.sub(
                    &f.scale(&f.omega_pow(s[i] as i64), &v[i]),
                    &f.scale(&f.omega_pow(s[j] as i64), &v[j]),
                );
                let inv = BigRational::one() / (&v[i] - &v[j]);
                t = f.mul(&t, &f.scale(&num, &inv));
            }
        }
        t
    };
    let sgn = |s: i32| {
        if s > 0 {
            BigRational::one()
        } else {
            -BigRational::one()
        }
    };
    let mut tot = f.zero();
    for mu in sign_vectors(m) {
        let mut tm = vdm(x, &mu);
        for &s in &mu {
            tm = f.scale(&f.mul(&tm, &f.omega_pow(wx * s as i64)), &sgn(s));
        }
        for nu in sign_vectors(n) {
            let mut t = f.mul(&tm, &vdm(y, &nu));
            for &s in &nu {
                t = f.scale(&f.mul(&t, &f.omega_pow(wy * s as i64)), &sgn(s));
            }
            for i in 0..m {
                for j in 0..n {
                    let fac = f.add(
                        &f.scale(&f.omega_pow(-mu[i] as i64), &x[i]),
                        &f.scale(&f.omega_pow(-nu[j] as i64), &y[j]),
                    );
                    t = f.mul(&t, &fac);
                }
            }
            tot = f.add(&tot, &t);
        }
    }
    Ok(tot)
}

fn exact_det(a: &[Vec<Cyclo>], f: &CycloField) -> Cyclo {
    let n = a.len();
    if n == 0 {
        return f.one();
    }
    // Laplace expansion along the first row; sizes here are tiny
    let mut tot = f.zero();
    for j in 0..n {
        let minor: Vec<Vec<Cyclo>> = a[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|&(c, _)| c != j)
                    .map(|(_, v)| v.clone())
                    .collect()
            })
            .collect();
        let t = f.mul(&a[0][j], &exact_det(&minor, f));
        tot = if j % 2 == 0 { f.add(&tot, &t) } else { f.sub(&tot, &t) };
    }
    tot
}

fn exact_sigma(values: &[BigRational]) -> Vec<BigRational> {
    let mut c = vec![BigRational::one()];
    for x in values {
        c.push(BigRational::from_integer(0.into()));
        for r in (1..c.len()).rev() {
            let t = &c[r - 1] * x;
            c[r] += t;
        }
    }
    c
}

fn exact_rows(lambda: &Partition, values: &[BigRational], alpha: i64, size: usize, f: &CycloField) -> Vec<Vec<Cyclo>> {
    let sig = exact_sigma(values);
    let lc = lambda.conjugate(size);
    (1..=size as i64)
        .map(|i| {
            let l = lc.parts[i as usize - 1] as i64;
            (1..=size as i64)
                .map(|j| {
                    let r = l - i + j;
                    if r >= 0 && (r as usize) < sig.len() {
                        f.scale(&f.brace(alpha - l + i - 2 * j), &sig[r as usize])
                    } else {
                        f.zero()
                    }
                })
                .collect()
        })
        .collect()
}

/// Exact determinant form of R_alpha^{(m,n)} for integer alpha and rational
/// arguments. Singular when a leftover brace of the normalization vanishes
/// (possible only for m != n).
pub fn r_poly_det_exact(
    alpha: i64,
    m: usize,
    n: usize,
    x: &[BigRational],
    y: &[BigRational],
    field: &CycloField,
) -> Result<Cyclo> {
    check_lengths(m, n, x, y)?;
    let f = field;
    let mut num = f.one();
    let mut den = f.one();
    for i in 1..=m as i64 {
        num = f.mul(&num, &f.brace(alpha + n as i64 - i));
    }
    for j in 1..=n as i64 {
        num = f.mul(&num, &f.brace(alpha + m as i64 - j));
    }
    for i in 1..=n as i64 {
        den = f.mul(&den, &f.brace(alpha + n as i64 - i));
    }
    for j in 1..=m as i64 {
        den = f.mul(&den, &f.brace(alpha + m as i64 - j));
    }
    // for m = n the two brace products are the same list and cancel
    // identically, even when they contain a zero
    let leftover = if m == n {
        f.one()
    } else {
        let inv = f.inv(&den).ok_or_else(|| {
            AbfError::Singular(format!("exact R^({m},{n}) at alpha = {alpha}"))
        })?;
        f.mul(&num, &inv)
    };
    let mut tot = f.zero();
    for lam in Partition::all_in_box(m, n as u32) {
        let lt = lam.tilde_conjugate(m, n);
        let sx = exact_det(&exact_rows(&lam, x, alpha + n as i64, n, f), f);
        let sy = exact_det(&exact_rows(&lt, y, alpha + m as i64, m, f), f);
        tot = f.add(&tot, &f.mul(&sx, &sy));
    }
    Ok(f.mul(&leftover, &tot))
}

// ---------------------------------------------------------------------------
// Zamolodchikov-Faddeev contractions and the form factors
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZfSpecies {
    /// particle 1
    One,
    /// its antiparticle 1-bar
    OneBar,
}

/// <Z_{s1,mu}(beta_1) Z_{s2,nu}(beta_2)> as a function of beta = beta_1 - beta_2.
pub fn zf_contraction(
    s1: ZfSpecies,
    mu: i32,
    s2: ZfSpecies,
    nu: i32,
    beta: C64,
    params: &ContinuumParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    for c in [mu, nu] {
        if c != 1 && c != -1 {
            return Err(domain(format!("component must be +-1, got {c}")));
        }
    }
    let k = params.kf();
    let norm = 2.0 * (PI / k).sin();
    // the 1bar rules are the 1 rules with flipped components
    let (mu, nu) = if s1 == ZfSpecies::OneBar { (-mu, -nu) } else { (mu, nu) };
    let h = beta / 2.0;
    if s1 == s2 {
        // F^min_11 / (sinh(h + i pi/k) sinh(h - i pi/k)) * sinh(h - i pi(mu-nu)/2k) / sinh(h),
        // with sinh(h) sinh(h + i pi/k) cancelled against the prefactor of F^min_11
        let den = (h - I * PI / k).sinh();
        if den.norm() < POLE_TOL {
            return Err(pole(format!("<Z Z> contraction at beta = {beta}")));
        }
        let comp = (h - I * PI * (mu - nu) as f64 / (2.0 * k)).sinh();
        Ok(fmin_11_core(beta, params, trunc)? * comp / (den * norm))
    } else {
        let den = h.cosh();
        if den.norm() < POLE_TOL {
            return Err(pole(format!("kinematic pole of <Z Zbar> at beta = {beta}")));
        }
        let comp = (h + I * PI * (mu + nu) as f64 / (2.0 * k)).cosh();
        Ok(fmin_1bar1(beta, params, trunc)? * comp / (den * norm))
    }
}

fn check_height(a: i64, params: &ContinuumParams) -> Result<()> {
    if a < 1 || a > params.k as i64 + 1 || a % 2 == 0 {
        return Err(domain(format!(
            "a must be odd with 1 <= a <= {}, got {a}",
            params.k + 1
        )));
    }
    Ok(())
}

/// <<B-bar_1(beta_1)...B-bar_1(beta_n) B_1(beta'_1)...B_1(beta'_n)>> by
/// expanding each operator into Z components and Wick-contracting.
pub fn continuum_ff_wick(
    a: i64,
    cfg: &ContinuumConfig,
    params: &ContinuumParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    check_height(a, params)?;
    let n = cfg.n();
    let k = params.kf();
    let ops: Vec<(ZfSpecies, C64)> = cfg
        .beta
        .iter()
        .map(|&b| (ZfSpecies::OneBar, b))
        .chain(cfg.beta_p.iter().map(|&b| (ZfSpecies::One, b)))
        .collect();
    let len = ops.len();
    let c1sq = 1.0 / (2.0 * (PI / k).sin());
    let idx = |c: i32| if c > 0 { 0 } else { 1 };
    // pair table [i][j][mu][nu] for i < j, already divided by C_1^2
    let mut table = vec![vec![[[ZERO; 2]; 2]; len]; len];
    for i in 0..len {
        for j in i + 1..len {
            for mu in [1, -1] {
                for nu in [1, -1] {
                    table[i][j][idx(mu)][idx(nu)] =
                        zf_contraction(ops[i].0, mu, ops[j].0, nu, ops[i].1 - ops[j].1, params, trunc)?
                            / c1sq;
                }
            }
        }
    }
    let phase = PI * a as f64 / (2.0 * k);
    let weight = |s: ZfSpecies, c: i32| match s {
        ZfSpecies::OneBar => c as f64 * C64::from_polar(1.0, c as f64 * phase),
        ZfSpecies::One => -(c as f64) * C64::from_polar(1.0, -(c as f64) * phase),
    };
    let mut tot = ZERO;
    for comps in sign_vectors(len) {
        let mut t = re(c1sq.powi(n as i32));
        for (op, &c) in ops.iter().zip(&comps) {
            t *= weight(op.0, c);
        }
        for i in 0..len {
            for j in i + 1..len {
                t *= table[i][j][idx(comps[i])][idx(comps[j])];
            }
        }
        tot += t;
    }
    Ok(tot)
}

/// The same form factor in closed form: F^min products times
/// C_1^{2n} 2^{2n(n-1)} sigma_n^{n-1} tau_n^{n-1} R_{(a+1)/2}^{(n,n)}(x; y).
///
/// For n = 1 the factor R^{(1,1)} = {alpha}{alpha-1}(x + y) is cancelled
/// against 1/(x + y) analytically, so the kinematic point is finite.
pub fn continuum_ff_closed(
    a: i64,
    cfg: &ContinuumConfig,
    params: &ContinuumParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    check_height(a, params)?;
    let n = cfg.n();
    let k = params.kf();
    let alpha = alpha_of(a);
    let c1sq = 1.0 / (2.0 * (PI / k).sin());
    if n == 0 {
        return Ok(ONE);
    }
    if n == 1 {
        let f = fmin_1bar1(cfg.beta[0] - cfg.beta_p[0], params, trunc)?;
        return Ok(c1sq * params.brace(alpha) * params.brace(alpha - 1.0) * f);
    }
    let x = cfg.x();
    let y = cfg.y();
    let om2 = params.omega().powi(2);
    let mut t = ONE;
    for (v, b) in [(&x, &cfg.beta), (&y, &cfg.beta_p)] {
        for i in 0..n {
            for j in i + 1..n {
                let den = (v[i] - om2 * v[j]) * (v[i] - v[j] / om2);
                if den.norm() < POLE_TOL * (1.0 + v[i].norm_sqr()) {
                    return Err(pole(format!("bound-state denominator at pair ({},{})", i + 1, j + 1)));
                }
                t *= fmin_11(b[i] - b[j], params, trunc)? / den;
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let den = x[i] + y[j];
            if den.norm() < POLE_TOL * (1.0 + x[i].norm()) {
                return Err(pole(format!(
                    "kinematic pole beta_{} = beta'_{} + i pi",
                    i + 1,
                    j + 1
                )));
            }
            t *= fmin_1bar1(cfg.beta[i] - cfg.beta_p[j], params, trunc)? / den;
        }
    }
    let sig = elementary_symmetric(&x);
    let tau = elementary_symmetric(&y);
    let r = r_poly_direct(alpha, n, n, &x, &y, params)?;
    let e = (n - 1) as i32;
    Ok(t * c1sq.powi(n as i32) * 4f64.powi(n as i32 * e) * sig[n].powi(e) * tau[n].powi(e) * r)
}

/// The two-particle form factor -2 sin(pi(a-1)/2k) sin(pi(a+1)/2k)/sin(pi/k) F^min_{1 1bar}.
pub fn two_particle_ff(a: i64, beta: C64, params: &ContinuumParams, trunc: &TruncationPolicy) -> Result<C64> {
    check_height(a, params)?;
    let k = params.kf();
    let af = a as f64;
    let pre = -2.0 * (PI * (af - 1.0) / (2.0 * k)).sin() * (PI * (af + 1.0) / (2.0 * k)).sin()
        / (PI / k).sin();
    Ok(pre * fmin_1bar1(beta, params, trunc)?)
}

// ---------------------------------------------------------------------------
// Lattice to continuum
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub x: f64,
    pub lattice: C64,
    pub continuum: C64,
    pub rel_err: f64,
}

impl ScalingRow {
    /// lattice / continuum; tends to (-1)^{n-1} for 2n insertions, the sign
    /// coming from the relative ordering conventions of the two sides.
    pub fn ratio(&self) -> C64 {
        self.lattice / self.continuum
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    /// Whether the relative error strictly decreases along the sequence.
    pub fn monotone(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].rel_err < w[0].rel_err)
    }
}

fn check_sequence(xs: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("x-sequence must be nonempty and increasing"));
    }
    Ok(())
}

/// Compares p^{-2(k+2)Delta/k} Q-hat_a on the lattice with the closed-form
/// continuum form factor along an increasing sequence of x.
pub fn scaling_compare(
    a: i64,
    k: u32,
    cfg: &ContinuumConfig,
    xs: &[f64],
    trunc: &TruncationPolicy,
) -> Result<ScalingTable> {
    check_sequence(xs)?;
    let cp = ContinuumParams::new(k)?;
    if k < 3 {
        return Err(AbfError::Level {
            k,
            reason: "the scaling comparison needs k >= 3",
        });
    }
    let continuum = continuum_ff_closed(a, cfg, &cp, trunc)?;
    let kf = k as f64;
    let delta = ((a * a - 1) as f64) / (4.0 * (kf + 2.0));
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let params = ModelParams::new(k, x)?;
        let map = |b: &C64| rapidity_to_spectral(*b, &params);
        let mut v: Vec<C64> = cfg.beta.iter().map(map).collect();
        let mut vp: Vec<C64> = cfg.beta_p.iter().map(map).collect();
        // Q-hat is translation invariant; anchor at v'_1 = 0 to keep the
        // spectral parameters small
        if let Some(&shift) = vp.first() {
            v.iter_mut().for_each(|z| *z -= shift);
            vp.iter_mut().for_each(|z| *z -= shift);
        }
        let q = hat_q(a, &v, &vp, HatRoute::Modular, &params, trunc)?;
        let lattice = q * params.p().powf(-2.0 * (kf + 2.0) * delta / kf);
        let rel_err = (lattice - continuum).norm() / continuum.norm();
        rows.push(ScalingRow {
            x,
            lattice,
            continuum,
            rel_err,
        });
    }
    Ok(ScalingTable { rows })
}

/// Which lattice ratio of F is compared with which minimal form factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FRatioChannel {
    /// F(0)/F((k/2 pi i)(beta - i pi)) against F^min_{1 1bar}(beta)
    ParticleAntiparticle,
    /// F((k/2 pi i) beta)/F(0) against F^min_11/(sinh(beta/2) sinh(beta/2 + i pi/k))
    ParticleParticle,
}

/// Lattice F ratios against their continuum limits along an x-sequence.
pub fn f_ratio_compare(
    channel: FRatioChannel,
    k: u32,
    beta: C64,
    xs: &[f64],
    trunc: &TruncationPolicy,
) -> Result<ScalingTable> {
    check_sequence(xs)?;
    let cp = ContinuumParams::new(k)?;
    let kf = k as f64;
    let continuum = match channel {
        FRatioChannel::ParticleAntiparticle => fmin_1bar1(beta, &cp, trunc)?,
        FRatioChannel::ParticleParticle => fmin_11_core(beta, &cp, trunc)?,
    };
    let to_v = |b: C64| b * kf / (2.0 * PI * I);
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let params = ModelParams::new(k, x)?;
        let f0 = f_pair(ZERO, &params, trunc)?;
        let lattice = match channel {
            FRatioChannel::ParticleAntiparticle => f0 / f_pair(to_v(beta - I * PI), &params, trunc)?,
            FRatioChannel::ParticleParticle => f_pair(to_v(beta), &params, trunc)? / f0,
        };
        rows.push(ScalingRow {
            x,
            lattice,
            continuum,
            rel_err: (lattice - continuum).norm() / continuum.norm(),
        });
    }
    Ok(ScalingTable { rows })
}
