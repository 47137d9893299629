//! Lattice form factors: traces of products of type II vertex operators.
//!
//! A trace with n insertions of Psi_+ and n of Psi_- is a sum over 4^n
//! component assignments (mu_i, nu_i = +-1). The zero-mode sum Gamma only
//! depends on the aggregates mu = sum mu_i and nu = sum nu_i, so the
//! assignments are first collapsed into one coefficient per (mu, nu).

use crate::error::{domain, Result};
use crate::lhp::{gamma_sector, partition_closed_form, GammaArgs, SectorLabel};
use crate::qspecial::{
    bracket, bracket_star, bracket_star_denominator, constants, dedekind_eta, f_pair,
    f_pair_recip, theta1, ModelParams, TruncationPolicy, I,
};
use num_complex::Complex64 as C64;
use std::collections::BTreeMap;
use std::f64::consts::PI;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Largest n for which the 4^n assignment sum is enumerated.
pub const MAX_PAIRS: usize = 8;

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

// ---------------------------------------------------------------------------
// Oscillator contractions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Species {
    Plus,
    Minus,
}

impl Species {
    pub fn sign(self) -> i32 {
        match self {
            Species::Plus => 1,
            Species::Minus => -1,
        }
    }
}

/// One component Psi_{species, eps}(v) of a type II vertex operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Insertion {
    pub species: Species,
    pub eps: i32,
    pub v: C64,
}

impl Insertion {
    pub fn new(species: Species, eps: i32, v: C64) -> Self {
        Insertion { species, eps, v }
    }
}

/// Whether a contraction outside its convergence window is an error or is
/// silently replaced by its meromorphic continuation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Continuation {
    #[default]
    Enforce,
    Allow,
}

/// Open interval for Re(v2 - v1) on which the oscillator trace of the ordered
/// pair converges: x^{e2-e1} < |z1/z2| < x^{e2-e1-2k} with z = x^{2v}.
pub fn convergence_window(first: &Insertion, second: &Insertion, params: &ModelParams) -> (f64, f64) {
    let lo = (first.eps - second.eps) as f64 / 2.0;
    (lo, lo + params.kf())
}

pub fn in_convergence_window(first: &Insertion, second: &Insertion, params: &ModelParams) -> bool {
    let (lo, hi) = convergence_window(first, second, params);
    let d = (second.v - first.v).re;
    lo < d && d < hi
}

fn check_eps(e: i32) -> Result<()> {
    if e == 1 || e == -1 {
        Ok(())
    } else {
        Err(domain(format!("component label must be +-1, got {e}")))
    }
}

/// <<Psi_{+,e1}(v1) Psi_{+,e2}(v2)>> with v = v2 - v1.
fn contr_same(e1: i32, e2: i32, v: C64, c: f64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    let k = params.kf();
    let d = (e1 - e2) as f64 / 2.0;
    let den = bracket_star_denominator(v - 1.0, params, trunc, || format!("[v-1]*, v = {v}"))?;
    let num = bracket_star(v + d, params, trunc);
    let w = -2.0 / k * (1.0 + d) * v + re((1 + e1 * e2) as f64 / (2.0 * k) + 1.0 + d);
    Ok(c * c * f_pair(v, params, trunc)? * num / den * params.xpow(w))
}

/// <<Psi_{+,e1}(v1) Psi_{-,e2}(v2)>> with v = v2 - v1.
fn contr_mixed(e1: i32, e2: i32, v: C64, c: f64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    let k = params.kf();
    let s = (e1 + e2) as f64;
    let w = v - k / 2.0;
    let den = bracket_star_denominator(w, params, trunc, || format!("[v-k/2]*, v = {v}"))?;
    let num = bracket_star(w - s / 2.0, params, trunc);
    let e = s / k * v - re((1.0 + k) / (2.0 * k) * (1 + e1 * e2) as f64 + s / 2.0);
    Ok(c * c * f_pair_recip(w, params, trunc)? * num / den * params.xpow(e))
}

fn contraction_with(
    first: &Insertion,
    second: &Insertion,
    c: f64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
    cont: Continuation,
) -> Result<C64> {
    check_eps(first.eps)?;
    check_eps(second.eps)?;
    if cont == Continuation::Enforce && !in_convergence_window(first, second, params) {
        let (lo, hi) = convergence_window(first, second, params);
        return Err(domain(format!(
            "Re(v2 - v1) = {} outside the convergence window ({lo}, {hi}); \
             use Continuation::Allow for the continued value",
            (second.v - first.v).re
        )));
    }
    let v = second.v - first.v;
    let (e1, e2) = (first.eps, second.eps);
    match (first.species, second.species) {
        (Species::Plus, Species::Plus) => contr_same(e1, e2, v, c, params, trunc),
        (Species::Minus, Species::Minus) => contr_same(-e1, -e2, v, c, params, trunc),
        (Species::Plus, Species::Minus) => contr_mixed(e1, e2, v, c, params, trunc),
        (Species::Minus, Species::Plus) => contr_mixed(-e1, -e2, v, c, params, trunc),
    }
}

/// Normalized oscillator trace of an ordered pair of components.
pub fn pair_contraction(
    first: &Insertion,
    second: &Insertion,
    params: &ModelParams,
    trunc: &TruncationPolicy,
    cont: Continuation,
) -> Result<C64> {
    params.require_trace_level()?;
    let c = constants(params, trunc).c;
    contraction_with(first, second, c, params, trunc, cont)
}

/// Oscillator trace of N components, C^N prod_{i<j} C^{-2} <<pair>>.
pub fn wick_product(
    ins: &[Insertion],
    params: &ModelParams,
    trunc: &TruncationPolicy,
    cont: Continuation,
) -> Result<C64> {
    params.require_trace_level()?;
    let charge: i32 = ins.iter().map(|p| p.species.sign()).sum();
    if charge != 0 {
        return Err(domain(format!(
            "Wick rule needs as many Psi_+ as Psi_-, net charge is {charge}"
        )));
    }
    let c = constants(params, trunc).c;
    let mut acc = re(c.powi(ins.len() as i32));
    for i in 0..ins.len() {
        for j in i + 1..ins.len() {
            acc *= contraction_with(&ins[i], &ins[j], c, params, trunc, cont)? / (c * c);
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Traces
// ---------------------------------------------------------------------------

/// Central height a, boundary label m and the 2n insertion points.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRequest {
    pub a: i64,
    pub m: i64,
    pub v: Vec<C64>,
    pub vp: Vec<C64>,
}

impl TraceRequest {
    pub fn new(a: i64, m: i64, v: Vec<C64>, vp: Vec<C64>) -> Result<Self> {
        check_lists(&v, &vp)?;
        Ok(TraceRequest { a, m, v, vp })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// sum_i (v'_i - v_i)
    pub fn v_total(&self) -> C64 {
        self.vp.iter().sum::<C64>() - self.v.iter().sum::<C64>()
    }
}

fn check_lists(v: &[C64], vp: &[C64]) -> Result<()> {
    if v.len() != vp.len() {
        return Err(domain(format!(
            "need equal numbers of Psi_+ and Psi_- insertions, got {} and {}",
            v.len(),
            vp.len()
        )));
    }
    if v.len() > MAX_PAIRS {
        return Err(domain(format!(
            "n = {} exceeds the enumeration limit {MAX_PAIRS}",
            v.len()
        )));
    }
    Ok(())
}

/// Component signs mu_i, nu_i of one term of the assignment sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentAssignment {
    pub mu: Vec<i32>,
    pub nu: Vec<i32>,
}

impl ComponentAssignment {
    pub fn mu_total(&self) -> i32 {
        self.mu.iter().sum()
    }
    pub fn nu_total(&self) -> i32 {
        self.nu.iter().sum()
    }

    /// All 4^n assignments, mu-major.
    pub fn all(n: usize) -> impl Iterator<Item = ComponentAssignment> {
        (0..1usize << n).flat_map(move |mm| {
            (0..1usize << n).map(move |nm| ComponentAssignment {
                mu: signs(mm, n),
                nu: signs(nm, n),
            })
        })
    }
}

fn signs(mask: usize, n: usize) -> Vec<i32> {
    (0..n).map(|i| if mask >> i & 1 == 1 { -1 } else { 1 }).collect()
}

/// Index of the shifts -1, 0, 1 in three-entry tables.
fn slot(d: i32) -> usize {
    (d + 1) as usize
}

/// prod_i s_i prod_{i<j} t_{ij}[(s_i - s_j)/2] for an n x n table of shifted brackets.
fn sign_block(s: &[i32], t: &[[C64; 3]]) -> C64 {
    let n = s.len();
    let mut acc = re(s.iter().product::<i32>() as f64);
    for i in 0..n {
        for j in i + 1..n {
            acc *= t[i * n + j][slot((s[i] - s[j]) / 2)];
        }
    }
    acc
}

/// Contribution of one (mu, nu) aggregate to a trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateTerm {
    pub mu: i32,
    pub nu: i32,
    /// Summed bracket numerators times prod mu_i nu_i.
    pub f: C64,
    /// x^{(mu+nu)v/k + (mu^2+nu^2)/4k - (k+1) mu nu / 2k}
    pub x_weight: C64,
    pub gamma: C64,
    /// The full contribution to Q_a(m).
    pub value: C64,
}

/// Everything in Q_a(m) that does not depend on (a, m): the collapsed
/// assignment sum and the common prefactor.
#[derive(Debug, Clone)]
pub struct TraceKernel {
    params: ModelParams,
    trunc: TruncationPolicy,
    n: usize,
    v_total: C64,
    /// f_{mu,nu} keyed by (mu, nu).
    coeffs: BTreeMap<(i32, i32), C64>,
    /// Q_a(m) = [a] * prefactor * sum f X Gamma.
    prefactor: C64,
}

impl TraceKernel {
    pub fn new(v: &[C64], vp: &[C64], params: &ModelParams, trunc: &TruncationPolicy) -> Result<Self> {
        params.require_trace_level()?;
        check_lists(v, vp)?;
        let n = v.len();
        let k = params.kf();
        let bs = |u: C64| bracket_star(u, params, trunc);
        let f0 = f_pair(ZERO, params, trunc)?;

        // mu-independent blocks
        let mut common = ONE;
        for i in 0..n {
            for j in i + 1..n {
                for (w, tag) in [(v[j] - v[i], "v"), (vp[j] - vp[i], "v'")] {
                    let den = bracket_star_denominator(w - 1.0, params, trunc, || {
                        format!("[{tag}_j - {tag}_i - 1]*, difference {w}")
                    })?;
                    common *= f_pair(w, params, trunc)? / (f0 * den);
                }
            }
            for j in 0..n {
                let w = vp[j] - v[i] - k / 2.0;
                let den = bracket_star_denominator(w, params, trunc, || {
                    format!("[v'_j - v_i - k/2]*, argument {w}")
                })?;
                common *= f0 * f_pair_recip(w, params, trunc)? / den;
            }
        }

        // numerator brackets, tabulated by their half-integer shift
        let mut tv = vec![[ZERO; 3]; n * n];
        let mut tvp = vec![[ZERO; 3]; n * n];
        let mut tx = vec![[ZERO; 3]; n * n];
        for i in 0..n {
            for j in 0..n {
                for d in -1..=1 {
                    let df = d as f64;
                    if i < j {
                        tv[i * n + j][slot(d)] = bs(v[j] - v[i] + df);
                        tvp[i * n + j][slot(d)] = bs(vp[j] - vp[i] - df);
                    }
                    tx[i * n + j][slot(d)] = bs(vp[j] - v[i] - k / 2.0 - df);
                }
            }
        }
        let masks = 1usize << n;
        let blocks = |t: &[[C64; 3]]| -> Vec<(Vec<i32>, C64)> {
            (0..masks)
                .map(|mask| {
                    let s = signs(mask, n);
                    let b = sign_block(&s, t);
                    (s, b)
                })
                .collect()
        };
        let mu_blocks = blocks(&tv);
        let nu_blocks = blocks(&tvp);

        let mut coeffs: BTreeMap<(i32, i32), C64> = BTreeMap::new();
        for (mus, bm) in &mu_blocks {
            for (nus, bn) in &nu_blocks {
                let mut t = bm * bn;
                for i in 0..n {
                    for j in 0..n {
                        t *= tx[i * n + j][slot((mus[i] + nus[j]) / 2)];
                    }
                }
                let key = (mus.iter().sum(), nus.iter().sum());
                *coeffs.entry(key).or_insert(ZERO) += t;
            }
        }

        let v_total: C64 = vp.iter().sum::<C64>() - v.iter().sum::<C64>();
        let nf = n as f64;
        let tau = params.tau();
        let eta = dedekind_eta(tau, trunc)?;
        let b1 = bracket_star_denominator(ONE, params, trunc, || "[1]*".into())?;
        let z = partition_closed_form(params, trunc);
        let c = params.central_charge();
        let xw = -2.0 * nf / k * v_total + re(nf * nf / 2.0 - k * nf / 4.0 + k * c / 12.0);
        let prefactor = (-I * tau * eta.powi(3) / b1).powi(n as i32) / z * params.xpow(xw) * common;

        Ok(TraceKernel {
            params: *params,
            trunc: *trunc,
            n,
            v_total,
            coeffs,
            prefactor,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn v_total(&self) -> C64 {
        self.v_total
    }

    /// Collapsed coefficients f_{mu,nu}, without the x-power weight.
    pub fn coefficients(&self) -> impl Iterator<Item = (i32, i32, C64)> + '_ {
        self.coeffs.iter().map(|(&(mu, nu), &f)| (mu, nu, f))
    }

    /// Common factor such that Q_a(m) = [a] * prefactor * sum f X Gamma.
    pub fn prefactor(&self) -> C64 {
        self.prefactor
    }

    fn x_weight(&self, mu: i32, nu: i32) -> C64 {
        let k = self.params.kf();
        let (mu, nu) = (mu as f64, nu as f64);
        let w = (mu + nu) / k * self.v_total
            + re((mu * mu + nu * nu) / (4.0 * k) - (k + 1.0) / (2.0 * k) * mu * nu);
        self.params.xpow(w)
    }

    /// Arguments (y1, y2) of Gamma for the aggregate (mu, nu), at the model tau.
    fn gamma_y(&self, mu: i32, nu: i32) -> (C64, C64) {
        let k = self.params.kf();
        let tau = self.params.tau();
        let y1 = tau / (2.0 * k) * (mu - nu) as f64;
        let y2 = tau / k * (2.0 * self.v_total / k - (mu + nu) as f64 / 2.0);
        (y1, y2)
    }

    fn check_height(&self, a: i64) -> Result<()> {
        if a < 1 || a > self.params.k() as i64 + 1 {
            return Err(domain(format!(
                "central height {a} outside 1..={}",
                self.params.k() + 1
            )));
        }
        Ok(())
    }

    /// sum_{mu,nu} f X Gamma^{(h,h')}_{m,l}(y1, y2 | tau)
    pub fn assembled_sum(&self, m: i64, l: i64, h: f64, hp: f64) -> Result<C64> {
        let mut acc = ZERO;
        for (&(mu, nu), &f) in &self.coeffs {
            let (y1, y2) = self.gamma_y(mu, nu);
            let args = GammaArgs::new(y1, y2, self.params.tau()).with_regions(h, hp);
            let g = gamma_sector(&args, SectorLabel::new(m, l), &self.params, &self.trunc)?;
            acc += f * self.x_weight(mu, nu) * g;
        }
        Ok(acc)
    }

    /// Q_a(m), with the zero-mode sum taken over the (h, h') regions.
    pub fn q_regions(&self, a: i64, m: i64, h: f64, hp: f64) -> Result<C64> {
        self.check_height(a)?;
        if (a - m).rem_euclid(2) == 0 {
            return Ok(ZERO);
        }
        let br = bracket(re(a as f64), &self.params, &self.trunc);
        Ok(br * self.prefactor * self.assembled_sum(m, a - 1, h, hp)?)
    }

    /// Q_a(m), with m first brought into (-k/2, k/2] by Q_a(m + 2k) = Q_a(m)
    /// and Q_a(m) = Q_{k+2-a}(m + k). Far from m = 0 the zero-mode sum cancels
    /// terms of size x^{-m^2/2}.
    pub fn q(&self, a: i64, m: i64) -> Result<C64> {
        self.check_height(a)?;
        let k = self.params.k() as i64;
        let mut m = m.rem_euclid(2 * k);
        let mut a = a;
        if 2 * m > 3 * k {
            m -= 2 * k;
        } else if 2 * m > k {
            m -= k;
            a = k + 2 - a;
        }
        self.q_regions(a, m, 0.0, 0.0)
    }

    /// Q_a(m) summed directly at the given label, without the reduction in [`q`](Self::q).
    pub fn q_unreduced(&self, a: i64, m: i64) -> Result<C64> {
        self.q_regions(a, m, 0.0, 0.0)
    }

    /// Per-(mu, nu) breakdown of Q_a(m).
    pub fn contributions(&self, a: i64, m: i64) -> Result<Vec<AggregateTerm>> {
        self.check_height(a)?;
        let br = bracket(re(a as f64), &self.params, &self.trunc);
        let mut out = Vec::with_capacity(self.coeffs.len());
        for (&(mu, nu), &f) in &self.coeffs {
            let (y1, y2) = self.gamma_y(mu, nu);
            let args = GammaArgs::new(y1, y2, self.params.tau());
            let gamma = gamma_sector(&args, SectorLabel::new(m, a - 1), &self.params, &self.trunc)?;
            let x_weight = self.x_weight(mu, nu);
            out.push(AggregateTerm {
                mu,
                nu,
                f,
                x_weight,
                gamma,
                value: br * self.prefactor * f * x_weight * gamma,
            });
        }
        Ok(out)
    }
}

/// Q_a^{(n,n)}(m). Exactly zero when a = m mod 2.
pub fn q_trace(req: &TraceRequest, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    TraceKernel::new(&req.v, &req.vp, params, trunc)?.q(req.a, req.m)
}

/// Commutation factor G between the type I pair at u and the type II insertions.
pub fn g_shift(
    u: C64,
    v: &[C64],
    vp: &[C64],
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    let k = params.kf();
    let mut acc = ONE;
    for &vj in v {
        let num = bracket_star(u - vj + 0.5 + k / 2.0, params, trunc);
        let den = bracket_star_denominator(u - vj - 0.5 + k / 2.0, params, trunc, || {
            format!("[u - v_j - 1/2 + k/2]*, v_j = {vj}")
        })?;
        acc *= num / den;
    }
    for &wj in vp {
        let num = bracket_star(u - wj - 0.5, params, trunc);
        let den = bracket_star_denominator(u - wj + 0.5, params, trunc, || {
            format!("[u - v'_j + 1/2]*, v'_j = {wj}")
        })?;
        acc *= num / den;
    }
    Ok(acc)
}

/// Q_{b,a}(m) for neighbouring heights, from one-height traces and G.
pub fn q_neighbor(
    b: i64,
    a: i64,
    m: i64,
    u: C64,
    v: &[C64],
    vp: &[C64],
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    let kernel = TraceKernel::new(v, vp, params, trunc)?;
    let g = g_shift(u, v, vp, params, trunc)?;
    q_neighbor_with(&kernel, g, b, a, m)
}

pub(crate) fn q_neighbor_with(kernel: &TraceKernel, g: C64, b: i64, a: i64, m: i64) -> Result<C64> {
    if (b - a).abs() != 1 {
        return Err(domain(format!("Q_{{{b},{a}}} needs |b - a| = 1")));
    }
    kernel.check_height(a)?;
    kernel.check_height(b)?;
    let upper = if b == a + 1 { a } else { a - 1 };
    let (mut same, mut other) = (ZERO, ZERO);
    for s in 1..=upper {
        if (s - a).rem_euclid(2) == 0 {
            same += kernel.q(s, m)?;
        } else {
            other += kernel.q(s, m + 1)?;
        }
    }
    other *= g;
    Ok(if b == a + 1 { same - other } else { other - same })
}

// ---------------------------------------------------------------------------
// The f^{(n)} identity
// ---------------------------------------------------------------------------

/// f^{(n)}_{mu,nu}(u; v); zero when (mu, nu) is not reachable by n signs.
pub fn f_poly(
    mu: i32,
    nu: i32,
    u: &[C64],
    v: &[C64],
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    check_lists(u, v)?;
    let n = u.len();
    let reachable = |s: i32| s.abs() <= n as i32 && (s + n as i32) % 2 == 0;
    if !reachable(mu) || !reachable(nu) {
        return Ok(ZERO);
    }
    let bs = |w: C64| bracket_star(w, params, trunc);
    let mut dens = ONE;
    for i in 0..n {
        for j in i + 1..n {
            for (w, tag) in [(u[i] - u[j], "u"), (v[i] - v[j], "v")] {
                dens *= bracket_star_denominator(w, params, trunc, || {
                    format!("[{tag}_i - {tag}_j]*, difference {w}")
                })?;
            }
        }
    }
    let masks = 1usize << n;
    let mut terms = Vec::new();
    for mm in 0..masks {
        let mus = signs(mm, n);
        if mus.iter().sum::<i32>() != mu {
            continue;
        }
        for nm in 0..masks {
            let nus = signs(nm, n);
            if nus.iter().sum::<i32>() != nu {
                continue;
            }
            let mut t = re((mus.iter().product::<i32>() * nus.iter().product::<i32>()) as f64);
            for i in 0..n {
                for j in 0..n {
                    t *= bs(u[i] + v[j] + (mus[i] + nus[j]) as f64 / 2.0);
                }
                for j in i + 1..n {
                    t *= bs(u[i] - u[j] - (mus[i] - mus[j]) as f64 / 2.0);
                    t *= bs(v[i] - v[j] - (nus[i] - nus[j]) as f64 / 2.0);
                }
            }
            terms.push(t);
        }
    }
    Ok(crate::qspecial::pairwise_sum(&terms) / dens)
}

/// g^{(n)}_{mu,nu} = f_{mu,nu} - f_{nu,mu}; identically zero.
pub fn g_poly(
    mu: i32,
    nu: i32,
    u: &[C64],
    v: &[C64],
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    Ok(f_poly(mu, nu, u, v, params, trunc)? - f_poly(nu, mu, u, v, params, trunc)?)
}

/// Relative residuals of the four functional properties used to prove g = 0.
///
/// Each property is checked on f_{mu,nu}, on f_{nu,mu} and on their
/// difference g, all scaled by the size of the f values involved.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GPropertyResiduals {
    pub swap_blocks: f64,
    pub period_k: f64,
    pub period_tau: f64,
    pub recursion: f64,
    /// |g| itself, relative to |f|.
    pub symmetry: f64,
}

impl GPropertyResiduals {
    pub fn max(&self) -> f64 {
        [self.swap_blocks, self.period_k, self.period_tau, self.recursion, self.symmetry]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Evaluates the g^{(n)} property suite at (u, v); `w` is the free point used
/// in the specialization v_n = -u_n.
pub fn g_property_residuals(
    mu: i32,
    nu: i32,
    u: &[C64],
    v: &[C64],
    w: C64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<GPropertyResiduals> {
    check_lists(u, v)?;
    let n = u.len();
    if n == 0 {
        return Err(domain("the g^{(n)} properties need n >= 1"));
    }
    let k = params.kf();
    let tau = params.tau();
    let f = |a: i32, b: i32, u: &[C64], v: &[C64]| f_poly(a, b, u, v, params, trunc);
    let rel = |d: C64, s: f64| if s > 0.0 { d.norm() / s } else { d.norm() };

    let fmn = f(mu, nu, u, v)?;
    let fnm = f(nu, mu, u, v)?;
    let scale = fmn.norm().max(fnm.norm());
    let mut out = GPropertyResiduals {
        symmetry: rel(fmn - fnm, scale),
        ..Default::default()
    };

    // swapping the u and v blocks exchanges mu and nu
    let s1 = f(mu, nu, v, u)?;
    let s2 = f(nu, mu, v, u)?;
    out.swap_blocks = [rel(s1 - fnm, scale), rel(s2 - fmn, scale), rel((s1 - s2) + (fmn - fnm), scale)]
        .into_iter()
        .fold(0.0, f64::max);

    let sign_n = if n % 2 == 0 { 1.0 } else { -1.0 };
    let mut uk = u.to_vec();
    uk[0] += k;
    let (a1, a2) = (f(mu, nu, &uk, v)?, f(nu, mu, &uk, v)?);
    out.period_k = [
        rel(a1 - sign_n * fmn, scale),
        rel(a2 - sign_n * fnm, scale),
        rel((a1 - a2) - sign_n * (fmn - fnm), scale),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let mut ut = u.to_vec();
    ut[0] += k / tau;
    let vsum: C64 = v.iter().sum();
    let factor = (-(I * PI / tau).exp()).powi(n as i32)
        * (2.0 * PI * I / k * (n as f64 * u[0] + vsum + (mu + nu) as f64 / 2.0)).exp();
    let (b1, b2) = (f(mu, nu, &ut, v)?, f(nu, mu, &ut, v)?);
    let tscale = scale * factor.norm();
    out.period_tau = [
        rel(b1 - factor * fmn, tscale),
        rel(b2 - factor * fnm, tscale),
        rel((b1 - b2) - factor * (fmn - fnm), tscale),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    // specialization u_n = w, v_n = -w
    let mut us = u.to_vec();
    let mut vs = v.to_vec();
    us[n - 1] = w;
    vs[n - 1] = -w;
    let rec = |a: i32, b: i32| -> Result<(C64, C64, f64)> {
        let lhs = f(a, b, &us, &vs)?;
        let mut rhs = ZERO;
        let mut mag = lhs.norm();
        for mn in [1i32, -1] {
            let mnf = mn as f64;
            let mut t = bracket_star(re(mnf), params, trunc);
            for i in 0..n - 1 {
                t *= bracket_star(u[i] - w + mnf, params, trunc) * bracket_star(v[i] + w + mnf, params, trunc);
            }
            let term = t * f(a - mn, b - mn, &u[..n - 1], &v[..n - 1])?;
            mag = mag.max(term.norm());
            rhs += term;
        }
        Ok((lhs, rhs, mag))
    };
    let (l1, r1, m1) = rec(mu, nu)?;
    let (l2, r2, m2) = rec(nu, mu)?;
    let rscale = m1.max(m2);
    out.recursion = [rel(l1 - r1, rscale), rel(l2 - r2, rscale), rel((l1 - l2) - (r1 - r2), rscale)]
        .into_iter()
        .fold(0.0, f64::max);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Translation eigen-combination and the modular transform
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HatRoute {
    /// Sum the 2k(k+1) lattice traces as they stand.
    Direct,
    /// Transform every zero-mode sum to -1/tau first. The a' and m sums are
    /// then done exactly, which avoids the cancellation of the direct route
    /// as x -> 1.
    #[default]
    Modular,
}

fn sin_ratio(a: i64, ap: i64, r: f64) -> f64 {
    (PI * (a * ap) as f64 / r).sin() / (PI * ap as f64 / r).sin()
}

/// Q-hat_a^{(n,n)}, the translation-invariant combination of the traces.
pub fn hat_q(
    a: i64,
    v: &[C64],
    vp: &[C64],
    route: HatRoute,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    let kernel = TraceKernel::new(v, vp, params, trunc)?;
    hat_q_with(&kernel, a, route)
}

pub(crate) fn hat_q_with(kernel: &TraceKernel, a: i64, route: HatRoute) -> Result<C64> {
    kernel.check_height(a)?;
    // a' and k+2-a' enter with opposite weights and equal m-sums
    if a % 2 == 0 {
        return Ok(ZERO);
    }
    match route {
        HatRoute::Direct => hat_q_direct(kernel, a),
        HatRoute::Modular => hat_q_modular(kernel, a),
    }
}

fn hat_q_direct(kernel: &TraceKernel, a: i64) -> Result<C64> {
    let k = kernel.params.k() as i64;
    let r = kernel.params.r();
    let mut acc = ZERO;
    for ap in 1..=k + 1 {
        let w = sin_ratio(a, ap, r);
        for m in -k..k {
            acc += w * kernel.q(ap, m)?;
        }
    }
    Ok(-acc / (2 * k) as f64)
}

/// sum_{a'=0}^{r-1} cos(pi M a'/r)
fn cos_sum(m: i64, r: i64) -> i64 {
    if m.rem_euclid(2 * r) == 0 {
        r
    } else if m.rem_euclid(2) == 0 {
        0
    } else {
        1
    }
}

/// 4 * sum_{a'=1}^{k+1} sin(pi a a'/r)/sin(pi a'/r) sin(pi p a'/r) sin(pi q a'/r),
/// an integer.
fn sine_triple(a: i64, p: i64, q: i64, r: i64) -> i64 {
    (0..a)
        .map(|j| {
            let aj = a - 1 - 2 * j;
            cos_sum(aj - p + q, r) + cos_sum(aj + p - q, r) - cos_sum(aj - p - q, r) - cos_sum(aj + p + q, r)
        })
        .sum()
}

fn hat_q_modular(kernel: &TraceKernel, a: i64) -> Result<C64> {
    let params = &kernel.params;
    let trunc = &kernel.trunc;
    let (k, r) = (params.kf(), params.r());
    let (ki, ri) = (params.k() as i64, params.k() as i64 + 2);
    let tau = params.tau();
    let tau_c = -k / (tau * r);

    // [a'] = B theta_1(pi a'/r; tau_c); expand theta_1 and do the a'-sum exactly.
    let b = -(I * k / (tau * r)).sqrt() * (-I * PI * tau * r / (4.0 * k)).exp();
    let mut t = vec![ZERO; (ki + 1) as usize];
    let mut peak = 0.0f64;
    for n in 1..=trunc.max_terms as i64 {
        let h = n as f64 - 0.5;
        let g = (I * PI * tau_c * h * h).exp();
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        for lp in (0..=ki).step_by(2) {
            let s = sine_triple(a, (2 * n - 1).rem_euclid(2 * ri), lp + 1, ri) as f64 / 4.0;
            t[lp as usize] += 2.0 * sign * s * g;
        }
        peak = peak.max(g.norm());
        if g.norm() <= trunc.eps * peak && n > 1 {
            break;
        }
    }

    let tp = -1.0 / tau;
    let mut acc = ZERO;
    for (&(mu, nu), &f) in &kernel.coeffs {
        let y1 = re((mu - nu) as f64 / (2.0 * k));
        let y2 = (2.0 * kernel.v_total / k - (mu + nu) as f64 / 2.0) / k;
        let args = GammaArgs::new(y1, y2, tp);
        let mut inner = ZERO;
        for lp in (0..=ki).step_by(2) {
            if t[lp as usize] == ZERO {
                continue;
            }
            inner += t[lp as usize] * gamma_sector(&args, SectorLabel::new(0, lp), params, trunc)?;
        }
        acc += f * inner;
    }
    let gauss = (2.0 * PI * I * tau * kernel.v_total * kernel.v_total / (k * k * k)).exp();
    Ok(-kernel.prefactor * b * gauss * acc / (k * r).sqrt())
}

/// Q_a^{(1,1)}(m) through the conjugate-modulus form of the n = 1 trace, with
/// beta the rapidity difference (v' - v = -ik beta / 2 pi).
pub fn q11_rewritten(a: i64, m: i64, beta: C64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<C64> {
    params.require_trace_level()?;
    let (k, r) = (params.kf(), params.r());
    let ki = params.k() as i64;
    if a < 1 || a > ki + 1 {
        return Err(domain(format!("central height {a} outside 1..={}", ki + 1)));
    }
    if (a - m).rem_euclid(2) == 0 {
        return Ok(ZERO);
    }
    let tau = params.tau();
    let tp = -1.0 / tau;
    let eta = dedekind_eta(tp, trunc)?;
    let lead = (I * PI / (2.0 * k) * tau * (I * beta / PI + 1.0).powi(2)).exp() / r * eta * eta
        * theta1(re(PI * a as f64 / r), -k / (tau * r), trunc)?
        / theta1(re(PI / k), tp, trunc)?
        * f_pair(ZERO, params, trunc)?
        * f_pair_recip(k / (2.0 * PI * I) * (beta - I * PI), params, trunc)?;

    let base = theta1(I * beta / 2.0 + PI / 2.0, tp, trunc)?;
    let mut acc = ZERO;
    for mu in [1i32, -1] {
        for nu in [1i32, -1] {
            let ratio = theta1(I * beta / 2.0 + PI / (2.0 * k) * (mu + nu) as f64 + PI / 2.0, tp, trunc)? / base;
            let y1 = re((mu - nu) as f64 / (2.0 * k));
            let y2 = -I * beta / (PI * k) - (mu + nu) as f64 / (2.0 * k);
            let args = GammaArgs::new(y1, y2, tp);
            let mut inner = ZERO;
            for lp in 0..=ki {
                for mp in 0..ki {
                    let g = gamma_sector(&args, SectorLabel::new(mp, lp), params, trunc)?;
                    inner += (PI * (a * (lp + 1)) as f64 / r).sin() * (-I * PI * (m * mp) as f64 / k).exp() * g;
                }
            }
            acc += (mu * nu) as f64 * ratio * 2.0 * inner;
        }
    }
    Ok(lead * acc)
}

/// Relative residuals of the modular relation for one trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModularResiduals {
    /// Assembled sum at tau against the full transformed sum at -1/tau.
    pub relation: f64,
    /// Assembled sum at tau against the folded (m' >= 0) transformed sum.
    pub folded_relation: f64,
    /// Full against folded transformed sum.
    pub folding: f64,
    /// Largest change of the assembled sum across the (h, h') choices tried.
    pub region_independence: f64,
    /// For n = 1: rewritten Q^{(1,1)} against the direct trace.
    pub rewritten_q11: Option<f64>,
}

/// Region offsets used for the (h, h') independence check.
pub const REGION_CHOICES: [(f64, f64); 3] = [(0.0, 0.0), (0.5, 0.3), (1.0, -1.0)];

fn rel_diff(a: C64, b: C64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Both sides of the modular relation for the trace Q_a(m) with insertions
/// (v, v'). The relation is weighted with the same x-powers as the trace.
pub fn modular_check(
    a: i64,
    m: i64,
    v: &[C64],
    vp: &[C64],
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<ModularResiduals> {
    let kernel = TraceKernel::new(v, vp, params, trunc)?;
    kernel.check_height(a)?;
    let l = a - 1;
    let (k, r) = (params.kf(), params.r());
    let ki = params.k() as i64;
    let tau = params.tau();
    let tp = -1.0 / tau;

    let lhs = kernel.assembled_sum(m, l, 0.0, 0.0)?;
    let mut region_independence = 0.0f64;
    for &(h, hp) in &REGION_CHOICES[1..] {
        region_independence = region_independence.max(rel_diff(kernel.assembled_sum(m, l, h, hp)?, lhs));
    }

    let gauss = (2.0 * PI * I * tau * kernel.v_total * kernel.v_total / (k * k * k)).exp();
    let (mut full, mut folded) = (ZERO, ZERO);
    for (&(mu, nu), &f) in &kernel.coeffs {
        let y1 = re((mu - nu) as f64 / (2.0 * k));
        let y2 = (2.0 * kernel.v_total / k - (mu + nu) as f64 / 2.0) / k;
        let args = GammaArgs::new(y1, y2, tp);
        for lp in 0..=ki {
            let s = (PI * ((l + 1) * (lp + 1)) as f64 / r).sin();
            for mp in -ki..ki {
                let g = gamma_sector(&args, SectorLabel::new(mp, lp), params, trunc)?;
                let term = f * s * (-I * PI * (m * mp) as f64 / k).exp() * g;
                full += term;
                if mp >= 0 {
                    folded += 2.0 * term;
                }
            }
        }
    }
    let norm = gauss / (k * r).sqrt();
    let (full, folded) = (full * norm, folded * norm);

    let rewritten_q11 = if kernel.n == 1 && (a - m).rem_euclid(2) != 0 {
        let beta = 2.0 * PI * I * kernel.v_total / k;
        let direct = kernel.q(a, m)?;
        Some(rel_diff(q11_rewritten(a, m, beta, params, trunc)?, direct))
    } else {
        None
    };

    Ok(ModularResiduals {
        relation: rel_diff(lhs, full),
        folded_relation: rel_diff(lhs, folded),
        folding: rel_diff(full, folded),
        region_independence,
        rewritten_q11,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lhp::one_point_lhp;

    fn setup(k: u32, x: f64) -> (ModelParams, TruncationPolicy) {
        (ModelParams::new(k, x).unwrap(), TruncationPolicy::default())
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn ins(s: Species, e: i32, v: C64) -> Insertion {
        Insertion::new(s, e, v)
    }

    const SPECIES: [Species; 2] = [Species::Plus, Species::Minus];

    #[test]
    fn coinciding_equal_components_vanish() {
        let (p, t) = setup(3, 0.6);
        let a = ins(Species::Plus, 1, c(0.2, 0.1));
        let z = pair_contraction(&a, &a, &p, &t, Continuation::Allow).unwrap();
        assert!(z.norm() < 1e-15);
    }

    #[test]
    fn conjugate_species_pairs_agree() {
        let (p, t) = setup(3, 0.6);
        let v = c(0.3, 0.2);
        for (e1, e2) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            for (s1, s2) in [(Species::Plus, Species::Plus), (Species::Plus, Species::Minus)] {
                let flip = |s: Species| if s == Species::Plus { Species::Minus } else { Species::Plus };
                let a = pair_contraction(&ins(s1, e1, C64::default()), &ins(s2, e2, v), &p, &t, Continuation::Allow).unwrap();
                let b = pair_contraction(&ins(flip(s1), -e1, C64::default()), &ins(flip(s2), -e2, v), &p, &t, Continuation::Allow)
                    .unwrap();
                assert!((a - b).norm() <= 1e-14 * a.norm());
            }
        }
    }

    /// Moving the second operator around the trace: <<A(v1) B(v2)>> = <<B(v2) A(v1 + k)>>.
    #[test]
    fn cyclic_exchange_relation() {
        let (p, t) = setup(3, 0.55);
        for v in [c(0.3, 0.2), c(1.7, -0.4), c(-0.6, 0.9)] {
            for &s1 in &SPECIES {
                for &s2 in &SPECIES {
                    for e1 in [1, -1] {
                        for e2 in [1, -1] {
                            let ab = pair_contraction(&ins(s1, e1, C64::default()), &ins(s2, e2, v), &p, &t, Continuation::Allow)
                                .unwrap();
                            let ba = pair_contraction(&ins(s2, e2, v), &ins(s1, e1, c(3.0, 0.0)), &p, &t, Continuation::Allow)
                                .unwrap();
                            assert!((ab - ba).norm() <= 1e-12 * ab.norm(), "{s1:?}{e1} {s2:?}{e2} {ab} {ba}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn convergence_window_is_enforced() {
        let (p, t) = setup(4, 0.5);
        let a = ins(Species::Plus, -1, C64::default());
        let b = ins(Species::Minus, 1, c(0.5, 0.3));
        // window for (e1, e2) = (-1, 1) is (-1, 3)
        assert_eq!(convergence_window(&a, &b, &p), (-1.0, 3.0));
        assert!(in_convergence_window(&a, &b, &p));
        assert!(pair_contraction(&a, &b, &p, &t, Continuation::Enforce).is_ok());
        let far = ins(Species::Minus, 1, c(3.5, 0.0));
        assert!(!in_convergence_window(&a, &far, &p));
        assert!(matches!(
            pair_contraction(&a, &far, &p, &t, Continuation::Enforce),
            Err(crate::AbfError::Domain(_))
        ));
        assert!(pair_contraction(&a, &far, &p, &t, Continuation::Allow).is_ok());
        // windows of all component pairs overlap on (1, k-1)
        let mid = ins(Species::Plus, 1, c(2.0, 0.0));
        for e1 in [1, -1] {
            for e2 in [1, -1] {
                assert!(in_convergence_window(&ins(Species::Plus, e1, C64::default()), &Insertion { eps: e2, ..mid }, &p));
            }
        }
    }

    #[test]
    fn contraction_poles_and_level() {
        let (p, t) = setup(3, 0.5);
        let a = ins(Species::Plus, 1, C64::default());
        let r = pair_contraction(&a, &ins(Species::Plus, -1, c(1.0, 0.0)), &p, &t, Continuation::Allow);
        assert!(matches!(r, Err(crate::AbfError::Pole { .. })));
        let r = pair_contraction(&a, &ins(Species::Minus, 1, c(1.5, 0.0)), &p, &t, Continuation::Allow);
        assert!(matches!(r, Err(crate::AbfError::Pole { .. })));
        let (p2, _) = setup(2, 0.5);
        assert!(matches!(
            pair_contraction(&a, &a, &p2, &t, Continuation::Allow),
            Err(crate::AbfError::Level { k: 2, .. })
        ));
    }

    #[test]
    fn wick_small_cases() {
        let (p, t) = setup(3, 0.6);
        assert_eq!(wick_product(&[], &p, &t, Continuation::Allow).unwrap(), ONE);
        let a = ins(Species::Plus, 1, c(0.1, 0.2));
        let b = ins(Species::Minus, -1, c(1.4, -0.3));
        let w = wick_product(&[a, b], &p, &t, Continuation::Allow).unwrap();
        let pair = pair_contraction(&a, &b, &p, &t, Continuation::Allow).unwrap();
        assert!((w - pair).norm() <= 1e-14 * pair.norm());
        assert!(wick_product(&[a, a, b], &p, &t, Continuation::Allow).is_err());
    }

    #[test]
    fn wick_four_components() {
        let (p, t) = setup(3, 0.6);
        let cc = constants(&p, &t).c;
        let list = [
            ins(Species::Plus, 1, c(0.1, 0.2)),
            ins(Species::Minus, -1, c(1.3, -0.3)),
            ins(Species::Minus, 1, c(0.7, 0.5)),
            ins(Species::Plus, -1, c(2.2, 0.1)),
        ];
        let w = wick_product(&list, &p, &t, Continuation::Allow).unwrap();
        let mut expect = C64::new(cc.powi(4), 0.0);
        for i in 0..4 {
            for j in i + 1..4 {
                expect *= pair_contraction(&list[i], &list[j], &p, &t, Continuation::Allow).unwrap();
            }
        }
        expect /= cc.powi(12);
        assert!((w - expect).norm() <= 1e-13 * expect.norm());
    }

    #[test]
    fn assignments_enumerate_all_signs() {
        let all: Vec<_> = ComponentAssignment::all(2).collect();
        assert_eq!(all.len(), 16);
        assert_eq!(all[0].mu, vec![1, 1]);
        assert_eq!(all.iter().filter(|a| a.mu_total() == 0 && a.nu_total() == 2).count(), 2);
    }

    #[test]
    fn empty_trace_is_one_point_probability() {
        let (p, t) = setup(3, 0.45);
        let ker = TraceKernel::new(&[], &[], &p, &t).unwrap();
        for a in 1..=4 {
            for m in -3..3 {
                let q = ker.q(a, m).unwrap();
                let pa = one_point_lhp(a, m, &p, &t).unwrap();
                assert!((q - pa).norm() < 1e-12, "a={a} m={m}: {q} vs {pa}");
            }
        }
    }

    #[test]
    fn reduced_labels_match_probabilities() {
        let (p, t) = setup(5, 0.3);
        let ker = TraceKernel::new(&[], &[], &p, &t).unwrap();
        for a in 1..=6 {
            for m in [-5, 5, 7, 13] {
                let q = ker.q(a, m).unwrap();
                let pa = one_point_lhp(a, m, &p, &t).unwrap();
                assert!((q - pa).norm() < 1e-13, "a={a} m={m}: {q} vs {pa}");
            }
        }
    }

    /// High-precision reference for n = 1, k = 3, x = 0.7, v = 0, v' = -3i(0.7)/(2 pi).
    #[test]
    fn single_pair_reference_value() {
        let (p, t) = setup(3, 0.7);
        let vp = c(0.0, -3.0 * 0.7 / (2.0 * PI));
        let req = TraceRequest::new(3, 0, vec![C64::default()], vec![vp]).unwrap();
        let q = q_trace(&req, &p, &t).unwrap();
        let expect = c(-0.091184654898981568481, 0.053125962635944482261);
        assert!((q - expect).norm() < 1e-13 * expect.norm(), "{q}");
    }

    #[test]
    fn parity_and_height_rules() {
        let (p, t) = setup(3, 0.6);
        let ker = TraceKernel::new(&[c(0.1, 0.0)], &[c(0.4, 0.2)], &p, &t).unwrap();
        assert_eq!(ker.q(2, 0).unwrap(), ZERO);
        assert_eq!(ker.q(1, 1).unwrap(), ZERO);
        assert!(ker.q(5, 0).is_err());
        assert!(TraceRequest::new(1, 0, vec![ZERO], vec![]).is_err());
    }

    #[test]
    fn translation_and_reflection_periodicity() {
        // Shifted labels put large terms into the zero-mode sum that cancel;
        // near x = 1 and with the shift pointing back towards m = 0 this costs
        // at most a few digits.
        let (p, t) = setup(3, 0.9);
        let ker = TraceKernel::new(&[c(0.1, 0.05)], &[c(0.3, -0.4)], &p, &t).unwrap();
        for a in 1..=4 {
            for m in -3..3i64 {
                let q = ker.q_unreduced(a, m).unwrap();
                let dir = if m < 0 { 1 } else { -1 };
                let shifted = ker.q_unreduced(a, m + 6 * dir).unwrap();
                let reflected = ker.q_unreduced(5 - a, m + 3 * dir).unwrap();
                assert_eq!(ker.q(a, m + 6 * dir).unwrap(), ker.q(a, m).unwrap());
                let s = q.norm().max(1e-300);
                assert!((q - shifted).norm() <= 1e-9 * s, "a={a} m={m} {q} {shifted}");
                assert!((q - reflected).norm() <= 1e-9 * s, "a={a} m={m} {q} {reflected}");
            }
        }
    }

    #[test]
    fn g_shift_cases() {
        let (p, t) = setup(3, 0.6);
        let u = c(0.3, 0.1);
        assert_eq!(g_shift(u, &[], &[], &p, &t).unwrap(), ONE);
        let v = [c(0.2, 0.3), c(-0.5, 0.1)];
        let vp: Vec<C64> = v.iter().map(|&z| z - 1.5).collect();
        let g = g_shift(u, &v, &vp, &p, &t).unwrap();
        assert!((g - ONE).norm() < 1e-13);

        let vp = [c(0.7, -0.2), c(0.05, 0.4)];
        let bs = |z: C64| bracket_star(z, &p, &t);
        let mut expect = ONE;
        for j in 0..2 {
            expect *= bs(u - v[j] + 2.0) / bs(u - v[j] + 1.0) * bs(u - vp[j] - 0.5) / bs(u - vp[j] + 0.5);
        }
        let g = g_shift(u, &v, &vp, &p, &t).unwrap();
        assert!((g - expect).norm() <= 1e-14 * expect.norm());
    }

    #[test]
    fn neighbour_traces() {
        let (p, t) = setup(4, 0.6);
        let (v, vp) = ([c(0.1, 0.2)], [c(0.6, -0.3)]);
        let u = c(0.25, 0.05);
        let ker = TraceKernel::new(&v, &vp, &p, &t).unwrap();
        let g = g_shift(u, &v, &vp, &p, &t).unwrap();
        for m in -4..4 {
            let q21 = q_neighbor(2, 1, m, u, &v, &vp, &p, &t).unwrap();
            let q1 = ker.q(1, m).unwrap();
            assert!((q21 - q1).norm() <= 1e-14 * q1.norm().max(1e-300));
            for a in 2..=4 {
                let up = q_neighbor_with(&ker, g, a + 1, a, m).unwrap();
                let down = q_neighbor_with(&ker, g, a - 1, a, m).unwrap();
                let qa = ker.q(a, m).unwrap();
                assert!((up + down - qa).norm() <= 1e-9 * (1.0 + qa.norm()));
            }
            for b in 2..=4 {
                let s = q_neighbor_with(&ker, g, b, b - 1, m).unwrap() + q_neighbor_with(&ker, g, b, b + 1, m).unwrap();
                let qb = ker.q(b, m + 1).unwrap() * g;
                assert!((s - qb).norm() <= 1e-9 * (1.0 + qb.norm()));
            }
        }
        assert!(q_neighbor(3, 1, 0, u, &v, &vp, &p, &t).is_err());
        assert!(q_neighbor(6, 5, 0, u, &v, &vp, &p, &t).is_err());
    }

    #[test]
    fn f_poly_small_cases() {
        let (p, t) = setup(3, 0.6);
        let (u, v) = (c(0.3, 0.1), c(-0.2, 0.4));
        let f = f_poly(1, 1, &[u], &[v], &p, &t).unwrap();
        let expect = bracket_star(u + v + 1.0, &p, &t);
        assert!((f - expect).norm() <= 1e-15 * expect.norm());
        assert_eq!(f_poly(3, 1, &[u], &[v], &p, &t).unwrap(), ZERO);
        assert_eq!(f_poly(0, 1, &[u], &[v], &p, &t).unwrap(), ZERO);
        assert_eq!(f_poly(0, 0, &[], &[], &p, &t).unwrap(), ONE);

        let us = [c(0.3, 0.1), c(-0.4, 0.2)];
        let vs = [c(0.1, -0.3), c(0.5, 0.05)];
        let rev = [us[1], us[0]];
        for (mu, nu) in [(0, 0), (2, 0), (0, -2), (2, 2)] {
            let a = f_poly(mu, nu, &us, &vs, &p, &t).unwrap();
            let b = f_poly(mu, nu, &rev, &vs, &p, &t).unwrap();
            assert!((a - b).norm() <= 1e-13 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn f_poly_symmetry_in_mu_nu() {
        let (p, t) = setup(4, 0.55);
        let us = [c(0.3, 0.1), c(-0.4, 0.2), c(0.9, -0.1)];
        let vs = [c(0.1, -0.3), c(0.5, 0.05), c(-0.7, 0.2)];
        for mu in [-3, -1, 1, 3] {
            for nu in [-3, -1, 1, 3] {
                let r = g_property_residuals(mu, nu, &us, &vs, c(0.2, 0.15), &p, &t).unwrap();
                assert!(r.max() < 1e-10, "({mu},{nu}) {r:?}");
            }
        }
    }

    #[test]
    fn hat_q_selection_rules() {
        let (p, t) = setup(3, 0.7);
        let (v, vp) = ([C64::default()], [c(0.0, -0.3)]);
        for route in [HatRoute::Direct, HatRoute::Modular] {
            assert_eq!(hat_q(2, &v, &vp, route, &p, &t).unwrap(), ZERO);
            assert!(hat_q(1, &v, &vp, route, &p, &t).unwrap().norm() < 1e-9);
        }
        let d = hat_q(3, &v, &vp, HatRoute::Direct, &p, &t).unwrap();
        let m = hat_q(3, &v, &vp, HatRoute::Modular, &p, &t).unwrap();
        assert!((d - m).norm() <= 1e-8 * m.norm());
    }

    #[test]
    fn exact_sine_sums() {
        for k in 3..=6i64 {
            let r = k + 2;
            for a in 1..=k + 1 {
                for pp in 0..2 * r {
                    for q in 1..=k + 1 {
                        let direct: f64 = (1..=k + 1)
                            .map(|ap| {
                                let th = PI * ap as f64 / r as f64;
                                sin_ratio(a, ap, r as f64) * (pp as f64 * th).sin() * (q as f64 * th).sin()
                            })
                            .sum();
                        assert!((4.0 * direct - sine_triple(a, pp, q, r) as f64).abs() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn modular_relation_single_pair() {
        let (p, t) = setup(3, 0.7);
        let r = modular_check(3, 0, &[C64::default()], &[c(0.0, -0.33)], &p, &t).unwrap();
        assert!(r.relation < 1e-8, "{r:?}");
        assert!(r.folded_relation < 1e-10, "{r:?}");
        assert!(r.rewritten_q11.unwrap() < 1e-10, "{r:?}");
    }

    #[test]
    fn truncation_is_stable() {
        let (p, t) = setup(3, 0.6);
        let ker = TraceKernel::new(&[c(0.1, 0.0)], &[c(0.2, -0.3)], &p, &t).unwrap();
        let ker2 = TraceKernel::new(&[c(0.1, 0.0)], &[c(0.2, -0.3)], &p, &t.doubled()).unwrap();
        let (a, b) = (ker.q(3, 0).unwrap(), ker2.q(3, 0).unwrap());
        assert!((a - b).norm() <= 10.0 * t.eps * a.norm());
    }
}
