//! String functions, local height probabilities and the zero-mode sum Gamma.

use crate::error::{domain, Result};
use crate::qspecial::{bracket, dedekind_eta, pairwise_sum, qpoch, ModelParams, TruncationPolicy, I};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

/// Labels (m, l) of a string function or zero-mode sum. Nonzero only for l = m mod 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SectorLabel {
    pub m: i64,
    pub l: i64,
}

impl SectorLabel {
    pub fn new(m: i64, l: i64) -> Self {
        SectorLabel { m, l }
    }

    pub fn parity_ok(&self) -> bool {
        (self.l - self.m).rem_euclid(2) == 0
    }
}

/// Region offsets (h, h'), exponents y1, y2 and the modular argument of Gamma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaArgs {
    pub h: f64,
    pub hp: f64,
    pub y1: C64,
    pub y2: C64,
    pub modular_arg: C64,
}

impl GammaArgs {
    pub fn new(y1: C64, y2: C64, modular_arg: C64) -> Self {
        GammaArgs {
            h: 0.0,
            hp: 0.0,
            y1,
            y2,
            modular_arg,
        }
    }

    pub fn with_regions(self, h: f64, hp: f64) -> Self {
        GammaArgs { h, hp, ..self }
    }
}

/// The signed half-integer double sum shared by the string function and Gamma,
/// without any eta prefactor.
///
/// Indices are n1 = A/2, n2 = B/2 with A = B mod 2. For each A the admissible B
/// form one interval: [-A-2h', A+2h] (sign +) or (A+2h, -A-2h') (sign -), and
/// the two never overlap, so rows are swept outward from the boundary until
/// they fall below eps relative to the largest row.
pub fn indefinite_theta(
    sector: SectorLabel,
    args: &GammaArgs,
    k: u32,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    if !(args.modular_arg.im > 0.0) {
        return Err(domain(format!(
            "zero-mode sum diverges for Im(tau) = {}",
            args.modular_arg.im
        )));
    }
    if !sector.parity_ok() {
        return Ok(C64::new(0.0, 0.0));
    }
    let kf = k as f64;
    let r = kf + 2.0;
    let (h2, hp2) = (2.0 * args.h, 2.0 * args.hp);
    let tau = args.modular_arg;

    let term = |a: i64, b: i64| -> C64 {
        let big_l = (sector.l + 1) as f64 + a as f64 * r;
        let big_m = sector.m as f64 + b as f64 * kf;
        let e = 2.0 * PI * I * tau * (big_l * big_l / (4.0 * r) - big_m * big_m / (4.0 * kf))
            + PI * I * (big_l * args.y1 - big_m * args.y2);
        let s = if a.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        s * e.exp()
    };

    let row = |a: i64| -> (C64, f64) {
        let af = a as f64;
        // B must share A's parity
        let (lo, hi, sign) = if -af - hp2 <= af + h2 {
            ((-af - hp2).ceil() as i64, (af + h2).floor() as i64, 1.0)
        } else {
            // strict inequalities on both ends
            let lo = (af + h2).floor() as i64 + 1;
            let hi = (-af - hp2).ceil() as i64 - 1;
            (lo, hi, -1.0)
        };
        let mut b = lo + (lo - a).rem_euclid(2);
        let mut terms = Vec::new();
        let mut peak = 0.0f64;
        while b <= hi {
            let t = term(a, b);
            peak = peak.max(t.norm());
            terms.push(t);
            b += 2;
        }
        (sign * pairwise_sum(&terms), peak)
    };

    // first A whose row lies in the + region
    let a_star = (-(args.h + args.hp)).ceil() as i64;
    let mut rows = Vec::new();
    let mut global = 0.0f64;
    for dir in [1i64, -1] {
        let mut a = if dir == 1 { a_star } else { a_star - 1 };
        let mut prev = f64::INFINITY;
        let mut small_run = 0;
        for step in 0..trunc.max_terms {
            let (s, peak) = row(a);
            rows.push(s);
            global = global.max(peak);
            // rows next to the region boundary can be empty, so never stop there
            if step >= 6 && peak <= trunc.eps * global && peak <= prev {
                small_run += 1;
                if small_run >= 2 {
                    break;
                }
            } else {
                small_run = 0;
            }
            prev = peak;
            a += dir;
        }
    }
    Ok(pairwise_sum(&rows))
}

/// Gamma^{(h,h')}_{m,l}(y1, y2 | tau) = eta(tau)^{-2} times the indefinite sum.
pub fn gamma_sector(
    args: &GammaArgs,
    sector: SectorLabel,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<C64> {
    let s = indefinite_theta(sector, args, params.k(), trunc)?;
    if s == C64::new(0.0, 0.0) {
        return Ok(s);
    }
    let eta = dedekind_eta(args.modular_arg, trunc)?;
    Ok(s / (eta * eta))
}

/// String function c^{Lambda(l)}_{Lambda(m)}(tau) at the model's tau.
///
/// m is first reduced to 0 <= m <= k/2 using 2k-periodicity, evenness and
/// c^l_m = c^{k-l}_{k-m}. The raw double sum at large |m| cancels terms of
/// size x^{-m^2/2} and loses digits.
pub fn string_fn(l: i64, m: i64, params: &ModelParams, trunc: &TruncationPolicy) -> f64 {
    let k = params.k() as i64;
    let mut m = m.rem_euclid(2 * k);
    if m > k {
        m = 2 * k - m;
    }
    let (l, m) = if 2 * m > k { (k - l, k - m) } else { (l, m) };
    let sector = SectorLabel::new(m, l);
    if !sector.parity_ok() {
        return 0.0;
    }
    let zero = C64::new(0.0, 0.0);
    let args = GammaArgs::new(zero, zero, params.tau());
    let s = indefinite_theta(sector, &args, params.k(), trunc).expect("Im(tau) > 0 always");
    (s / model_eta(params, trunc).powi(3)).re
}

/// eta(tau) = (x^{2k})^{1/24} (x^{2k}; x^{2k}).
pub fn model_eta(params: &ModelParams, trunc: &TruncationPolicy) -> f64 {
    let q = params.xpow_re(2.0 * params.kf());
    q.powf(1.0 / 24.0) * qpoch(C64::new(q, 0.0), &[q], trunc).re
}

fn check_height(a: i64, params: &ModelParams) -> Result<()> {
    if a < 1 || a > params.k() as i64 + 1 {
        return Err(domain(format!(
            "height {a} outside 1..={}",
            params.k() + 1
        )));
    }
    Ok(())
}

/// P_a(m) = x^{(k+2)/4} [a] c^{Lambda(a-1)}_{Lambda(m)}.
pub fn one_point_lhp(a: i64, m: i64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<f64> {
    check_height(a, params)?;
    let br = bracket(C64::new(a as f64, 0.0), params, trunc).re;
    Ok(params.xpow_re(params.r() / 4.0) * br * string_fn(a - 1, m, params, trunc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartitionFunction {
    pub sum_form: f64,
    pub closed_form: f64,
}

impl PartitionFunction {
    pub fn difference(&self) -> f64 {
        (self.sum_form - self.closed_form).abs()
    }
}

/// Z as the sum over sectors of [l+1] times the cohomology character, for boundary label m.
pub fn partition_sum_form(m: i64, params: &ModelParams, trunc: &TruncationPolicy) -> f64 {
    let k = params.kf();
    let q = params.xpow_re(2.0 * k);
    let pref = params.xpow_re(k * k / (4.0 * (k + 2.0))) * qpoch(C64::new(q, 0.0), &[q], trunc).re;
    (0..=params.k() as i64)
        .filter(|l| (l - m).rem_euclid(2) == 0)
        .map(|l| {
            let br = bracket(C64::new((l + 1) as f64, 0.0), params, trunc).re;
            br * pref * string_fn(l, m, params, trunc)
        })
        .sum()
}

/// x^{-(k+1)/(k+2)} (x^{2k}; x^{2k}).
pub fn partition_closed_form(params: &ModelParams, trunc: &TruncationPolicy) -> f64 {
    let k = params.kf();
    let q = params.xpow_re(2.0 * k);
    params.xpow_re(-(k + 1.0) / (k + 2.0)) * qpoch(C64::new(q, 0.0), &[q], trunc).re
}

pub fn partition_fn(params: &ModelParams, trunc: &TruncationPolicy) -> PartitionFunction {
    PartitionFunction {
        sum_form: partition_sum_form(0, params, trunc),
        closed_form: partition_closed_form(params, trunc),
    }
}

/// Nearest-neighbour probability P_{b,a}(m), |b - a| = 1, as alternating sums
/// of one-point probabilities. Heights up to k+2 are accepted so that the
/// vanishing of P_{k+2,k+1} and P_{k+1,k+2} can be checked.
pub fn two_point_lhp(
    b: i64,
    a: i64,
    m: i64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<f64> {
    if (b - a).abs() != 1 {
        return Err(domain(format!("P_{{{b},{a}}} needs |b - a| = 1")));
    }
    let top = params.k() as i64 + 2;
    if a < 1 || b < 1 || a > top || b > top {
        return Err(domain(format!("heights ({b},{a}) outside 1..={top}")));
    }
    let upper = if b == a + 1 { a } else { a - 1 };
    let mut same = 0.0;
    let mut other = 0.0;
    for s in 1..=upper {
        if (s - a).rem_euclid(2) == 0 {
            same += one_point_lhp(s, m, params, trunc)?;
        } else {
            other += one_point_lhp(s, m + 1, params, trunc)?;
        }
    }
    Ok(if b == a + 1 { same - other } else { other - same })
}
