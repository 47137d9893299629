//! ABF face weights in regime II and the identities they satisfy.
//!
//! A face is written (a, b, c, d) with a top-left, b top-right, c bottom-left
//! and d bottom-right. Inadmissible faces have weight exactly zero, which lets
//! the identity sums run over every height without bookkeeping.

use crate::error::Result;
use crate::qspecial::{bracket, qpoch, qpoch_denominator, ModelParams, TruncationPolicy};
use num_complex::Complex64 as C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightQuad {
    pub a: i32,
    pub b: i32,
    pub c: i32,
    pub d: i32,
    pub u: f64,
}

impl HeightQuad {
    pub fn new(a: i32, b: i32, c: i32, d: i32, u: f64) -> Self {
        HeightQuad { a, b, c, d, u }
    }

    pub fn is_admissible(&self, k: u32) -> bool {
        admissible(k, self.a, self.b, self.c, self.d)
    }
}

fn admissible(k: u32, a: i32, b: i32, c: i32, d: i32) -> bool {
    let top = k as i32 + 1;
    [a, b, c, d].iter().all(|&h| (1..=top).contains(&h))
        && (a - b).abs() == 1
        && (b - d).abs() == 1
        && (d - c).abs() == 1
        && (c - a).abs() == 1
}

/// Brackets needed for every face at a fixed spectral parameter.
///
/// Identity sweeps evaluate thousands of faces at the same u, so the theta
/// products are computed once per u instead of once per face.
#[derive(Debug, Clone)]
pub struct WeightTable {
    k: u32,
    rho: f64,
    // [j], [j+u], [j-u] for j = 0..=k+2
    plain: Vec<f64>,
    plus: Vec<f64>,
    minus: Vec<f64>,
    one_minus_u: f64,
    neg_u: f64,
}

impl WeightTable {
    pub fn new(u: f64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<Self> {
        let br = |v: f64| bracket(C64::new(v, 0.0), params, trunc).re;
        let n = params.k() as usize + 3;
        let plain = (0..n).map(|j| br(j as f64)).collect();
        let plus = (0..n).map(|j| br(j as f64 + u)).collect();
        let minus = (0..n).map(|j| br(j as f64 - u)).collect();
        Ok(WeightTable {
            k: params.k(),
            rho: rho(u, params, trunc)?,
            plain,
            plus,
            minus,
            one_minus_u: br(1.0 - u),
            neg_u: br(-u),
        })
    }

    /// Weight without the rho(u) factor.
    pub fn wbar(&self, a: i32, b: i32, c: i32, d: i32) -> f64 {
        if !admissible(self.k, a, b, c, d) {
            return 0.0;
        }
        let au = a as usize;
        if b == c && (d - a).abs() == 2 {
            1.0
        } else if b == c {
            let num = if b > a { self.plus[au] } else { self.minus[au] };
            num * self.plain[1] / (self.plain[au] * self.one_minus_u)
        } else {
            // b = a +- 1, c = a -+ 1, d = a
            let shifted = (a - (b - a)) as usize;
            self.plain[shifted] * self.neg_u / (self.plain[au] * self.one_minus_u)
        }
    }

    pub fn weight(&self, a: i32, b: i32, c: i32, d: i32) -> f64 {
        self.rho * self.wbar(a, b, c, d)
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

pub fn wbar(q: &HeightQuad, params: &ModelParams, trunc: &TruncationPolicy) -> f64 {
    if !q.is_admissible(params.k()) {
        return 0.0;
    }
    let br = |v: f64| bracket(C64::new(v, 0.0), params, trunc).re;
    let (a, u) = (q.a as f64, q.u);
    let s = (q.b - q.a) as f64;
    if q.b == q.c && (q.d - q.a).abs() == 2 {
        1.0
    } else if q.b == q.c {
        br(a + s * u) * br(1.0) / (br(a) * br(1.0 - u))
    } else {
        br(a - s) * br(-u) / (br(a) * br(1.0 - u))
    }
}

fn rho_plus(u: f64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<f64> {
    let k = params.kf();
    let bases = [params.xpow_re(2.0 * k), params.xpow_re(2.0 * (k + 2.0))];
    let z = |w: f64| C64::new(params.xpow_re(w), 0.0);
    let num = qpoch(z(2.0 * k + 2.0 + 2.0 * u), &bases, trunc).powi(2);
    let what = || format!("rho_+({u})");
    let den = qpoch_denominator(z(2.0 * k + 2.0 * u), &bases, trunc, what)?
        * qpoch_denominator(z(2.0 * k + 4.0 + 2.0 * u), &bases, trunc, what)?;
    Ok((num / den).re)
}

/// rho(u) = x^{2u/(k(k+2))} rho_+(u) / rho_+(-u), normalizing the free energy per site to 1.
pub fn rho(u: f64, params: &ModelParams, trunc: &TruncationPolicy) -> Result<f64> {
    let k = params.kf();
    let pref = params.xpow_re(2.0 * u / (k * (k + 2.0)));
    Ok(pref * rho_plus(u, params, trunc)? / rho_plus(-u, params, trunc)?)
}

pub fn weight(q: &HeightQuad, params: &ModelParams, trunc: &TruncationPolicy) -> Result<f64> {
    Ok(rho(q.u, params, trunc)? * wbar(q, params, trunc))
}

/// Largest absolute residual of each identity over a grid of spectral parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RelationResiduals {
    pub unitarity: f64,
    pub second_inversion: f64,
    pub ybe: f64,
    /// Largest |term| seen in the YBE sums, so a vacuous zero can be spotted.
    pub ybe_scale: f64,
    pub rho_inverse: f64,
    pub rho_crossing: f64,
}

impl RelationResiduals {
    pub fn max_residual(&self) -> f64 {
        self.unitarity
            .max(self.second_inversion)
            .max(self.ybe)
            .max(self.rho_inverse)
            .max(self.rho_crossing)
    }
}

/// Unitarity, second inversion and YBE on `u_grid`; YBE uses consecutive grid
/// entries (cyclically) as the two spectral parameters.
pub fn verify_relations(
    params: &ModelParams,
    u_grid: &[f64],
    trunc: &TruncationPolicy,
) -> Result<RelationResiduals> {
    let mut out = RelationResiduals::default();
    let hmax = params.k() as i32 + 1;
    let heights = 1..=hmax;
    let br = |v: f64| bracket(C64::new(v, 0.0), params, trunc).re;
    let brh: Vec<f64> = (0..=hmax + 1).map(|j| br(j as f64)).collect();

    for (idx, &u) in u_grid.iter().enumerate() {
        let w = WeightTable::new(u, params, trunc)?;
        let wm = WeightTable::new(-u, params, trunc)?;
        let wc = WeightTable::new(-params.kf() - u, params, trunc)?;

        for a in heights.clone() {
            for b in heights.clone() {
                for c in heights.clone() {
                    for d in heights.clone() {
                        let adj = |p: i32, q: i32| (p - q).abs() == 1;
                        // unitarity: b and d both neighbour a and c
                        if adj(a, b) && adj(b, c) && adj(a, d) && adj(d, c) {
                            let s: f64 = heights
                                .clone()
                                .map(|g| w.weight(a, b, g, c) * wm.weight(a, g, d, c))
                                .sum();
                            let want = if b == d { 1.0 } else { 0.0 };
                            out.unitarity = out.unitarity.max((s - want).abs());
                        }
                        // second inversion: external heights form a path a-b-d-c-a
                        if !(adj(a, b) && adj(b, d) && adj(d, c) && adj(c, a)) {
                            continue;
                        }
                        let s: f64 = heights
                            .clone()
                            .map(|g| {
                                brh[g as usize] / brh[c as usize]
                                    * wc.weight(d, c, b, g)
                                    * w.weight(a, b, c, g)
                            })
                            .sum();
                        let want = if a == d {
                            brh[b as usize] / brh[d as usize]
                        } else {
                            0.0
                        };
                        out.second_inversion = out.second_inversion.max((s - want).abs());
                    }
                }
            }
        }

        let v = u_grid[(idx + 1) % u_grid.len()];
        let (res, scale) = ybe_residual(u, v, params, trunc)?;
        out.ybe = out.ybe.max(res);
        out.ybe_scale = out.ybe_scale.max(scale);

        let r = rho(u, params, trunc)?;
        out.rho_inverse = out.rho_inverse.max((r * rho(-u, params, trunc)? - 1.0).abs());
        let lhs = r * rho(-params.kf() - u, params, trunc)?;
        let rhs = br(1.0 - u).powi(2) / (br(-u) * br(2.0 - u));
        out.rho_crossing = out.rho_crossing.max((lhs - rhs).abs());
    }
    Ok(out)
}

/// Face-operator YBE X_1(u) X_2(u+v) X_1(v) = X_2(v) X_1(u+v) X_2(u), where X_i
/// replaces height a_i of a path by a'_i with weight W(a_{i-1}, a_i, a'_i, a_{i+1}).
/// All six boundary heights are enumerated.
fn ybe_residual(
    u: f64,
    v: f64,
    params: &ModelParams,
    trunc: &TruncationPolicy,
) -> Result<(f64, f64)> {
    let wu = WeightTable::new(u, params, trunc)?;
    let wv = WeightTable::new(v, params, trunc)?;
    let wuv = WeightTable::new(u + v, params, trunc)?;
    let hmax = params.k() as i32 + 1;
    let hs = 1..=hmax;
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    // both sides vanish unless a0 a1 a2 a3 and a0 b1 b2 a3 are paths
    let step = |h: i32| [h - 1, h + 1].into_iter().filter(move |&g| (1..=hmax).contains(&g));
    for a0 in hs.clone() {
        for a1 in step(a0) {
            for a2 in step(a1) {
                for a3 in step(a2) {
                    for b1 in step(a0) {
                        for b2 in step(b1).filter(|b2| (b2 - a3).abs() == 1) {
                            let lhs: f64 = hs
                                .clone()
                                .map(|c1| {
                                    wu.weight(a0, a1, c1, a2)
                                        * wuv.weight(c1, a2, b2, a3)
                                        * wv.weight(a0, c1, b1, b2)
                                })
                                .sum();
                            let rhs: f64 = hs
                                .clone()
                                .map(|c2| {
                                    wv.weight(a1, a2, c2, a3)
                                        * wuv.weight(a0, a1, b1, c2)
                                        * wu.weight(b1, c2, b2, a3)
                                })
                                .sum();
                            worst = worst.max((lhs - rhs).abs());
                            scale = scale.max(lhs.abs());
                        }
                    }
                }
            }
        }
    }
    Ok((worst, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(k: u32, x: f64) -> (ModelParams, TruncationPolicy) {
        (ModelParams::new(k, x).unwrap(), TruncationPolicy::default())
    }

    #[test]
    fn bw_cases() {
        let (m, t) = setup(3, 0.5);
        for a in 1..=2 {
            assert_eq!(wbar(&HeightQuad::new(a, a + 1, a + 1, a + 2, -0.3), &m, &t), 1.0);
        }
        assert!((wbar(&HeightQuad::new(2, 3, 3, 2, 0.0), &m, &t) - 1.0).abs() < 1e-15);
        assert_eq!(wbar(&HeightQuad::new(2, 3, 1, 2, 0.0), &m, &t), 0.0);

        let br = |v: f64| bracket(C64::new(v, 0.0), &m, &t).re;
        let want = br(1.0) * br(0.4) / (br(2.0) * br(1.4));
        let got = wbar(&HeightQuad::new(2, 3, 1, 2, -0.4), &m, &t);
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn inadmissible_is_zero() {
        let (m, t) = setup(3, 0.5);
        assert_eq!(wbar(&HeightQuad::new(2, 2, 3, 3, -0.3), &m, &t), 0.0);
        assert_eq!(wbar(&HeightQuad::new(4, 5, 5, 6, -0.3), &m, &t), 0.0);
        assert_eq!(wbar(&HeightQuad::new(0, 1, 1, 2, -0.3), &m, &t), 0.0);
    }

    #[test]
    fn table_agrees_with_direct() {
        let (m, t) = setup(4, 0.45);
        let u = -0.77;
        let tab = WeightTable::new(u, &m, &t).unwrap();
        for a in 0..=6 {
            for b in 0..=6 {
                for c in 0..=6 {
                    for d in 0..=6 {
                        let q = HeightQuad::new(a, b, c, d, u);
                        let want = weight(&q, &m, &t).unwrap();
                        assert!((tab.weight(a, b, c, d) - want).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn rho_values() {
        let (m, t) = setup(3, 0.5);
        assert!((rho(0.0, &m, &t).unwrap() - 1.0).abs() < 1e-15);
        let u = -0.3;
        let r = rho(u, &m, &t).unwrap();
        assert!((r * rho(-u, &m, &t).unwrap() - 1.0).abs() < 1e-12);
        let br = |v: f64| bracket(C64::new(v, 0.0), &m, &t).re;
        let lhs = r * rho(-3.0 - u, &m, &t).unwrap();
        let rhs = br(1.0 - u).powi(2) / (br(-u) * br(2.0 - u));
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn weight_at_zero_and_bw1() {
        let (m, t) = setup(3, 0.5);
        let q = HeightQuad::new(2, 3, 3, 2, 0.0);
        assert_eq!(weight(&q, &m, &t).unwrap(), wbar(&q, &m, &t));
        let q = HeightQuad::new(1, 2, 2, 3, -0.2);
        assert_eq!(weight(&q, &m, &t).unwrap(), rho(-0.2, &m, &t).unwrap());
    }

    #[test]
    fn unitarity_instance() {
        let (m, t) = setup(3, 0.5);
        let u = -0.35;
        let (a, b, c, d) = (2, 3, 2, 3);
        let s: f64 = (1..=4)
            .map(|g| {
                weight(&HeightQuad::new(a, b, g, c, u), &m, &t).unwrap()
                    * weight(&HeightQuad::new(a, g, d, c, -u), &m, &t).unwrap()
            })
            .sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relations_k3_k4() {
        for k in [3, 4] {
            let (m, t) = setup(k, 0.5);
            let grid: Vec<f64> = (1..10).map(|i| -0.15 * i as f64).collect();
            let r = verify_relations(&m, &grid, &t).unwrap();
            assert!(r.max_residual() < 1e-10, "{r:?}");
            assert!(r.ybe_scale > 0.1);
        }
    }
}
