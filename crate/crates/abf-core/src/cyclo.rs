//! Exact arithmetic in Q(omega), omega = exp(i pi / k).
//!
//! Elements are rational coefficient vectors over 1, omega, ..., omega^{d-1}
//! reduced modulo the cyclotomic polynomial of order 2k (d = phi(2k)).
//! Identities like R_1 = 0 are decided here instead of in floating point.

use num_bigint::BigInt;
use num_complex::Complex64 as C64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::f64::consts::PI;

/// Integer coefficients of Phi_n, lowest degree first.
pub fn cyclotomic_poly(n: u32) -> Vec<BigInt> {
    assert!(n >= 1);
    // t^n - 1
    let mut p = vec![BigInt::zero(); n as usize + 1];
    p[0] = -BigInt::one();
    p[n as usize] = BigInt::one();
    for d in 1..n {
        if n % d == 0 {
            p = div_monic(&p, &cyclotomic_poly(d));
        }
    }
    p
}

/// Exact quotient of integer polynomials by a monic divisor.
fn div_monic(num: &[BigInt], den: &[BigInt]) -> Vec<BigInt> {
    let mut rem = num.to_vec();
    let dd = den.len() - 1;
    let qd = rem.len() - 1 - dd;
    let mut q = vec![BigInt::zero(); qd + 1];
    for i in (0..=qd).rev() {
        let c = rem[i + dd].clone();
        if !c.is_zero() {
            for (j, dj) in den.iter().enumerate() {
                rem[i + j] -= &c * dj;
            }
        }
        q[i] = c;
    }
    debug_assert!(rem.iter().all(|c| c.is_zero()));
    q
}

#[derive(Debug, Clone)]
pub struct CycloField {
    k: u32,
    phi: Vec<BigRational>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cyclo {
    c: Vec<BigRational>,
}

impl Cyclo {
    pub fn is_zero(&self) -> bool {
        self.c.iter().all(|c| c.is_zero())
    }

    pub fn coefficients(&self) -> &[BigRational] {
        &self.c
    }
}

impl CycloField {
    pub fn new(k: u32) -> Self {
        assert!(k >= 1);
        let phi = cyclotomic_poly(2 * k)
            .into_iter()
            .map(BigRational::from_integer)
            .collect();
        CycloField { k, phi }
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn degree(&self) -> usize {
        self.phi.len() - 1
    }

    pub fn zero(&self) -> Cyclo {
        Cyclo {
            c: vec![BigRational::zero(); self.degree()],
        }
    }

    pub fn rational(&self, q: BigRational) -> Cyclo {
        let mut z = self.zero();
        z.c[0] = q;
        z
    }

    pub fn one(&self) -> Cyclo {
        self.rational(BigRational::one())
    }

    /// omega^e for any integer e.
    pub fn omega_pow(&self, e: i64) -> Cyclo {
        let e = e.rem_euclid(2 * self.k as i64) as usize;
        let mut p = vec![BigRational::zero(); e + 1];
        p[e] = BigRational::one();
        self.reduce(p)
    }

    /// {l} = omega^l - omega^{-l}
    pub fn brace(&self, l: i64) -> Cyclo {
        self.sub(&self.omega_pow(l), &self.omega_pow(-l))
    }

    fn reduce(&self, mut p: Vec<BigRational>) -> Cyclo {
        let d = self.degree();
        while p.len() > d {
            let top = p.pop().unwrap();
            if top.is_zero() {
                continue;
            }
            let shift = p.len() - d;
            for j in 0..d {
                p[shift + j] -= &top * &self.phi[j];
            }
        }
        p.resize(d, BigRational::zero());
        Cyclo { c: p }
    }

    pub fn add(&self, a: &Cyclo, b: &Cyclo) -> Cyclo {
        Cyclo {
            c: a.c.iter().zip(&b.c).map(|(x, y)| x + y).collect(),
        }
    }

    pub fn sub(&self, a: &Cyclo, b: &Cyclo) -> Cyclo {
        Cyclo {
            c: a.c.iter().zip(&b.c).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn neg(&self, a: &Cyclo) -> Cyclo {
        Cyclo {
            c: a.c.iter().map(|x| -x).collect(),
        }
    }

    pub fn mul(&self, a: &Cyclo, b: &Cyclo) -> Cyclo {
        let d = self.degree();
        let mut p = vec![BigRational::zero(); 2 * d - 1];
        for (i, x) in a.c.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in b.c.iter().enumerate() {
                p[i + j] += x * y;
            }
        }
        self.reduce(p)
    }

    pub fn scale(&self, a: &Cyclo, q: &BigRational) -> Cyclo {
        Cyclo {
            c: a.c.iter().map(|x| x * q).collect(),
        }
    }

    /// Multiplicative inverse; None for zero.
    pub fn inv(&self, a: &Cyclo) -> Option<Cyclo> {
        if a.is_zero() {
            return None;
        }
        // solve (multiplication-by-a matrix) z = e_0 by Gauss-Jordan over Q
        let d = self.degree();
        let cols: Vec<Cyclo> = (0..d)
            .map(|j| self.mul(a, &self.omega_pow(j as i64)))
            .collect();
        let mut m: Vec<Vec<BigRational>> = (0..d)
            .map(|i| {
                let mut row: Vec<BigRational> = cols.iter().map(|c| c.c[i].clone()).collect();
                row.push(if i == 0 { BigRational::one() } else { BigRational::zero() });
                row
            })
            .collect();
        for c in 0..d {
            let piv = (c..d).find(|&r| !m[r][c].is_zero())?;
            m.swap(c, piv);
            let inv = BigRational::one() / &m[c][c];
            for v in m[c].iter_mut() {
                *v *= &inv;
            }
            for r in 0..d {
                if r != c && !m[r][c].is_zero() {
                    let f = m[r][c].clone();
                    for j in c..=d {
                        let t = &m[c][j] * &f;
                        m[r][j] -= t;
                    }
                }
            }
        }
        Some(Cyclo {
            c: m.into_iter().map(|mut row| row.pop().unwrap()).collect(),
        })
    }

    pub fn to_complex(&self, a: &Cyclo) -> C64 {
        let w = PI / self.k as f64;
        a.c.iter()
            .enumerate()
            .map(|(i, q)| C64::from_polar(q.to_f64().unwrap_or(f64::NAN), w * i as f64))
            .sum()
    }

    /// Largest absolute coefficient, as a float; handy for normalizing.
    pub fn max_abs(&self, a: &Cyclo) -> f64 {
        a.c.iter()
            .map(|q| q.abs().to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }
}
