use std::f64::consts::PI;

use abf::continuum_ff::*;
use abf::lattice_ff::*;
use abf::lhp::*;
use abf::qspecial::*;
use abf::verify::{Check, CriterionReport};
use abf::weights::{weight, HeightQuad};
use abf::{ModelParams, TruncationPolicy, C64};
use proptest::prelude::*;

fn t() -> TruncationPolicy {
    TruncationPolicy::default()
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(b.norm()).max(1.0)
}

fn complex(re: f64, im: f64) -> impl Strategy<Value = C64> {
    (-re..re, -im..im).prop_map(|(a, b)| C64::new(a, b))
}

fn model() -> impl Strategy<Value = ModelParams> {
    (2u32..=6, 0.2f64..0.95).prop_map(|(k, x)| ModelParams::new(k, x).unwrap())
}

fn trace_model() -> impl Strategy<Value = ModelParams> {
    (3u32..=5, 0.4f64..0.9).prop_map(|(k, x)| ModelParams::new(k, x).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn brackets_are_odd_and_quasi_periodic(p in model(), u in complex(3.0, 0.6)) {
        let tr = t();
        let k = p.kf();
        let b = |z: C64| bracket(z, &p, &tr);
        let bs = |z: C64| bracket_star(z, &p, &tr);
        prop_assert!(close(b(-u), -b(u), 1e-10));
        prop_assert!(close(b(u + k + 2.0), -b(u), 1e-10));
        prop_assert!(close(bs(-u), -bs(u), 1e-10));
        prop_assert!(close(bs(u + k), -bs(u), 1e-10));
    }

    #[test]
    fn bracket_positive_on_unit_interval(p in model(), u in 0.001f64..0.999) {
        prop_assert!(bracket(C64::new(u, 0.0), &p, &t()).re > 0.0);
    }

    #[test]
    fn qpoch_stable_when_window_doubles(x in 0.1f64..0.99, z in complex(1.5, 1.5)) {
        let tr = t();
        let a = qpoch(z, &[x], &tr);
        let b = qpoch(z, &[x], &tr.doubled());
        prop_assert!((a - b).norm() <= 10.0 * tr.eps * a.norm().max(1.0));
    }

    #[test]
    fn f_pair_is_even(p in model(), v in complex(2.0, 0.4)) {
        let tr = t();
        let a = f_pair(v, &p, &tr).unwrap();
        let b = f_pair(-v, &p, &tr).unwrap();
        prop_assert!(close(a, b, 1e-13));
    }

    #[test]
    fn non_admissible_faces_are_zero(
        p in model(),
        h in prop::array::uniform4(-1i32..9),
        u in -2.0f64..-0.01,
    ) {
        let q = HeightQuad::new(h[0], h[1], h[2], h[3], u);
        prop_assume!(!q.is_admissible(p.k()));
        prop_assert_eq!(weight(&q, &p, &t()).unwrap(), 0.0);
    }

    #[test]
    fn probabilities_are_nonnegative_and_sum_to_one(
        k in 3u32..=5,
        x in 0.2f64..0.8,
        m in -12i64..12,
    ) {
        let p = ModelParams::new(k, x).unwrap();
        let tr = t();
        let ps: Vec<f64> = (1..=k as i64 + 1).map(|a| one_point_lhp(a, m, &p, &tr).unwrap()).collect();
        prop_assert!(ps.iter().all(|&v| v >= 0.0));
        prop_assert!((ps.iter().sum::<f64>() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn gamma_vanishes_off_parity(
        k in 2u32..=6,
        m in -8i64..8,
        l in 0i64..7,
        y1 in complex(0.3, 0.1),
        y2 in complex(0.3, 0.1),
    ) {
        prop_assume!((l - m).rem_euclid(2) == 1);
        let args = GammaArgs::new(y1, y2, C64::new(0.0, 0.8));
        prop_assert_eq!(indefinite_theta(SectorLabel::new(m, l), &args, k, &t()).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn sector_shift_moves_the_region(
        k in 2u32..=5,
        m in -3i64..3,
        l in 0i64..6,
        y1 in complex(0.3, 0.1),
        y2 in complex(0.3, 0.1),
    ) {
        let ki = k as i64;
        prop_assume!(l <= ki && (l - m).rem_euclid(2) == 0);
        let tau = C64::new(0.1, 0.7);
        let tr = t();
        let g = |m: i64, h: f64, hp: f64| {
            let args = GammaArgs::new(y1, y2, tau).with_regions(h, hp);
            indefinite_theta(SectorLabel::new(m, l), &args, k, &tr).unwrap()
        };
        prop_assert!(close(g(m + 2 * ki, 0.0, 0.0), g(m, 1.0, -1.0), 1e-10));
    }

    #[test]
    fn s_matrix_unitary_and_matches_product_form(k in 3u32..=6, a in 1i64..6, b in 1i64..6, beta in -3.0f64..3.0) {
        let cp = ContinuumParams::new(k).unwrap();
        prop_assume!(a < k as i64 && b < k as i64);
        let z = C64::new(beta, 0.0);
        let s = s_matrix(a, b, z, &cp).unwrap();
        prop_assert!((s * s_matrix(a, b, -z, &cp).unwrap() - 1.0).norm() < 1e-10);
        prop_assert!((s - s_matrix_product_form(a, b, z, &cp).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn masses_are_conjugation_symmetric(k in 2u32..=8, a in 1i64..8, scale in 0.1f64..10.0) {
        let cp = ContinuumParams::new(k).unwrap();
        prop_assume!(a < k as i64);
        let d = mass(a, &cp, scale).unwrap() - mass(k as i64 - a, &cp, scale).unwrap();
        prop_assert!(d.abs() < 1e-13 * scale);
    }

    #[test]
    fn conjugation_is_an_involution(parts in prop::collection::vec(0u32..5, 0..5), extra in 0usize..3) {
        let mut parts = parts;
        parts.sort_unstable_by(|a, b| b.cmp(a));
        let lam = Partition::new(parts.clone()).unwrap();
        let width = parts.first().copied().unwrap_or(0) as usize + extra;
        prop_assert_eq!(lam.conjugate(width).conjugate(parts.len()), lam);
    }

    #[test]
    fn elementary_symmetric_generates_the_product(
        v in prop::collection::vec(complex(1.0, 1.0), 0..6),
        z in complex(1.0, 1.0),
    ) {
        let e = elementary_symmetric(&v);
        let n = v.len();
        let direct: C64 = v.iter().map(|&x| z + x).product();
        let poly: C64 = (0..=n).map(|r| z.powi((n - r) as i32) * e[r]).sum();
        prop_assert!(close(direct, poly, 1e-12));
    }

    #[test]
    fn verify_never_passes_an_exceeded_threshold(
        rs in prop::collection::vec((0.0f64..2.0, 0.5f64..1.5), 1..8),
        nan in any::<bool>(),
    ) {
        let mut checks: Vec<Check> = rs
            .iter()
            .enumerate()
            .map(|(i, &(r, th))| Check { name: format!("c{i}"), residual: r, threshold: th, error: None })
            .collect();
        if nan {
            checks[0].residual = f64::NAN;
        }
        let expect = !nan && rs.iter().all(|&(r, th)| r <= th);
        let report = CriterionReport { id: 1, title: "t".into(), checks, seconds: 0.0 };
        prop_assert_eq!(report.passed(), expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn wick_reordering_costs_the_swap_ratio(
        p in trace_model(),
        vs in prop::array::uniform4(complex(1.2, 0.3)),
        eps in prop::array::uniform4(prop::bool::ANY),
        i in 0usize..3,
    ) {
        let tr = t();
        let sp = [Species::Plus, Species::Minus, Species::Plus, Species::Minus];
        let ins: Vec<Insertion> = (0..4)
            .map(|j| Insertion::new(sp[j], if eps[j] { 1 } else { -1 }, vs[j]))
            .collect();
        let mut swapped = ins.clone();
        swapped.swap(i, i + 1);
        let pair = |a: &Insertion, b: &Insertion| pair_contraction(a, b, &p, &tr, Continuation::Allow);
        let (Ok(w), Ok(ws), Ok(f), Ok(b)) = (
            wick_product(&ins, &p, &tr, Continuation::Allow),
            wick_product(&swapped, &p, &tr, Continuation::Allow),
            pair(&ins[i], &ins[i + 1]),
            pair(&ins[i + 1], &ins[i]),
        ) else {
            return Ok(());
        };
        prop_assert!(close(ws, w * b / f, 1e-9));
    }

    #[test]
    fn wick_rejects_unbalanced_lists(p in trace_model(), n in 1usize..4, v in complex(1.0, 0.3)) {
        let ins: Vec<Insertion> = (0..n)
            .map(|j| Insertion::new(Species::Plus, 1, v + j as f64 * 0.37))
            .collect();
        prop_assert!(wick_product(&ins, &p, &t(), Continuation::Allow).is_err());
    }

    #[test]
    fn hat_q_vanishes_for_even_heights(p in trace_model(), vp in complex(0.5, 0.4)) {
        let tr = t();
        let v = [C64::new(0.0, 0.0)];
        for a in (2..=p.k() as i64 + 1).step_by(2) {
            prop_assert_eq!(hat_q(a, &v, &[vp], HatRoute::Direct, &p, &tr).unwrap(), C64::new(0.0, 0.0));
        }
    }

    #[test]
    fn trace_stable_when_window_doubles(p in trace_model(), v in complex(0.4, 0.2), vp in complex(0.6, 0.3)) {
        let tr = t();
        let a = TraceKernel::new(&[v], &[vp], &p, &tr).and_then(|k| k.q(1, 0));
        let b = TraceKernel::new(&[v], &[vp], &p, &tr.doubled()).and_then(|k| k.q(1, 0));
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a - b).norm() <= 10.0 * tr.eps * a.norm().max(1e-300));
        }
    }

    #[test]
    fn wick_and_closed_form_agree(
        k in 3u32..=5,
        b in -1.5f64..1.5,
        bp in -1.5f64..1.5,
    ) {
        let cp = ContinuumParams::new(k).unwrap();
        let cfg = ContinuumConfig::from_real(&[b], &[bp]).unwrap();
        let tr = t();
        for a in (3..=k as i64 + 1).step_by(2) {
            let w = continuum_ff_wick(a, &cfg, &cp, &tr).unwrap();
            let c = continuum_ff_closed(a, &cfg, &cp, &tr).unwrap();
            prop_assert!(close(w, c, 1e-10));
        }
    }

    #[test]
    fn watson_exchange(k in 3u32..=6, beta in -2.5f64..2.5) {
        prop_assume!(beta.abs() > 1e-3);
        let cp = ContinuumParams::new(k).unwrap();
        let tr = t();
        let z = C64::new(beta, 0.0);
        let f = fmin_1bar1(z, &cp, &tr).unwrap() / fmin_1bar1(-z, &cp, &tr).unwrap();
        prop_assert!(close(f, s_matrix_1bar1(z, &cp).unwrap(), 1e-9));
        let g = fmin_11(z + 2.0 * PI * C64::new(0.0, 1.0), &cp, &tr).unwrap();
        prop_assert!(close(g, fmin_11(-z, &cp, &tr).unwrap(), 1e-9));
    }
}
