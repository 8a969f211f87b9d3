use csos::elliptic::{identity_residual, theta, Identity};
use csos::lattice::{boltzmann_weight, Chain};
use csos::matel::{alpha_sets, finite_lhp, normed_ground_states, tuples, AdjacentPath, LhpBasis};
use csos::thermo::{one_point_barp, OnePointMode};
use csos::{Complex64 as C, ModelParams};
use proptest::prelude::*;
use std::collections::BTreeSet;

fn cplx(re: f64, im: f64) -> impl Strategy<Value = C> {
    (-re..re, -im..im).prop_map(|(a, b)| C::new(a, b))
}

fn modulus() -> impl Strategy<Value = C> {
    (-0.5..0.5f64, 0.3..2.0f64).prop_map(|(a, b)| C::new(a, b))
}

proptest! {
    #[test]
    fn theta_quasi_periodicity(z in cplx(1.0, 0.4), tau in modulus()) {
        let t = theta(1, 0, z, tau).unwrap();
        let shifted = theta(1, 0, z + tau, tau).unwrap();
        let f = (C::new(0.0, -std::f64::consts::PI) * (tau + 2.0 * z)).exp();
        prop_assert!((shifted + f * t).norm() < 1e-12 * t.norm().max(1.0) * f.norm().max(1.0));
    }

    #[test]
    fn theta_parity_and_jacobi(z in cplx(1.0, 0.4), tau in modulus()) {
        for kind in 1..=4u8 {
            let s = if kind == 1 { -1.0 } else { 1.0 };
            let a = theta(kind, 0, -z, tau).unwrap();
            let b = theta(kind, 0, z, tau).unwrap();
            prop_assert!((a - s * b).norm() < 1e-13 * b.norm().max(1.0));
            let jac = identity_residual(Identity::Jacobi { kind }, &[z, tau]).unwrap();
            prop_assert!(jac < 1e-11, "kind {}: {:e}", kind, jac);
        }
    }

    #[test]
    fn theta_derivative_matches_differences(z in cplx(0.5, 0.3), tau in modulus(), kind in 1..=4u8) {
        let h = 1e-5;
        let fd = (theta(kind, 0, z + h, tau).unwrap() - theta(kind, 0, z - h, tau).unwrap()) / (2.0 * h);
        let d = theta(kind, 1, z, tau).unwrap();
        prop_assert!((d - fd).norm() < 1e-7 * d.norm().max(1.0));
    }

    #[test]
    fn ice_rule(u in cplx(0.5, 0.3), s in cplx(0.5, 0.3), a in 0..4usize, b in 0..4usize) {
        let p = ModelParams::new(C::new(0.1, 0.9), 2, 5, C::new(0.31, 0.13)).unwrap();
        let spin = |k: usize| if k == 0 { 1i8 } else { -1 };
        let input = (spin(a & 1), spin(a >> 1));
        let output = (spin(b & 1), spin(b >> 1));
        let w = boltzmann_weight(&p, u, s, input, output).unwrap();
        if input.0 + input.1 != output.0 + output.1 {
            prop_assert_eq!(w, C::new(0.0, 0.0));
        }
    }

    #[test]
    fn tuple_enumeration_matches_an_independent_generator(n in 0..5usize, signs in proptest::collection::vec(any::<bool>(), 1..4)) {
        let alpha: Vec<i8> = signs.iter().map(|&b| if b { 1 } else { -1 }).collect();
        let (ip, _) = alpha_sets(&alpha);
        let m = ip.len();
        // all m-tuples on the full range, filtered afterwards
        let mut expected = BTreeSet::new();
        let range = n + m;
        let total = range.pow(m as u32);
        for code in 0..total {
            let mut c = code;
            let b: Vec<usize> = (0..m).map(|_| { let d = c % range + 1; c /= range; d }).collect();
            let in_range = b.iter().zip(&ip).all(|(&x, &i)| x <= n + m + 1 - i);
            let distinct = b.iter().collect::<BTreeSet<_>>().len() == m;
            if in_range && distinct {
                expected.insert(b);
            }
        }
        let got: BTreeSet<Vec<usize>> = tuples(n, &ip).into_iter().map(|t| t.b).collect();
        prop_assert_eq!(got, expected);
    }

    #[test]
    fn closed_one_point_values_are_probabilities(ti in 0.05..2.0f64, st in 0.05..0.95f64, which in 0..3usize, eps in 0..2i64, tsel in 0..4i64) {
        let (r, l) = [(1i64, 3i64), (1, 4), (2, 5)][which];
        let tau = C::new(0.0, ti);
        let s0 = C::new(st, 0.0) + tau * l as f64 / (2.0 * r as f64);
        let p = ModelParams::new(tau, r, l, s0).unwrap();
        let t = tsel % (l - r);
        let mut tot = 0.0;
        for a in 0..l {
            let v = one_point_barp(&p, s0 + a as f64, C::new(0.0, 0.0), eps, t, OnePointMode::Closed).unwrap();
            prop_assert!(v.im.abs() < 1e-10 && v.re > -1e-10, "{v}");
            tot += v.re;
        }
        prop_assert!((tot - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn diagonal_one_point_elements_are_real(d in proptest::collection::vec(-0.05..0.05f64, 4), h in 0..3i64) {
        // real inhomogeneity offsets on the physical line, τ purely imaginary
        let tau = C::new(0.0, 0.8);
        let p = ModelParams::new(tau, 1, 3, ModelParams::physical_s0(tau, 1, 3)).unwrap();
        let xi: Vec<C> = d.iter().map(|x| 0.5 + x / p.eta_t()).collect();
        let chain = Chain::new(p, xi).unwrap();
        let st = normed_ground_states(&chain).unwrap();
        let path = AdjacentPath::vertical(vec![h]);
        for s in &st {
            let (k, l) = (s.roots.k, s.roots.ell);
            let v = finite_lhp(&chain, &st, &path, LhpBasis::Bethe { k1: k, l1: l, k2: k, l2: l }, C::new(0.31, 0.17)).unwrap();
            prop_assert!(v.im.abs() < 1e-9 * v.norm().max(1e-300), "{v}");
        }
    }
}
