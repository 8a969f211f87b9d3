use csos::bethe;
use csos::lattice::Chain;
use csos::matel::{finite_lhp, normed_ground_states, AdjacentPath, LhpBasis};
use csos::thermo::*;
use csos::scalar::with_gamma;
use csos::{Complex64 as C, Error, ModelParams};
use std::f64::consts::PI;

fn params(tau_im: f64, l: i64) -> ModelParams {
    let tau = C::new(0.0, tau_im);
    ModelParams::new(tau, 1, l, ModelParams::physical_s0(tau, 1, l)).unwrap()
}

fn rel(a: C, b: C) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn quadrature_coefficient(k: &Kernel, m: i64, nodes: usize) -> C {
    (0..nodes)
        .map(|a| {
            let z = -0.5 + (a as f64 + 0.5) / nodes as f64;
            kernel_value(k, C::new(z, 0.0)) * (C::new(0.0, -2.0 * PI * m as f64 * z)).exp()
        })
        .sum::<C>()
        / nodes as f64
}

#[test]
fn fourier_coefficients_match_quadrature() {
    let mo = Moduli::new(&params(0.5, 3));
    let (et, tt) = (mo.eta_t, mo.tau_t);
    let kernels = [
        Kernel::P0Prime { eta_t: et, tau_t: tt },
        Kernel::K { eta_t: et, tau_t: tt },
        Kernel::Theta0 { t: 0.4 * et, tau: tt, sign: Sign::Minus },
        Kernel::ThetaX { x: C::new(0.21, 0.1), t: 0.7 * et, tau: tt, sign: Sign::Plus },
        Kernel::KXY { x: C::new(0.21, 0.1), y: C::new(-0.13, 0.05), eta_t: et, tau_t: tt },
        Kernel::TXY { x: C::new(0.21, 0.1), y: C::new(-0.13, 0.05), zeta: 0.5 * et, eta_t: et, tau_t: tt },
        Kernel::Resolvent { y: C::new(-0.13, 0.05), zeta: 0.5 * et, eta_t: et },
    ];
    for k in &kernels {
        for m in [-3, 0, 1, 3] {
            let a = kernel_fourier(k, m).unwrap();
            let b = quadrature_coefficient(k, m, 256);
            assert!((a - b).norm() < 1e-12, "{k:?} m={m}: {a} vs {b}");
        }
    }
    assert_eq!(kernel_fourier(&kernels[1], 0).unwrap(), C::new(1.0, 0.0));
    assert_eq!(kernel_fourier(&kernels[0], 0).unwrap(), C::new(2.0 * PI, 0.0));
}

#[test]
fn density_solves_the_linear_integral_equation() {
    let p = params(0.5, 3);
    let et = p.eta_t();
    let xi: Vec<C> = [0.0, 0.07, -0.05, 0.02].iter().map(|d| 0.5 + d / et).collect();
    let chain = Chain::new(p, xi).unwrap();
    let d = Density::new(&chain);
    for i in 0..50 {
        let z = -0.5 + i as f64 / 49.0;
        let r = d.lieb_residual(z, DEFAULT_MODES);
        assert!(r < 1e-10, "z={z}: {r:e}");
        assert!((d.rho(C::new(z, 0.0)) - d.rho_series(C::new(z, 0.0), DEFAULT_MODES)).norm() < 1e-12);
    }
    let nodes = 200;
    let integral: C = (0..nodes).map(|a| d.rho(C::new(-0.5 + (a as f64 + 0.5) / nodes as f64, 0.0))).sum::<C>() / nodes as f64;
    assert!((integral - 0.5).norm() < 1e-12);
    assert!((d.coefficient(0) - 0.5).norm() < 1e-15);
}

#[test]
fn fredholm_products_and_closed_forms() {
    // η̃ = 0.4i at η = 1/3
    let tau = C::new(0.0, 1.0 / 1.2);
    let p = ModelParams::new(tau, 1, 3, ModelParams::physical_s0(tau, 1, 3)).unwrap();
    let mo = Moduli::new(&p);
    assert!((mo.eta_t - C::new(0.0, 0.4)).norm() < 1e-14);
    let base_t = fredholm_det(&mo, Fredholm::Base, FredMode::Truncated(200)).unwrap();
    let base_c = fredholm_det(&mo, Fredholm::Base, FredMode::Closed).unwrap();
    assert!(rel(base_t.value, base_c.value) < 1e-10);
    assert!(base_t.tail_bound < 1e-10);
    for (x, y) in [(C::new(0.23, 0.11), C::new(-0.17, 0.04)), (C::new(-0.31, -0.2), C::new(0.4, 0.1))] {
        let t = fredholm_det(&mo, Fredholm::XY { x, y }, FredMode::Truncated(200)).unwrap();
        let cl = fredholm_det(&mo, Fredholm::XY { x, y }, FredMode::Closed).unwrap();
        assert!(rel(t.value, cl.value) < 1e-10, "{} vs {}", t.value, cl.value);
        let ratio = fredholm_det(&mo, Fredholm::Ratio { x, y }, FredMode::Closed).unwrap().value;
        assert!(rel(cl.value / base_c.value, ratio) < 1e-10);
    }
}

#[test]
fn fredholm_base_prefactor_at_vanishing_tail() {
    // deep in the low-temperature direction every product factor tends to 1
    let tau = C::new(0.0, 0.01);
    let p = ModelParams::new(tau, 1, 3, C::new(0.3, 0.0) + 1.5 * tau).unwrap();
    let mo = Moduli::new(&p);
    let v = fredholm_det(&mo, Fredholm::Base, FredMode::Closed).unwrap().value;
    assert!((v - 2.0 * (1.0 - mo.eta)).norm() < 1e-12);
}

#[test]
fn resolvent_residue_equation_and_quasi_periodicity() {
    let mo = Moduli::new(&params(0.5, 3));
    let et = mo.eta_t;
    let y = C::new(0.17, -0.06);
    // 2πi Res_{z=0} S = ∮ S dz on a small circle
    let k = 64;
    let rad = 0.2 * et.norm();
    let mut circ = C::new(0.0, 0.0);
    for j in 0..k {
        let w = C::new(0.0, 2.0 * PI * j as f64 / k as f64).exp();
        circ += resolvent_s(&mo, y, rad * w).unwrap() * C::new(0.0, 1.0) * rad * w * (2.0 * PI / k as f64);
    }
    assert!((circ - 1.0).norm() < 1e-10, "{circ}");
    // S + K_X^Y ∗ S = t_X^Y, convolution by Fourier synthesis
    let x = C::new(0.23, 0.08);
    let zeta = 0.45 * et;
    let kxy = Kernel::KXY { x, y, eta_t: et, tau_t: mo.tau_t };
    let txy = Kernel::TXY { x, y, zeta, eta_t: et, tau_t: mo.tau_t };
    let sk = Kernel::Resolvent { y, zeta, eta_t: et };
    for i in 0..20 {
        let z = C::new(-0.5 + i as f64 / 19.0, 0.0);
        let mut conv = C::new(0.0, 0.0);
        for m in -300..=300i64 {
            conv += kernel_fourier(&kxy, m).unwrap()
                * kernel_fourier(&sk, m).unwrap()
                * C::new(0.0, 2.0 * PI * m as f64 * z.re).exp();
        }
        let lhs = resolvent_s(&mo, y, z - zeta).unwrap() + conv;
        let rhs = kernel_value(&txy, z);
        assert!((lhs - rhs).norm() < 1e-9, "z={z}: {}", (lhs - rhs).norm());
    }
    // S(z − η̃) = −e^{2πiY} S(z)
    for z in [C::new(0.11, 0.2), C::new(-0.3, 0.05)] {
        let a = resolvent_s(&mo, y, z - et).unwrap();
        let b = -(C::new(0.0, 2.0 * PI) * y).exp() * resolvent_s(&mo, y, z).unwrap();
        assert!(rel(a, b) < 1e-12);
    }
}

#[test]
fn one_point_forms_agree() {
    for l in [3, 4] {
        let tau = C::new(0.05, 0.8);
        let p = ModelParams::new(tau, 1, l, C::new(0.31, 0.17)).unwrap();
        for z in [C::new(0.0, 0.0), C::new(0.13, -0.07), C::new(-0.21, 0.11)] {
            for eps in 0..2 {
                for t in 0..l - 1 {
                    for a in 0..l {
                        let s = p.s0 + a as f64;
                        let nu = one_point_barp(&p, s, z, eps, t, OnePointMode::NuSum).unwrap();
                        let re = one_point_barp(&p, s, z, eps, t, OnePointMode::Reorganized).unwrap();
                        let cl = one_point_barp(&p, s, z, eps, t, OnePointMode::Closed).unwrap();
                        let scale = nu.norm().max(1.0);
                        assert!((nu - cl).norm() < 1e-9 * scale, "L={l} Z={z} ({eps},{t},{a}): {nu} vs {cl}");
                        assert!((nu - re).norm() < 1e-9 * scale);
                    }
                }
            }
        }
    }
}

#[test]
fn state_resolved_forms_agree() {
    let tau = C::new(0.05, 0.8);
    let p = ModelParams::new(tau, 1, 3, C::new(0.31, 0.17)).unwrap();
    let g = C::new(0.37, 0.11);
    for (k, ell) in [(0, 0), (1, 1), (1, 0)] {
        for z in [C::new(0.0, 0.0), C::new(0.2, 0.05)] {
            let s = p.s0 + 1.0;
            let a = barp_kl(&p, s, z, k, ell, g, KlForm::Fredholm).unwrap();
            let b = barp_kl(&p, s, z, k, ell, g, KlForm::Theta).unwrap();
            let c = barp_kl(&p, s, z, k, ell, g, KlForm::Reorganized).unwrap();
            assert!(rel(a, b) < 1e-10 && rel(b, c) < 1e-10, "{a} {b} {c}");
        }
    }
}

#[test]
fn parity_forbidden_and_normalization() {
    let p = params(0.7, 4);
    for eps in 0..2 {
        for t in 0..3 {
            let mut tot = C::new(0.0, 0.0);
            for a in 0..4i64 {
                let s = p.s0 + a as f64;
                let v = one_point_barp(&p, s, C::new(0.0, 0.0), eps, t, OnePointMode::Closed).unwrap();
                if (eps + t - a).rem_euclid(2) == 1 {
                    assert_eq!(v, C::new(0.0, 0.0));
                }
                tot += v;
            }
            assert!((tot - 1.0).norm() < 1e-9, "({eps},{t}): {tot}");
        }
    }
}

#[test]
fn ground_products_approach_their_limits() {
    let tau = C::new(0.0, 0.3);
    let mut last_zero = f64::INFINITY;
    for n in [4usize, 6, 8] {
        let p = ModelParams::new(tau, 1, 3, ModelParams::physical_s0(tau, 1, 3)).unwrap();
        let chain = Chain::homogeneous(p, n).unwrap();
        let x = bethe::solve_ground_state_cached(&chain, 0, 0, None).unwrap();
        let y = bethe::solve_ground_state_cached(&chain, 1, 1, None).unwrap();
        let (one, _) = ground_products(&chain, GroundProduct::PhiT(C::new(0.1, 0.3)), &x, &x).unwrap();
        assert_eq!(one, C::new(1.0, 0.0));
        let (f, th) = ground_products(&chain, GroundProduct::IdOmega, &x, &y).unwrap();
        let (ft, tt) = ground_products(&chain, GroundProduct::PhiT(C::new(0.1, 0.3)), &x, &y).unwrap();
        let mut zmax: f64 = 0.0;
        for j in 0..x.n {
            let (a, b) = ground_products(&chain, GroundProduct::PhiZero(j), &x, &y).unwrap();
            zmax = zmax.max(rel(a, b));
        }
        eprintln!("N={n} id_om {:.2e} phi_t {:.2e} phi_zero {:.2e}", (f - th).norm(), (ft - tt).norm(), zmax);
        if n == 8 {
            assert!((f - th).norm() < 1e-4);
            assert!(zmax < 1e-2);
        }
        assert!(zmax < last_zero);
        last_zero = zmax;
    }
}

fn inhomogeneous(p: &ModelParams, n: usize) -> Vec<C> {
    // Im ξ̃ = Im η̃/2 keeps the spectral parameters on the physical line
    let delta = [0.05, -0.04, 0.03];
    (0..n).map(|l| 0.5 + delta.get(l).copied().unwrap_or(0.0) / p.eta_t()).collect()
}

fn finite_flat(p: &ModelParams, n: usize, path: &AdjacentPath, eps: i64, t: i64) -> C {
    let chain = Chain::new(*p, inhomogeneous(p, n)).unwrap();
    let st = normed_ground_states(&chain).unwrap();
    with_gamma(p, |g| finite_lhp(&chain, &st, path, LhpBasis::Flat { eps, t }, g)).unwrap()
}

fn quad(resolution: usize) -> QuadOptions {
    QuadOptions { resolution, tolerance: 1e-9, fallback: false }
}

#[test]
fn multipoint_without_integrals_is_the_one_point_value() {
    let p = params(0.5, 3);
    let xi = inhomogeneous(&p, 4);
    for h in 0..3 {
        let v = multipoint_lhp(&p, &xi, &AdjacentPath::vertical(vec![h]), 1, 0, &quad(64)).unwrap();
        let one = one_point_barp(&p, p.s0 + h as f64, C::new(0.0, 0.0), 1, 0, OnePointMode::Closed).unwrap();
        assert!((v.value - one).norm() < 1e-13);
    }
}

#[test]
fn multipoint_approaches_from_finite_chains() {
    let p = params(0.5, 3);
    let xi = inhomogeneous(&p, 8);
    let sets: [&[Vec<i64>]; 2] = [
        &[vec![0, 1], vec![0, -1], vec![1, 2], vec![2, 1]],
        &[vec![0, 1, 2], vec![0, 1, 0], vec![1, 0, 1], vec![2, 1, 0]],
    ];
    for set in sets {
        let mut last = f64::INFINITY;
        for n in [4, 6, 8] {
            let mut worst: f64 = 0.0;
            for h in set {
                let path = AdjacentPath::vertical(h.clone());
                for (eps, t) in [(0, 0), (1, 1)] {
                    let th = multipoint_lhp(&p, &xi, &path, eps, t, &quad(64)).unwrap();
                    assert!(th.error_estimate < 1e-9);
                    worst = worst.max((finite_flat(&p, n, &path, eps, t) - th.value).norm());
                }
            }
            eprintln!("m={} N={n} worst {worst:.2e}", set[0].len() - 1);
            assert!(worst < last);
            last = worst;
        }
        assert!(last < 1e-3);
    }
}

#[test]
fn multipoint_marginalizes() {
    let p = params(0.5, 3);
    let xi = inhomogeneous(&p, 4);
    let o = quad(32);
    for base in [vec![0i64], vec![0, 1], vec![1, 0, 1]] {
        let short = multipoint_lhp(&p, &xi, &AdjacentPath::vertical(base.clone()), 0, 0, &o).unwrap();
        let mut tot = C::new(0.0, 0.0);
        let mut err = short.error_estimate;
        let last = *base.last().unwrap();
        for d in [-1, 1] {
            let mut h = base.clone();
            h.push(last + d);
            let e = multipoint_lhp(&p, &xi, &AdjacentPath::vertical(h), 0, 0, &o).unwrap();
            tot += e.value;
            err += e.error_estimate;
        }
        assert!((tot - short.value).norm() < 1e-10 + err, "{base:?}: {tot} vs {}", short.value);
    }
}

#[test]
fn quadrature_converges_under_doubling() {
    let p = params(0.5, 3);
    let xi = inhomogeneous(&p, 4);
    let path = AdjacentPath::vertical(vec![0, 1, 0]);
    let run = |m| multipoint_lhp(&p, &xi, &path, 0, 0, &QuadOptions { resolution: m, tolerance: 1.0, fallback: false }).unwrap();
    let (a, b, c) = (run(16), run(32), run(64));
    assert!(a.error_estimate > b.error_estimate);
    assert!((b.value - c.value).norm() <= (a.value - c.value).norm());
    assert!((b.value - c.value).norm() < 1e-9);
    assert_eq!(c.resolution, 64);
}

#[test]
fn degenerate_pairs_and_size_limits() {
    let p = params(0.5, 3);
    let xi = inhomogeneous(&p, 8);
    // down then back up to the first site: ζ = {ξ1, ξ1 − 1}
    let back = |h: Vec<i64>| AdjacentPath { vertices: vec![(1, 1), (2, 1), (1, 1)], heights: h, columns: Vec::new() };
    assert!(matches!(multipoint_lhp(&p, &xi, &back(vec![0, -1, 0]), 0, 0, &quad(64)), Err(Error::Degenerate(_))));
    let fb = QuadOptions { resolution: 64, tolerance: 1e-4, fallback: true };
    // returning to the same vertex fixes the last height
    let two = multipoint_lhp(&p, &xi, &AdjacentPath::vertical(vec![0, 1]), 0, 0, &quad(64)).unwrap();
    let same = multipoint_lhp(&p, &xi, &back(vec![0, 1, 0]), 0, 0, &fb).unwrap();
    assert!((same.value - two.value).norm() < 1e-5 + same.error_estimate);
    let off = multipoint_lhp(&p, &xi, &back(vec![0, 1, 2]), 0, 0, &fb).unwrap();
    assert!(off.value.norm() < 1e-5 + off.error_estimate);
    // and agrees with finite chains where the determinant is regular
    let th = multipoint_lhp(&p, &xi, &back(vec![0, -1, 0]), 0, 0, &fb).unwrap();
    let fin = finite_flat(&p, 8, &back(vec![0, -1, 0]), 0, 0);
    assert!((th.value - fin).norm() < 1e-3);
    let long = AdjacentPath::vertical(vec![0, 1, 0, 1, 0]);
    assert!(matches!(multipoint_lhp(&p, &xi, &long, 0, 0, &quad(8)), Err(Error::Size(_))));
}

#[test]
fn low_temperature_flat_pattern() {
    for l in [3i64, 4] {
        for eps in 0..2 {
            for t in 0..l - 1 {
                for a in 0..l {
                    let mut vals = Vec::new();
                    for ti in [0.05, 0.02, 0.01] {
                        let tau = C::new(0.0, ti);
                        let p = ModelParams::new(tau, 1, l, C::new(0.3, 0.0) + tau * l as f64 / 2.0).unwrap();
                        let v = one_point_barp(&p, p.s0 + a as f64, C::new(0.0, 0.0), eps, t, OnePointMode::Closed).unwrap();
                        assert!(v.im.abs() < 1e-10 && v.re > -1e-10);
                        vals.push(v.re);
                    }
                    let target = vals[2].round();
                    let d: Vec<f64> = vals.iter().map(|v| (v - target).abs()).collect();
                    assert!(d[2] < 1e-10);
                    assert!(d[1] <= d[0] + 1e-13 && d[2] <= d[1] + 1e-13, "L={l} ({eps},{t}) a={a}: {d:?}");
                }
            }
        }
    }
}

#[test]
fn homogeneous_limit_by_perturbation() {
    let p = params(0.5, 3);
    let path = AdjacentPath::vertical(vec![0, 1, 0]);
    let homog = vec![C::new(0.5, 0.0); 4];
    assert!(matches!(multipoint_lhp(&p, &homog, &path, 0, 0, &quad(64)), Err(Error::Degenerate(_))));
    let fb = QuadOptions { resolution: 64, tolerance: 1e-6, fallback: true };
    let lim = multipoint_lhp(&p, &homog, &path, 0, 0, &fb).unwrap();
    // approach along a line of distinct inhomogeneities
    let near = |d: f64| {
        let xi: Vec<C> = (0..4).map(|l| 0.5 + d * l as f64 / p.eta_t()).collect();
        multipoint_lhp(&p, &xi, &path, 0, 0, &quad(64)).unwrap().value
    };
    let (a, b) = (near(2e-3), near(1e-3));
    assert!(((2.0 * b - a) - lim.value).norm() < 1e-7 + lim.error_estimate);
}
