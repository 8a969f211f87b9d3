//! Thermodynamic limit: ground-state density, the Fourier toolkit for
//! difference kernels on [−1/2, 1/2], Fredholm determinants, the resolvent
//! S^{(Y)}, the modified one-point probability P̄(s, Z; ε, t) and the
//! multiple-integral multi-point local height probabilities.

use crate::bethe::BetheRootSet;
use crate::elliptic::{th, th1, th1p, ModelParams, I};
use crate::error::{Error, Result};
use crate::lattice::Chain;
use crate::matel::{alpha_sets, AdjacentPath};
use crate::scalar::{a_nu, with_gamma};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Fourier mode cap for all syntheses of this module.
pub const DEFAULT_MODES: usize = 400;
/// Quadrature nodes per integration variable.
pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_TOLERANCE: f64 = 1e-8;
/// Largest number of integration variables handled by tensor quadrature.
pub const MAX_INTEGRALS: usize = 3;
/// Offsets used when lifting a degenerate ζ pair.
pub const PERTURBATION: [f64; 2] = [1e-4, 5e-5];

fn c(x: f64) -> C {
    C::new(x, 0.0)
}
fn zero() -> C {
    C::new(0.0, 0.0)
}
/// e^{2πix}
fn e2(x: C) -> C {
    (2.0 * PI * I * x).exp()
}

/// e^{2πia}/(1 − e^{2πib}), rewritten so that no exponential overflows.
fn frac(a: C, b: C) -> C {
    if b.im >= 0.0 {
        e2(a) / (1.0 - e2(b))
    } else {
        -e2(a - b) / (1.0 - e2(-b))
    }
}

/// Every theta modulus that occurs in the thermodynamic formulas, computed
/// in one place from (τ, r, L).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Moduli {
    pub eta: f64,
    pub tau: C,
    /// τ̃ = −1/τ
    pub tau_t: C,
    /// η̃ = −η/τ
    pub eta_t: C,
    /// τ̃ − η̃ = (1−η)τ̃
    pub tau_minus_eta_t: C,
    /// Lτ, used by a_γ^{(ν)}
    pub l_tau: C,
    /// Lτ/r = −1/η̃
    pub closed_norm: C,
    /// Lτ/(L−r) = −1/(τ̃−η̃)
    pub closed_shift: C,
    /// τ/(r(L−r)), L even
    pub closed_even: C,
    /// τ/(4r(L−r)), L odd
    pub closed_odd: C,
}

impl Moduli {
    pub fn new(p: &ModelParams) -> Self {
        let (r, l) = (p.r as f64, p.l as f64);
        let tau_t = p.tau_t();
        let eta_t = p.eta_t();
        Moduli {
            eta: p.eta(),
            tau: p.tau,
            tau_t,
            eta_t,
            tau_minus_eta_t: tau_t - eta_t,
            l_tau: l * p.tau,
            closed_norm: l * p.tau / r,
            closed_shift: l * p.tau / (l - r),
            closed_even: p.tau / (r * (l - r)),
            closed_odd: p.tau / (4.0 * r * (l - r)),
        }
    }
}

// ---------------------------------------------------------------------------
// density

/// Ground-state root density ρ and its inhomogeneous average ρ_tot.
#[derive(Clone, Debug)]
pub struct Density {
    pub eta_t: C,
    pub tau_t: C,
    /// ξ̃_k = η̃ ξ_k
    pub xi_t: Vec<C>,
}

impl Density {
    pub fn new(chain: &Chain) -> Self {
        let et = chain.p.eta_t();
        Density { eta_t: et, tau_t: chain.p.tau_t(), xi_t: chain.xi.iter().map(|x| x * et).collect() }
    }

    /// ρ_m = 1/(2 cosh(iπmη̃))
    pub fn coefficient(&self, m: i64) -> C {
        let w = I * PI * m as f64 * self.eta_t;
        let w = if w.re < 0.0 { -w } else { w };
        (-w).exp() / (1.0 + (-2.0 * w).exp())
    }

    pub fn rho(&self, z: C) -> C {
        let e = self.eta_t;
        th1p(zero(), e) * th(3, 0, z, e) / (2.0 * PI * th(2, 0, zero(), e) * th(4, 0, z, e))
    }

    pub fn rho_series(&self, z: C, modes: usize) -> C {
        let mut acc = self.coefficient(0);
        for m in 1..=modes as i64 {
            acc += 2.0 * self.coefficient(m) * (2.0 * PI * m as f64 * z).cos();
        }
        acc
    }

    fn shifts(&self) -> impl Iterator<Item = C> + '_ {
        self.xi_t.iter().map(move |x| x - self.eta_t / 2.0)
    }

    pub fn rho_tot(&self, z: C) -> C {
        self.shifts().map(|d| self.rho(z - d)).sum::<C>() / self.xi_t.len() as f64
    }

    /// |ρ_tot + K∗ρ_tot − p0'_tot/2π| at z, with the convolution synthesized
    /// from `modes` Fourier modes per side.
    pub fn lieb_residual(&self, z: f64, modes: usize) -> f64 {
        let n = self.xi_t.len() as f64;
        let k = Kernel::K { eta_t: self.eta_t, tau_t: self.tau_t };
        let mut conv = zero();
        for m in -(modes as i64)..=modes as i64 {
            let phase: C = self.shifts().map(|d| e2(-(m as f64) * d)).sum::<C>() / n;
            let km = kernel_fourier(&k, m).unwrap_or_default();
            conv += km * self.coefficient(m) * phase * e2(c(m as f64 * z));
        }
        let p0 = Kernel::P0Prime { eta_t: self.eta_t, tau_t: self.tau_t };
        let src: C = self.shifts().map(|d| kernel_value(&p0, c(z) - d)).sum::<C>() / n;
        (self.rho_tot(c(z)) + conv - src / (2.0 * PI)).norm()
    }
}

// ---------------------------------------------------------------------------
// kernels

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn f(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// 1-periodic kernels with closed Fourier coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Kernel {
    /// p0'(z), modulus τ̃
    P0Prime { eta_t: C, tau_t: C },
    /// K(z) = ϑ'(z)/2π, modulus τ̃
    K { eta_t: C, tau_t: C },
    /// Θ^{(0)}_{±t}(z; τ)
    Theta0 { t: C, tau: C, sign: Sign },
    /// Θ_{X;±t}(z; τ)
    ThetaX { x: C, t: C, tau: C, sign: Sign },
    /// K_X^{(Y)}(z), modulus τ̃
    KXY { x: C, y: C, eta_t: C, tau_t: C },
    /// t_X^{(Y)}(z, ζ), modulus τ̃
    TXY { x: C, y: C, zeta: C, eta_t: C, tau_t: C },
    /// S^{(Y)}(z − ζ), modulus η̃
    Resolvent { y: C, zeta: C, eta_t: C },
}

fn strip(t: C, tau: C, what: &str) -> Result<()> {
    if t.im > 0.0 && t.im < tau.im {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what}: need 0 < Im {t} < Im {tau}")))
    }
}

fn theta_x_coeff(x: C, t: C, tau: C, sign: Sign, m: f64) -> C {
    let s = sign.f();
    s * frac(s * m * t, s * (x + m * tau))
}

/// Fourier coefficient ∫ f(z) e^{−2πimz} dz over [−1/2, 1/2].
pub fn kernel_fourier(k: &Kernel, m: i64) -> Result<C> {
    let mf = m as f64;
    let am = m.unsigned_abs() as f64;
    Ok(match *k {
        Kernel::P0Prime { eta_t, tau_t } => {
            strip(eta_t / 2.0, tau_t, "p0'")?;
            if m == 0 {
                c(2.0 * PI)
            } else {
                2.0 * PI * (I * PI * am * eta_t).exp() * (1.0 - e2(am * (tau_t - eta_t))) / (1.0 - e2(am * tau_t))
            }
        }
        Kernel::K { eta_t, tau_t } => {
            strip(eta_t, tau_t, "K")?;
            if m == 0 {
                c(1.0)
            } else {
                e2(am * eta_t) * (1.0 - e2(am * (tau_t - 2.0 * eta_t))) / (1.0 - e2(am * tau_t))
            }
        }
        Kernel::Theta0 { t, tau, sign } => {
            strip(t, tau, "Θ^(0)")?;
            let s = sign.f();
            if m == 0 {
                c(s / 2.0)
            } else {
                s * frac(s * mf * t, s * mf * tau)
            }
        }
        Kernel::ThetaX { x, t, tau, sign } => {
            strip(t, tau, "Θ_X")?;
            theta_x_coeff(x, t, tau, sign, mf)
        }
        Kernel::KXY { x, y, eta_t, tau_t } => {
            strip(eta_t, tau_t, "K_X^Y")?;
            frac(y + mf * eta_t, x + mf * tau_t) + frac(-y - mf * eta_t, -(x + mf * tau_t))
        }
        Kernel::TXY { x, y, zeta, eta_t, tau_t } => {
            strip(zeta, eta_t, "t_X^Y")?;
            frac(y + mf * (eta_t - zeta), x + mf * tau_t) + frac(-mf * zeta, -(x + mf * tau_t))
        }
        Kernel::Resolvent { y, zeta, eta_t } => {
            strip(zeta, eta_t, "S^Y")?;
            frac(-mf * zeta, 0.5 - y - mf * eta_t)
        }
    })
}

fn theta_x_value(x: C, t: C, tau: C, z: C) -> C {
    I / (2.0 * PI) * th1p(zero(), tau) * th1(z + x + t, tau) / (th1(x, tau) * th1(z + t, tau))
}

/// Closed-form value of the kernel at z.
pub fn kernel_value(k: &Kernel, z: C) -> C {
    let logd = |w: C, tau: C| crate::elliptic::th1_logd(w, tau);
    match *k {
        Kernel::P0Prime { eta_t, tau_t } => I * (logd(z + eta_t / 2.0, tau_t) - logd(z - eta_t / 2.0, tau_t)),
        Kernel::K { eta_t, tau_t } => I / (2.0 * PI) * (logd(z + eta_t, tau_t) - logd(z - eta_t, tau_t)),
        Kernel::Theta0 { t, tau, sign } => I / (2.0 * PI) * logd(z + sign.f() * t, tau),
        Kernel::ThetaX { x, t, tau, sign } => theta_x_value(x, sign.f() * t, tau, z),
        Kernel::KXY { x, y, eta_t, tau_t } => {
            e2(y) * theta_x_value(x, eta_t, tau_t, z) - e2(-y) * theta_x_value(x, -eta_t, tau_t, z)
        }
        Kernel::TXY { x, y, zeta, eta_t, tau_t } => {
            e2(y) * theta_x_value(x, eta_t - zeta, tau_t, z) - theta_x_value(x, -zeta, tau_t, z)
        }
        Kernel::Resolvent { y, zeta, eta_t } => resolvent_closed(y, z - zeta, eta_t),
    }
}

/// Truncated synthesis Σ_{|m| ≤ modes} f_m e^{2πimz}.
pub fn fourier_synthesis(k: &Kernel, z: C, modes: usize) -> Result<C> {
    let mut acc = zero();
    for m in -(modes as i64)..=modes as i64 {
        acc += kernel_fourier(k, m)? * e2(m as f64 * z);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Fredholm determinants

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Fredholm {
    /// det[1 + K − V0]
    Base,
    /// det[1 + K_X^{(Y)}]
    XY { x: C, y: C },
    /// det[1 + K_X^{(Y)}] / det[1 + K − V0]
    Ratio { x: C, y: C },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FredMode {
    Closed,
    /// eigenvalue product over |m| ≤ M
    Truncated(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FredValue {
    pub value: C,
    /// geometric bound on the relative effect of the dropped factors
    pub tail_bound: f64,
}

fn geometric_tail(next: f64, prev: f64) -> f64 {
    if next == 0.0 {
        return 0.0;
    }
    let rho = (next / prev.max(1e-300)).min(0.999);
    2.0 * next / (1.0 - rho)
}

/// Π_{|m| ≤ M} (1 + f(m)), skipping m = 0 if asked, with a bound on the
/// relative effect of the factors beyond ±M.
fn eigen_product(f: impl Fn(i64) -> C, mm: i64, skip_zero: bool) -> Result<(C, f64)> {
    let mut prod = c(1.0);
    for m in -mm..=mm {
        if skip_zero && m == 0 {
            continue;
        }
        let ev = 1.0 + f(m);
        if ev.norm() < 1e-14 {
            return Err(Error::Pole(format!("operator eigenvalue 1 + c_{m} vanishes")));
        }
        prod *= ev;
    }
    let tail = geometric_tail(f(mm + 1).norm(), f(mm).norm()) + geometric_tail(f(-mm - 1).norm(), f(-mm).norm());
    Ok((prod, tail))
}

pub fn fredholm_det(mo: &Moduli, which: Fredholm, mode: FredMode) -> Result<FredValue> {
    let (et, tt) = (mo.eta_t, mo.tau_t);
    let kk = Kernel::K { eta_t: et, tau_t: tt };
    match (which, mode) {
        (Fredholm::Base, FredMode::Truncated(mm)) => {
            let (v, tail) = eigen_product(|m| kernel_fourier(&kk, m).unwrap_or_default(), mm as i64, true)?;
            Ok(FredValue { value: 2.0 * (1.0 - mo.eta) * v, tail_bound: tail })
        }
        (Fredholm::Base, FredMode::Closed) => {
            let f = |m: f64| (1.0 + e2(m * et)).powi(2) * (1.0 - e2(m * (tt - et))).powi(2) / (1.0 - e2(m * tt)).powi(2) - 1.0;
            let mut prod = c(2.0 * (1.0 - mo.eta));
            for m in 1..=DEFAULT_MODES {
                prod *= 1.0 + f(m as f64);
            }
            let n = DEFAULT_MODES as f64;
            Ok(FredValue { value: prod, tail_bound: geometric_tail(f(n + 1.0).norm(), f(n).norm()) })
        }
        (Fredholm::XY { x, y }, FredMode::Truncated(mm)) => {
            let k = Kernel::KXY { x, y, eta_t: et, tau_t: tt };
            let (v, tail) = eigen_product(|m| kernel_fourier(&k, m).unwrap_or_default(), mm as i64, false)?;
            Ok(FredValue { value: v, tail_bound: tail })
        }
        (Fredholm::XY { x, y }, FredMode::Closed) => {
            let tx = th1(x, tt);
            if tx.norm() < 1e-14 {
                return Err(Error::Pole("θ1(X; τ̃) vanishes".into()));
            }
            let f = |m: f64| (1.0 - e2(m * tt)) / ((1.0 - e2(m * et)) * (1.0 - e2(m * (tt - et)))) - 1.0;
            let mut prod = th1(x - y, mo.tau_minus_eta_t) * th(2, 0, y, et) / tx;
            for m in 1..=DEFAULT_MODES {
                prod *= 1.0 + f(m as f64);
            }
            let n = DEFAULT_MODES as f64;
            Ok(FredValue { value: prod, tail_bound: geometric_tail(f(n + 1.0).norm(), f(n).norm()) })
        }
        (Fredholm::Ratio { x, y }, FredMode::Truncated(mm)) => {
            let a = fredholm_det(mo, Fredholm::XY { x, y }, FredMode::Truncated(mm))?;
            let b = fredholm_det(mo, Fredholm::Base, FredMode::Truncated(mm))?;
            Ok(FredValue { value: a.value / b.value, tail_bound: a.tail_bound + b.tail_bound })
        }
        (Fredholm::Ratio { x, y }, FredMode::Closed) => {
            // X = γ̃ + |x|−|y|, Y = η(γ̃−ν) + |x|−|y|, so X − Y = (1−η)γ̃ + ην
            let tme = mo.tau_minus_eta_t;
            let v = th1(x - y, tme) / th1p(zero(), tme) * th1p(zero(), tt) / th1(x, tt) * th(2, 0, y, et)
                / th(2, 0, zero(), et)
                / (1.0 - mo.eta);
            if !v.is_finite() {
                return Err(Error::Pole("θ1(X; τ̃) vanishes".into()));
            }
            Ok(FredValue { value: v, tail_bound: 0.0 })
        }
    }
}

// ---------------------------------------------------------------------------
// resolvent

fn resolvent_closed(y: C, z: C, eta_t: C) -> C {
    th1p(zero(), eta_t) * th(2, 0, z + y, eta_t) / (2.0 * PI * I * th(2, 0, y, eta_t) * th1(z, eta_t))
}

/// S^{(Y)}(z), the resolvent of the dressed kernel; it depends neither on X
/// nor on τ̃.
pub fn resolvent_s(mo: &Moduli, y: C, z: C) -> Result<C> {
    if th1(z, mo.eta_t).norm() < 1e-14 {
        return Err(Error::Pole(format!("S^(Y) has a pole at z = {z}")));
    }
    let v = resolvent_closed(y, z, mo.eta_t);
    if !v.is_finite() {
        return Err(Error::Pole(format!("θ2(Y; η̃) vanishes at Y = {y}")));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// one-point probability

/// Evaluation route for P̄(s, Z; ε, t).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OnePointMode {
    /// L-term ν-sum with the Fredholm ratio, summed over the ground-state labels
    NuSum,
    /// the same with the ν-sum exchanged against the theta series
    Reorganized,
    /// parity-split theta formulas of modulus τ
    Closed,
}

/// Form of the state-resolved P̄(s, Z; k, ℓ).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KlForm {
    /// with the Fredholm ratio taken from `fredholm_det`
    Fredholm,
    /// with the ratio already reduced to theta functions
    Theta,
    /// with the ν-sum performed
    Reorganized,
}

fn height_offset(p: &ModelParams, s: C) -> Result<i64> {
    let d = s - p.s0;
    let a = d.re.round();
    if (d - a).norm() > 1e-9 {
        return Err(Error::Domain(format!("height {s} is not in s0 + Z")));
    }
    Ok(a as i64)
}

fn label_x(p: &ModelParams, k: i64, ell: i64) -> f64 {
    -((p.l * k + 2 * ell) as f64) / (2.0 * (p.l - p.r) as f64)
}

/// P̄(s, Z; k, ℓ) with k = k_y − k_x and ℓ = ℓ_y − ℓ_x.
pub fn barp_kl(p: &ModelParams, s: C, z: C, k: i64, ell: i64, gamma: C, form: KlForm) -> Result<C> {
    let mo = Moduli::new(p);
    let (et, tt, eta) = (mo.eta_t, mo.tau_t, mo.eta);
    let (l, r) = (p.l as f64, p.r as f64);
    let gt = et * gamma;
    let x = c(label_x(p, k, ell));
    let lab = (p.r * k + 2 * ell) as f64 / (l - r);
    let out = match form {
        KlForm::Fredholm | KlForm::Theta => {
            let q = p.q();
            let mut tot = zero();
            for nu in 0..p.l {
                let nuf = nu as f64;
                let yy = eta * (gt - nuf);
                let dressing = match form {
                    KlForm::Fredholm => {
                        let ratio = fredholm_det(&mo, Fredholm::Ratio { x: gt + x, y: yy + x }, FredMode::Closed)?.value;
                        ratio * th1(x + gt, tt) / th1p(zero(), tt) * th(2, 0, z + x + yy, et) / th(2, 0, x + yy, et)
                            * (1.0 - eta)
                    }
                    _ => {
                        th1((1.0 - eta) * gt + eta * nuf, mo.tau_minus_eta_t) / th1p(zero(), mo.tau_minus_eta_t)
                            * th(2, 0, z + x + yy, et)
                            / th(2, 0, zero(), et)
                    }
                };
                tot += q.powc(nuf * s) * a_nu(p, gamma, nu) * dressing;
            }
            (-I * PI * s * (-lab + 2.0 * eta * gt)).exp() * th1(et * s, tt) / (et * th1(z + x + gt + et * s, tt)) * tot
                / (l - r)
        }
        KlForm::Reorganized => {
            let pre = (I * PI * s * lab).exp() / (l - r) * th1(et * s, tt) * th1p(zero(), tt)
                / (th1(z + x + gt + et * s, tt) * th1p(zero(), mo.tau_minus_eta_t) * th(2, 0, zero(), et) * th1(gt, tt));
            let term = |j: i64| {
                let jf = j as f64;
                (I * PI * et * jf * jf).exp() * e2(jf * (z + x)) * th1(gt + x + z + et * jf, tt) * th1(gt + et * (s - jf), tt)
                    / th1(et * (s - jf), tt)
            };
            let mut tot = term(0);
            let mut j = 1;
            loop {
                let t = term(j) + term(-j);
                tot += t;
                if (t.norm() < 1e-18 * tot.norm() && j > 3) || j > 400 {
                    break;
                }
                j += 1;
            }
            pre * tot
        }
    };
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Pole("non-generic γ in P̄(s, Z; k, ℓ)".into()))
    }
}

/// Coefficient of P̄(s, Z; k, ℓ) in the flat-basis combination.
fn flat_weight(p: &ModelParams, k: i64, ell: i64, eps: i64, t: i64) -> C {
    let sgn = if (k * eps).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    sgn * (-I * PI * (p.r * k + 2 * ell) as f64 / (p.l - p.r) as f64 * (t as f64 + p.s0)).exp()
}

fn check_flat(p: &ModelParams, eps: i64, t: i64) -> Result<()> {
    if !(0..=1).contains(&eps) || !(0..p.l - p.r).contains(&t) {
        return Err(Error::Invalid(format!("(ε,t)=({eps},{t}) out of range")));
    }
    Ok(())
}

/// Modified one-point probability P̄(s, Z; ε, t).
pub fn one_point_barp(p: &ModelParams, s: C, z: C, eps: i64, t: i64, mode: OnePointMode) -> Result<C> {
    check_flat(p, eps, t)?;
    let a = height_offset(p, s)?;
    match mode {
        OnePointMode::Closed => Ok(barp_closed(p, s, z, eps, t, a)),
        OnePointMode::NuSum | OnePointMode::Reorganized => {
            let form = if mode == OnePointMode::NuSum { KlForm::Fredholm } else { KlForm::Reorganized };
            with_gamma(p, |g| {
                let mut tot = zero();
                for k in 0..2 {
                    for ell in 0..p.l - p.r {
                        tot += flat_weight(p, k, ell, eps, t) * barp_kl(p, s, z, k, ell, g, form)?;
                    }
                }
                Ok(tot)
            })
        }
    }
}

fn barp_closed(p: &ModelParams, s: C, z: C, eps: i64, t: i64, a: i64) -> C {
    let mo = Moduli::new(p);
    let (l, r) = (p.l as f64, p.r as f64);
    let tau = p.tau;
    let st = p.s_tilde(s);
    let st0 = p.s_tilde(p.s0) + t as f64;
    let pref = (I * PI * (2.0 * r / l * st * z + (l - r) / r * z * z * tau)).exp();
    let den = l * th(4, 0, zero(), mo.closed_norm) * th(4, 0, r * st0 / (l - r), mo.closed_shift);
    if p.l % 2 == 0 {
        if (eps + t - a).rem_euclid(2) == 1 {
            return zero();
        }
        2.0 * pref * th(4, 0, r * st / l, tau) * th(3, 0, st0 / (l - r) - st / l + z * tau / r, mo.closed_even) / den
    } else {
        let arg = (0.5 - 0.5 / l) * st - (0.5 - 0.5 / (l - r)) * st0 - eps as f64 / 2.0 + z * tau / (2.0 * r);
        pref * th(4, 0, r * st / l, tau) * th(3, 0, arg, mo.closed_odd) / den
    }
}

// ---------------------------------------------------------------------------
// multi-point probabilities

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadOptions {
    /// nodes per integration variable (even)
    pub resolution: usize,
    pub tolerance: f64,
    /// lift degenerate {ξ̃_l, ξ̃_l − η̃} pairs by perturbation
    pub fallback: bool,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions { resolution: DEFAULT_RESOLUTION, tolerance: DEFAULT_TOLERANCE, fallback: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LhpEstimate {
    pub value: C,
    /// |I_M − I_{M/2}| plus a rounding floor
    pub error_estimate: f64,
    pub resolution: usize,
}

/// Integrand data of the multiple integral, split into one-variable and
/// pair factors so that tensor quadrature costs O(M^q) multiplications.
struct Integrand<'a> {
    p: &'a ModelParams,
    mo: Moduli,
    mu: &'a [C],
    /// i_j for each integration variable (1-based)
    ip: Vec<usize>,
    alpha: &'a [i8],
    s: C,
    eps: i64,
    t: i64,
    a: i64,
}

impl Integrand<'_> {
    fn m(&self) -> usize {
        self.mu.len()
    }

    fn pbar(&self, z: C) -> C {
        barp_closed(self.p, self.s, z, self.eps, self.t, self.a)
    }

    /// all factors that involve λ_j alone; `skip` drops 1/θ1(λ_j − μ_k; η̃)
    fn single(&self, j: usize, lam: C, skip: Option<usize>) -> C {
        let (et, tt) = (self.mo.eta_t, self.mo.tau_t);
        let i = self.ip[j];
        let before: f64 = self.alpha[..i - 1].iter().map(|&a| a as f64).sum();
        let sh = et * (self.s + before);
        let mut v = th1(sh + lam - self.mu[i - 1], tt) / th1(sh, tt);
        for k in 0..i - 1 {
            v *= th1(self.mu[k] - lam, tt);
        }
        for k in i..self.m() {
            v *= th1(self.mu[k] - lam + et * self.alpha[i - 1] as f64, tt);
        }
        for k in 0..self.m() {
            if Some(k) != skip {
                v /= th1(lam - self.mu[k], et);
            }
        }
        v
    }

    /// the λ_i, λ_j factor, i < j
    fn pair(&self, d: C) -> C {
        th1(d, self.mo.eta_t) / th1(d + self.mo.eta_t, self.mo.tau_t)
    }

    fn constant(&self) -> C {
        let (et, tt) = (self.mo.eta_t, self.mo.tau_t);
        let m = self.m();
        let n_plus = self.alpha.iter().filter(|&&a| a == 1).count();
        let mut v = if n_plus % 2 == 0 { c(1.0) } else { c(-1.0) };
        v *= (th1p(zero(), et) / (2.0 * PI * I)).powi(m as i32);
        for j in 0..m {
            for k in j + 1..m {
                v *= th1(self.mu[k] - self.mu[j], et) / th1(self.mu[k] - self.mu[j], tt);
            }
        }
        v
    }
}

/// Contour piece of one integration variable.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Piece {
    Segment,
    /// residue at λ_j = μ_k with orientation ±1
    Residue(usize, f64),
}

fn pieces(shifted: &[bool], n_minus: usize, m: usize) -> Vec<Vec<Piece>> {
    (0..m)
        .map(|j| {
            let mut v = vec![Piece::Segment];
            for (k, &sh) in shifted.iter().enumerate() {
                // C− encloses the ξ̃ − η̃ points with index +1, C+ the ξ̃ points with index −1
                if j < n_minus && sh {
                    v.push(Piece::Residue(k, 1.0));
                } else if j >= n_minus && !sh {
                    v.push(Piece::Residue(k, -1.0));
                }
            }
            v
        })
        .collect()
}

/// Sum of all contour combinations at a fixed resolution; also returns the
/// sum of absolute contributions as a rounding scale.
fn integrate(f: &Integrand, shifted: &[bool], n_minus: usize, res: usize) -> (C, f64) {
    let m = f.m();
    let opts = pieces(shifted, n_minus, m);
    let nodes: Vec<C> = (0..res).map(|a| c(-0.5 + (a as f64 + 0.5) / res as f64)).collect();
    let w = 1.0 / res as f64;
    let th1p_e = th1p(zero(), f.mo.eta_t);
    let sum_mu: C = f.mu.iter().sum();
    let pair_tab: Vec<C> = (0..res).map(|d| f.pair(c(d as f64 / res as f64))).collect();
    let base_const = f.constant();

    let mut total = zero();
    let mut scale = 0.0;
    let mut choice = vec![0usize; m];
    loop {
        let sel: Vec<Piece> = (0..m).map(|j| opts[j][choice[j]]).collect();
        let targets: Vec<usize> = sel.iter().filter_map(|p| if let Piece::Residue(k, _) = p { Some(*k) } else { None }).collect();
        let distinct = targets.iter().enumerate().all(|(a, x)| !targets[..a].contains(x));
        if distinct {
            let fixed: Vec<(usize, C, usize, f64)> = sel
                .iter()
                .enumerate()
                .filter_map(|(j, p)| if let Piece::Residue(k, o) = p { Some((j, f.mu[*k], *k, *o)) } else { None })
                .collect();
            let free: Vec<usize> = (0..m).filter(|j| sel[*j] == Piece::Segment).collect();
            let mut k0 = base_const;
            for &(j, lam, k, o) in &fixed {
                k0 *= o * 2.0 * PI * I / th1p_e * f.single(j, lam, Some(k));
            }
            for a in 0..fixed.len() {
                for b in a + 1..fixed.len() {
                    let (ja, la, ..) = fixed[a];
                    let (jb, lb, ..) = fixed[b];
                    k0 *= if ja < jb { f.pair(la - lb) } else { f.pair(lb - la) };
                }
            }
            let fixed_sum: C = fixed.iter().map(|x| x.1).sum();
            let q = free.len();
            // Σλ over free nodes = −q/2 + (Σa + q/2)/M
            let base = c(-(q as f64) / 2.0 + q as f64 / (2.0 * res as f64)) + fixed_sum - sum_mu;
            let ptab: Vec<C> = if q == 0 {
                vec![f.pbar(base)]
            } else {
                (0..res).map(|cc| f.pbar(base + cc as f64 / res as f64)).collect()
            };
            let utab: Vec<Vec<C>> = free
                .iter()
                .map(|&j| {
                    nodes
                        .iter()
                        .map(|&x| {
                            let mut v = f.single(j, x, None);
                            for &(i, lam, ..) in &fixed {
                                v *= if i < j { f.pair(lam - x) } else { f.pair(x - lam) };
                            }
                            v
                        })
                        .collect()
                })
                .collect();
            let pd = |a: usize, b: usize| pair_tab[(a + res - b) % res];
            let (val, abs) = match q {
                0 => (ptab[0], ptab[0].norm()),
                1 => {
                    let mut s = zero();
                    let mut sa = 0.0;
                    for a in 0..res {
                        let t = utab[0][a] * ptab[a];
                        s += t;
                        sa += t.norm();
                    }
                    (s * w, sa * w)
                }
                2 => {
                    let mut s = zero();
                    let mut sa = 0.0;
                    for a in 0..res {
                        let ua = utab[0][a];
                        for b in 0..res {
                            let t = ua * utab[1][b] * pd(a, b) * ptab[(a + b) % res];
                            s += t;
                            sa += t.norm();
                        }
                    }
                    (s * w * w, sa * w * w)
                }
                _ => {
                    let mut s = zero();
                    let mut sa = 0.0;
                    for a in 0..res {
                        for b in 0..res {
                            let uab = utab[0][a] * utab[1][b] * pd(a, b);
                            for cc in 0..res {
                                let t = uab * utab[2][cc] * pd(a, cc) * pd(b, cc) * ptab[(a + b + cc) % res];
                                s += t;
                                sa += t.norm();
                            }
                        }
                    }
                    (s * w * w * w, sa * w * w * w)
                }
            };
            total += k0 * val;
            scale += k0.norm() * abs;
        }
        // next combination
        let mut j = 0;
        loop {
            if j == m {
                return (total, scale);
            }
            choice[j] += 1;
            if choice[j] < opts[j].len() {
                break;
            }
            choice[j] = 0;
            j += 1;
        }
    }
}

/// Points of {ζ̃} whose differences hit ±η̃.
fn degenerate_pairs(mu: &[C], eta_t: C) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for a in 0..mu.len() {
        for b in 0..mu.len() {
            if a != b && (mu[a] - mu[b] - eta_t).norm() < 1e-9 {
                out.push((a, b));
            }
        }
    }
    out
}

fn estimate(f: &Integrand, shifted: &[bool], n_minus: usize, res: usize) -> (C, f64) {
    let (v1, s1) = integrate(f, shifted, n_minus, res);
    if f.m() == 0 {
        return (v1, 1e-15 * s1);
    }
    let (v2, _) = integrate(f, shifted, n_minus, res / 2);
    (v1, (v1 - v2).norm() + 1e-13 * s1)
}

/// Thermodynamic multi-point local height probability along `path`, with
/// ζ_k taken from the line parameters `xi`.
pub fn multipoint_lhp(p: &ModelParams, xi: &[C], path: &AdjacentPath, eps: i64, t: i64, opts: &QuadOptions) -> Result<LhpEstimate> {
    check_flat(p, eps, t)?;
    if path.vertices.is_empty() || path.vertices[0] != (1, 1) || path.heights.len() != path.vertices.len() {
        return Err(Error::Invalid("path must start at (1,1) with one height per vertex".into()));
    }
    let alpha = path.alpha()?;
    let refs = path.zeta_refs()?;
    let m = alpha.len();
    if m > MAX_INTEGRALS {
        return Err(Error::Size(format!("m = {m} integrals exceeds the tensor-quadrature limit {MAX_INTEGRALS}")));
    }
    if opts.resolution < 4 || opts.resolution % 2 != 0 {
        return Err(Error::Invalid(format!("resolution {} must be even and at least 4", opts.resolution)));
    }
    for r in &refs {
        if r.site == 0 || r.site > xi.len() {
            return Err(Error::Invalid(format!("ζ refers to site {} outside the chain", r.site)));
        }
    }
    for a in 0..refs.len() {
        for b in a + 1..refs.len() {
            if refs[a] == refs[b] {
                return Err(Error::Degenerate(format!("ζ_{} and ζ_{} coincide", a + 1, b + 1)));
            }
        }
    }
    let mo = Moduli::new(p);
    let s = p.s0 + path.heights[0] as f64;
    let a = height_offset(p, s)?;
    let mu: Vec<C> = refs.iter().map(|r| r.value(xi) * mo.eta_t).collect();
    let shifted: Vec<bool> = refs.iter().map(|r| r.shifted).collect();
    let (ip, n_minus) = alpha_sets(&alpha);
    let build = |mu: &[C]| -> (C, f64) {
        let f = Integrand { p, mo, mu, ip: ip.clone(), alpha: &alpha, s, eps, t, a };
        estimate(&f, &shifted, n_minus, opts.resolution)
    };
    // members of {ξ̃_l, ξ̃_l − η̃} pairs and repeated ζ̃ values (the
    // homogeneous limit) are both removable singularities; they are moved
    // off by multiples of δ
    let mut weight = vec![0.0; m];
    for &(_, lo) in &degenerate_pairs(&mu, mo.eta_t) {
        weight[lo] += 1.0;
    }
    for b in 0..m {
        weight[b] += (0..b).filter(|&a| (mu[a] - mu[b]).norm() < 1e-9).count() as f64;
    }
    let (value, err) = if weight.iter().all(|&w| w == 0.0) {
        build(&mu)
    } else if !opts.fallback {
        return Err(Error::Degenerate(
            "{ξ̃_l, ξ̃_l − η̃} pair or repeated value among the ζ̃; enable the perturbation fallback".into(),
        ));
    } else {
        let lift = |d: f64| {
            let mm: Vec<C> = mu.iter().zip(&weight).map(|(x, w)| x + w * d).collect();
            build(&mm)
        };
        let (f1, e1) = lift(PERTURBATION[0]);
        let (f2, e2_) = lift(PERTURBATION[1]);
        (2.0 * f2 - f1, (f2 - f1).norm() + 2.0 * e2_ + e1)
    };
    if !value.is_finite() {
        return Err(Error::Pole("multi-point integrand is singular at a quadrature node".into()));
    }
    if err > opts.tolerance {
        return Err(Error::Accuracy { estimate: err, tolerance: opts.tolerance });
    }
    Ok(LhpEstimate { value, error_estimate: err, resolution: opts.resolution })
}

// ---------------------------------------------------------------------------
// products over ground-state roots

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroundProduct {
    /// φ(t; {x}, {y})
    PhiT(C),
    /// φ_j({x}, {y}), j 0-based
    PhiZero(usize),
    /// e^{2πi(1−η)(|x|−|y|)}
    IdOmega,
}

/// |x| − |y| from the ground-state labels.
pub fn label_difference(p: &ModelParams, x: &BetheRootSet, y: &BetheRootSet) -> f64 {
    (p.l * (x.k - y.k) + 2 * (x.ell - y.ell)) as f64 / (2.0 * (p.l - p.r) as f64)
}

/// Finite-N product and its thermodynamic value; roots enter as z = η̃v.
pub fn ground_products(chain: &Chain, which: GroundProduct, x: &BetheRootSet, y: &BetheRootSet) -> Result<(C, C)> {
    let p = &chain.p;
    let tt = p.tau_t();
    let (xs, ys) = (x.z(chain), y.z(chain));
    if xs.len() != ys.len() {
        return Err(Error::Invalid("root sets of different sizes".into()));
    }
    let dxy = label_difference(p, x, y);
    match which {
        GroundProduct::PhiT(t) => {
            let fin = xs.iter().zip(&ys).map(|(&a, &b)| th1(a + t, tt) / th1(b + t, tt)).product();
            let kt = (-t.im / tt.im).floor() + 1.0;
            Ok((fin, (I * PI * (2.0 * kt - 1.0) * dxy).exp()))
        }
        GroundProduct::PhiZero(j) => {
            if j >= ys.len() {
                return Err(Error::Invalid(format!("root index {j} out of range")));
            }
            let mut fin: C = xs.iter().map(|&a| th1(ys[j] - a, tt)).product();
            for (l, &b) in ys.iter().enumerate() {
                if l != j {
                    fin /= th1(ys[j] - b, tt);
                }
            }
            let rho = Density::new(chain).rho_tot(ys[j]);
            let th = -th1p(zero(), tt) * (PI * dxy).sin() / (chain.sites() as f64 * PI * rho);
            Ok((fin, th))
        }
        GroundProduct::IdOmega => {
            let d: C = xs.iter().sum::<C>() - ys.iter().sum::<C>();
            let fin = e2((1.0 - p.eta()) * d);
            let n = x.n as i64;
            let om = |ell: i64| (I * PI * (p.r * n + 2 * ell) as f64 / p.l as f64).exp();
            let sgn = if (x.k - y.k).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            Ok((fin, sgn * om(x.ell) / om(y.ell)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        let tau = C::new(0.0, 0.5);
        ModelParams::new(tau, 1, 3, ModelParams::physical_s0(tau, 1, 3)).unwrap()
    }

    #[test]
    fn moduli_relations() {
        let mo = Moduli::new(&params());
        assert!((mo.eta_t - mo.eta * mo.tau_t).norm() < 1e-15);
        assert!((mo.tau_minus_eta_t - (1.0 - mo.eta) * mo.tau_t).norm() < 1e-15);
        assert!((mo.closed_norm + 1.0 / mo.eta_t).norm() < 1e-14);
        assert!((mo.closed_shift + 1.0 / mo.tau_minus_eta_t).norm() < 1e-14);
    }

    fn jacobi(kind_in: u8, kind_out: u8, z: C, tau: C) -> f64 {
        // θ_out(z/τ; −1/τ) = sqrt(−iτ) e^{iπz²/τ} θ_in(z; τ)
        let lhs = th(kind_out, 0, z / tau, -1.0 / tau);
        let rhs = (-I * tau).sqrt() * (I * PI * z * z / tau).exp() * th(kind_in, 0, z, tau);
        (lhs - rhs).norm() / lhs.norm()
    }

    #[test]
    fn closed_moduli_are_jacobi_images() {
        // the closed one-point formulas trade θ2(·; η̃) for θ4(·; Lτ/r) and
        // θ1(·; τ̃ − η̃) for θ4(·; Lτ/(L−r))
        let mo = Moduli::new(&params());
        let z = C::new(0.13, 0.05);
        assert!(jacobi(2, 4, z, mo.eta_t) < 1e-12);
        assert!((-1.0 / mo.eta_t - mo.closed_norm).norm() < 1e-14);
        assert!(jacobi(2, 4, z, mo.tau_minus_eta_t) < 1e-12);
        assert!((-1.0 / mo.tau_minus_eta_t - mo.closed_shift).norm() < 1e-14);
        assert!(jacobi(3, 3, z, mo.closed_even) < 1e-12);
    }

    #[test]
    fn k_kernel_is_two_theta0_pieces() {
        let mo = Moduli::new(&params());
        let k = Kernel::K { eta_t: mo.eta_t, tau_t: mo.tau_t };
        let plus = Kernel::Theta0 { t: mo.eta_t, tau: mo.tau_t, sign: Sign::Plus };
        let minus = Kernel::Theta0 { t: mo.eta_t, tau: mo.tau_t, sign: Sign::Minus };
        for m in -4..=4 {
            let a = kernel_fourier(&k, m).unwrap();
            let b = kernel_fourier(&plus, m).unwrap() - kernel_fourier(&minus, m).unwrap();
            assert!((a - b).norm() < 1e-14, "m={m}");
        }
    }

    #[test]
    fn strip_violation_is_a_domain_error() {
        let k = Kernel::Theta0 { t: C::new(0.1, 2.0), tau: C::new(0.0, 1.0), sign: Sign::Plus };
        assert!(matches!(kernel_fourier(&k, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn resolvent_pole() {
        let mo = Moduli::new(&params());
        assert!(matches!(resolvent_s(&mo, C::new(0.1, 0.0), zero()), Err(Error::Pole(_))));
    }
}
