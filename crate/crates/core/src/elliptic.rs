//! Jacobi theta functions with derivatives, the model bracket, and a catalogue
//! of classical identities used as numerical self-checks.

use crate::error::{Error, Result};
use crate::linalg;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const I: C = C { re: 0.0, im: 1.0 };

const REL_CUT: f64 = 1e-18;
const MAX_TERMS: usize = 10_000;

/// Value together with first and second derivative in one complex variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: C,
    pub d1: C,
    pub d2: C,
}

impl Jet {
    pub fn constant(v: C) -> Self {
        Jet { v, d1: C::new(0.0, 0.0), d2: C::new(0.0, 0.0) }
    }
    pub fn var(v: C) -> Self {
        Jet { v, d1: C::new(1.0, 0.0), d2: C::new(0.0, 0.0) }
    }
    pub fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, d1: self.d1 + o.d1, d2: self.d2 + o.d2 }
    }
    pub fn add_c(self, c: C) -> Jet {
        Jet { v: self.v + c, ..self }
    }
    pub fn scale(self, c: C) -> Jet {
        Jet { v: self.v * c, d1: self.d1 * c, d2: self.d2 * c }
    }
    pub fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            d1: self.d1 * o.v + self.v * o.d1,
            d2: self.d2 * o.v + 2.0 * self.d1 * o.d1 + self.v * o.d2,
        }
    }
    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        Jet { v: e, d1: self.d1 * e, d2: (self.d2 + self.d1 * self.d1) * e }
    }
    fn order(&self, k: u8) -> C {
        match k {
            0 => self.v,
            1 => self.d1,
            _ => self.d2,
        }
    }
}

fn check_tau(tau: C) -> Result<()> {
    if !(tau.im > 0.0) || !tau.re.is_finite() {
        return Err(Error::Domain(format!("theta series needs Im tau > 0, got {tau}")));
    }
    Ok(())
}

/// θ_kind^{(order)}(z; τ). Kinds 1..4, derivative orders 0..2 in z.
pub fn theta(kind: u8, order: u8, z: C, tau: C) -> Result<C> {
    if !(1..=4).contains(&kind) || order > 2 {
        return Err(Error::Invalid(format!("theta kind {kind} order {order}")));
    }
    check_tau(tau)?;
    Ok(theta_jet(kind, Jet::var(z), tau).order(order))
}

/// Same as [`theta`] for callers that already validated `tau`.
pub fn th(kind: u8, order: u8, z: C, tau: C) -> C {
    debug_assert!(tau.im > 0.0);
    theta_jet(kind, Jet::var(z), tau).order(order)
}

pub fn th1(z: C, tau: C) -> C {
    th(1, 0, z, tau)
}

pub fn th1p(z: C, tau: C) -> C {
    th(1, 1, z, tau)
}

/// Logarithmic derivative θ1'(z)/θ1(z).
pub fn th1_logd(z: C, tau: C) -> C {
    let j = theta_jet(1, Jet::var(z), tau);
    j.d1 / j.v
}

/// Theta function of a jet argument. The modulus is first brought into the
/// fundamental domain so that the series converges fast even when Im τ is
/// small.
pub fn theta_jet(kind: u8, z: Jet, tau: C) -> Jet {
    let m = tau.re.round();
    let t0 = tau - m;
    let mi = m as i64;
    let (k2, phase) = match kind {
        1 | 2 => (kind, (I * PI * m / 4.0).exp()),
        3 => (if mi.rem_euclid(2) == 1 { 4 } else { 3 }, C::new(1.0, 0.0)),
        _ => (if mi.rem_euclid(2) == 1 { 3 } else { 4 }, C::new(1.0, 0.0)),
    };
    let val = if t0.norm() < 1.0 - 1e-12 {
        // integer shifts first, otherwise the Gaussian below can underflow
        // against an overflowing series factor
        let a = (z.v.re + 0.5).floor();
        if a != 0.0 {
            let sign = if matches!(k2, 1 | 2) && (a as i64).rem_euclid(2) == 1 { -1.0 } else { 1.0 };
            return theta_jet(kind, z.add_c(C::new(-a, 0.0)), tau).scale(C::new(sign, 0.0));
        }
        // Jacobi's imaginary transformation
        let tt = -1.0 / t0;
        let zz = z.scale(-1.0 / t0);
        let pre = (-I * t0).powf(-0.5);
        let gauss = z.mul(z).scale(-I * PI / t0).exp();
        let (k3, extra) = match k2 {
            1 => (1, -I),
            2 => (4, C::new(1.0, 0.0)),
            3 => (3, C::new(1.0, 0.0)),
            _ => (2, C::new(1.0, 0.0)),
        };
        theta_jet(k3, zz, tt).mul(gauss).scale(pre * extra)
    } else {
        series(k2, z, t0)
    };
    val.scale(phase)
}

fn series(kind: u8, z: Jet, tau: C) -> Jet {
    let b = (z.v.im / tau.im).round();
    let a = (z.v - b * tau).re.round();
    let z0 = z.add_c(-C::new(a, 0.0) - b * tau);
    let ai = a as i64;
    let bi = b as i64;
    let mut sign = 1.0;
    if matches!(kind, 1 | 2) && ai.rem_euclid(2) == 1 {
        sign = -sign;
    }
    if matches!(kind, 1 | 4) && bi.rem_euclid(2) == 1 {
        sign = -sign;
    }
    let factor = z0
        .scale(C::new(0.0, -2.0 * PI * b))
        .add_c(-I * PI * b * b * tau)
        .exp()
        .scale(C::new(sign, 0.0));

    let half = matches!(kind, 1 | 2);
    let alt = matches!(kind, 1 | 4);
    let zv = z0.v;
    let mut s = [C::new(0.0, 0.0); 3];
    let mut maxterm = 0.0f64;
    let add = |k: i64, s: &mut [C; 3]| -> f64 {
        let nu = if half { k as f64 + 0.5 } else { k as f64 };
        let e = (I * PI * tau * nu * nu + 2.0 * PI * I * nu * zv).exp();
        let c = if alt && k.rem_euclid(2) == 1 { -e } else { e };
        let w = 2.0 * PI * I * nu;
        s[0] += c;
        s[1] += c * w;
        s[2] += c * w * w;
        c.norm() * (1.0 + nu.abs()).powi(2)
    };
    maxterm = maxterm.max(add(0, &mut s));
    if half {
        maxterm = maxterm.max(add(-1, &mut s));
    }
    let mut k = 1i64;
    loop {
        let up = add(k, &mut s);
        let lo_k = if half { -1 - k } else { -k };
        let lo = add(lo_k, &mut s);
        maxterm = maxterm.max(up).max(lo);
        if (up.max(lo) < REL_CUT * maxterm && k > 2) || 2 * k as usize > MAX_TERMS {
            break;
        }
        k += 1;
    }
    if kind == 1 {
        for x in s.iter_mut() {
            *x *= -I;
        }
    }
    let inner = Jet {
        v: s[0],
        d1: s[1] * z0.d1,
        d2: s[2] * z0.d1 * z0.d1 + s[1] * z0.d2,
    };
    inner.mul(factor)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Model parameters: modulus, the coprime pair (r, L) and the global height shift.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ModelParams {
    pub tau: C,
    pub r: i64,
    pub l: i64,
    pub s0: C,
}

impl ModelParams {
    pub fn new(tau: C, r: i64, l: i64, s0: C) -> Result<Self> {
        check_tau(tau)?;
        if !(0 < r && r < l) || gcd(r, l) != 1 {
            return Err(Error::Invalid(format!("need 0<r<L coprime, got r={r} L={l}")));
        }
        let p = ModelParams { tau, r, l, s0 };
        // [s0+j] = 0 exactly when η(s0+j) sits on the lattice Z + τZ; the
        // value itself can be tiny at small Im τ without vanishing
        for j in 0..l {
            let z = p.eta() * (s0 + j as f64);
            let b = (z.im / tau.im).round();
            let w = z - b * tau;
            if (w - w.re.round()).norm() < 1e-10 || !p.bracket(s0 + j as f64).is_finite() {
                return Err(Error::Pole(format!("[s0+{j}] vanishes")));
            }
        }
        Ok(p)
    }

    /// Physical shift s0 = τ/(2η) used to match the flat configurations.
    pub fn physical_s0(tau: C, r: i64, l: i64) -> C {
        tau * (l as f64) / (2.0 * r as f64)
    }

    pub fn eta(&self) -> f64 {
        self.r as f64 / self.l as f64
    }
    pub fn q(&self) -> C {
        (2.0 * PI * I * self.eta()).exp()
    }
    pub fn eta_t(&self) -> C {
        -self.eta() / self.tau
    }
    pub fn tau_t(&self) -> C {
        -1.0 / self.tau
    }
    pub fn s0_t(&self) -> C {
        self.s0 + 1.0 / (2.0 * self.eta_t())
    }
    /// s̃ = s − τ/(2η).
    pub fn s_tilde(&self, s: C) -> C {
        s - self.tau / (2.0 * self.eta())
    }
    /// Heights s0 + a, a = 0..L-1.
    pub fn heights(&self) -> Vec<C> {
        (0..self.l).map(|a| self.s0 + a as f64).collect()
    }

    /// [u] = θ1(ηu; τ).
    pub fn bracket(&self, u: C) -> C {
        th1(self.eta() * u, self.tau)
    }
    /// [u]' = η θ1'(ηu; τ).
    pub fn bracket_d(&self, u: C) -> C {
        self.eta() * th1p(self.eta() * u, self.tau)
    }
    /// Logarithmic derivative [u]'/[u].
    pub fn bracket_logd(&self, u: C) -> C {
        self.eta() * th1_logd(self.eta() * u, self.tau)
    }
    pub fn bracket_order(&self, u: C, order: u8) -> Result<C> {
        match order {
            0 => Ok(self.bracket(u)),
            1 => Ok(self.bracket_d(u)),
            _ => Err(Error::Invalid(format!("bracket order {order}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub enum Identity {
    /// inputs: z, τ
    Periods { kind: u8 },
    /// inputs: z, τ
    Jacobi { kind: u8 },
    /// inputs: x, y, τ
    Schroter { l: i64, r: i64 },
    /// inputs: x, y, τ
    IdSum1 { n: i64, k: i64 },
    /// inputs: x, y, τ
    IdSum2 { n: i64 },
    /// inputs: t, τ, x_1..x_n, y_1..y_n
    Frobenius,
}

fn rel(lhs: C, rhs: C) -> f64 {
    (lhs - rhs).norm() / lhs.norm().max(1.0)
}

/// |LHS − RHS| / max(1, |LHS|) for one of the catalogued identities.
pub fn identity_residual(id: Identity, inputs: &[C]) -> Result<f64> {
    let need = |n: usize| -> Result<()> {
        if inputs.len() < n {
            Err(Error::Invalid(format!("{id:?} needs {n} inputs")))
        } else {
            Ok(())
        }
    };
    match id {
        Identity::Periods { kind } => {
            need(2)?;
            let (z, tau) = (inputs[0], inputs[1]);
            let t = theta(kind, 0, z, tau)?;
            let s1 = if kind <= 2 { -1.0 } else { 1.0 };
            let st = if kind == 1 || kind == 4 { -1.0 } else { 1.0 };
            let r1 = rel(theta(kind, 0, z + 1.0, tau)?, s1 * t);
            let f = st * (-I * PI * tau - 2.0 * PI * I * z).exp();
            let r2 = rel(theta(kind, 0, z + tau, tau)?, f * t);
            Ok(r1.max(r2))
        }
        Identity::Jacobi { kind } => {
            need(2)?;
            let (z, tau) = (inputs[0], inputs[1]);
            check_tau(tau)?;
            let lhs = direct_series(kind, z, tau);
            let pre = (-I * tau).powf(-0.5) * (-I * PI * z * z / tau).exp();
            let zt = -z / tau;
            let tt = -1.0 / tau;
            let rhs = match kind {
                1 => -I * pre * direct_series(1, zt, tt),
                2 => pre * direct_series(4, zt, tt),
                3 => pre * direct_series(3, zt, tt),
                _ => pre * direct_series(2, zt, tt),
            };
            Ok(rel(lhs, rhs))
        }
        Identity::Schroter { l, r } => {
            need(3)?;
            let (x, y, tau) = (inputs[0], inputs[1], inputs[2]);
            let (lf, rf) = (l as f64, r as f64);
            let lhs = theta(3, 0, x, rf / lf * tau)? * theta(3, 0, y, (lf - rf) / lf * tau)?;
            let mut rhs = C::new(0.0, 0.0);
            for k in 0..l {
                let kf = k as f64;
                rhs += (I * PI * rf / lf * tau * kf * kf + 2.0 * PI * I * kf * x).exp()
                    * theta(3, 0, x - y + rf * kf / lf * tau, tau)?
                    * theta(
                        3,
                        0,
                        (lf - rf) * x + rf * y + rf * (lf - rf) * kf / lf * tau,
                        rf * (lf - rf) * tau,
                    )?;
            }
            Ok(rel(lhs, rhs))
        }
        Identity::IdSum1 { n, k } => {
            need(3)?;
            let (x, y, tau) = (inputs[0], inputs[1], inputs[2]);
            let nf = n as f64;
            let kf = k as f64;
            let d0 = theta(1, 1, C::new(0.0, 0.0), tau)?;
            let mut lhs = C::new(0.0, 0.0);
            for nu in 0..n {
                let s = nu as f64 / nf;
                lhs += (-2.0 * PI * I * kf * s).exp() * theta(1, 0, x + y + s, tau)? * d0
                    / (theta(1, 0, x, tau)? * theta(1, 0, y + s, tau)?);
            }
            lhs /= nf;
            let nt = nf * tau;
            let rhs = (2.0 * PI * I * kf * y).exp() * theta(1, 0, x + nf * y + kf * tau, nt)?
                * theta(1, 1, C::new(0.0, 0.0), nt)?
                / (theta(1, 0, x + kf * tau, nt)? * theta(1, 0, nf * y, nt)?);
            Ok(rel(lhs, rhs))
        }
        Identity::IdSum2 { n } => {
            need(3)?;
            let (x, y, tau) = (inputs[0], inputs[1], inputs[2]);
            let nf = n as f64;
            let d0 = theta(1, 1, C::new(0.0, 0.0), tau)?;
            let mut lhs = C::new(0.0, 0.0);
            for nu in 0..n {
                let s = nu as f64 / nf;
                lhs += (2.0 * PI * I * s * x).exp() * theta(1, 0, x + y + s * tau, tau)? * d0
                    / (theta(1, 0, x, tau)? * theta(1, 0, y + s * tau, tau)?);
            }
            let tn = tau / nf;
            let rhs = theta(1, 0, x / nf + y, tn)? * theta(1, 1, C::new(0.0, 0.0), tn)?
                / (theta(1, 0, x / nf, tn)? * theta(1, 0, y, tn)?);
            Ok(rel(lhs, rhs))
        }
        Identity::Frobenius => {
            need(4)?;
            let (t, tau) = (inputs[0], inputs[1]);
            let rest = &inputs[2..];
            if rest.len() % 2 != 0 {
                return Err(Error::Invalid("Frobenius needs equally many x and y".into()));
            }
            let n = rest.len() / 2;
            let (xs, ys) = rest.split_at(n);
            let t1 = |z: C| theta(1, 0, z, tau);
            let mut m = linalg::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let d = xs[i] - ys[j];
                    m[(i, j)] = t1(d + t)? / (t1(d)? * t1(t)?);
                }
            }
            let lhs = linalg::det(&m);
            let sum: C = xs.iter().zip(ys).map(|(x, y)| x - y).sum();
            let mut rhs = t1(sum + t)? / t1(t)?;
            for i in 0..n {
                for j in 0..n {
                    if i < j {
                        rhs *= t1(xs[i] - xs[j])? * t1(ys[j] - ys[i])?;
                    }
                    rhs /= t1(xs[i] - ys[j])?;
                }
            }
            Ok(rel(lhs, rhs))
        }
    }
}

/// Plain truncated series without any argument or modulus reduction. Used
/// as an independent check of the reduced evaluation.
pub fn direct_series(kind: u8, z: C, tau: C) -> C {
    let half = matches!(kind, 1 | 2);
    let alt = matches!(kind, 1 | 4);
    let mut s = C::new(0.0, 0.0);
    let kmax = ((40.0 / tau.im).sqrt() as i64 + (z.im.abs() / tau.im) as i64 + 8).min(5000);
    for k in -kmax..=kmax {
        let nu = if half { k as f64 + 0.5 } else { k as f64 };
        let e = (I * PI * tau * nu * nu + 2.0 * PI * I * nu * z).exp();
        s += if alt && k.rem_euclid(2) == 1 { -e } else { e };
    }
    if kind == 1 {
        -I * s
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta1_odd_and_zero() {
        let tau = C::new(0.1, 0.8);
        assert!(th1(C::new(0.0, 0.0), tau).norm() < 1e-15);
        let z = C::new(0.31, -0.12);
        assert!((th1(-z, tau) + th1(z, tau)).norm() < 1e-14);
    }

    #[test]
    fn reduced_matches_direct() {
        for &tau in &[C::new(0.0, 0.9), C::new(0.3, 0.4), C::new(-1.7, 0.25), C::new(0.0, 0.05)] {
            for k in 1..=4u8 {
                let z = C::new(0.37, 0.11 * tau.im);
                let a = th(k, 0, z, tau);
                let b = direct_series(k, z, tau);
                assert!((a - b).norm() < 1e-12 * b.norm().max(1.0), "kind {k} tau {tau}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn theta3_against_fifty_terms() {
        let tau = C::new(0.0, 0.9);
        let z = C::new(0.2, 0.0);
        let mut s = C::new(0.0, 0.0);
        for k in -50i32..=50 {
            let kf = k as f64;
            s += (I * PI * tau * kf * kf + 2.0 * PI * I * kf * z).exp();
        }
        assert!((th(3, 0, z, tau) - s).norm() < 1e-14);
    }

    #[test]
    fn derivative_finite_difference() {
        let tau = C::new(0.2, 0.7);
        let z = C::new(0.13, 0.05);
        let h = 1e-5;
        for k in 1..=4u8 {
            let fd = (th(k, 0, z + h, tau) - th(k, 0, z - h, tau)) / (2.0 * h);
            assert!((th(k, 1, z, tau) - fd).norm() < 1e-7);
            let fd2 = (th(k, 1, z + h, tau) - th(k, 1, z - h, tau)) / (2.0 * h);
            assert!((th(k, 2, z, tau) - fd2).norm() < 1e-6);
        }
    }

    #[test]
    fn bracket_period() {
        let p = ModelParams::new(C::new(0.0, 0.8), 2, 5, C::new(0.3, 0.2)).unwrap();
        let u = C::new(0.41, 0.07);
        let shifted = p.bracket(u + 5.0 / 2.0);
        assert!((shifted + p.bracket(u)).norm() < 1e-13);
        assert!((p.bracket(C::new(1.0, 0.0)) - th1(C::new(0.4, 0.0), p.tau)).norm() < 1e-15);
    }

    #[test]
    fn rejects_lower_half_plane() {
        assert!(theta(1, 0, C::new(0.1, 0.0), C::new(0.0, -1.0)).is_err());
        assert!(ModelParams::new(C::new(0.0, 1.0), 2, 4, C::new(0.1, 0.1)).is_err());
    }
}
