//! Partial scalar products S_n({u};{v};s), scalar products and norms, by
//! explicit contraction and by the L-term determinant formula.

use crate::bethe::{self, BetheRootSet};
use crate::elliptic::{th1, th1p, ModelParams};
use crate::error::{Error, Result};
use crate::lattice::Chain;
use crate::linalg::{self, Mat};
use num_complex::Complex64 as C;

/// Above this LU pivot ratio a determinant is reported as ill-conditioned.
pub const CONDITION_WARN: f64 = 1e12;

/// Generic default for the free parameter γ.
pub fn default_gamma(p: &ModelParams) -> C {
    C::new(0.2131, 0.0) + 0.1711 * p.tau / p.eta()
}

/// Deterministic sequence of replacement γ values tried after a pole error.
pub fn gamma_draw(p: &ModelParams, attempt: usize) -> C {
    default_gamma(p) + attempt as f64 * C::new(0.0731, 0.0419)
}

/// Evaluate `f` at the default γ, re-drawing γ a few times on pole errors.
pub fn with_gamma<T>(p: &ModelParams, mut f: impl FnMut(C) -> Result<T>) -> Result<T> {
    let mut last = None;
    for attempt in 0..4 {
        match f(gamma_draw(p, attempt)) {
            Err(Error::Pole(msg)) => last = Some(msg),
            other => return other,
        }
    }
    Err(Error::Pole(format!("no generic γ found: {}", last.unwrap_or_default())))
}

pub(crate) fn checked_det(m: &Mat, what: &str) -> Result<C> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Pole(format!("{what} has a non-finite entry; try another γ")));
    }
    let d = linalg::det(m);
    if m.nrows() > 0 && linalg::pivot_ratio(m) > CONDITION_WARN {
        eprintln!("warning: {what} is ill-conditioned (pivot ratio above {CONDITION_WARN:e})");
    }
    Ok(d)
}

pub(crate) fn finite(x: C, what: &str) -> Result<C> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Pole(format!("{what} is singular; try another γ")))
    }
}

#[derive(Clone, Debug)]
pub struct PartialScalarInput {
    pub u: BetheRootSet,
    pub v: Vec<C>,
    /// height index a, s = s0 + a
    pub h: usize,
    pub gamma: C,
}

/// <0| Π C(u_j) δ_s Π B(v_j) |0> by explicit operator application.
pub fn partial_scalar_bruteforce(chain: &Chain, u: &[C], v: &[C], h: usize) -> Result<C> {
    if u.len() != v.len() {
        return Err(Error::Invalid("u and v must have the same length".into()));
    }
    if h >= chain.p.l as usize {
        return Err(Error::Invalid(format!("height index {h} out of range")));
    }
    let right = bethe::b_string(chain, v);
    let left = bethe::c_string(chain, u);
    let w = chain.words();
    Ok((h * w..(h + 1) * w).map(|i| left[i] * right[i]).sum())
}

/// a_γ^{(ν)}(s0), built from theta functions of modulus Lτ.
pub fn a_nu(p: &ModelParams, gamma: C, nu: i64) -> C {
    let lt = p.l as f64 * p.tau;
    let r = p.r as f64;
    let eta = p.eta();
    let zero = C::new(0.0, 0.0);
    eta * th1(r * p.s0 + eta * gamma + nu as f64 * p.tau, lt) * th1p(zero, lt)
        / (th1(r * p.s0, lt) * th1(eta * gamma + nu as f64 * p.tau, lt))
}

/// Ω_γ^{(ν)}({u},ω_u;{v}), with {u} on shell.
pub fn omega_matrix(chain: &Chain, u: &[C], log_omega_u: f64, v: &[C], gamma: C, nu: i64) -> Result<Mat> {
    let p = &chain.p;
    let n = u.len();
    let sign = if (p.r * bethe::aleph(chain, n)?) % 2 == 0 { 1.0 } else { -1.0 };
    let q = p.q();
    let w2 = (C::new(0.0, -2.0 * log_omega_u)).exp();
    let bg = p.bracket(gamma);
    let mut o = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let x = u[i] - v[j];
            let mut p1 = C::new(1.0, 0.0);
            let mut p2 = w2 * chain.d_fn(v[j]);
            for t in 0..n {
                p1 *= p.bracket(u[t] - v[j] + 1.0);
                p2 *= p.bracket(u[t] - v[j] - 1.0);
            }
            let bx = p.bracket(x + gamma) / p.bracket(x);
            o[(i, j)] = sign / bg * (bx - q.powf(-(nu as f64)) * p.bracket(x + gamma + 1.0) / p.bracket(x + 1.0)) * p1
                + (bx - q.powf(nu as f64) * p.bracket(x + gamma - 1.0) / p.bracket(x - 1.0)) / bg * p2;
        }
    }
    Ok(o)
}

/// L-term determinant formula for S_n({u};{v};s).
pub fn partial_scalar_det(chain: &Chain, input: &PartialScalarInput) -> Result<C> {
    let p = &chain.p;
    let u = &input.u.roots;
    let v = &input.v;
    let n = u.len();
    if v.len() != n {
        return Err(Error::Invalid("u and v must have the same length".into()));
    }
    let s = chain.height(input.h);
    let gamma = input.gamma;
    let su: C = u.iter().sum();
    let sv: C = v.iter().sum();
    let zero = C::new(0.0, 0.0);
    let mut pre = p.bracket(gamma) * p.bracket(s) / (p.bracket_d(zero) * p.bracket(su - sv + gamma + s));
    for j in 1..=n {
        pre *= p.bracket(s - j as f64) / p.bracket(s + (j - 1) as f64);
    }
    for &x in u {
        pre *= chain.d_fn(x);
    }
    for j in 0..n {
        for k in j + 1..n {
            pre /= p.bracket(u[j] - u[k]) * p.bracket(v[k] - v[j]);
        }
    }
    let pre = finite(pre, "prefactor of the partial scalar product")?;
    let q = p.q();
    let mut tot = zero;
    for nu in 0..p.l {
        let om = omega_matrix(chain, u, input.u.log_omega, v, gamma, nu)?;
        let a = finite(a_nu(p, gamma, nu), "a_γ^{(ν)}")?;
        tot += q.powc(nu as f64 * s) * a * checked_det(&om, "Ω matrix")?;
    }
    Ok(pre * tot)
}

/// <u|δ_s|v> from the partial scalar product and the φ factors.
pub fn form_factor_delta(chain: &Chain, u: &BetheRootSet, v: &[C], log_omega_v: f64, h: usize, gamma: C) -> Result<C> {
    let n = v.len();
    let s = chain.height(h);
    let sn = partial_scalar_det(chain, &PartialScalarInput { u: u.clone(), v: v.to_vec(), h, gamma })?;
    Ok(bethe::phi_dual(chain, u.log_omega, n, s) * bethe::phi(chain, log_omega_v, n, s) * sn)
}

/// [x]'/[x]
fn lg(p: &ModelParams, x: C) -> C {
    p.bracket_logd(x)
}

/// log'(a/d)(x) = −Σ_l ([x−ξ_l]'/[x−ξ_l] − [x−ξ_l+1]'/[x−ξ_l+1]).
pub fn log_a_over_d_prime(chain: &Chain, x: C) -> C {
    let p = &chain.p;
    -chain.xi.iter().map(|&xi| lg(p, x - xi) - lg(p, x - xi + 1.0)).sum::<C>()
}

pub fn gaudin_matrix(chain: &Chain, u: &[C]) -> Result<Mat> {
    let p = &chain.p;
    let n = u.len();
    let mut m = linalg::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            if j != k && p.bracket(u[j] - u[k]).norm() < 1e-13 {
                return Err(Error::Pole(format!("roots {j} and {k} coincide")));
            }
            m[(j, k)] = -(lg(p, u[j] - u[k] - 1.0) - lg(p, u[j] - u[k] + 1.0));
        }
        let mut dd = log_a_over_d_prime(chain, u[j]);
        for t in 0..n {
            dd += lg(p, u[j] - u[t] - 1.0) - lg(p, u[j] - u[t] + 1.0);
        }
        m[(j, j)] += dd;
    }
    Ok(m)
}

/// <u|u> = ⟨0|ΠC φ̃ ... φ ΠB|0⟩ from the Gaudin determinant.
pub fn norm_det(chain: &Chain, u: &BetheRootSet) -> Result<C> {
    let p = &chain.p;
    let x = &u.roots;
    let n = x.len();
    let zero = C::new(0.0, 0.0);
    let sign = if (n as i64 * p.r * bethe::aleph(chain, n)?) % 2 == 0 { 1.0 } else { -1.0 };
    let mut pre = sign / (-p.bracket_d(zero)).powu(n as u32);
    for &t in x {
        pre *= chain.d_fn(t);
    }
    for j in 0..n {
        for k in 0..n {
            pre *= p.bracket(x[j] - x[k] + 1.0);
            if j != k {
                pre /= p.bracket(x[j] - x[k]);
            }
        }
    }
    let g = gaudin_matrix(chain, x)?;
    Ok(pre * checked_det(&g, "Gaudin matrix")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Entry;

    fn chain(n: usize) -> Chain {
        let tau = C::new(0.1, 0.9);
        let p = ModelParams::new(tau, 1, 3, C::new(0.37, 0.2)).unwrap();
        let xi = [0.5, 0.3, 0.6, 0.45].iter().take(n).map(|&x| C::new(x, 0.05)).collect();
        Chain::new(p, xi).unwrap()
    }

    #[test]
    fn empty_contraction_is_a_delta() {
        let c = chain(2);
        for h in 0..3 {
            assert!((partial_scalar_bruteforce(&c, &[], &[], h).unwrap() - 1.0).norm() < 1e-15);
        }
    }

    #[test]
    fn two_site_contraction_by_enumeration() {
        // <0|C(u) δ_s B(v)|0> expanded over the intermediate basis states.
        let c = chain(2);
        let (u, v) = (C::new(0.21, 0.13), C::new(-0.17, 0.31));
        let b = c.monodromy_dense(Entry::B, v);
        let cm = c.monodromy_dense(Entry::C, u);
        let refs: Vec<usize> = (0..3).map(|h| c.index(h, 0)).collect();
        for h in 0..3 {
            let mut acc = C::new(0.0, 0.0);
            for &i0 in &refs {
                for &j0 in &refs {
                    for w in 0..c.words() {
                        let mid = c.index(h, w);
                        acc += cm[(j0, mid)] * b[(mid, i0)];
                    }
                }
            }
            let bf = partial_scalar_bruteforce(&c, &[u], &[v], h).unwrap();
            assert!((acc - bf).norm() < 1e-13 * (1.0 + bf.norm()));
        }
    }

    #[test]
    fn one_root_gaudin_is_scalar() {
        let c = chain(2);
        let u = [C::new(0.23, 0.1)];
        let g = gaudin_matrix(&c, &u).unwrap();
        // the bracket terms at u_j − u_k = 0 cancel between diagonal and off-diagonal parts
        let direct = log_a_over_d_prime(&c, u[0]);
        assert!((g[(0, 0)] - direct).norm() < 1e-12);
    }
}
