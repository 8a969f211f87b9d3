//! Bethe equations, the damped Newton solver for the 2(L-r) ground states and
//! the construction of right and left Bethe vectors.

use crate::elliptic::{th1, I};
use crate::error::{Error, Result};
use crate::lattice::{Chain, Entry, State};
use crate::linalg;
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::PathBuf;

pub const CACHE_ENV: &str = "CSOS_CACHE_DIR";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BetheRootSet {
    /// spectral parameters v_j
    pub roots: Vec<C>,
    /// ω = exp(i log_omega); the branch matters for ω^s with complex s
    pub log_omega: f64,
    pub n: usize,
    pub aleph: i64,
    pub k: i64,
    pub ell: i64,
    pub residual: f64,
}

impl BetheRootSet {
    pub fn omega(&self) -> C {
        (I * self.log_omega).exp()
    }
    /// z_j = η̃ v_j
    pub fn z(&self, chain: &Chain) -> Vec<C> {
        let et = chain.p.eta_t();
        self.roots.iter().map(|v| v * et).collect()
    }
    pub fn sum(&self) -> C {
        self.roots.iter().sum()
    }
}

pub fn aleph(chain: &Chain, n: usize) -> Result<i64> {
    let rest = chain.sites() as i64 - 2 * n as i64;
    if rest < 0 || rest % chain.p.l != 0 {
        return Err(Error::Invalid(format!("N - 2n = {rest} is not a non-negative multiple of L")));
    }
    Ok(rest / chain.p.l)
}

fn sign_pow(e: i64) -> f64 {
    if e.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// LHS - RHS of the multiplicative Bethe equations.
pub fn bethe_residual(chain: &Chain, v: &[C], log_omega: f64) -> Result<Vec<C>> {
    let p = &chain.p;
    let n = v.len();
    let al = aleph(chain, n)?;
    let w2 = (-2.0 * I * log_omega).exp();
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        let mut lhs = C::new(1.0, 0.0);
        let mut rhs = sign_pow(p.r * al) * w2 * chain.d_fn(v[j]);
        for l in 0..n {
            if l == j {
                continue;
            }
            let d = p.bracket(v[l] - v[j]);
            if d.norm() < 1e-14 {
                return Err(Error::Degenerate(format!("roots {j} and {l} collide")));
            }
            lhs *= p.bracket(v[l] - v[j] + 1.0) / d;
            rhs *= p.bracket(v[j] - v[l] + 1.0) / p.bracket(v[j] - v[l]);
        }
        out.push(lhs - rhs);
    }
    Ok(out)
}

/// τ(u; {v}, ω).
pub fn eigenvalue_tau(chain: &Chain, v: &[C], log_omega: f64, u: C) -> Result<C> {
    let p = &chain.p;
    let al = aleph(chain, v.len())?;
    let w = (I * log_omega).exp();
    let mut t1 = w;
    let mut t2 = sign_pow(p.r * al) / w * chain.d_fn(u);
    for &x in v {
        let d = p.bracket(x - u);
        if d.norm() < 1e-300 {
            return Err(Error::Pole(format!("u coincides with root {x}")));
        }
        t1 *= p.bracket(x - u + 1.0) / d;
        t2 *= p.bracket(u - x + 1.0) / p.bracket(u - x);
    }
    Ok(t1 + t2)
}

/// Fourier data of the bare momentum and bare phase derivatives (modulus τ̃).
#[derive(Clone, Debug)]
pub struct CountingData {
    /// p'_m / (2π), m >= 1
    pm: Vec<C>,
    /// K_m, m >= 1
    km: Vec<C>,
    pub xi_t: Vec<C>,
    pub xi_bar: C,
    pub eta_t: C,
    pub tau_t: C,
}

fn coeffs(f: impl Fn(f64) -> C) -> Vec<C> {
    let mut out = Vec::new();
    for m in 1..4000 {
        let c = f(m as f64);
        out.push(c);
        if c.norm() < 1e-18 && m > 3 {
            break;
        }
    }
    out
}

impl CountingData {
    pub fn new(chain: &Chain) -> Self {
        let et = chain.p.eta_t();
        let tt = chain.p.tau_t();
        let e = |x: C| (2.0 * PI * I * x).exp();
        let pm = coeffs(|m| (I * PI * m * et).exp() * (1.0 - e(m * (tt - et))) / (1.0 - e(m * tt)));
        let km = coeffs(|m| e(m * et) * (1.0 - e(m * (tt - 2.0 * et))) / (1.0 - e(m * tt)));
        let xi_t: Vec<C> = chain.xi.iter().map(|x| x * et).collect();
        let xi_bar = xi_t.iter().map(|x| et / 2.0 - x).sum();
        CountingData { pm, km, xi_t, xi_bar, eta_t: et, tau_t: tt }
    }

    fn odd_series(c: &[C], z: C) -> (C, C) {
        // 2π (z + Σ c_m sin(2πmz)/(πm)), and its derivative
        let mut f = 2.0 * PI * z;
        let mut df = C::new(2.0 * PI, 0.0);
        for (i, &cm) in c.iter().enumerate() {
            let m = (i + 1) as f64;
            let a = 2.0 * PI * m * z;
            f += 2.0 * cm * a.sin() / m;
            df += 4.0 * PI * cm * a.cos();
        }
        (f, df)
    }

    /// Bare momentum p0 (odd, continuous branch) and its derivative.
    pub fn p0(&self, z: C) -> (C, C) {
        Self::odd_series(&self.pm, z)
    }
    /// Bare phase ϑ and its derivative.
    pub fn theta(&self, z: C) -> (C, C) {
        Self::odd_series(&self.km, z)
    }
    /// N p0_tot(z) and its derivative.
    pub fn p0_total(&self, z: C) -> (C, C) {
        let mut f = C::new(0.0, 0.0);
        let mut df = C::new(0.0, 0.0);
        for &x in &self.xi_t {
            let (a, b) = self.p0(z - x + self.eta_t / 2.0);
            f += a;
            df += b;
        }
        (f, df)
    }
    /// Closed-form p0 from the logarithm, for cross-checks near the origin.
    pub fn p0_log(&self, z: C) -> C {
        I * (th1(self.eta_t / 2.0 + z, self.tau_t) / th1(self.eta_t / 2.0 - z, self.tau_t)).ln()
    }
}

/// LHS - RHS of the logarithmic Bethe equations with n_j = j + k.
pub fn log_bethe_residual(chain: &Chain, cd: &CountingData, z: &[C], k: i64, ell: i64) -> Vec<C> {
    let n = z.len();
    let eta = chain.p.eta();
    let c = (chain.p.r * n as i64 + 2 * ell) as f64 / chain.p.l as f64;
    let zs: C = z.iter().sum();
    (0..n)
        .map(|j| {
            let mut f = cd.p0_total(z[j]).0;
            for l in 0..n {
                f -= cd.theta(z[j] - z[l]).0;
            }
            let nj = (j + 1) as f64 + k as f64 - (n as f64 + 1.0) / 2.0;
            f - 2.0 * PI * (nj + c + 2.0 * eta * zs + eta * cd.xi_bar)
        })
        .collect()
}

fn max_norm(v: &[C]) -> f64 {
    v.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Damped Newton solution of the logarithmic Bethe equations for the ground
/// state labelled (k, ℓ) in the sector n = N/2.
pub fn solve_ground_state(chain: &Chain, k: i64, ell: i64) -> Result<BetheRootSet> {
    let p = &chain.p;
    if !(0..=1).contains(&k) || !(0..p.l - p.r).contains(&ell) {
        return Err(Error::Invalid(format!("labels k={k} ell={ell} out of range")));
    }
    let nsites = chain.sites();
    let n = nsites / 2;
    let eta = p.eta();
    let cd = CountingData::new(chain);
    let c = (p.r * n as i64 + 2 * ell) as f64 / p.l as f64 + eta * cd.xi_bar;
    // linearized solution: p0 ≈ 2πz, ϑ ≈ 2πz, with the collective shift S = Σz
    let s_tot = (k as f64 + c) / (2.0 * (1.0 - eta));
    let mut z: Vec<C> = (1..=n)
        .map(|j| {
            let nj = j as f64 + k as f64 - (n as f64 + 1.0) / 2.0;
            (nj + c + 2.0 * eta * s_tot - s_tot) / n as f64
        })
        .collect();
    let mut f = log_bethe_residual(chain, &cd, &z, k, ell);
    let mut fnorm = max_norm(&f);
    let budget = 200;
    let mut it = 0;
    while it < budget && fnorm > 1e-13 {
        it += 1;
        let mut jac = linalg::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    jac[(a, b)] = cd.theta(z[a] - z[b]).1 - 4.0 * PI * eta;
                }
            }
            let mut d = cd.p0_total(z[a]).1 - 4.0 * PI * eta;
            for b in 0..n {
                if b != a {
                    d -= cd.theta(z[a] - z[b]).1;
                }
            }
            jac[(a, a)] = d;
        }
        let rhs = nalgebra::DVector::from_iterator(n, f.iter().map(|x| -x));
        let dz = match jac.clone().lu().solve(&rhs) {
            Some(d) => d,
            None => break,
        };
        let big = dz.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let mut scale = if big > 0.1 { 0.1 / big } else { 1.0 };
        let mut accepted = false;
        for _ in 0..20 {
            let trial: Vec<C> = z.iter().zip(dz.iter()).map(|(a, b)| a + scale * b).collect();
            let ft = log_bethe_residual(chain, &cd, &trial, k, ell);
            let nt = max_norm(&ft);
            if nt < fnorm || (big * scale < 1e-15) {
                z = trial;
                f = ft;
                fnorm = nt;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let et = p.eta_t();
    let mut roots: Vec<C> = z.iter().map(|x| x / et).collect();
    roots.sort_by(|a, b| (a * et).re.partial_cmp(&(b * et).re).unwrap());
    let log_omega = PI * (p.r * n as i64 + 2 * ell) as f64 / p.l as f64;
    let mult = max_norm(&bethe_residual(chain, &roots, log_omega)?);
    // the logarithmic residual is scale free; the multiplicative one is not at small Im τ
    if !(mult < 1e-10 || fnorm < 1e-11) {
        return Err(Error::Solver {
            iterations: it,
            residual: mult,
            best: z.iter().flat_map(|x| [x.re, x.im]).collect(),
        });
    }
    Ok(BetheRootSet { roots, log_omega, n, aleph: 0, k, ell, residual: mult })
}

/// All 2(L-r) ground states, ordered by (k, ℓ).
pub fn ground_states(chain: &Chain) -> Result<Vec<BetheRootSet>> {
    let mut out = Vec::new();
    for k in 0..2 {
        for ell in 0..chain.p.l - chain.p.r {
            out.push(solve_ground_state(chain, k, ell)?);
        }
    }
    Ok(out)
}

/// φ_ω(s) of the right Bethe vector.
pub fn phi(chain: &Chain, log_omega: f64, n: usize, s: C) -> C {
    let p = &chain.p;
    let one = C::new(1.0, 0.0);
    let mut r = (I * log_omega * s).exp() / (p.l as f64).sqrt();
    for j in 1..=n {
        r *= p.bracket(one) / p.bracket(s - j as f64);
    }
    r
}

/// φ̃_ω(s) of the left Bethe vector.
pub fn phi_dual(chain: &Chain, log_omega: f64, n: usize, s: C) -> C {
    let p = &chain.p;
    let one = C::new(1.0, 0.0);
    let mut r = (-I * log_omega * s).exp() / (p.l as f64).sqrt();
    for j in 0..n {
        r *= p.bracket(s + j as f64) / p.bracket(one);
    }
    r
}

/// Π B(v_j) |0> without the φ factor.
pub fn b_string(chain: &Chain, v: &[C]) -> State {
    let mut st = chain.reference();
    for &x in v {
        st = chain.monodromy_apply(Entry::B, x, &st);
    }
    st
}

/// Row vector <0| Π C(v_j) without the φ̃ factor.
pub fn c_string(chain: &Chain, v: &[C]) -> State {
    let mut st = chain.reference();
    for &x in v {
        st = left_apply(chain, Entry::C, x, &st);
    }
    st
}

/// Row vector times the monodromy entry.
pub fn left_apply(chain: &Chain, entry: Entry, u: C, row: &[C]) -> State {
    let m = chain.monodromy_dense(entry, u);
    let d = chain.dim();
    (0..d).map(|j| (0..d).map(|i| row[i] * m[(i, j)]).sum()).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

pub fn bethe_vector(chain: &Chain, v: &[C], log_omega: f64, side: Side) -> Result<State> {
    let n = v.len();
    aleph(chain, n)?;
    let mut st = match side {
        Side::Right => b_string(chain, v),
        Side::Left => c_string(chain, v),
    };
    for (idx, a) in st.iter_mut().enumerate() {
        let s = chain.height(chain.split(idx).0);
        let f = match side {
            Side::Right => phi(chain, log_omega, n, s),
            Side::Left => phi_dual(chain, log_omega, n, s),
        };
        if !f.is_finite() {
            return Err(Error::Pole(format!("φ factor singular at s={s}")));
        }
        *a *= f;
    }
    Ok(st)
}

pub fn dot(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[C]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// ||t(u)|v> - τ(u)|v>|| / |||v>||, and the same for the left vector.
pub fn eigenstate_residual(chain: &Chain, roots: &BetheRootSet, u: C) -> Result<(f64, f64)> {
    let tau = eigenvalue_tau(chain, &roots.roots, roots.log_omega, u)?;
    let r = bethe_vector(chain, &roots.roots, roots.log_omega, Side::Right)?;
    let tr = chain.transfer_apply(u, &r);
    let dr: Vec<C> = tr.iter().zip(&r).map(|(a, b)| a - tau * b).collect();
    let l = bethe_vector(chain, &roots.roots, roots.log_omega, Side::Left)?;
    let tl = left_apply(chain, Entry::A, u, &l);
    let tl2 = left_apply(chain, Entry::D, u, &l);
    let dl: Vec<C> = tl.iter().zip(&tl2).zip(&l).map(|((a, b), c)| a + b - tau * c).collect();
    Ok((norm2(&dr) / norm2(&r), norm2(&dl) / norm2(&l)))
}

/// A ground state together with its normalized right and left vectors.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub roots: BetheRootSet,
    pub right: State,
    pub left: State,
    /// the value used for <x|x>^{1/2}
    pub norm_sqrt: C,
}

/// Square root of <x|x> fixed as (e^{iπk} ω)^n · sqrt(R), where R =
/// <x|x> / ω^{2n} is close to a common real value for all ground states and
/// the square root of a negative R is taken on the positive imaginary axis.
pub fn ground_norm_sqrt(norm: C, roots: &BetheRootSet) -> C {
    let n = roots.n as f64;
    let we = (I * (roots.log_omega + PI * roots.k as f64)).exp();
    let r = norm / (2.0 * I * n * roots.log_omega).exp();
    let sq = if r.re < 0.0 { I * (-r).sqrt() } else { r.sqrt() };
    we.powf(n) * sq
}

pub fn normalized_ground_state(chain: &Chain, roots: BetheRootSet) -> Result<GroundState> {
    let right = bethe_vector(chain, &roots.roots, roots.log_omega, Side::Right)?;
    let left = bethe_vector(chain, &roots.roots, roots.log_omega, Side::Left)?;
    let norm = dot(&left, &right);
    let sq = ground_norm_sqrt(norm, &roots);
    Ok(GroundState {
        right: right.iter().map(|x| x / sq).collect(),
        left: left.iter().map(|x| x / sq).collect(),
        norm_sqrt: sq,
        roots,
    })
}

/// 64-bit FNV-1a of a canonical description string.
pub fn content_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Content key of a ground-state solve.
pub fn cache_key(chain: &Chain, k: i64, ell: i64) -> String {
    let xi: Vec<String> = chain.xi.iter().map(|x| format!("{:.17e},{:.17e}", x.re, x.im)).collect();
    let desc = format!(
        "L={};r={};tau={:.17e},{:.17e};s0={:.17e},{:.17e};N={};xi={}",
        chain.p.l,
        chain.p.r,
        chain.p.tau.re,
        chain.p.tau.im,
        chain.p.s0.re,
        chain.p.s0.im,
        chain.sites(),
        xi.join(";")
    );
    format!("gs-{:016x}-k{}-l{}", content_hash(&desc), k, ell)
}

#[derive(Serialize, Deserialize)]
struct CacheDoc {
    key: String,
    roots: BetheRootSet,
    solver: String,
}

/// Ground-state solve through a JSON cache in `dir` (or the directory named
/// by the cache environment variable when `dir` is None).
pub fn solve_ground_state_cached(chain: &Chain, k: i64, ell: i64, dir: Option<PathBuf>) -> Result<BetheRootSet> {
    let dir = dir.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from));
    let key = cache_key(chain, k, ell);
    if let Some(d) = &dir {
        let path = d.join(format!("{key}.json"));
        if let Ok(txt) = std::fs::read_to_string(&path) {
            if let Ok(doc) = serde_json::from_str::<CacheDoc>(&txt) {
                if doc.key == key {
                    return Ok(doc.roots);
                }
            }
        }
    }
    let roots = solve_ground_state(chain, k, ell)?;
    if let Some(d) = &dir {
        let _ = std::fs::create_dir_all(d);
        let doc = CacheDoc { key: key.clone(), roots: roots.clone(), solver: "damped-newton".into() };
        if let Ok(txt) = serde_json::to_string_pretty(&doc) {
            let _ = std::fs::write(d.join(format!("{key}.json")), txt);
        }
    }
    Ok(roots)
}
