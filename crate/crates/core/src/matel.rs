//! Finite-size multi-point matrix elements along adjacency paths: the
//! multiple action of diagonal monodromy entries on Bethe states, the sum over
//! m-tuples, the reduction of n×n determinants to m×m ones, and the assembly
//! of local height probabilities in the Bethe and flat ground-state bases.

use crate::bethe::{self, BetheRootSet, GroundState};
use crate::error::{Error, Result};
use crate::lattice::{Chain, Entry};
use crate::linalg::{self, Mat};
use crate::scalar::{self, a_nu, checked_det, finite};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn one() -> C {
    C::new(1.0, 0.0)
}
fn zero() -> C {
    C::new(0.0, 0.0)
}
fn parity(e: i64) -> f64 {
    if e.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Step between consecutive path vertices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    /// (ε, ε') = (1, 0)
    Down,
    /// (ε, ε') = (−1, 0)
    Up,
    /// (ε, ε') = (0, 1)
    Right,
}

/// Column inhomogeneity w_j = ξ_site − (1 if shifted).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnParam {
    pub site: usize,
    pub shifted: bool,
}

/// ζ_k as a reference into the line inhomogeneities: ξ_site − (1 if shifted).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZetaRef {
    pub site: usize,
    pub shifted: bool,
}

impl ZetaRef {
    pub fn value(&self, xi: &[C]) -> C {
        xi[self.site - 1] - if self.shifted { 1.0 } else { 0.0 }
    }
}

/// Vertices I_1..I_{m+1} (1-based (row, column)), integer height labels
/// a_k with s_k = s0 + a_k, and the column parameters w_j used by
/// horizontal steps (indexed by column − 1).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjacentPath {
    pub vertices: Vec<(usize, usize)>,
    pub heights: Vec<i64>,
    #[serde(default)]
    pub columns: Vec<ColumnParam>,
}

impl AdjacentPath {
    /// Vertical path down column 1 starting at (1,1).
    pub fn vertical(heights: Vec<i64>) -> Self {
        let vertices = (0..heights.len()).map(|i| (i + 1, 1)).collect();
        AdjacentPath { vertices, heights, columns: Vec::new() }
    }

    pub fn m(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn moves(&self) -> Result<Vec<Move>> {
        self.vertices
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let di = b.0 as i64 - a.0 as i64;
                let dj = b.1 as i64 - a.1 as i64;
                match (di, dj) {
                    (1, 0) => Ok(Move::Down),
                    (-1, 0) => Ok(Move::Up),
                    (0, 1) => Ok(Move::Right),
                    _ => Err(Error::Invalid(format!("vertices {a:?} and {b:?} are not an allowed nearest-neighbor step"))),
                }
            })
            .collect()
    }

    pub fn alpha(&self) -> Result<Vec<i8>> {
        self.heights
            .windows(2)
            .map(|w| match w[1] - w[0] {
                1 => Ok(1),
                -1 => Ok(-1),
                d => Err(Error::Invalid(format!("adjacent heights differ by {d}"))),
            })
            .collect()
    }

    pub fn zeta_refs(&self) -> Result<Vec<ZetaRef>> {
        let moves = self.moves()?;
        let mut out = Vec::with_capacity(moves.len());
        for (k, mv) in moves.iter().enumerate() {
            let (i, j) = self.vertices[k];
            out.push(match mv {
                Move::Down => ZetaRef { site: i, shifted: false },
                Move::Up => ZetaRef { site: i - 1, shifted: true },
                Move::Right => {
                    let c = self
                        .columns
                        .get(j - 1)
                        .ok_or_else(|| Error::Invalid(format!("no column parameter for column {j}")))?;
                    ZetaRef { site: c.site, shifted: c.shifted }
                }
            });
        }
        Ok(out)
    }

    /// Checks the path against a chain of `sites` rows.
    pub fn validate(&self, sites: usize) -> Result<()> {
        if self.vertices.is_empty() || self.heights.len() != self.vertices.len() {
            return Err(Error::Invalid("need one height per vertex and at least one vertex".into()));
        }
        if self.vertices[0] != (1, 1) {
            return Err(Error::Invalid("paths start at the reference vertex (1,1)".into()));
        }
        if self.vertices.iter().any(|&(i, _)| i == 0 || i > sites) {
            return Err(Error::Invalid(format!("row outside 1..={sites}")));
        }
        self.alpha()?;
        let z = self.zeta_refs()?;
        for r in &z {
            if r.site == 0 || r.site > sites {
                return Err(Error::Invalid(format!("ζ refers to site {} outside the chain", r.site)));
            }
        }
        for a in 0..z.len() {
            for b in a + 1..z.len() {
                if z[a] == z[b] {
                    return Err(Error::Degenerate(format!(
                        "ζ_{} and ζ_{} coincide; the homogeneous limit is not evaluated",
                        a + 1,
                        b + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn zeta(&self, xi: &[C]) -> Result<Vec<C>> {
        Ok(self.zeta_refs()?.iter().map(|r| r.value(xi)).collect())
    }

    pub fn from_json(txt: &str) -> Result<Self> {
        serde_json::from_str(txt).map_err(|e| Error::Invalid(format!("path file: {e}")))
    }

    /// JSON echo with the derived α and ζ for audit.
    pub fn audit_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "vertices": self.vertices,
            "heights": self.heights,
            "columns": self.columns,
            "alpha": self.alpha()?,
            "zeta": self.zeta_refs()?,
        }))
    }
}

/// Index sets: the α_− positions increasing, then the α_+ positions
/// decreasing, and the number of α_− positions.
pub fn alpha_sets(alpha: &[i8]) -> (Vec<usize>, usize) {
    let m = alpha.len();
    let mut ip: Vec<usize> = (1..=m).filter(|&j| alpha[j - 1] == -1).collect();
    let nm = ip.len();
    ip.extend((1..=m).rev().filter(|&j| alpha[j - 1] == 1));
    (ip, nm)
}

/// α_a + ... + α_b (1-based, empty when b < a).
fn asum(alpha: &[i8], a: usize, b: usize) -> f64 {
    if b < a {
        0.0
    } else {
        alpha[a - 1..b].iter().map(|&x| x as f64).sum()
    }
}

/// An admissible m-tuple b with its complement and the inversion count of
/// the permutation (b, complement).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TupleSum {
    pub b: Vec<usize>,
    pub complement: Vec<usize>,
    pub inversions: usize,
}

impl TupleSum {
    fn new(n: usize, m: usize, b: Vec<usize>) -> Self {
        let complement: Vec<usize> = (1..=n + m).filter(|x| !b.contains(x)).collect();
        let perm: Vec<usize> = b.iter().chain(&complement).copied().collect();
        let mut inv = 0;
        for i in 0..perm.len() {
            for j in i + 1..perm.len() {
                if perm[i] > perm[j] {
                    inv += 1;
                }
            }
        }
        TupleSum { b, complement, inversions: inv }
    }
}

/// All tuples with b_p ∈ {1..n+m+1−i_p}, pairwise distinct, in
/// lexicographic order.
pub fn tuples(n: usize, ip: &[usize]) -> Vec<TupleSum> {
    let m = ip.len();
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(m);
    fn rec(n: usize, m: usize, ip: &[usize], cur: &mut Vec<usize>, out: &mut Vec<TupleSum>) {
        let p = cur.len();
        if p == m {
            out.push(TupleSum::new(n, m, cur.clone()));
            return;
        }
        for x in 1..=n + m + 1 - ip[p] {
            if !cur.contains(&x) {
                cur.push(x);
                rec(n, m, ip, cur, out);
                cur.pop();
            }
        }
    }
    rec(n, m, ip, &mut cur, &mut out);
    out
}

/// V = (v_1..v_n, ζ_m, ..., ζ_1).
fn extended(v: &[C], zeta: &[C]) -> Vec<C> {
    v.iter().copied().chain(zeta.iter().rev().copied()).collect()
}

/// f_{α_1..α_m}(s) = Π_j [s + α_{1..m} − j]/[s − j].
pub fn f_alpha(chain: &Chain, s: C, n: usize, alpha: &[i8]) -> C {
    let p = &chain.p;
    let tot = asum(alpha, 1, alpha.len());
    (1..=n).map(|j| p.bracket(s + tot - j as f64) / p.bracket(s - j as f64)).product()
}

/// F_b(s; {v}, {ζ}): coefficient of Π_{complement} B(V_c)|0> in
/// T_{α_1α_1}(ζ_1)...T_{α_mα_m}(ζ_m) Π B(v)|0> at height s.
pub fn commutation_action_coefficient(chain: &Chain, t: &TupleSum, s: C, v: &[C], zeta: &[C], alpha: &[i8]) -> Result<C> {
    let p = &chain.p;
    let n = v.len();
    let m = zeta.len();
    let (ip, nm) = alpha_sets(alpha);
    let vv = extended(v, zeta);
    let vb = |q: usize| vv[t.b[q] - 1];
    let mut f = f_alpha(chain, s, n, alpha);
    for q in 0..m {
        if q < nm {
            f *= chain.d_fn(vb(q));
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            f *= p.bracket(vb(i) - vb(j)) / p.bracket(vb(i) - vb(j) + 1.0);
        }
    }
    for q in 0..m {
        let i = ip[q];
        let a = alpha[i - 1] as f64;
        let x = vb(q);
        let sh = s + asum(alpha, 1, i - 1);
        f *= p.bracket(sh + x - zeta[i - 1]) / p.bracket(sh);
        for k in 0..n {
            f *= p.bracket(v[k] - x + a);
            if k + 1 != t.b[q] {
                f /= p.bracket(v[k] - x);
            }
        }
        for k in i + 1..=m {
            f *= p.bracket(zeta[k - 1] - x + a);
        }
        for k in i..=m {
            if k != n + m + 1 - t.b[q] {
                f /= p.bracket(zeta[k - 1] - x);
            }
        }
    }
    if !f.is_finite() {
        return Err(Error::Pole(format!("F_b singular for b={:?}", t.b)));
    }
    Ok(f)
}

/// Λ_ε(ζ; {v}, ω_v).
pub fn lambda(chain: &Chain, eps: i8, z: C, v: &[C], log_omega_v: f64) -> C {
    let p = &chain.p;
    let e = eps as f64;
    let w = C::new(0.0, log_omega_v * (e - 1.0)).exp();
    let mut r = e * w;
    for &x in &chain.xi {
        r *= p.bracket(z - x + (1.0 + e) / 2.0);
    }
    for &x in v {
        r *= p.bracket(x - z + e);
    }
    r
}

/// A Bethe root set with the square root of its norm used for normalization.
#[derive(Clone, Debug)]
pub struct NormedRoots {
    pub roots: BetheRootSet,
    pub norm_sqrt: C,
}

impl NormedRoots {
    /// Norm from the Gaudin determinant.
    pub fn new(chain: &Chain, roots: BetheRootSet) -> Result<Self> {
        let norm = scalar::norm_det(chain, &roots)?;
        let norm_sqrt = bethe::ground_norm_sqrt(norm, &roots);
        Ok(NormedRoots { roots, norm_sqrt })
    }
}

/// 𝓗_γ^{(ν)}({u},ω_u;{v},ω_v) for distinct root sets.
pub fn cal_h0(chain: &Chain, u: &BetheRootSet, v: &BetheRootSet, gamma: C, nu: i64) -> Mat {
    let p = &chain.p;
    let (uu, vv) = (&u.roots, &v.roots);
    let n = uu.len();
    let q = p.q();
    let r2 = C::new(0.0, 2.0 * (v.log_omega - u.log_omega)).exp();
    let g = u.sum() - v.sum() + gamma;
    let d0 = p.bracket_d(zero());
    let bg = p.bracket(g);
    let qn = q.powf(nu as f64);
    let mut h = linalg::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let x = vv[j] - vv[k];
            if j == k {
                let mut pre = d0;
                for l in 0..n {
                    if l != j {
                        pre *= p.bracket(vv[j] - vv[l]);
                    }
                    pre /= p.bracket(vv[j] - uu[l]);
                }
                let (mut p1, mut p2) = (one(), one());
                for l in 0..n {
                    p1 *= p.bracket(uu[l] - vv[k] + 1.0) / p.bracket(vv[l] - vv[k] + 1.0);
                    p2 *= p.bracket(uu[l] - vv[k] - 1.0) / p.bracket(vv[l] - vv[k] - 1.0);
                }
                h[(j, k)] += pre * (p1 - r2 * p2);
            }
            h[(j, k)] += d0 / bg
                * (p.bracket(x + g + 1.0) / (qn * p.bracket(x + 1.0)) - qn * r2 * p.bracket(x + g - 1.0) / p.bracket(x - 1.0));
        }
    }
    h
}

/// Φ_γ^{(ν)}({v}), the replacement of 𝓗 for identical root sets.
pub fn phi_gamma(chain: &Chain, v: &[C], gamma: C, nu: i64) -> Mat {
    let p = &chain.p;
    let n = v.len();
    let qn = p.q().powf(nu as f64);
    let d0 = p.bracket_d(zero());
    let bg = p.bracket(gamma);
    let mut h = linalg::zeros(n, n);
    for j in 0..n {
        let mut dd = scalar::log_a_over_d_prime(chain, v[j]);
        for t in 0..n {
            dd += p.bracket_logd(v[j] - v[t] - 1.0) - p.bracket_logd(v[j] - v[t] + 1.0);
        }
        h[(j, j)] += dd;
        for k in 0..n {
            let x = v[j] - v[k];
            h[(j, k)] += d0 / bg
                * (p.bracket(x + gamma + 1.0) / (qn * p.bracket(x + 1.0)) - qn * p.bracket(x + gamma - 1.0) / p.bracket(x - 1.0));
        }
    }
    h
}

/// 𝓠_γ^{(ν)}: one column per ζ_k.
pub fn cal_q(chain: &Chain, u: &BetheRootSet, v: &BetheRootSet, zeta: &[C], gamma: C, nu: i64) -> Mat {
    let p = &chain.p;
    let (uu, vv) = (&u.roots, &v.roots);
    let n = uu.len();
    let m = zeta.len();
    let q = p.q();
    let g = u.sum() - v.sum() + gamma;
    let d0 = p.bracket_d(zero());
    let bg = p.bracket(g);
    let rat = C::new(0.0, v.log_omega - u.log_omega).exp();
    let mut out = linalg::zeros(n, m);
    for k in 0..m {
        let z = zeta[k];
        for eps in [1i8, -1] {
            let e = eps as f64;
            let mut pr = one();
            for l in 0..n {
                pr *= p.bracket(vv[l] - z) * p.bracket(uu[l] - z + e) / (p.bracket(uu[l] - z) * p.bracket(vv[l] - z + e));
            }
            let lam = lambda(chain, eps, z, vv, v.log_omega);
            for j in 0..n {
                out[(j, k)] += e * lam * d0 / bg
                    * rat.powf(1.0 - e)
                    * (q.powf(-e * nu as f64) * p.bracket(vv[j] - z + g + e) / p.bracket(vv[j] - z + e)
                        - p.bracket(vv[j] - z + g) / p.bracket(vv[j] - z) * pr);
            }
        }
    }
    out
}

/// The algebraic factor G_b.
pub fn g_b(chain: &Chain, t: &TupleSum, s: C, u: &BetheRootSet, v: &BetheRootSet, zeta: &[C], alpha: &[i8]) -> C {
    let p = &chain.p;
    let n = v.roots.len();
    let m = zeta.len();
    let (ip, nm) = alpha_sets(alpha);
    let vv = extended(&v.roots, zeta);
    let vb = |q: usize| vv[t.b[q] - 1];
    let mut g = parity((m * n + t.inversions + nm) as i64) * (C::new(0.0, v.log_omega - u.log_omega) * s).exp();
    for k in 0..n {
        g *= chain.d_fn(u.roots[k]) / chain.d_fn(v.roots[k]);
    }
    for k in 0..m {
        if t.b[k] > n {
            g *= lambda(chain, if k < nm { -1 } else { 1 }, vb(k), &v.roots, v.log_omega);
        }
    }
    for &z in zeta {
        g /= lambda(chain, 1, z, &v.roots, v.log_omega) - lambda(chain, -1, z, &v.roots, v.log_omega);
    }
    for j in 0..m {
        for k in j + 1..m {
            g /= p.bracket(zeta[j] - zeta[k]) * p.bracket(vb(j) - vb(k) + 1.0);
        }
    }
    for k in 0..m {
        let i = ip[k];
        let a = alpha[i - 1] as f64;
        let x = vb(k);
        let sh = s + asum(alpha, 1, i - 1);
        g *= p.bracket(sh + x - zeta[i - 1]) / p.bracket(sh);
        for l in 1..i {
            g *= p.bracket(zeta[l - 1] - x);
        }
        for l in i + 1..=m {
            g *= p.bracket(zeta[l - 1] - x + a);
        }
    }
    g
}

fn same_roots(u: &BetheRootSet, v: &BetheRootSet) -> bool {
    u.k == v.k && u.ell == v.ell && u.roots.len() == v.roots.len() && u.roots.iter().zip(&v.roots).all(|(a, b)| (a - b).norm() < 1e-12)
}

/// 𝓗_{γ;b}: column c of 𝓗 when c ≤ n, else column n+m+1−c of 𝓠.
fn assemble_hb(h0: &Mat, qm: &Mat, t: &TupleSum) -> Mat {
    let n = h0.nrows();
    let m = qm.ncols();
    let mut out = linalg::zeros(n, n);
    for (k, &c) in t.complement.iter().enumerate() {
        for j in 0..n {
            out[(j, k)] = if c <= n { h0[(j, c - 1)] } else { qm[(j, n + m - c)] };
        }
    }
    out
}

/// det 𝓗_{γ;b} through the m×m reduction, given X = 𝓗^{-1}𝓠 and det 𝓗.
fn det_hb_reduced(x: &Mat, det_h: C, t: &TupleSum, n: usize) -> C {
    let m = t.b.len();
    let mut s = linalg::zeros(m, m);
    for j in 0..m {
        for k in 0..m {
            s[(j, k)] = if t.b[j] <= n {
                x[(t.b[j] - 1, k)]
            } else if n + m + 1 - t.b[j] == k + 1 {
                -one()
            } else {
                zero()
            };
        }
    }
    let e = m * (n + 1) + m * m.saturating_sub(1) / 2 + t.inversions;
    parity(e as i64) * det_h * linalg::det(&s)
}

/// Relative difference between the direct n×n determinants det 𝓗_{γ;b}
/// and their m×m reductions, maximized over all tuples.
pub fn det_nm_residual(chain: &Chain, u: &BetheRootSet, v: &BetheRootSet, zeta: &[C], alpha: &[i8], gamma: C, nu: i64) -> Result<f64> {
    let n = v.roots.len();
    let h0 = cal_h0(chain, u, v, gamma, nu);
    let qm = cal_q(chain, u, v, zeta, gamma, nu);
    let lu = h0.clone().lu();
    let x = lu.solve(&qm).ok_or_else(|| Error::Pole("𝓗 is singular".into()))?;
    let det_h = lu.determinant();
    let (ip, _) = alpha_sets(alpha);
    let mut worst = 0.0f64;
    for t in tuples(n, &ip) {
        let direct = linalg::det(&assemble_hb(&h0, &qm, &t));
        let red = det_hb_reduced(&x, det_h, &t, n);
        worst = worst.max((direct - red).norm() / direct.norm().max(red.norm()).max(1e-300));
    }
    Ok(worst)
}

/// Which evaluation of det 𝓗_{γ;b} mpme_det uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetRoute {
    /// m×m reduction with one LU of 𝓗 per ν
    Reduced,
    /// direct n×n determinant per tuple
    Direct,
}

/// Normalized matrix element <u| δ_s Π T_{α_kα_k}(ζ_k) Π t^{-1}(ζ_k) |v> /
/// (<u|u><v|v>)^{1/2} from the determinant representation.
pub fn mpme_det_with(chain: &Chain, u: &NormedRoots, v: &NormedRoots, zeta: &[C], alpha: &[i8], h: usize, gamma: C, route: DetRoute) -> Result<C> {
    let p = &chain.p;
    if zeta.len() != alpha.len() {
        return Err(Error::Invalid("one α per ζ".into()));
    }
    let (ur, vr) = (&u.roots, &v.roots);
    let n = vr.roots.len();
    let m = zeta.len();
    let s = chain.height(h);
    let equal = same_roots(ur, vr);
    let (ip, _) = alpha_sets(alpha);
    let ts = tuples(n, &ip);
    let vext = extended(&vr.roots, zeta);
    let q = p.q();
    let d0 = p.bracket_d(zero());
    let det_phi = checked_det(&scalar::gaudin_matrix(chain, &vr.roots)?, "Gaudin matrix")?;
    let du = ur.sum() - vr.sum();

    // ν-resolved determinants for every tuple
    let mut per_nu: Vec<Vec<C>> = Vec::with_capacity(p.l as usize);
    for nu in 0..p.l {
        let h0 = if equal { phi_gamma(chain, &vr.roots, gamma, nu) } else { cal_h0(chain, ur, vr, gamma, nu) };
        let qm = cal_q(chain, ur, vr, zeta, gamma, nu);
        if h0.iter().chain(qm.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Pole(format!("𝓗 or 𝓠 singular at ν={nu}; try another γ")));
        }
        let dets = match route {
            DetRoute::Direct => ts.iter().map(|t| linalg::det(&assemble_hb(&h0, &qm, t))).collect(),
            DetRoute::Reduced => {
                if linalg::pivot_ratio(&h0) > scalar::CONDITION_WARN {
                    eprintln!("warning: 𝓗 at ν={nu} is ill-conditioned");
                }
                let lu = h0.clone().lu();
                let det_h = lu.determinant();
                if m == 0 {
                    vec![det_h]
                } else {
                    let x = lu.solve(&qm).ok_or_else(|| Error::Pole(format!("𝓗 singular at ν={nu}")))?;
                    ts.iter().map(|t| det_hb_reduced(&x, det_h, t, n)).collect()
                }
            }
        };
        per_nu.push(dets);
    }
    let mut tot = zero();
    for (ti, t) in ts.iter().enumerate() {
        let vbs: C = t.complement.iter().map(|&c| vext[c - 1]).sum();
        let pre = g_b(chain, t, s, ur, vr, zeta, alpha) * p.bracket(s) * p.bracket(du + gamma)
            / (d0 * p.bracket(ur.sum() - vbs + gamma + s))
            / p.l as f64;
        let mut acc = zero();
        for nu in 0..p.l {
            acc += q.powc(nu as f64 * s) * a_nu(p, gamma, nu) * per_nu[nu as usize][ti];
        }
        tot += pre * acc;
    }
    finite(v.norm_sqrt / u.norm_sqrt * tot / det_phi, "multi-point matrix element")
}

pub fn mpme_det(chain: &Chain, u: &NormedRoots, v: &NormedRoots, path: &AdjacentPath, gamma: C) -> Result<C> {
    path.validate(chain.sites())?;
    let zeta = path.zeta(&chain.xi)?;
    let alpha = path.alpha()?;
    let h = path.heights[0].rem_euclid(chain.p.l) as usize;
    mpme_det_with(chain, u, v, &zeta, &alpha, h, gamma, DetRoute::Reduced)
}

/// Dense operator δ_s Π T_{αα}(ζ) Π t^{-1}(ζ) applied to a state.
pub fn path_operator_apply(chain: &Chain, zeta: &[C], alpha: &[i8], h: usize, state: &[C]) -> Result<Vec<C>> {
    for &z in zeta {
        for &x in &chain.xi {
            if chain.p.bracket(z - x + 1.0).norm() < 1e-12 {
                return Err(Error::Pole(format!("ζ={z} sits on a pole of the R-matrix weights")));
            }
        }
    }
    let mut st = nalgebra::DVector::from_vec(state.to_vec());
    for &z in zeta {
        let t = chain.transfer_dense(z);
        st = t.lu().solve(&st).ok_or_else(|| Error::Pole(format!("t({z}) is singular")))?;
    }
    let mut st: Vec<C> = st.iter().copied().collect();
    for (&z, &a) in zeta.iter().zip(alpha).rev() {
        st = chain.monodromy_apply(Entry::from_indices(a, a), z, &st);
    }
    for (idx, x) in st.iter_mut().enumerate() {
        if chain.split(idx).0 != h {
            *x = zero();
        }
    }
    Ok(st)
}

/// Same matrix element by dense operator products between normalized
/// Bethe vectors.
pub fn mpme_bruteforce(chain: &Chain, u: &GroundState, v: &GroundState, path: &AdjacentPath) -> Result<C> {
    path.validate(chain.sites())?;
    let zeta = path.zeta(&chain.xi)?;
    let alpha = path.alpha()?;
    let h = path.heights[0].rem_euclid(chain.p.l) as usize;
    let st = path_operator_apply(chain, &zeta, &alpha, h, &v.right)?;
    Ok(bethe::dot(&u.left, &st))
}

/// Basis in which a finite-size local height probability is requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LhpBasis {
    Bethe { k1: i64, l1: i64, k2: i64, l2: i64 },
    Flat { eps: i64, t: i64 },
}

/// Coefficient of |ψ^{(k,ℓ)}> in the flat state (ε, t) (without the
/// 1/sqrt(2(L−r)) normalization); the bra uses the conjugate phase.
pub fn flat_coefficient(chain: &Chain, k: i64, ell: i64, eps: i64, t: i64, bra: bool) -> C {
    let p = &chain.p;
    let ph = PI * (p.r * k + 2 * ell) as f64 / (p.l - p.r) as f64;
    let sgn = if bra { 1.0 } else { -1.0 };
    parity(k * eps) * (C::new(0.0, sgn * ph) * (t as f64 + p.s0)).exp()
}

/// The 2(L−r) normalized ground states of a chain.
pub fn normed_ground_states(chain: &Chain) -> Result<Vec<NormedRoots>> {
    let mut out = Vec::new();
    for k in 0..2 {
        for ell in 0..chain.p.l - chain.p.r {
            let roots = bethe::solve_ground_state_cached(chain, k, ell, None)?;
            out.push(NormedRoots::new(chain, roots)?);
        }
    }
    Ok(out)
}

/// Finite-size local height probability (I_1 = (1,1)).
pub fn finite_lhp(chain: &Chain, states: &[NormedRoots], path: &AdjacentPath, basis: LhpBasis, gamma: C) -> Result<C> {
    path.validate(chain.sites())?;
    let find = |k: i64, l: i64| {
        states
            .iter()
            .find(|s| s.roots.k == k && s.roots.ell == l)
            .ok_or_else(|| Error::Invalid(format!("ground state (k={k}, ℓ={l}) not supplied")))
    };
    match basis {
        LhpBasis::Bethe { k1, l1, k2, l2 } => mpme_det(chain, find(k1, l1)?, find(k2, l2)?, path, gamma),
        LhpBasis::Flat { eps, t } => {
            let p = &chain.p;
            if !(0..=1).contains(&eps) || !(0..p.l - p.r).contains(&t) {
                return Err(Error::Invalid(format!("(ε,t)=({eps},{t}) out of range")));
            }
            let mut tot = zero();
            for x in states {
                for y in states {
                    let cx = flat_coefficient(chain, x.roots.k, x.roots.ell, eps, t, true);
                    let cy = flat_coefficient(chain, y.roots.k, y.roots.ell, eps, t, false);
                    tot += cx * cy * mpme_det(chain, x, y, path, gamma)?;
                }
            }
            Ok(tot / (2 * (p.l - p.r)) as f64)
        }
    }
}

/// Random coefficient vectors entering the generic H_α, Q_β matrices.
#[derive(Clone, Debug)]
pub struct AppendixBInput {
    pub u: Vec<C>,
    pub v: Vec<C>,
    pub zeta: Vec<C>,
    pub gamma: C,
    pub alpha: [Vec<C>; 4],
    pub beta: [Vec<C>; 4],
}

/// Residuals of the transformation X·H_α = 𝓗_α, X·Q_β = 𝓠_β, of the
/// resulting determinant identity for one choice of columns, and of the
/// closed form of det X.  Returns (matrix identity, det identity, det X).
pub fn appendix_b_residual(p: &crate::ModelParams, inp: &AppendixBInput) -> Result<(f64, f64, f64)> {
    let br = |x: C| p.bracket(x);
    let (u, v, z, g) = (&inp.u, &inp.v, &inp.zeta, inp.gamma);
    let (a, b) = (&inp.alpha, &inp.beta);
    let n = u.len();
    let m = z.len();
    if v.len() != n || a.iter().any(|x| x.len() != n) || b.iter().any(|x| x.len() != m) || m > n {
        return Err(Error::Invalid("inconsistent Appendix B input sizes".into()));
    }
    let d0 = p.bracket_d(zero());
    let t: C = u.iter().sum::<C>() - v.iter().sum::<C>() + g;
    let pp = |w: C, e: f64| -> C { (0..n).map(|l| br(u[l] - w + e) / br(v[l] - w + e)).product() };
    let generic = |w: C, x: C, c: [C; 4]| -> C {
        (c[0] * br(x + g) / br(x) - c[1] * br(x + g + 1.0) / br(x + 1.0)) / br(g) * pp(w, 1.0)
            - (c[2] * br(x + g) / br(x) - c[3] * br(x + g - 1.0) / br(x - 1.0)) / br(g) * pp(w, -1.0)
    };
    let mut hm = linalg::zeros(n, n);
    let mut qm = linalg::zeros(n, m);
    let mut xm = linalg::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            hm[(i, j)] = generic(v[j], u[i] - v[j], [a[0][j], a[1][j], a[2][j], a[3][j]]);
        }
        for j in 0..m {
            qm[(i, j)] = generic(z[j], u[i] - z[j], [b[0][j], b[1][j], b[2][j], b[3][j]]);
        }
    }
    for j in 0..n {
        for k in 0..n {
            let mut num = one();
            let mut den = one();
            for l in 0..n {
                num *= br(u[k] - v[l]);
                if l != k {
                    den *= br(u[k] - u[l]);
                }
            }
            xm[(j, k)] = d0 / br(t) * num / den * br(v[j] - u[k] + t) / br(v[j] - u[k]);
        }
    }
    let mut ch = linalg::zeros(n, n);
    let mut cq = linalg::zeros(n, m);
    for j in 0..n {
        for k in 0..n {
            if j == k {
                let mut pre = d0;
                for l in 0..n {
                    if l != j {
                        pre *= br(v[j] - v[l]);
                    }
                    pre /= br(v[j] - u[l]);
                }
                ch[(j, k)] += pre * (a[0][k] * pp(v[k], 1.0) - a[2][k] * pp(v[k], -1.0));
            }
            let x = v[j] - v[k];
            ch[(j, k)] += d0 / br(t) * (a[1][k] * br(x + t + 1.0) / br(x + 1.0) - a[3][k] * br(x + t - 1.0) / br(x - 1.0));
        }
        for k in 0..m {
            let y = v[j] - z[k];
            let rr = |e: f64| -> C {
                (0..n).map(|l| br(v[l] - z[k]) * br(u[l] - z[k] + e) / (br(u[l] - z[k]) * br(v[l] - z[k] + e))).product()
            };
            cq[(j, k)] = d0 / br(t)
                * (b[1][k] * br(y + t + 1.0) / br(y + 1.0) - b[0][k] * br(y + t) / br(y) * rr(1.0) - b[3][k] * br(y + t - 1.0) / br(y - 1.0)
                    + b[2][k] * br(y + t) / br(y) * rr(-1.0));
        }
    }
    let rel = |a: &Mat, b: &Mat| linalg::max_abs(&(a - b)) / linalg::max_abs(b).max(1e-300);
    let res_mat = rel(&(&xm * &hm), &ch).max(if m > 0 { rel(&(&xm * &qm), &cq) } else { 0.0 });
    // replace the last m columns of H by Q on both sides
    let mut lhs = hm.clone();
    let mut rhs = ch.clone();
    for k in 0..m {
        for j in 0..n {
            lhs[(j, n - m + k)] = qm[(j, k)];
            rhs[(j, n - m + k)] = cq[(j, k)];
        }
    }
    let dl = linalg::det(&xm) * linalg::det(&lhs);
    let dr = linalg::det(&rhs);
    let res_det = (dl - dr).norm() / dr.norm().max(1e-300);
    let mut closed = (-d0).powu(n as u32) * br(g) / br(t);
    for j in 0..n {
        for k in j + 1..n {
            closed *= br(v[j] - v[k]) / br(u[j] - u[k]);
        }
    }
    let dx = linalg::det(&xm);
    Ok((res_mat, res_det, (dx - closed).norm() / closed.norm()))
}
