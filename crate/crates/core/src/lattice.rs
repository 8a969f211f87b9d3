//! Dynamical R-matrix, monodromy entries and transfer matrix acting on the
//! finite space of functions of the height with values in (C^2)^N.
//!
//! Basis index = h * 2^N + word, where h labels the height s0 + h at site 1
//! and the word is big-endian (site 1 is the most significant bit, a set bit
//! meaning spin '-').

use crate::elliptic::ModelParams;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use num_complex::Complex64 as C;
use std::io::Write;

pub const MAX_SITES: usize = 12;
pub const MAX_DIM: usize = 200_000;

pub type State = Vec<C>;

fn czero() -> C {
    C::new(0.0, 0.0)
}

/// b(u;s) = [s+1][u]/([s][u+1]).
pub fn weight_b(p: &ModelParams, u: C, s: C) -> C {
    p.bracket(s + 1.0) * p.bracket(u) / (p.bracket(s) * p.bracket(u + 1.0))
}

/// c(u;s) = [s+u][1]/([s][u+1]).
pub fn weight_c(p: &ModelParams, u: C, s: C) -> C {
    p.bracket(s + u) * p.bracket(C::new(1.0, 0.0)) / (p.bracket(s) * p.bracket(u + 1.0))
}

fn pair_index(a: i8, e: i8) -> usize {
    2 * usize::from(a < 0) + usize::from(e < 0)
}

/// 4x4 R-matrix in the ordered basis ++, +-, -+, --.
pub fn r_matrix(p: &ModelParams, u: C, s: C) -> [[C; 4]; 4] {
    let one = C::new(1.0, 0.0);
    let mut r = [[czero(); 4]; 4];
    r[0][0] = one;
    r[3][3] = one;
    r[1][1] = weight_b(p, u, s);
    r[1][2] = weight_c(p, u, s);
    r[2][1] = weight_c(p, u, -s);
    r[2][2] = weight_b(p, u, -s);
    r
}

/// Matrix element R(u;s) between the input pair (a, e) and the output pair
/// (a', e'), zero unless the ice rule a + e = a' + e' holds.
pub fn boltzmann_weight(p: &ModelParams, u: C, s: C, input: (i8, i8), output: (i8, i8)) -> Result<C> {
    if input.0 + input.1 != output.0 + output.1 {
        return Ok(czero());
    }
    let bs = p.bracket(s);
    let bu1 = p.bracket(u + 1.0);
    if bs.norm() < 1e-300 || bu1.norm() < 1e-300 {
        return Err(Error::Pole(format!("[s]={bs} or [u+1]={bu1} vanishes")));
    }
    Ok(r_matrix(p, u, s)[pair_index(output.0, output.1)][pair_index(input.0, input.1)])
}

/// Max-norm of LHS - RHS of the dynamical Yang-Baxter relation as 8x8
/// matrices, with the height shifts h_k acting diagonally on space k.
pub fn yang_baxter_residual(p: &ModelParams, u1: C, u2: C, u3: C, s: C) -> f64 {
    // index of (e1, e2, e3) with bit 1 for '-'
    let spin = |idx: usize, k: usize| -> f64 {
        if (idx >> (2 - k)) & 1 == 1 {
            -1.0
        } else {
            1.0
        }
    };
    // R acting on spaces (i, j) with dynamical parameter s + shift(spin of the third space)
    let embed = |i: usize, j: usize, u: C, shift_from: Option<usize>| -> [[C; 8]; 8] {
        let mut m = [[czero(); 8]; 8];
        for col in 0..8 {
            let sh = shift_from.map(|k| spin(col, k)).unwrap_or(0.0);
            let r = r_matrix(p, u, s + sh);
            let ci = pair_index(spin(col, i) as i8, spin(col, j) as i8);
            for row in 0..8 {
                let mut same = true;
                for k in 0..3 {
                    if k != i && k != j && spin(row, k) != spin(col, k) {
                        same = false;
                    }
                }
                if !same {
                    continue;
                }
                let ri = pair_index(spin(row, i) as i8, spin(row, j) as i8);
                m[row][col] = r[ri][ci];
            }
        }
        m
    };
    let mul = |a: &[[C; 8]; 8], b: &[[C; 8]; 8]| -> [[C; 8]; 8] {
        let mut c = [[czero(); 8]; 8];
        for i in 0..8 {
            for k in 0..8 {
                if a[i][k] == czero() {
                    continue;
                }
                for j in 0..8 {
                    c[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        c
    };
    // The shift h_k in a product acts on the state at that point of the
    // product; all R factors commute with h_k on the untouched space k, so
    // reading the spin of k from the column index is exact.
    let lhs = mul(&mul(&embed(0, 1, u1 - u2, Some(2)), &embed(0, 2, u1 - u3, None)), &embed(1, 2, u2 - u3, Some(0)));
    let rhs = mul(&mul(&embed(1, 2, u2 - u3, None), &embed(0, 2, u1 - u3, Some(1))), &embed(0, 1, u1 - u2, None));
    let mut res = 0.0f64;
    for i in 0..8 {
        for j in 0..8 {
            res = res.max((lhs[i][j] - rhs[i][j]).norm());
        }
    }
    res
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Entry {
    A,
    B,
    C,
    D,
}

impl Entry {
    /// (alpha, beta) of T_{alpha beta}.
    pub fn indices(self) -> (i8, i8) {
        match self {
            Entry::A => (1, 1),
            Entry::B => (1, -1),
            Entry::C => (-1, 1),
            Entry::D => (-1, -1),
        }
    }
    pub fn from_indices(alpha: i8, beta: i8) -> Entry {
        match (alpha > 0, beta > 0) {
            (true, true) => Entry::A,
            (true, false) => Entry::B,
            (false, true) => Entry::C,
            (false, false) => Entry::D,
        }
    }
}

/// Finite vertical line of N sites with inhomogeneities ξ_1..ξ_N.
#[derive(Clone, Debug)]
pub struct Chain {
    pub p: ModelParams,
    pub xi: Vec<C>,
}

impl Chain {
    pub fn new(p: ModelParams, xi: Vec<C>) -> Result<Self> {
        let n = xi.len();
        if n == 0 || n % 2 != 0 {
            return Err(Error::Invalid(format!("number of sites must be even and positive, got {n}")));
        }
        if n > MAX_SITES || (p.l as usize) << n > MAX_DIM {
            return Err(Error::Size(format!("N={n}, L={} exceeds the dense size guard", p.l)));
        }
        Ok(Chain { p, xi })
    }

    pub fn homogeneous(p: ModelParams, n: usize) -> Result<Self> {
        Chain::new(p, vec![C::new(0.5, 0.0); n])
    }

    pub fn sites(&self) -> usize {
        self.xi.len()
    }
    pub fn words(&self) -> usize {
        1 << self.sites()
    }
    pub fn dim(&self) -> usize {
        self.p.l as usize * self.words()
    }
    pub fn index(&self, h: usize, word: usize) -> usize {
        h * self.words() + word
    }
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx / self.words(), idx % self.words())
    }
    pub fn height(&self, h: usize) -> C {
        self.p.s0 + h as f64
    }
    /// Spin (+1/-1) at site k (0-based) of a word.
    pub fn spin(&self, word: usize, k: usize) -> i8 {
        if (word >> (self.sites() - 1 - k)) & 1 == 1 {
            -1
        } else {
            1
        }
    }
    pub fn weight(&self, word: usize) -> i64 {
        self.sites() as i64 - 2 * word.count_ones() as i64
    }
    /// Height index at site i (1-based) for basis state (h, word).
    pub fn site_height(&self, h: usize, word: usize, i: usize) -> usize {
        let mut acc = h as i64;
        for k in 0..i - 1 {
            acc += self.spin(word, k) as i64;
        }
        acc.rem_euclid(self.p.l) as usize
    }
    pub fn zero_weight_indices(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.weight(self.split(i).1).rem_euclid(self.p.l) == 0)
            .collect()
    }
    fn shift_h(&self, h: usize, d: i64) -> usize {
        (h as i64 + d).rem_euclid(self.p.l) as usize
    }

    /// a(u) d(u) pair of reference-state eigenvalues.
    pub fn d_fn(&self, u: C) -> C {
        self.xi.iter().map(|&x| self.p.bracket(u - x) / self.p.bracket(u - x + 1.0)).product()
    }

    /// Cached R-matrix elements for every (site, output height) combination
    /// met while applying T_{alpha beta}(u).
    fn weights(&self, u: C) -> Vec<Vec<[[C; 4]; 4]>> {
        let l = self.p.l as usize;
        self.xi
            .iter()
            .map(|&x| (0..l).map(|h| r_matrix(&self.p, u - x, self.height(h))).collect())
            .collect()
    }

    /// Apply the hatted monodromy entry T_{alpha beta}(u) to a state.
    pub fn monodromy_apply(&self, entry: Entry, u: C, state: &[C]) -> State {
        let w = self.weights(u);
        self.apply_with(entry, &w, state)
    }

    fn apply_with(&self, entry: Entry, w: &[Vec<[[C; 4]; 4]>], state: &[C]) -> State {
        let (alpha, beta) = entry.indices();
        let n = self.sites();
        let mut out = vec![czero(); self.dim()];
        let dh = if beta > 0 { -1 } else { 1 };
        for (idx, &amp) in state.iter().enumerate() {
            if amp == czero() {
                continue;
            }
            let (h, win) = self.split(idx);
            let hout = self.shift_h(h, dh);
            // depth-first over output spins
            let mut stack: Vec<(usize, i8, usize, i64, C)> = vec![(0, beta, 0, 0, amp)];
            while let Some((k, a, wout, hs, acc)) = stack.pop() {
                if k == n {
                    if a == alpha {
                        out[self.index(hout, wout)] += acc;
                    }
                    continue;
                }
                let e_in = self.spin(win, k);
                for &e_out in &[1i8, -1] {
                    let a_next = a + e_in - e_out;
                    if a_next != 1 && a_next != -1 {
                        continue;
                    }
                    let hk = self.shift_h(hout, hs);
                    let r = w[k][hk][pair_index(a_next, e_out)][pair_index(a, e_in)];
                    if r == czero() {
                        continue;
                    }
                    let bit = if e_out < 0 { 1 << (n - 1 - k) } else { 0 };
                    stack.push((k + 1, a_next, wout | bit, hs + e_out as i64, acc * r));
                }
            }
        }
        out
    }

    pub fn monodromy_dense(&self, entry: Entry, u: C) -> Mat {
        let w = self.weights(u);
        let d = self.dim();
        let mut m = linalg::zeros(d, d);
        let mut e = vec![czero(); d];
        for j in 0..d {
            e[j] = C::new(1.0, 0.0);
            let col = self.apply_with(entry, &w, &e);
            for (i, v) in col.into_iter().enumerate() {
                m[(i, j)] = v;
            }
            e[j] = czero();
        }
        m
    }

    pub fn transfer_apply(&self, u: C, state: &[C]) -> State {
        let w = self.weights(u);
        let mut a = self.apply_with(Entry::A, &w, state);
        let d = self.apply_with(Entry::D, &w, state);
        for (x, y) in a.iter_mut().zip(d) {
            *x += y;
        }
        a
    }

    pub fn transfer_dense(&self, u: C) -> Mat {
        self.monodromy_dense(Entry::A, u) + self.monodromy_dense(Entry::D, u)
    }

    /// δ_s^{(i)} with s = s0 + h.
    pub fn delta_local(&self, i: usize, h: usize) -> Mat {
        let d = self.dim();
        let mut m = linalg::zeros(d, d);
        for idx in 0..d {
            let (h1, w) = self.split(idx);
            if self.site_height(h1, w, i) == h {
                m[(idx, idx)] = C::new(1.0, 0.0);
            }
        }
        m
    }

    pub fn delta_apply(&self, i: usize, h: usize, state: &[C]) -> State {
        state
            .iter()
            .enumerate()
            .map(|(idx, &a)| {
                let (h1, w) = self.split(idx);
                if self.site_height(h1, w, i) == h {
                    a
                } else {
                    czero()
                }
            })
            .collect()
    }

    /// Elementary matrix E^{alpha beta} on site i (1-based).
    pub fn e_local(&self, i: usize, alpha: i8, beta: i8) -> Mat {
        let d = self.dim();
        let n = self.sites();
        let mut m = linalg::zeros(d, d);
        let bit = 1usize << (n - i);
        for idx in 0..d {
            let (h, w) = self.split(idx);
            if self.spin(w, i - 1) != beta {
                continue;
            }
            let w2 = if alpha < 0 { w | bit } else { w & !bit };
            m[(self.index(h, w2), idx)] = C::new(1.0, 0.0);
        }
        m
    }

    /// (τ_s^k f)(s) = f(s + k).
    pub fn tau_shift(&self, k: i64) -> Mat {
        let d = self.dim();
        let mut m = linalg::zeros(d, d);
        for idx in 0..d {
            let (h, w) = self.split(idx);
            let src = self.index(self.shift_h(h, k), w);
            m[(idx, src)] = C::new(1.0, 0.0);
        }
        m
    }

    /// The diagonal operator g(ŝ).
    pub fn height_function(&self, g: impl Fn(C) -> C) -> Mat {
        let d = self.dim();
        let mut m = linalg::zeros(d, d);
        for idx in 0..d {
            m[(idx, idx)] = g(self.height(self.split(idx).0));
        }
        m
    }

    /// Reference state |0>: all spins up at every height.
    pub fn reference(&self) -> State {
        let mut v = vec![czero(); self.dim()];
        for h in 0..self.p.l as usize {
            v[self.index(h, 0)] = C::new(1.0, 0.0);
        }
        v
    }

    /// Max-norm of the RTT relation residual for two spectral parameters,
    /// using the dense monodromy entries (intended for N = 2).
    pub fn rtt_residual(&self, u1: C, u2: C) -> f64 {
        let d = self.dim();
        let ent = [[Entry::A, Entry::B], [Entry::C, Entry::D]];
        let t1: Vec<Vec<Mat>> = ent.iter().map(|r| r.iter().map(|&e| self.monodromy_dense(e, u1)).collect()).collect();
        let t2: Vec<Vec<Mat>> = ent.iter().map(|r| r.iter().map(|&e| self.monodromy_dense(e, u2)).collect()).collect();
        let idx = |a: i8| usize::from(a < 0);
        let sp = [1i8, -1];
        let mut res = 0.0f64;
        // R(s + h_{1..N}) T1 T2 = T2 T1 R(s), entrywise in the two auxiliary spaces.
        for &o1 in &sp {
            for &o2 in &sp {
                for &i1 in &sp {
                    for &i2 in &sp {
                        let mut lhs = linalg::zeros(d, d);
                        let mut rhs = linalg::zeros(d, d);
                        for &m1 in &sp {
                            for &m2 in &sp {
                                // left: R[(o1,o2),(m1,m2)](ŝ + h) acting after T1_{m1 i1} T2_{m2 i2}
                                let prod = &t1[idx(m1)][idx(i1)] * &t2[idx(m2)][idx(i2)];
                                let mut rdiag = linalg::zeros(d, d);
                                for k in 0..d {
                                    let (h, w) = self.split(k);
                                    let hh = self.shift_h(h, self.weight(w));
                                    rdiag[(k, k)] = r_matrix(&self.p, u1 - u2, self.height(hh))[pair_index(o1, o2)][pair_index(m1, m2)];
                                }
                                lhs += rdiag * prod;
                                // right: T2_{o2 m2} T1_{o1 m1} R[(m1,m2),(i1,i2)](ŝ)
                                let prod2 = &t2[idx(o2)][idx(m2)] * &t1[idx(o1)][idx(m1)];
                                let mut rd2 = linalg::zeros(d, d);
                                for k in 0..d {
                                    let (h, _) = self.split(k);
                                    rd2[(k, k)] = r_matrix(&self.p, u1 - u2, self.height(h))[pair_index(m1, m2)][pair_index(i1, i2)];
                                }
                                rhs += prod2 * rd2;
                            }
                        }
                        res = res.max(linalg::max_abs(&(lhs - rhs)));
                    }
                }
            }
        }
        res
    }
}

/// Restrict a dense operator to rows and columns in `idx`.
pub fn restrict(m: &Mat, idx: &[usize]) -> Mat {
    let mut r = linalg::zeros(idx.len(), idx.len());
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            r[(a, b)] = m[(i, j)];
        }
    }
    r
}

/// Max entry of [t(u), t(v)] on the zero-weight block.
pub fn transfer_commutator(chain: &Chain, u: C, v: C) -> f64 {
    let idx = chain.zero_weight_indices();
    let a = restrict(&chain.transfer_dense(u), &idx);
    let b = restrict(&chain.transfer_dense(v), &idx);
    linalg::max_abs(&(&a * &b - &b * &a))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LocalOp {
    E { alpha: i8, beta: i8 },
    Delta { h: usize },
}

/// Residual of the reconstruction of a local operator at site i through
/// transfer matrices at the inhomogeneities, evaluated on the zero-weight
/// block (columns) of the space.
pub fn inverse_problem_residual(chain: &Chain, op: LocalOp, i: usize) -> Result<f64> {
    if i == 0 || i > chain.sites() {
        return Err(Error::Invalid(format!("site {i} out of range")));
    }
    let d = chain.dim();
    let ts: Vec<Mat> = (0..i).map(|k| chain.transfer_dense(chain.xi[k])).collect();
    let inv = |m: &Mat| -> Result<Mat> {
        linalg::inverse(m).ok_or_else(|| Error::Degenerate("transfer matrix at an inhomogeneity is singular".into()))
    };
    let mut id = linalg::zeros(d, d);
    for k in 0..d {
        id[(k, k)] = C::new(1.0, 0.0);
    }
    let (target, recon) = match op {
        LocalOp::E { alpha, beta } => {
            let mut left = id.clone();
            for t in ts.iter().take(i - 1) {
                left = left * t;
            }
            let mut right = id.clone();
            for t in ts.iter().take(i) {
                right = right * inv(t)?;
            }
            let tba = chain.monodromy_dense(Entry::from_indices(beta, alpha), chain.xi[i - 1]);
            let shift = chain.tau_shift((beta - alpha) as i64);
            (chain.e_local(i, alpha, beta), left * tba * right * shift)
        }
        LocalOp::Delta { h } => {
            let mut left = id.clone();
            let mut right = id.clone();
            for t in ts.iter().take(i - 1) {
                left = left * t;
                right = right * inv(t)?;
            }
            (chain.delta_local(i, h), left * chain.delta_local(1, h) * right)
        }
    };
    let cols = chain.zero_weight_indices();
    let mut res = 0.0f64;
    for &j in &cols {
        for r in 0..d {
            res = res.max((target[(r, j)] - recon[(r, j)]).norm());
        }
    }
    Ok(res)
}

/// Write a dense operator as: magic "CSOS", version byte, L and N as u32,
/// a length-prefixed label, then row-major little-endian (re, im) pairs.
pub fn dump_operator<W: Write>(mut w: W, chain: &Chain, label: &str, m: &Mat) -> std::io::Result<()> {
    w.write_all(b"CSOS")?;
    w.write_all(&[1u8])?;
    w.write_all(&(chain.p.l as u32).to_le_bytes())?;
    w.write_all(&(chain.sites() as u32).to_le_bytes())?;
    w.write_all(&(label.len() as u32).to_le_bytes())?;
    w.write_all(label.as_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].re.to_le_bytes())?;
            w.write_all(&m[(i, j)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(C::new(0.0, 1.0), 1, 3, C::new(0.23, 0.61)).unwrap()
    }

    #[test]
    fn r_at_zero_is_permutation() {
        let p = params();
        let r = r_matrix(&p, C::new(0.0, 0.0), C::new(0.3, 0.2));
        let perm = [[1., 0., 0., 0.], [0., 0., 1., 0.], [0., 1., 0., 0.], [0., 0., 0., 1.]];
        for i in 0..4 {
            for j in 0..4 {
                assert!((r[i][j] - perm[i][j]).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn ice_rule() {
        let p = params();
        let w = boltzmann_weight(&p, C::new(0.2, 0.1), C::new(0.4, 0.3), (1, 1), (1, -1)).unwrap();
        assert_eq!(w, C::new(0.0, 0.0));
    }

    #[test]
    fn reference_state_actions() {
        let p = params();
        let ch = Chain::homogeneous(p, 4).unwrap();
        let u = C::new(0.31, 0.07);
        let mut v = vec![C::new(0.0, 0.0); ch.dim()];
        v[ch.index(1, 0)] = C::new(1.0, 0.0);
        let c = ch.monodromy_apply(Entry::C, u, &v);
        assert!(c.iter().all(|x| x.norm() < 1e-14));
        let a = ch.monodromy_apply(Entry::A, u, &v);
        assert!((a[ch.index(0, 0)] - 1.0).norm() < 1e-13);
    }

    #[test]
    fn rtt_small_chain() {
        let p = params();
        let ch = Chain::new(p, vec![C::new(0.1, 0.0), C::new(-0.3, 0.0)]).unwrap();
        assert!(ch.rtt_residual(C::new(0.4, 0.1), C::new(-0.2, 0.05)) < 1e-10);
    }

    #[test]
    fn size_guard() {
        assert!(Chain::homogeneous(params(), 14).is_err());
        assert!(Chain::homogeneous(params(), 3).is_err());
    }
}
