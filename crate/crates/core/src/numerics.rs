//! Complex matrix kernels, orthogonal constructions and the random-source
//! contract shared by the rest of the simulator.
//!
//! [`CMatrix`] is a thin newtype over a dense `nalgebra` matrix. Everything the
//! simulator needs beyond products (pseudo-inverse, singular values) goes
//! through the SVD.

use std::f64::consts::PI;
use std::ops::{Index, IndexMut, Mul};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Condition estimate above which [`pinv`] reports rank deficiency.
pub const MAX_CONDITION: f64 = 1e12;

/// Dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix(DMatrix<C64>);

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    /// Build from row-major data.
    pub fn from_row_slice(rows: usize, cols: usize, data: &[C64]) -> Self {
        Self(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |r, c| if r == c { diag[r] } else { C64::new(0.0, 0.0) })
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }

    pub fn inner(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn inner_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.0
    }

    pub fn into_inner(self) -> DMatrix<C64> {
        self.0
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols(), "vector length must match column count");
        (0..self.rows())
            .map(|r| (0..self.cols()).map(|c| self.0[(r, c)] * v[c]).sum())
            .collect()
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        self.0.column(c).iter().copied().collect()
    }

    /// Columns `start..start + len` as a new matrix.
    pub fn columns(&self, start: usize, len: usize) -> Self {
        Self(self.0.columns(start, len).into_owned())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.0.clone().svd(false, false).singular_values.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    }

    /// Ratio of largest to smallest singular value (`inf` when singular).
    pub fn condition_number(&self) -> f64 {
        let s = self.singular_values();
        match (s.first(), s.last()) {
            (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
            _ => f64::INFINITY,
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, idx: (usize, usize)) -> &C64 {
        &self.0[idx]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut C64 {
        &mut self.0[idx]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;

    fn mul(self, rhs: &CMatrix) -> CMatrix {
        CMatrix(&self.0 * &rhs.0)
    }
}

impl From<DMatrix<C64>> for CMatrix {
    fn from(m: DMatrix<C64>) -> Self {
        Self(m)
    }
}

/// Moore-Penrose pseudo-inverse of a square matrix.
///
/// Computed from the SVD. Matrices whose condition estimate exceeds
/// [`MAX_CONDITION`] are rejected rather than silently regularised.
pub fn pinv(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    if !m.is_finite() {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let n = m.rows();
    let svd = m.0.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.iter().copied().fold(0.0, f64::max);
    let s_min = s.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let u = svd.u.expect("svd computed with u");
    let v_t = svd.v_t.expect("svd computed with v_t");
    // M = U S V^H  =>  M^+ = V S^-1 U^H
    let mut v_sinv = v_t.adjoint();
    for (j, &sj) in s.iter().enumerate().take(n) {
        v_sinv.column_mut(j).scale_mut(1.0 / sj);
    }
    Ok(CMatrix(v_sinv * u.adjoint()))
}

/// Square matrix with entries in {+1, -1}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    order: usize,
    data: Vec<i8>,
}

impl SignMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn get(&self, r: usize, c: usize) -> i8 {
        self.data[r * self.order + c]
    }

    /// `H H^T` in exact integer arithmetic, row-major.
    pub fn gram(&self) -> Vec<i64> {
        let n = self.order;
        let mut g = vec![0i64; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] = (0..n).map(|k| i64::from(self.get(i, k)) * i64::from(self.get(j, k))).sum();
            }
        }
        g
    }

    /// True when `H H^T = n I` exactly.
    pub fn is_hadamard(&self) -> bool {
        let n = self.order;
        self.gram()
            .iter()
            .enumerate()
            .all(|(idx, &v)| v == if idx / n == idx % n { n as i64 } else { 0 })
    }

    pub fn to_cmatrix(&self) -> CMatrix {
        CMatrix::from_fn(self.order, self.order, |r, c| C64::new(f64::from(self.get(r, c)), 0.0))
    }

    fn kron(&self, other: &SignMatrix) -> SignMatrix {
        let (a, b) = (self.order, other.order);
        let n = a * b;
        let mut data = vec![0i8; n * n];
        for i in 0..a {
            for j in 0..a {
                let s = self.get(i, j);
                for k in 0..b {
                    for l in 0..b {
                        data[(i * b + k) * n + j * b + l] = s * other.get(k, l);
                    }
                }
            }
        }
        SignMatrix { order: n, data }
    }
}

fn is_prime(q: usize) -> bool {
    q >= 2 && (2..).take_while(|d| d * d <= q).all(|d| !q.is_multiple_of(d))
}

/// Paley type I construction of order `q + 1`, `q` prime with `q = 3 mod 4`.
fn paley_i(q: usize) -> SignMatrix {
    let residues: Vec<bool> = {
        let mut r = vec![false; q];
        for x in 1..q {
            r[x * x % q] = true;
        }
        r
    };
    let chi = |x: usize| -> i8 {
        match x % q {
            0 => 0,
            v if residues[v] => 1,
            _ => -1,
        }
    };
    let n = q + 1;
    let mut data = vec![0i8; n * n];
    // H = I + S, S = [[0, 1^T], [-1, Q]] with Q[i][j] = chi(j - i).
    for r in 0..n {
        for c in 0..n {
            let s = match (r, c) {
                (0, 0) => 0,
                (0, _) => 1,
                (_, 0) => -1,
                _ => chi(c + q - r),
            };
            data[r * n + c] = s + i8::from(r == c);
        }
    }
    SignMatrix { order: n, data }
}

fn build_hadamard(n: usize) -> Option<SignMatrix> {
    if n == 0 {
        return None;
    }
    if n == 1 {
        return Some(SignMatrix { order: 1, data: vec![1] });
    }
    if n.is_multiple_of(2) {
        if let Some(h) = build_hadamard(n / 2) {
            let h2 = SignMatrix { order: 2, data: vec![1, 1, 1, -1] };
            return Some(h2.kron(&h));
        }
    }
    (4..=n)
        .step_by(4)
        .filter(|d| n.is_multiple_of(*d) && is_prime(d - 1) && (d - 1) % 4 == 3)
        .find_map(|d| build_hadamard(n / d).map(|rest| paley_i(d - 1).kron(&rest)))
}

/// Hadamard matrix of order `n` from Kronecker products of `H_2` and Paley-I
/// blocks.
pub fn hadamard(n: usize) -> Result<SignMatrix> {
    build_hadamard(n).ok_or(Error::HadamardOrder(n))
}

/// `W[m, n] = exp(-j 2 pi m n / N)`.
pub fn dft_matrix(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |r, c| {
        let k = (r * c) % n.max(1);
        C64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream addressed by `(master_seed, stream_id)`.
///
/// Backed by ChaCha8 with the stream id in the cipher's stream word, so any
/// `(seed, stream)` pair can be reconstructed independently of execution
/// order. Sources are single-owner; derive sub-streams with [`fork`].
///
/// [`fork`]: RandomSource::fork
#[derive(Debug, Clone)]
pub struct RandomSource {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self { master_seed, stream_id, rng }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Fresh source on a sub-stream keyed by `tag`. Does not advance `self`.
    pub fn fork(&self, tag: u64) -> RandomSource {
        let stream = splitmix64(self.stream_id ^ splitmix64(tag.wrapping_add(0xA076_1D64_78BD_642F)));
        RandomSource::new(self.master_seed, stream)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Uniform integer in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        use rand::Rng;
        self.rng.random_range(0..n)
    }

    /// One CN(0, variance) sample.
    pub fn cgauss(&mut self, variance: f64) -> C64 {
        let s = (variance / 2.0).sqrt();
        let re = self.standard_normal();
        let im = self.standard_normal();
        C64::new(s * re, s * im)
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// `count` i.i.d. CN(0, variance) samples.
pub fn sample_cgauss(rs: &mut RandomSource, count: usize, variance: f64) -> Result<Vec<C64>> {
    if variance < 0.0 || variance.is_nan() {
        return Err(Error::NegativeVariance(variance));
    }
    Ok((0..count).map(|_| rs.cgauss(variance)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn well_conditioned(rs: &mut RandomSource, n: usize) -> CMatrix {
        let noise = CMatrix::from_fn(n, n, |_, _| rs.cgauss(0.1));
        CMatrix::identity(n).scale(2.0).add(&noise)
    }

    #[test]
    fn pinv_identity() {
        let p = pinv(&CMatrix::identity(4)).unwrap();
        assert!(p.sub(&CMatrix::identity(4)).max_abs() < 1e-14);
    }

    #[test]
    fn pinv_dft_is_scaled_adjoint() {
        let w = dft_matrix(4);
        let p = pinv(&w).unwrap();
        assert!(p.sub(&w.adjoint().scale(0.25)).max_abs() < 1e-12);
        assert!((&p * &w).sub(&CMatrix::identity(4)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn pinv_moore_penrose_and_involution() {
        let mut rs = RandomSource::new(7, 0);
        for _ in 0..50 {
            let m = well_conditioned(&mut rs, 4);
            let p = pinv(&m).unwrap();
            let mpm = &(&m * &p) * &m;
            assert!(mpm.sub(&m).frobenius_norm() / m.frobenius_norm() < 1e-10);
            let pmp = &(&p * &m) * &p;
            assert!(pmp.sub(&p).frobenius_norm() / p.frobenius_norm() < 1e-10);
            let pp = pinv(&p).unwrap();
            assert!(pp.sub(&m).frobenius_norm() / m.frobenius_norm() < 1e-9);
        }
    }

    #[test]
    fn pinv_rejects_singular() {
        let mut m = CMatrix::identity(3);
        m[(2, 2)] = C64::new(0.0, 0.0);
        assert!(matches!(pinv(&m), Err(Error::RankDeficient { .. })));
        let mut near = CMatrix::identity(3);
        near[(1, 1)] = C64::new(1e-14, 0.0);
        assert!(matches!(pinv(&near), Err(Error::RankDeficient { .. })));
        assert!(matches!(pinv(&CMatrix::zeros(2, 3)), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn hadamard_base_cases() {
        let h2 = hadamard(2).unwrap();
        assert_eq!((h2.get(0, 0), h2.get(0, 1), h2.get(1, 0), h2.get(1, 1)), (1, 1, 1, -1));
        assert_eq!(hadamard(1).unwrap().get(0, 0), 1);
    }

    #[test]
    fn hadamard_orders_used_by_sweep() {
        for n in [1, 2, 4, 8, 12, 16, 20, 24, 32, 40, 48, 64, 80, 96] {
            let h = hadamard(n).unwrap();
            assert_eq!(h.order(), n);
            assert!(h.is_hadamard(), "order {n}");
        }
    }

    #[test]
    fn hadamard_paley_twelve_is_not_sylvester() {
        // 12 is not a power of two: must come from the Paley branch.
        let h = hadamard(12).unwrap();
        let g = h.gram();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(g[i * 12 + j], if i == j { 12 } else { 0 });
            }
        }
    }

    #[test]
    fn hadamard_unconstructible_orders() {
        for n in [0, 3, 6, 92] {
            assert!(matches!(hadamard(n), Err(Error::HadamardOrder(_))), "order {n}");
        }
    }

    #[test]
    fn dft_small_cases() {
        assert!((dft_matrix(1)[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-15);
        let w2 = dft_matrix(2);
        let h2 = hadamard(2).unwrap().to_cmatrix();
        assert!(w2.sub(&h2).max_abs() < 1e-15);
        let w4 = dft_matrix(4);
        let gram = &w4.adjoint() * &w4;
        assert!(gram.sub(&CMatrix::identity(4).scale(4.0)).frobenius_norm() < 1e-12);
    }

    #[test]
    fn cgauss_zero_variance_and_errors() {
        let mut rs = RandomSource::new(1, 2);
        assert!(sample_cgauss(&mut rs, 16, 0.0).unwrap().iter().all(|z| *z == C64::new(0.0, 0.0)));
        assert!(matches!(sample_cgauss(&mut rs, 1, -1.0), Err(Error::NegativeVariance(_))));
    }

    #[test]
    fn cgauss_moments() {
        let mut rs = RandomSource::new(11, 3);
        let n = 1_000_000;
        let v = sample_cgauss(&mut rs, n, 1.0).unwrap();
        let mean: C64 = v.iter().sum::<C64>() / n as f64;
        let var = v.iter().map(|z| (z - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
        let re_var = v.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        assert!(mean.norm() < 0.005, "mean {mean}");
        assert!((0.99..=1.01).contains(&var), "var {var}");
        assert!((re_var - 0.5).abs() < 0.005, "real-part variance {re_var}");
    }

    #[test]
    fn random_source_determinism() {
        let mut a = RandomSource::new(99, 5);
        let mut b = RandomSource::new(99, 5);
        let va = sample_cgauss(&mut a, 64, 1.0).unwrap();
        let vb = sample_cgauss(&mut b, 64, 1.0).unwrap();
        assert_eq!(va, vb);
        let mut c = RandomSource::new(99, 6);
        assert_ne!(va, sample_cgauss(&mut c, 64, 1.0).unwrap());
        // fork does not advance the parent
        let parent = RandomSource::new(99, 5);
        let f1 = parent.fork(3);
        let f2 = parent.fork(3);
        assert_eq!(f1.stream_id(), f2.stream_id());
        assert_ne!(parent.fork(4).stream_id(), f1.stream_id());
    }

    #[test]
    fn distinct_streams_uncorrelated() {
        let n = 100_000;
        let mut a = RandomSource::new(2024, 0);
        let mut b = RandomSource::new(2024, 1);
        let xa: Vec<f64> = (0..n).map(|_| a.standard_normal()).collect();
        let xb: Vec<f64> = (0..n).map(|_| b.standard_normal()).collect();
        let rho = xa.iter().zip(&xb).map(|(x, y)| x * y).sum::<f64>() / n as f64;
        assert!(rho.abs() < 0.01, "rho {rho}");
    }
}
