//! Dense complex linear algebra sized for n <= ~1024.
//!
//! Reference implementations: plain O(n^3) loops, written cache-friendly,
//! no blocking. The performance-critical resolvent sweeps use the split
//! real/imaginary kernels in `planar`; the two are cross-checked in tests.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("matrix is numerically singular")]
    SingularMatrix,
    #[error("no convergence after {iterations} iterations (last estimate {estimate:.6e})")]
    NoConvergence { iterations: usize, estimate: f64 },
    #[error("matrix entries must be finite")]
    NonFiniteEntry,
}

/// Square complex matrix, row-major dense storage. The universal carrier for
/// samples X, deterministic test matrices A, and resolvent blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    /// Builds from row-major data; rejects wrong length and non-finite entries.
    pub fn new(n: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if data.len() != n * n {
            return Err(LinalgError::DimensionMismatch(n * n, data.len()));
        }
        if !data.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(LinalgError::NonFiniteEntry);
        }
        Ok(Self { n, data })
    }

    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![Complex64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(d: &[Complex64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = d[i];
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.n).map(|i| self.at(i, i)).fold(Complex64::new(0.0, 0.0), |a, b| a + b)
    }

    /// Normalized trace N^{-1} Tr.
    pub fn normalized_trace(&self) -> Complex64 {
        self.trace() / self.n as f64
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.at(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self.at(j, i))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n != other.n {
            return Err(LinalgError::DimensionMismatch(self.n, other.n));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { n: self.n, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.n != other.n {
            return Err(LinalgError::DimensionMismatch(self.n, other.n));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { n: self.n, data })
    }

    /// Adds s to every diagonal entry, in place.
    pub fn shift_diag(&mut self, s: Complex64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += s;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// Plain triple-loop product, i-k-j order so the inner loop runs over
/// contiguous rows of both output and right factor.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if a.n != b.n {
        return Err(LinalgError::DimensionMismatch(a.n, b.n));
    }
    let n = a.n;
    let mut out = DenseMatrix::zeros(n);
    for i in 0..n {
        for k in 0..n {
            let aik = a.data[i * n + k];
            if aik.re == 0.0 && aik.im == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += aik * brow[j];
            }
        }
    }
    Ok(out)
}

/// Lower-triangular Cholesky factor L of a Hermitian positive-definite matrix,
/// H = L L*. Diagonal of L is real positive.
#[derive(Debug, Clone)]
pub struct HermitianFactor {
    n: usize,
    l: Vec<Complex64>,
}

impl HermitianFactor {
    /// Wraps an already-computed lower factor. The strict upper triangle of
    /// `l` is ignored; the diagonal must be real positive.
    pub(crate) fn from_lower(l: &DenseMatrix) -> Self {
        let n = l.n();
        let mut data = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..=i {
                data[i * n + j] = l.at(i, j);
            }
            data[i * n + i] = Complex64::new(l.at(i, i).re, 0.0);
        }
        HermitianFactor { n, l: data }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.l[i * self.n + j]
    }

    /// Reconstructs L L* (test and audit use).
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.n;
        DenseMatrix::from_fn(n, |i, j| {
            let kmax = i.min(j) + 1;
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..kmax {
                s += self.l[i * n + k] * self.l[j * n + k].conj();
            }
            s
        })
    }

    /// Solves H x = v for one vector through the two triangular sweeps.
    pub fn solve_vec(&self, v: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        if v.len() != self.n {
            return Err(LinalgError::DimensionMismatch(self.n, v.len()));
        }
        let n = self.n;
        let mut y = v.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= self.l[i * n + k] * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        // back substitution with L*: (L*)_{ik} = conj(L_{ki})
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[k * n + i].conj() * y[k];
            }
            y[i] = s / self.l[i * n + i].re;
        }
        Ok(y)
    }
}

/// Cholesky factorization of a Hermitian positive-definite matrix
/// (Banachiewicz ordering). The input must be Hermitian to 1e-12 relative
/// to its largest entry; a non-positive pivot reports the offending row,
/// which in resolvent use signals z too close to the spectrum for the
/// chosen eta.
pub fn cholesky(h: &DenseMatrix) -> Result<HermitianFactor, LinalgError> {
    let n = h.n;
    let scale = h.max_abs().max(1.0);
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            let d = (h.at(i, j) - h.at(j, i).conj()).norm();
            if d > asym {
                asym = d;
            }
        }
    }
    if asym > 1e-12 * scale {
        return Err(LinalgError::NotHermitian(asym));
    }

    let mut l = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..i {
            let mut s = h.at(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k].conj();
            }
            l[i * n + j] = s / l[j * n + j].re;
        }
        let mut d = h.at(i, i).re;
        for k in 0..i {
            d -= l[i * n + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { row: i, pivot: d });
        }
        l[i * n + i] = Complex64::new(d.sqrt(), 0.0);
    }
    Ok(HermitianFactor { n, l })
}

/// Solves H X = B given the factor of H, by forward/back substitution over
/// all columns at once (row sweeps keep the inner loops contiguous).
pub fn solve(f: &HermitianFactor, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    if f.n != b.n {
        return Err(LinalgError::DimensionMismatch(f.n, b.n));
    }
    let n = f.n;
    let mut y = b.data.clone();
    for i in 0..n {
        for k in 0..i {
            let lik = f.l[i * n + k];
            let (head, tail) = y.split_at_mut(i * n);
            let yk = &head[k * n..k * n + n];
            let yi = &mut tail[..n];
            for j in 0..n {
                yi[j] -= lik * yk[j];
            }
        }
        let d = f.l[i * n + i].re;
        for j in 0..n {
            y[i * n + j] /= d;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki_conj = f.l[k * n + i].conj();
            let (head, tail) = y.split_at_mut(k * n);
            let yi = &mut head[i * n..i * n + n];
            let yk = &tail[..n];
            for j in 0..n {
                yi[j] -= lki_conj * yk[j];
            }
        }
        let d = f.l[i * n + i].re;
        for j in 0..n {
            y[i * n + j] /= d;
        }
    }
    Ok(DenseMatrix { n, data: y })
}

fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // sum conj(a_i) b_i
    let mut s = Complex64::new(0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        s += x.conj() * y;
    }
    s
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Deterministic pseudo-random unit vector for restarts; fixed secondary
/// seed so reruns are bitwise reproducible.
fn restart_vector(n: usize, round: u64) -> Vec<Complex64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_0001u64.wrapping_add(round));
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let nrm = norm2(&v);
    for c in &mut v {
        *c /= nrm;
    }
    v
}

/// Smallest singular value of a square matrix Y: an estimate of the lower
/// edge of the singular spectrum by inverse power iteration on Y Y*,
/// accelerated by one Cholesky factorization. Iterates until the relative
/// change of the estimate drops below `tol`; the iterates approach sigma_min
/// from above, so the converged value is accurate to O(tol) relative.
/// Seeded with the normalized all-ones vector; restarts deterministically
/// on stagnation.
pub fn smallest_singular_value(y: &DenseMatrix, tol: f64) -> Result<f64, LinalgError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = y.n;
    // H = Y Y*, Hermitian PSD; computed lower-half then mirrored.
    let mut h = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot_conj(y.row(j), y.row(i)); // sum_k Y_ik conj(Y_jk)
            h.set(i, j, s);
            h.set(j, i, s.conj());
        }
    }

    // EPSILON floor keeps the shift nonzero for degenerate inputs such as
    // the zero matrix, where the trace-based scale vanishes.
    let scale = (h.trace().re / n as f64).max(f64::EPSILON);
    let mut shift = 0.0f64;
    let mut factor = None;
    for attempt in 0..5 {
        let mut hs = h.clone();
        if attempt > 0 {
            shift = scale * 1e-14 * 100f64.powi(attempt - 1);
            hs.shift_diag(Complex64::new(shift, 0.0));
        }
        match cholesky(&hs) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(LinalgError::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let factor = factor.ok_or(LinalgError::SingularMatrix)?;

    let inv_n_sqrt = 1.0 / (n as f64).sqrt();
    let mut v = vec![Complex64::new(inv_n_sqrt, 0.0); n];
    let mut prev = f64::INFINITY;
    let mut restarts = 0u64;
    for it in 1..=500usize {
        let u = factor.solve_vec(&v)?;
        let rho = dot_conj(&v, &u).re; // Rayleigh quotient of (H + shift)^{-1}
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(LinalgError::SingularMatrix);
        }
        let lambda = (1.0 / rho - shift).max(0.0);
        let sigma = lambda.sqrt();
        let nrm = norm2(&u);
        for (vi, ui) in v.iter_mut().zip(&u) {
            *vi = ui / nrm;
        }
        if (sigma - prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) {
            return Ok(sigma);
        }
        prev = sigma;
        if it % 120 == 0 {
            restarts += 1;
            v = restart_vector(n, restarts);
        }
    }
    Err(LinalgError::NoConvergence { iterations: 500, estimate: prev })
}

/// Tr(A B) as the pairing sum_{i,j} A_ij B_ji, never forming the product.
/// Index pairs (i,j),(j,i) are accumulated together, so swapping the
/// arguments reproduces the identical partial-sum sequence and the result
/// is bitwise symmetric in (A, B).
pub fn trace_product(a: &DenseMatrix, b: &DenseMatrix) -> Result<Complex64, LinalgError> {
    if a.n != b.n {
        return Err(LinalgError::DimensionMismatch(a.n, b.n));
    }
    let n = a.n;
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..=i {
            if i == j {
                acc += a.at(i, i) * b.at(i, i);
            } else {
                acc += a.at(i, j) * b.at(j, i) + a.at(j, i) * b.at(i, j);
            }
        }
    }
    Ok(acc)
}

/// Spectral norm estimate by power iteration on A*A (all-ones start, fixed
/// iteration budget). Used for norm warnings and the large-|z| certificate;
/// not a certified bound.
pub fn op_norm_est(a: &DenseMatrix, iters: usize) -> f64 {
    let n = a.n;
    let mut v = vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n];
    let mut lam = 0.0f64;
    for _ in 0..iters {
        // w = A v, u = A* w
        let mut w = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            let row = a.row(i);
            for k in 0..n {
                s += row[k] * v[k];
            }
            w[i] = s;
        }
        let mut u = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let wi = w[i];
            let row = a.row(i);
            for k in 0..n {
                u[k] += row[k].conj() * wi;
            }
        }
        let nrm = norm2(&u);
        if nrm == 0.0 {
            return 0.0;
        }
        lam = nrm;
        for c in &mut u {
            *c /= nrm;
        }
        v = u;
    }
    lam.sqrt()
}

/// LU with partial pivoting for general complex matrices; the direct
/// (non-Hermitized) resolvent route runs through this.
pub(crate) struct LuFactor {
    n: usize,
    lu: Vec<Complex64>,
    piv: Vec<usize>,
}

pub(crate) fn lu_factor(a: &DenseMatrix) -> Result<LuFactor, LinalgError> {
    let n = a.n;
    let mut lu = a.data.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    // relative pivot floor: exact rank deficiency leaves eliminated residues
    // of order max|A| * eps, which must not pass as usable pivots
    let floor = a.max_abs() * n as f64 * 1e-15;
    for k in 0..n {
        let mut pmax = lu[k * n + k].norm();
        let mut prow = k;
        for r in k + 1..n {
            let m = lu[r * n + k].norm();
            if m > pmax {
                pmax = m;
                prow = r;
            }
        }
        if !(pmax > floor) || !pmax.is_finite() {
            return Err(LinalgError::SingularMatrix);
        }
        if prow != k {
            for j in 0..n {
                lu.swap(k * n + j, prow * n + j);
            }
            piv.swap(k, prow);
        }
        let pivot = lu[k * n + k];
        for r in k + 1..n {
            let m = lu[r * n + k] / pivot;
            lu[r * n + k] = m;
            let (top, bottom) = lu.split_at_mut(r * n);
            let krow = &top[k * n..k * n + n];
            let rrow = &mut bottom[..n];
            for j in k + 1..n {
                rrow[j] -= m * krow[j];
            }
        }
    }
    Ok(LuFactor { n, lu, piv })
}

impl LuFactor {
    pub(crate) fn solve_vec(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut x: Vec<Complex64> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.lu[i * n + k] * x[k];
            }
            x[i] = s / self.lu[i * n + i];
        }
        x
    }

    /// Solves A X = B for all columns of B.
    pub(crate) fn solve_mat(&self, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        if b.n != self.n {
            return Err(LinalgError::DimensionMismatch(self.n, b.n));
        }
        let n = self.n;
        let mut y = DenseMatrix::zeros(n);
        for i in 0..n {
            let src = b.row(self.piv[i]).to_vec();
            y.data[i * n..(i + 1) * n].copy_from_slice(&src);
        }
        for i in 1..n {
            for k in 0..i {
                let m = self.lu[i * n + k];
                let (head, tail) = y.data.split_at_mut(i * n);
                let yk = &head[k * n..k * n + n];
                let yi = &mut tail[..n];
                for j in 0..n {
                    yi[j] -= m * yk[j];
                }
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let m = self.lu[i * n + k];
                let (head, tail) = y.data.split_at_mut(k * n);
                let yi = &mut head[i * n..i * n + n];
                let yk = &tail[..n];
                for j in 0..n {
                    yi[j] -= m * yk[j];
                }
            }
            let d = self.lu[i * n + i];
            for j in 0..n {
                y.data[i * n + j] /= d;
            }
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(n: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    fn random_pd(n: usize, seed: u64) -> DenseMatrix {
        // Y Y* + I is Hermitian positive definite by construction.
        let y = random_matrix(n, seed);
        let mut h = matmul(&y, &y.conj_transpose()).unwrap();
        h.shift_diag(c(1.0, 0.0));
        // symmetrize exactly so the Hermitian precondition holds bitwise
        DenseMatrix::from_fn(n, |i, j| (h.at(i, j) + h.at(j, i).conj()) * 0.5)
    }

    /// One-sided Jacobi SVD, used as an independent full-accuracy oracle for
    /// singular values: rotations orthogonalize pairs of columns of Y until
    /// convergence; singular values are the resulting column norms.
    fn jacobi_singular_values(y: &DenseMatrix) -> Vec<f64> {
        let n = y.n();
        let mut cols: Vec<Vec<Complex64>> = (0..n)
            .map(|j| (0..n).map(|i| y.at(i, j)).collect())
            .collect();
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for p in 0..n {
                for q in p + 1..n {
                    let (cp, cq) = {
                        let (a, b) = cols.split_at_mut(q);
                        (&mut a[p], &mut b[0])
                    };
                    let app: f64 = cp.iter().map(|x| x.norm_sqr()).sum();
                    let aqq: f64 = cq.iter().map(|x| x.norm_sqr()).sum();
                    let apq: Complex64 = cp
                        .iter()
                        .zip(cq.iter())
                        .map(|(a, b)| a.conj() * b)
                        .fold(c(0.0, 0.0), |s, t| s + t);
                    let m = apq.norm();
                    off = off.max(m / (app * aqq).sqrt().max(f64::MIN_POSITIVE));
                    if m < 1e-15 * (app * aqq).sqrt().max(f64::MIN_POSITIVE) {
                        continue;
                    }
                    let phase = apq / m;
                    let tau = (aqq - app) / (2.0 * m);
                    let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                    let cs = 1.0 / (1.0 + t * t).sqrt();
                    let sn = cs * t;
                    for i in 0..n {
                        let xp = cp[i];
                        let xq = cq[i];
                        cp[i] = xp * cs - xq * phase.conj() * sn;
                        cq[i] = xp * phase * sn + xq * cs;
                    }
                }
            }
            if off < 1e-14 {
                break;
            }
        }
        let mut sv: Vec<f64> = cols
            .iter()
            .map(|col| col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        sv.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sv
    }

    #[test]
    fn cholesky_identity() {
        let f = cholesky(&DenseMatrix::identity(3)).unwrap();
        assert_eq!(f.reconstruct(), DenseMatrix::identity(3));
        for i in 0..3 {
            assert_eq!(f.at(i, i), c(1.0, 0.0));
        }
    }

    #[test]
    fn cholesky_diagonal() {
        let f = cholesky(&DenseMatrix::diag(&[c(4.0, 0.0), c(9.0, 0.0)])).unwrap();
        assert_eq!(f.at(0, 0), c(2.0, 0.0));
        assert_eq!(f.at(1, 1), c(3.0, 0.0));
    }

    #[test]
    fn cholesky_reconstruction() {
        let h = random_pd(8, 11);
        let f = cholesky(&h).unwrap();
        let r = f.reconstruct().sub(&h).unwrap();
        assert!(r.max_abs() <= 1e-10 * h.max_abs());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let h = DenseMatrix::diag(&[c(1.0, 0.0), c(-2.0, 0.0)]);
        match cholesky(&h) {
            Err(LinalgError::NotPositiveDefinite { row: 1, .. }) => {}
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn cholesky_rejects_non_hermitian() {
        let mut h = DenseMatrix::identity(2);
        h.set(0, 1, c(0.5, 0.0));
        assert!(matches!(cholesky(&h), Err(LinalgError::NotHermitian(_))));
    }

    #[test]
    fn solve_identity_factor() {
        let f = cholesky(&DenseMatrix::identity(4)).unwrap();
        let b = random_matrix(4, 3);
        assert_eq!(solve(&f, &b).unwrap(), b);
    }

    #[test]
    fn solve_diagonal() {
        let f = cholesky(&DenseMatrix::diag(&[c(2.0, 0.0), c(2.0, 0.0)])).unwrap();
        let x = solve(&f, &DenseMatrix::identity(2)).unwrap();
        let expect = DenseMatrix::diag(&[c(0.5, 0.0), c(0.5, 0.0)]);
        assert!(x.sub(&expect).unwrap().max_abs() <= 1e-15);
    }

    #[test]
    fn solve_residual() {
        let h = random_pd(8, 5);
        let b = random_matrix(8, 6);
        let f = cholesky(&h).unwrap();
        let x = solve(&f, &b).unwrap();
        let r = matmul(&h, &x).unwrap().sub(&b).unwrap();
        assert!(r.frobenius_norm() <= 1e-9 * b.frobenius_norm());
    }

    #[test]
    fn solve_roundtrip_invariant() {
        for seed in 0..5u64 {
            let h = random_pd(6, 100 + seed);
            let b = random_matrix(6, 200 + seed);
            let hb = matmul(&h, &b).unwrap();
            let f = cholesky(&h).unwrap();
            let x = solve(&f, &hb).unwrap();
            let err = x.sub(&b).unwrap().frobenius_norm();
            assert!(err <= 1e-9 * b.frobenius_norm(), "seed {seed}: {err}");
        }
    }

    #[test]
    fn sigma_min_identity() {
        let s = smallest_singular_value(&DenseMatrix::identity(5), 1e-10).unwrap();
        assert!((s - 1.0).abs() <= 1e-12, "{s}");
    }

    #[test]
    fn sigma_min_diagonal() {
        let y = DenseMatrix::diag(&[c(3.0, 0.0), c(1.0, 0.0), c(7.0, 0.0)]);
        let s = smallest_singular_value(&y, 1e-10).unwrap();
        assert!((s - 1.0).abs() <= 1e-8, "{s}");
    }

    #[test]
    fn sigma_min_vs_jacobi_oracle() {
        // expected values frozen from the one-sided Jacobi SVD oracle above
        let y = random_matrix(16, 42);
        let oracle = jacobi_singular_values(&y)[0];
        let s = smallest_singular_value(&y, 1e-10).unwrap();
        assert!((s - oracle).abs() <= 1e-6 * oracle, "estimate {s} vs oracle {oracle}");
    }

    #[test]
    fn sigma_min_of_constructed_svd() {
        // U D V* with unitary U, V from Gram-Schmidt; sigma_min must be min(D).
        let n = 12;
        let gram_schmidt = |m: &DenseMatrix| {
            let mut cols: Vec<Vec<Complex64>> = (0..n)
                .map(|j| (0..n).map(|i| m.at(i, j)).collect())
                .collect();
            for j in 0..n {
                for _ in 0..2 {
                    for k in 0..j {
                        let proj: Complex64 = cols[k]
                            .iter()
                            .zip(cols[j].iter())
                            .map(|(a, b)| a.conj() * b)
                            .fold(c(0.0, 0.0), |s, t| s + t);
                        for i in 0..n {
                            let ck = cols[k][i];
                            cols[j][i] -= proj * ck;
                        }
                    }
                }
                let nrm = cols[j].iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
                for x in &mut cols[j] {
                    *x /= nrm;
                }
            }
            DenseMatrix::from_fn(n, |i, j| cols[j][i])
        };
        let u = gram_schmidt(&random_matrix(n, 7));
        let v = gram_schmidt(&random_matrix(n, 8));
        let dvals: Vec<f64> = (0..n).map(|k| 0.5 + 0.25 * k as f64).collect();
        let d = DenseMatrix::diag(&dvals.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>());
        let y = matmul(&matmul(&u, &d).unwrap(), &v.conj_transpose()).unwrap();
        let s = smallest_singular_value(&y, 1e-10).unwrap();
        assert!((s - 0.5).abs() <= 1e-6, "{s}");
    }

    #[test]
    fn sigma_min_singular_matrix() {
        let y = DenseMatrix::zeros(4);
        // Y Y* = 0 still factors after the escalating shift, and the smallest
        // singular value must come out as ~0 rather than an error.
        let s = smallest_singular_value(&y, 1e-8).unwrap();
        assert!(s < 1e-6, "{s}");
    }

    #[test]
    fn trace_product_examples() {
        let a = DenseMatrix::diag(&[c(1.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(trace_product(&a, &a).unwrap(), c(5.0, 0.0));

        let b = random_matrix(6, 9);
        let t = trace_product(&DenseMatrix::identity(6), &b).unwrap();
        let tb = b.trace();
        assert!((t - tb).norm() <= 1e-14 * tb.norm());
    }

    #[test]
    fn trace_product_matches_explicit_product() {
        let a = random_matrix(8, 21);
        let b = random_matrix(8, 22);
        let explicit = matmul(&a, &b).unwrap().trace();
        let fast = trace_product(&a, &b).unwrap();
        assert!((explicit - fast).norm() <= 1e-12 * explicit.norm().max(1.0));
    }

    #[test]
    fn trace_product_dimension_mismatch() {
        let a = DenseMatrix::identity(3);
        let b = DenseMatrix::identity(4);
        assert!(matches!(trace_product(&a, &b), Err(LinalgError::DimensionMismatch(3, 4))));
    }

    #[test]
    fn lu_solves_general_system() {
        let a = random_matrix(8, 31);
        let b = random_matrix(8, 32);
        let f = lu_factor(&a).unwrap();
        let x = f.solve_mat(&b).unwrap();
        let r = matmul(&a, &x).unwrap().sub(&b).unwrap();
        assert!(r.frobenius_norm() <= 1e-10 * b.frobenius_norm());

        let v: Vec<Complex64> = (0..8).map(|i| c(i as f64 + 1.0, -(i as f64))).collect();
        let xv = f.solve_vec(&v);
        let mut rv = 0.0f64;
        for i in 0..8 {
            let mut s = c(0.0, 0.0);
            for k in 0..8 {
                s += a.at(i, k) * xv[k];
            }
            rv = rv.max((s - v[i]).norm());
        }
        assert!(rv <= 1e-10);
    }

    #[test]
    fn lu_rejects_singular_matrix() {
        let mut a = random_matrix(6, 33);
        // duplicate a row to force exact rank deficiency
        for j in 0..6 {
            let v = a.at(2, j);
            a.set(4, j, v);
        }
        assert!(matches!(lu_factor(&a), Err(LinalgError::SingularMatrix)));
    }

    #[test]
    fn op_norm_on_diagonal() {
        let a = DenseMatrix::diag(&[c(0.3, 0.0), c(-2.5, 0.0), c(1.0, 0.0)]);
        let est = op_norm_est(&a, 60);
        assert!((est - 2.5).abs() <= 1e-6, "{est}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trace_product_argument_swap_is_exact(seed in 0u64..1000) {
            let a = random_matrix(7, seed.wrapping_mul(2).wrapping_add(1));
            let b = random_matrix(7, seed.wrapping_mul(2).wrapping_add(100_000));
            let ab = trace_product(&a, &b).unwrap();
            let ba = trace_product(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn cholesky_solve_roundtrip(seed in 0u64..500) {
            let h = random_pd(5, seed);
            let b = random_matrix(5, seed.wrapping_add(777));
            let hb = matmul(&h, &b).unwrap();
            let x = solve(&cholesky(&h).unwrap(), &hb).unwrap();
            let err = x.sub(&b).unwrap().frobenius_norm();
            prop_assert!(err <= 1e-9 * b.frobenius_norm().max(1.0));
        }
    }
}
