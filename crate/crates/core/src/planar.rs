//! Split real/imaginary dense kernels for the resolvent hot path.
//!
//! One factorization of H = (X-z)(X-z)* + eta^2 per contour node dominates
//! every experiment, so these routines keep the real and imaginary parts in
//! separate contiguous arrays; the inner loops are plain f64 slice sweeps
//! that the compiler turns into FMA vector code. Everything here is
//! cross-checked against the reference `linalg` implementations in tests.

use num_complex::Complex64;

use crate::linalg::DenseMatrix;

pub(crate) struct PMat {
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl PMat {
    pub fn zeros(n: usize) -> Self {
        Self { n, re: vec![0.0; n * n], im: vec![0.0; n * n] }
    }

    pub fn from_dense(m: &DenseMatrix) -> Self {
        let n = m.n();
        let mut p = Self::zeros(n);
        for (k, c) in m.data().iter().enumerate() {
            p.re[k] = c.re;
            p.im[k] = c.im;
        }
        p
    }

    pub fn transposed(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.re[j * n + i] = self.re[i * n + j];
                t.im[j * n + i] = self.im[i * n + j];
            }
        }
        t
    }

    /// Conjugate transpose, i.e. the planar image of X*.
    pub fn conj_transposed(&self) -> Self {
        let n = self.n;
        let mut t = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                t.re[j * n + i] = self.re[i * n + j];
                t.im[j * n + i] = -self.im[i * n + j];
            }
        }
        t
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let n = self.n;
        DenseMatrix::from_fn(n, |i, j| Complex64::new(self.re[i * n + j], self.im[i * n + j]))
    }

}

/// (sum a conj(b)) over paired slices: re = ar.br + ai.bi, im = ai.br - ar.bi.
#[inline]
fn dot_conj(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let mut sre = 0.0;
    let mut sim = 0.0;
    let k = ar.len();
    for t in 0..k {
        sre += ar[t] * br[t] + ai[t] * bi[t];
        sim += ai[t] * br[t] - ar[t] * bi[t];
    }
    (sre, sim)
}

/// out += c * w over paired slices.
#[inline]
fn axpy(cr: f64, ci: f64, wr: &[f64], wi: &[f64], outr: &mut [f64], outi: &mut [f64]) {
    let k = wr.len();
    for t in 0..k {
        let r = wr[t];
        let m = wi[t];
        outr[t] += cr * r - ci * m;
        outi[t] += cr * m + ci * r;
    }
}

/// out += conj(c) * w over paired slices.
#[inline]
fn axpy_conj(cr: f64, ci: f64, wr: &[f64], wi: &[f64], outr: &mut [f64], outi: &mut [f64]) {
    let k = wr.len();
    for t in 0..k {
        let r = wr[t];
        let m = wi[t];
        outr[t] += cr * r + ci * m;
        outi[t] += cr * m - ci * r;
    }
}

/// P = X X* (Hermitian, both halves filled). Row-times-row, so every inner
/// product runs over contiguous memory.
pub(crate) fn gram_xxstar(x: &PMat, out: &mut PMat) {
    let n = x.n;
    for i in 0..n {
        let (xir, xii) = (&x.re[i * n..(i + 1) * n], &x.im[i * n..(i + 1) * n]);
        for j in 0..=i {
            let (xjr, xji) = (&x.re[j * n..(j + 1) * n], &x.im[j * n..(j + 1) * n]);
            // P_ij = sum_k X_ik conj(X_jk)
            let (re, im) = dot_conj(xir, xii, xjr, xji);
            out.re[i * n + j] = re;
            out.im[i * n + j] = im;
            out.re[j * n + i] = re;
            out.im[j * n + i] = -im;
        }
        out.im[i * n + i] = 0.0;
    }
}

/// H = P - conj(z) X - z conj(X^T) + (|z|^2 + eta^2) I where P = X X*.
/// `xt` must be the plain transpose of `x`.
pub(crate) fn assemble_h(p: &PMat, x: &PMat, xt: &PMat, z: Complex64, eta: f64, out: &mut PMat) {
    let n = p.n;
    let (zr, zi) = (z.re, z.im);
    let d = z.norm_sqr() + eta * eta;
    let total = n * n;
    for k in 0..total {
        let (xr, xi) = (x.re[k], x.im[k]);
        let (tr, ti) = (xt.re[k], xt.im[k]);
        // conj(z) x = (zr xr + zi xi) + i (zr xi - zi xr)
        // z conj(xt) = (zr tr + zi ti) + i (zi tr - zr ti)
        out.re[k] = p.re[k] - (zr * xr + zi * xi) - (zr * tr + zi * ti);
        out.im[k] = p.im[k] - (zr * xi - zi * xr) - (zi * tr - zr * ti);
    }
    for i in 0..n {
        out.re[i * n + i] += d;
        out.im[i * n + i] = 0.0;
    }
}

/// In-place lower Cholesky (Banachiewicz). On success the lower triangle of
/// `h` holds L with real positive diagonal; entries above the diagonal are
/// left untouched and must not be read. Err carries the failing row and its
/// pivot value.
pub(crate) fn cholesky_in_place(h: &mut PMat) -> Result<(), (usize, f64)> {
    let n = h.n;
    for i in 0..n {
        for j in 0..i {
            let (sre, sim) = {
                let (ir, iim) = (&h.re[i * n..i * n + j], &h.im[i * n..i * n + j]);
                let (jr, jim) = (&h.re[j * n..j * n + j], &h.im[j * n..j * n + j]);
                // sum_k L_ik conj(L_jk)
                dot_conj(ir, iim, jr, jim)
            };
            let d = h.re[j * n + j];
            h.re[i * n + j] = (h.re[i * n + j] - sre) / d;
            h.im[i * n + j] = (h.im[i * n + j] - sim) / d;
        }
        let mut d = h.re[i * n + i];
        {
            let (ir, iim) = (&h.re[i * n..i * n + i], &h.im[i * n..i * n + i]);
            for k in 0..i {
                d -= ir[k] * ir[k] + iim[k] * iim[k];
            }
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err((i, d));
        }
        h.re[i * n + i] = d.sqrt();
        h.im[i * n + i] = 0.0;
    }
    Ok(())
}

/// W = L^{-1} for lower-triangular L (strict upper of the output is zero).
/// Row i of W is built by accumulating L_ik * W_k over the row prefixes,
/// which keeps every update a contiguous axpy.
pub(crate) fn invert_lower(l: &PMat, out: &mut PMat) {
    let n = l.n;
    out.re.iter_mut().for_each(|v| *v = 0.0);
    out.im.iter_mut().for_each(|v| *v = 0.0);
    let mut accr = vec![0.0f64; n];
    let mut acci = vec![0.0f64; n];
    for i in 0..n {
        accr[..i].iter_mut().for_each(|v| *v = 0.0);
        acci[..i].iter_mut().for_each(|v| *v = 0.0);
        for k in 0..i {
            let cr = l.re[i * n + k];
            let ci = l.im[i * n + k];
            let (wr, wi) = (&out.re[k * n..k * n + k + 1], &out.im[k * n..k * n + k + 1]);
            axpy(cr, ci, wr, wi, &mut accr[..k + 1], &mut acci[..k + 1]);
        }
        let d = l.re[i * n + i];
        for j in 0..i {
            out.re[i * n + j] = -accr[j] / d;
            out.im[i * n + j] = -acci[j] / d;
        }
        out.re[i * n + i] = 1.0 / d;
        out.im[i * n + i] = 0.0;
    }
}

/// Hinv = W* W for lower-triangular W (full Hermitian output). Lower half is
/// accumulated by rank-1 row updates over row prefixes, then mirrored.
pub(crate) fn gram_wstar_w(w: &PMat, out: &mut PMat) {
    let n = w.n;
    out.re.iter_mut().for_each(|v| *v = 0.0);
    out.im.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..n {
        let base = k * n;
        for i in 0..=k {
            let cr = w.re[base + i];
            let ci = w.im[base + i];
            if cr == 0.0 && ci == 0.0 {
                continue;
            }
            let (wr, wi) = (&w.re[base..base + i + 1], &w.im[base..base + i + 1]);
            // out_row_i[0..=i] += conj(W_ki) * W_k[0..=i]
            let (or, oi) = (&mut out.re[i * n..i * n + i + 1], &mut out.im[i * n..i * n + i + 1]);
            axpy_conj(cr, ci, wr, wi, or, oi);
        }
    }
    for i in 0..n {
        for j in 0..i {
            out.re[j * n + i] = out.re[i * n + j];
            out.im[j * n + i] = -out.im[i * n + j];
        }
        out.im[i * n + i] = 0.0;
    }
}

/// Forward solve L y = v, then conjugate-transposed back solve L* x = y.
/// Returns the squared norm of the intermediate y, which equals the
/// Rayleigh quotient v* H^{-1} v when v is a unit vector.
fn solve_hinv_apply(l: &PMat, vr: &mut [f64], vi: &mut [f64]) -> f64 {
    let n = l.n;
    for i in 0..n {
        let (sre, sim) = {
            let (ir, iim) = (&l.re[i * n..i * n + i], &l.im[i * n..i * n + i]);
            let mut sre = 0.0;
            let mut sim = 0.0;
            for k in 0..i {
                // L_ik * y_k
                sre += ir[k] * vr[k] - iim[k] * vi[k];
                sim += ir[k] * vi[k] + iim[k] * vr[k];
            }
            (sre, sim)
        };
        let d = l.re[i * n + i];
        vr[i] = (vr[i] - sre) / d;
        vi[i] = (vi[i] - sim) / d;
    }
    let mut w2 = 0.0;
    for i in 0..n {
        w2 += vr[i] * vr[i] + vi[i] * vi[i];
    }
    for i in (0..n).rev() {
        let mut sre = 0.0;
        let mut sim = 0.0;
        for k in i + 1..n {
            // conj(L_ki) * x_k, column access
            let lr = l.re[k * n + i];
            let li = l.im[k * n + i];
            sre += lr * vr[k] + li * vi[k];
            sim += lr * vi[k] - li * vr[k];
        }
        let d = l.re[i * n + i];
        vr[i] = (vr[i] - sre) / d;
        vi[i] = (vi[i] - sim) / d;
    }
    w2
}

/// Smallest singular value of Y from the Cholesky factor of H = Y Y* + eta^2:
/// inverse power iteration with the all-ones start and deterministic
/// restarts. The estimate approaches sigma_min from above; callers needing a
/// decision near a threshold should pass a tighter tol.
pub(crate) fn smallest_sigma(l: &PMat, eta_sq: f64, tol: f64, max_iter: usize) -> f64 {
    let n = l.n;
    let s = 1.0 / (n as f64).sqrt();
    let mut vr = vec![s; n];
    let mut vi = vec![0.0; n];
    let mut prev = f64::INFINITY;
    let mut sigma = f64::INFINITY;
    let mut restarts = 0u64;
    for it in 1..=max_iter {
        let rho = solve_hinv_apply(l, &mut vr, &mut vi);
        if !(rho > 0.0) || !rho.is_finite() {
            return 0.0;
        }
        sigma = (1.0 / rho - eta_sq).max(0.0).sqrt();
        let mut nrm = 0.0;
        for i in 0..n {
            nrm += vr[i] * vr[i] + vi[i] * vi[i];
        }
        let nrm = nrm.sqrt();
        let inv = 1.0 / nrm;
        vr.iter_mut().for_each(|x| *x *= inv);
        vi.iter_mut().for_each(|x| *x *= inv);
        if (sigma - prev).abs() <= tol * sigma.max(f64::MIN_POSITIVE) {
            return sigma;
        }
        prev = sigma;
        if it % 120 == 0 {
            restarts += 1;
            // deterministic restart, mirrors linalg::smallest_singular_value
            let mut state = 0x5eed_0001u64.wrapping_add(restarts);
            let mut next = || {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            };
            for i in 0..n {
                vr[i] = next();
                vi[i] = next();
            }
            let mut nrm = 0.0;
            for i in 0..n {
                nrm += vr[i] * vr[i] + vi[i] * vi[i];
            }
            let nrm = nrm.sqrt();
            vr.iter_mut().for_each(|x| *x /= nrm);
            vi.iter_mut().for_each(|x| *x /= nrm);
        }
    }
    sigma
}

/// View of a one-nonzero-per-row matrix A: A[j, perm[j]] = alpha[j]. Covers
/// identity, signed diagonals and permutation shifts; anything else goes
/// through the dense fallback path.
pub(crate) struct SparseA<'a> {
    pub alpha: &'a [f64],
    pub perm: &'a [usize],
}

/// Tr(H^{-1} A (X - z)*) for a sparse A view: the (2,1) resolvent block trace
/// against A, computed as sum_{i,j} Hinv_ij alpha_j conj(Y_{i, perm[j]}).
pub(crate) fn trace_block21_sparse(
    hinv: &PMat,
    x: &PMat,
    z: Complex64,
    a: &SparseA<'_>,
) -> Complex64 {
    let n = hinv.n;
    let mut tre = 0.0;
    let mut tim = 0.0;
    for i in 0..n {
        let (hr, hi) = (&hinv.re[i * n..(i + 1) * n], &hinv.im[i * n..(i + 1) * n]);
        let (xr, xi) = (&x.re[i * n..(i + 1) * n], &x.im[i * n..(i + 1) * n]);
        let mut sre = 0.0;
        let mut sim = 0.0;
        for j in 0..n {
            let p = a.perm[j];
            let cr = xr[p];
            let ci = xi[p];
            // Hinv_ij * conj(X_ip) * alpha_j
            let re = hr[j] * cr + hi[j] * ci;
            let im = hi[j] * cr - hr[j] * ci;
            sre += a.alpha[j] * re;
            sim += a.alpha[j] * im;
        }
        tre += sre;
        tim += sim;
    }
    // subtract the diagonal-shift part: conj(z) * sum_j alpha_j Hinv_{perm[j], j}
    let g = trace_hinv_perm(hinv, a);
    let zc = z.conj();
    Complex64::new(tre, tim) - zc * g
}

/// Tr(H^{-1} A (X - z)*) for a dense A, given the transposed products
/// Ct = (A X*)^T and At = A^T prepared once per sample. With K = A(X - z)* =
/// A X* - conj(z) A the trace is sum_{i,j} Hinv_ij K_ji, and reading the
/// transposed operands keeps both factors contiguous.
pub(crate) fn trace_block21_dense(hinv: &PMat, ct: &PMat, at: &PMat, z: Complex64) -> Complex64 {
    let n = hinv.n;
    let (zr, zi) = (z.re, -z.im);
    let mut tre = 0.0;
    let mut tim = 0.0;
    for i in 0..n {
        let row = i * n..(i + 1) * n;
        let (hr, hi) = (&hinv.re[row.clone()], &hinv.im[row.clone()]);
        let (cr, ci) = (&ct.re[row.clone()], &ct.im[row.clone()]);
        let (ar, ai) = (&at.re[row.clone()], &at.im[row]);
        let mut sre = 0.0;
        let mut sim = 0.0;
        for j in 0..n {
            let kr = cr[j] - (zr * ar[j] - zi * ai[j]);
            let ki = ci[j] - (zr * ai[j] + zi * ar[j]);
            sre += hr[j] * kr - hi[j] * ki;
            sim += hr[j] * ki + hi[j] * kr;
        }
        tre += sre;
        tim += sim;
    }
    Complex64::new(tre, tim)
}

/// sum_j alpha_j Hinv_{perm[j], j} = Tr(H^{-1} A) for the sparse view.
pub(crate) fn trace_hinv_perm(hinv: &PMat, a: &SparseA<'_>) -> Complex64 {
    let n = hinv.n;
    let mut sre = 0.0;
    let mut sim = 0.0;
    for j in 0..n {
        let idx = a.perm[j] * n + j;
        sre += a.alpha[j] * hinv.re[idx];
        sim += a.alpha[j] * hinv.im[idx];
    }
    Complex64::new(sre, sim)
}
