//! Scalar self-consistent equations behind the matrix Dyson equation for the
//! Hermitized resolvent, the stability eigenvalues of the two-point linear
//! map, and the deterministic two-resolvent approximation M_B(z, w).
//!
//! Everything lives outside the closed unit disk (|z| > 1), where the
//! solution is block-constant and the stability product stays bounded away
//! from zero.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::DenseMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum DysonError {
    #[error("fixed point did not converge: residual {residual:.3e} at iterate {iterate}")]
    NoConvergence { residual: f64, iterate: Complex64 },
    #[error("converged to the wrong branch: Im m = {0} is not positive")]
    WrongBranch(f64),
    #[error("two-point stability system is numerically singular: |det| = {0:.3e}")]
    SingularStability(f64),
}

/// Self-consistent solution at spectral parameter z and regularization eta:
/// m with Im m > 0 solving 1/m + i eta + m - |z|^2/(i eta + m) = 0, and
/// u = m / (i eta + m).
#[derive(Debug, Clone, Copy)]
pub struct MBlock {
    pub z: Complex64,
    pub eta: f64,
    pub m: Complex64,
    pub u: Complex64,
}

impl MBlock {
    /// Self-consistency residual in m-scaled form:
    /// |1 + m(i eta + m) - |z|^2 m/(i eta + m)|. Multiplying the equation
    /// through by m keeps every term O(1); the unscaled residual carries a
    /// 1/|m| ~ (|z|^2-1)/eta factor that sinks below f64 resolution for
    /// small eta.
    pub fn residual(&self) -> f64 {
        let ieta = Complex64::new(0.0, self.eta);
        (1.0 + self.m * (ieta + self.m) - self.z.norm_sqr() * self.m / (ieta + self.m)).norm()
    }

    /// Empirical norm flag: |m| + |u| stays below 10 on the whole exterior
    /// region; a violation signals a bad branch rather than a hard error.
    pub fn is_norm_bounded(&self) -> bool {
        self.m.norm() + self.u.norm() <= 10.0
    }
}

/// Damped fixed-point solve of the scalar self-consistent equation:
/// m <- m/2 + (1/2)(-1/(i eta + m - |z|^2/(i eta + m))), started at m = i.
pub fn solve_m_u(z: Complex64, eta: f64) -> Result<MBlock, DysonError> {
    assert!(z.norm() > 1.0, "spectral parameter must lie outside the closed unit disk");
    assert!(eta > 0.0, "eta must be positive");
    let s = z.norm_sqr();
    let ieta = Complex64::new(0.0, eta);
    let tol = 1e-13;
    let mut m = Complex64::new(0.0, 1.0);
    let mut residual = f64::INFINITY;
    for _ in 0..10_000 {
        let target = -1.0 / (ieta + m - s / (ieta + m));
        m = 0.5 * m + 0.5 * target;
        residual = (1.0 + m * (ieta + m) - s * m / (ieta + m)).norm();
        if residual <= tol {
            if m.im <= 0.0 {
                return Err(DysonError::WrongBranch(m.im));
            }
            let u = m / (ieta + m);
            return Ok(MBlock { z, eta, m, u });
        }
    }
    Err(DysonError::NoConvergence { residual, iterate: m })
}

/// 2x2 representative [[m, -z u], [-conj(z) u, m]] of the block-constant
/// solution.
pub fn m_matrix(b: &MBlock) -> DenseMatrix {
    DenseMatrix::new(
        2,
        vec![b.m, -b.z * b.u, -b.z.conj() * b.u, b.m],
    )
    .expect("finite entries")
}

/// The two stability eigenvalues
/// 1 - u_z u_w Re(z conj w) +- sqrt(m_z^2 m_w^2 - u_z^2 u_w^2 Im(z conj w)^2)
/// with the principal square root. Only their product is branch-independent,
/// and only the product feeds the lower-bound checks downstream.
pub fn stability_betas(
    z: Complex64,
    w: Complex64,
    eta: f64,
) -> Result<(Complex64, Complex64), DysonError> {
    let bz = solve_m_u(z, eta)?;
    let bw = solve_m_u(w, eta)?;
    let zw = z * w.conj();
    let uu = bz.u * bw.u;
    let base = 1.0 - uu * zw.re;
    let disc = (bz.m * bz.m) * (bw.m * bw.m) - uu * uu * (zw.im * zw.im);
    let root = disc.sqrt();
    Ok((base + root, base - root))
}

/// Deterministic approximation to the block traces and block structure of a
/// two-resolvent chain G_z B G_w with B = A placed in one Hermitization
/// block. `coeff_a[j][k]` multiplies A and `coeff_i[j][k]` multiplies the
/// identity in output block (j+1, k+1).
#[derive(Debug, Clone, Copy)]
pub struct TwoResolventApprox {
    pub trace11: Complex64,
    pub trace22: Complex64,
    pub coeff_a: [[Complex64; 2]; 2],
    pub coeff_i: [[Complex64; 2]; 2],
}

/// Solve for M_B = M_z (B + S[M_B]) M_w with B = A^{(k,l)} (A in block
/// (k, l), zero elsewhere) and S[R] = diag(<R^[22]>, <R^[11]>). The block
/// traces satisfy a 2x2 linear system that is solved directly; the block
/// coefficients are then assembled from the defining relation.
pub fn two_resolvent_approx(
    k: usize,
    l: usize,
    trace_a: Complex64,
    z: Complex64,
    w: Complex64,
    eta: f64,
) -> Result<TwoResolventApprox, DysonError> {
    assert!((1..=2).contains(&k) && (1..=2).contains(&l), "block placement is (1..2, 1..2)");
    let bz = solve_m_u(z, eta)?;
    let bw = solve_m_u(w, eta)?;
    let mz = [[bz.m, -z * bz.u], [-z.conj() * bz.u, bz.m]];
    let mw = [[bw.m, -w * bw.u], [-w.conj() * bw.u, bw.m]];

    // block traces x1 = <M_B^[11]>, x2 = <M_B^[22]> solve
    //   (1 - z conj(w) u_z u_w) x1 - m_z m_w x2 = <A> Mz[1k] Mw[l1]
    //   -m_z m_w x1 + (1 - conj(z) w u_z u_w) x2 = <A> Mz[2k] Mw[l2]
    let uu = bz.u * bw.u;
    let mm = bz.m * bw.m;
    let a11 = 1.0 - z * w.conj() * uu;
    let a22 = 1.0 - z.conj() * w * uu;
    let r1 = trace_a * mz[0][k - 1] * mw[l - 1][0];
    let r2 = trace_a * mz[1][k - 1] * mw[l - 1][1];
    let det = a11 * a22 - mm * mm;
    if det.norm() < 1e-10 {
        return Err(DysonError::SingularStability(det.norm()));
    }
    let x1 = (r1 * a22 + r2 * mm) / det;
    let x2 = (r2 * a11 + r1 * mm) / det;

    // assemble M_B = M_z (B + diag(x2, x1)) M_w blockwise
    let mut coeff_a = [[Complex64::new(0.0, 0.0); 2]; 2];
    let mut coeff_i = [[Complex64::new(0.0, 0.0); 2]; 2];
    for j in 0..2 {
        for jp in 0..2 {
            coeff_a[j][jp] = mz[j][k - 1] * mw[l - 1][jp];
            coeff_i[j][jp] = mz[j][0] * x2 * mw[0][jp] + mz[j][1] * x1 * mw[1][jp];
        }
    }
    Ok(TwoResolventApprox { trace11: x1, trace22: x2, coeff_a, coeff_i })
}
