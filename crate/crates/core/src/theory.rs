//! Predicted limit laws for linear eigenvalue statistics.
//!
//! For a test function f analytic past the unit circle and a bounded
//! observable A, the centered statistic Tr f(X) A converges to a complex
//! Gaussian whose covariance splits into two parts: the mean component of A
//! couples through the gradient pairing sum_k k fhat_k conj(ghat_k), and the
//! traceless component through the analytic pairing sum_{k>=1} fhat_k
//! conj(ghat_k). In resolvent coordinates the same two pairings appear as
//! the kernels V(z, w) = 1 / (1 - z conj(w))^2 and
//! Vcirc(z, w) = 1 / (z conj(w) (z conj(w) - 1)).
//!
//! Real-symmetry ensembles additionally carry a pseudo-covariance (the
//! unconjugated second moment) with the same structure, plus an O(1) mean
//! shift concentrated on even powers.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functions::{
    disk_grad_inner, hardy_inner, pseudo_disk_grad_inner, pseudo_hardy_inner, PowerSeries,
};
use crate::linalg::{self, DenseMatrix, LinalgError};

#[derive(Debug, Error)]
pub enum TheoryError {
    #[error("covariance kernel pole at z w-bar = {zw}")]
    KernelPole { zw: Complex64 },
    #[error("covariance embedding has eigenvalue {eigenvalue:.3e} below the PSD floor")]
    NotPsd { eigenvalue: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Symmetry class of the entry law: real laws carry a pseudo-covariance and
/// an O(1) mean shift; complex laws have circular limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryClass {
    Real,
    Complex,
}

impl SymmetryClass {
    pub fn is_real(self) -> bool {
        matches!(self, SymmetryClass::Real)
    }
}

/// One (f, A) observable with the traces of A that the limit laws consume,
/// cached at construction: <A>, the traceless part, and its two self-grams.
#[derive(Debug, Clone)]
pub struct TestPair {
    f: PowerSeries,
    a: DenseMatrix,
    a_mean: Complex64,
    traceless: DenseMatrix,
    gram_conj: f64,
    gram_plain: Complex64,
}

impl TestPair {
    pub fn new(f: PowerSeries, a: DenseMatrix) -> Self {
        let n = a.n();
        let norm = linalg::op_norm_est(&a, 30);
        if norm > 1.0 + 1e-9 {
            eprintln!("test observable norm {norm:.3e} exceeds 1; limit tolerances assume a contraction");
        }
        let a_mean = a.normalized_trace();
        let mut traceless = a.clone();
        traceless.shift_diag(-a_mean);
        debug_assert!(
            traceless.normalized_trace().norm() <= 1e-14 * a_mean.norm().max(1.0),
            "traceless projection must have zero mean"
        );
        let gram_conj = traceless.frobenius_norm().powi(2) / n as f64;
        let gram_plain = linalg::trace_product(&traceless, &traceless.transpose())
            .expect("same dimension")
            / n as f64;
        TestPair { f, a, a_mean, traceless, gram_conj, gram_plain }
    }

    pub fn f(&self) -> &PowerSeries {
        &self.f
    }

    pub fn a(&self) -> &DenseMatrix {
        &self.a
    }

    /// <A> = Tr A / n.
    #[inline]
    pub fn a_mean(&self) -> Complex64 {
        self.a_mean
    }

    /// A - <A> I.
    pub fn traceless(&self) -> &DenseMatrix {
        &self.traceless
    }

    /// <Å Å*>, real and nonnegative.
    #[inline]
    pub fn gram_conj(&self) -> f64 {
        self.gram_conj
    }

    /// <Å Å^T>, complex in general.
    #[inline]
    pub fn gram_plain(&self) -> Complex64 {
        self.gram_plain
    }
}

/// V(z, w) = 1 / (1 - z conj(w))^2: covariance kernel of the mean component
/// of the observable between two resolvent points outside the unit disk.
pub fn kernel_v(z: Complex64, w: Complex64) -> Result<Complex64, TheoryError> {
    let zw = z * w.conj();
    let den = Complex64::new(1.0, 0.0) - zw;
    if den.norm() < 1e-12 {
        return Err(TheoryError::KernelPole { zw });
    }
    Ok(1.0 / (den * den))
}

/// Vcirc(z, w) = 1 / (z conj(w) (z conj(w) - 1)): covariance kernel of the
/// traceless component.
pub fn kernel_v_circ(z: Complex64, w: Complex64) -> Result<Complex64, TheoryError> {
    let zw = z * w.conj();
    let den = zw * (zw - 1.0);
    if den.norm() < 1e-12 {
        return Err(TheoryError::KernelPole { zw });
    }
    Ok(1.0 / den)
}

/// Predicted second moments of the centered vector (Tr f_i(X) A_i)_i:
/// covariance c[i][j] = E L_i conj(L_j) and pseudo-covariance
/// p[i][j] = E L_i L_j (zero for the complex class).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub c: Vec<Vec<Complex64>>,
    pub p: Vec<Vec<Complex64>>,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

/// Assembles the limit covariance of a family of test pairs from the
/// coefficient pairings; everything here is an exact finite sum.
pub fn covariance_model(pairs: &[TestPair], class: SymmetryClass) -> CovarianceModel {
    let d = pairs.len();
    let mut c = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    let mut p = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    for i in 0..d {
        for j in 0..d {
            let n = pairs[i].a().n() as f64;
            let cross_conj = linalg::trace_product(
                pairs[i].traceless(),
                &pairs[j].traceless().conj_transpose(),
            )
            .expect("pairs share the dimension")
                / n;
            c[i][j] = pairs[i].a_mean() * pairs[j].a_mean().conj()
                * disk_grad_inner(pairs[i].f(), pairs[j].f())
                + cross_conj * hardy_inner(pairs[i].f(), pairs[j].f());
            if class.is_real() {
                let cross_plain =
                    linalg::trace_product(pairs[i].traceless(), &pairs[j].traceless().transpose())
                        .expect("pairs share the dimension")
                        / n;
                p[i][j] = pairs[i].a_mean() * pairs[j].a_mean()
                    * pseudo_disk_grad_inner(pairs[i].f(), pairs[j].f())
                    + cross_plain * pseudo_hardy_inner(pairs[i].f(), pairs[j].f());
            }
        }
    }
    CovarianceModel { c, p }
}

/// Limit mean of Tr f_i(X) A_i: the exact constant-term contribution
/// n fhat_0 <A> plus, for real-symmetry laws, the even-power shift
/// <A> ((f(1) + f(-1)) / 2 - f(0)).
pub fn mean_prediction(
    pairs: &[TestPair],
    n: usize,
    class: SymmetryClass,
) -> Result<Vec<Complex64>, TheoryError> {
    pairs
        .iter()
        .map(|pair| {
            let mut mean = n as f64 * pair.f().at_zero() * pair.a_mean();
            if class.is_real() {
                let one = Complex64::new(1.0, 0.0);
                let f1 = pair.f().eval(one).expect("rho > 1 admits z = 1");
                let fm1 = pair.f().eval(-one).expect("rho > 1 admits z = -1");
                mean += pair.a_mean() * ((f1 + fm1) / 2.0 - pair.f().at_zero());
            }
            Ok(mean)
        })
        .collect()
}

/// Limit covariance and pseudo-covariance of the centered resolvent traces
/// (Tr G^{21}_z A, Tr G^{21}_w B): the kernels V, Vcirc against the mean and
/// traceless parts; the pseudo part replaces conj(w) by w and is zero for
/// the complex class.
pub fn resolvent_covariance(
    z: Complex64,
    w: Complex64,
    a: &DenseMatrix,
    b: &DenseMatrix,
    class: SymmetryClass,
) -> Result<(Complex64, Complex64), TheoryError> {
    let pa = TestPair::new(PowerSeries::monomial(0, 2.0).expect("valid radius"), a.clone());
    let pb = TestPair::new(PowerSeries::monomial(0, 2.0).expect("valid radius"), b.clone());
    let n = a.n() as f64;
    let cross_conj = linalg::trace_product(pa.traceless(), &pb.traceless().conj_transpose())? / n;
    let cov = pa.a_mean() * pb.a_mean().conj() * kernel_v(z, w)?
        + cross_conj * kernel_v_circ(z, w)?;
    let pseudo = if class.is_real() {
        let cross_plain = linalg::trace_product(pa.traceless(), &pb.traceless().transpose())? / n;
        // unconjugated pairing: the same kernels evaluated at (z, conj(w))
        pa.a_mean() * pb.a_mean() * kernel_v(z, w.conj())?
            + cross_plain * kernel_v_circ(z, w.conj())?
    } else {
        Complex64::new(0.0, 0.0)
    };
    Ok((cov, pseudo))
}

/// Limit mean of Tr G^{21}_z A: -n <A> / z exactly at leading order, with
/// the real-class O(1) correction -<A> / (z (z^2 - 1)).
pub fn resolvent_mean_prediction(
    z: Complex64,
    a: &DenseMatrix,
    class: SymmetryClass,
) -> Complex64 {
    let n = a.n() as f64;
    let a_mean = a.normalized_trace();
    let mut mean = -n * a_mean / z;
    if class.is_real() {
        mean -= a_mean / (z * (z * z - 1.0));
    }
    mean
}

/// Draws from the limiting Gaussian vector with second moments (C, P): the
/// d complex coordinates are embedded as 2d real ones with covariance
/// assembled from C and P, then sampled through a symmetric eigenfactor.
#[derive(Debug, Clone)]
pub struct LimitSampler {
    dim: usize,
    /// root[i][k] = V[i][k] sqrt(lambda_k); a draw is root . g for standard
    /// normal g.
    root: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
}

/// Builds the sampler, validating that the real embedding of (C, P) is
/// positive semidefinite: eigenvalues in [-1e-10, 0) are clipped to zero,
/// anything lower is a structural inconsistency and errors.
pub fn limit_sampler(model: &CovarianceModel, seed: u64) -> Result<LimitSampler, TheoryError> {
    let d = model.dim();
    let m = 2 * d;
    // E x x^T, E y y^T, E x y^T for the split z = x + i y:
    // C = E z z*, P = E z z^T imply
    //   Sxx = (Re C + Re P) / 2    Syy = (Re C - Re P) / 2
    //   Sxy = (Im P - Im C) / 2    Syx = (Im C + Im P) / 2
    let mut s = vec![vec![0.0f64; m]; m];
    for i in 0..d {
        for j in 0..d {
            let c = model.c[i][j];
            let p = model.p[i][j];
            s[i][j] = (c.re + p.re) / 2.0;
            s[d + i][d + j] = (c.re - p.re) / 2.0;
            s[i][d + j] = (p.im - c.im) / 2.0;
            s[d + i][j] = (c.im + p.im) / 2.0;
        }
    }
    let (eigvals, eigvecs) = jacobi_eigen_symmetric(&mut s);
    let scale = eigvals.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let floor = -1e-10 * scale.max(1.0);
    let mut root = vec![vec![0.0f64; m]; m];
    for k in 0..m {
        let lam = eigvals[k];
        if lam < floor {
            return Err(TheoryError::NotPsd { eigenvalue: lam });
        }
        let sq = lam.max(0.0).sqrt();
        for i in 0..m {
            root[i][k] = eigvecs[i][k] * sq;
        }
    }
    Ok(LimitSampler { dim: d, root, rng: ChaCha8Rng::seed_from_u64(seed) })
}

impl LimitSampler {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One centered draw from the limit law.
    pub fn draw(&mut self) -> Vec<Complex64> {
        let m = 2 * self.dim;
        let g: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let mut v = vec![0.0f64; m];
        for (i, row) in self.root.iter().enumerate() {
            let mut acc = 0.0;
            for k in 0..m {
                acc += row[k] * g[k];
            }
            v[i] = acc;
        }
        (0..self.dim).map(|i| Complex64::new(v[i], v[self.dim + i])).collect()
    }
}

/// Cyclic Jacobi eigendecomposition of a small real symmetric matrix,
/// returning (eigenvalues, eigenvector columns). Destroys the input.
fn jacobi_eigen_symmetric(s: &mut [Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let m = s.len();
    let mut v = vec![vec![0.0f64; m]; m];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let norm: f64 = s.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (vec![0.0; m], v);
    }
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for p in 0..m {
            for q in p + 1..m {
                off += s[p][q] * s[p][q];
            }
        }
        if off.sqrt() <= 1e-14 * norm {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                let apq = s[p][q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..m {
                    let (skp, skq) = (s[k][p], s[k][q]);
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for k in 0..m {
                    let (spk, sqk) = (s[p][k], s[q][k]);
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
                for k in 0..m {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - sn * vkq;
                    v[k][q] = sn * vkp + c * vkq;
                }
            }
        }
    }
    let eig: Vec<f64> = (0..m).map(|i| s[i][i]).collect();
    (eig, v)
}
