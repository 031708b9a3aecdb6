//! Analytic test functions as truncated power series, plus the two inner
//! products that drive the limit covariance and the double-contour identity
//! linking them to circle quadrature.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::Contour;

#[derive(Debug, Error, PartialEq)]
pub enum FunctionsError {
    #[error("declared radius of validity {0} must exceed 1")]
    InvalidRadius(f64),
    #[error("evaluation point {z} lies outside the validity disk |z| < {rho}")]
    OutsideDomain { z: Complex64, rho: f64 },
}

/// f(z) = sum_k c_k z^k on |z| < rho, rho > 1. Finite series keep every
/// inner product below an exact finite sum, so model predictions carry no
/// truncation error of their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PowerSeriesRepr", into = "PowerSeriesRepr")]
pub struct PowerSeries {
    coeffs: Vec<Complex64>,
    rho: f64,
}

/// Config-file shape: coefficients as (re, im) pairs.
#[derive(Serialize, Deserialize)]
struct PowerSeriesRepr {
    coeffs: Vec<(f64, f64)>,
    rho: f64,
}

impl TryFrom<PowerSeriesRepr> for PowerSeries {
    type Error = FunctionsError;

    fn try_from(r: PowerSeriesRepr) -> Result<Self, Self::Error> {
        PowerSeries::new(r.coeffs.into_iter().map(|(re, im)| Complex64::new(re, im)), r.rho)
    }
}

impl From<PowerSeries> for PowerSeriesRepr {
    fn from(f: PowerSeries) -> Self {
        Self { coeffs: f.coeffs.iter().map(|c| (c.re, c.im)).collect(), rho: f.rho }
    }
}

impl PowerSeries {
    pub fn new(
        coeffs: impl IntoIterator<Item = Complex64>,
        rho: f64,
    ) -> Result<Self, FunctionsError> {
        if !(rho > 1.0) || !rho.is_finite() {
            return Err(FunctionsError::InvalidRadius(rho));
        }
        let coeffs: Vec<Complex64> = coeffs.into_iter().collect();
        Ok(Self { coeffs, rho })
    }

    /// The monomial z^k.
    pub fn monomial(k: usize, rho: f64) -> Result<Self, FunctionsError> {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); k + 1];
        coeffs[k] = Complex64::new(1.0, 0.0);
        Self::new(coeffs, rho)
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// c_k, zero beyond the truncation.
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.coeffs.get(k).copied().unwrap_or(Complex64::new(0.0, 0.0))
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn at_zero(&self) -> Complex64 {
        self.coeff(0)
    }

    /// sum_k |c_k| r^k, a sup-norm proxy on |z| = r.
    pub fn sup_norm_proxy(&self, r: f64) -> f64 {
        let mut acc = 0.0;
        let mut pow = 1.0;
        for c in &self.coeffs {
            acc += c.norm() * pow;
            pow *= r;
        }
        acc
    }

    /// Horner evaluation, rejecting points outside the validity disk.
    pub fn eval(&self, z: Complex64) -> Result<Complex64, FunctionsError> {
        if z.norm() >= self.rho {
            return Err(FunctionsError::OutsideDomain { z, rho: self.rho });
        }
        Ok(self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c))
    }

    /// Term-by-term derivative; same validity radius.
    pub fn derivative(&self) -> Self {
        let coeffs: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| c * k as f64)
            .collect();
        Self { coeffs, rho: self.rho }
    }
}

/// f*(z) = conj(f(conj z)): conjugate every coefficient.
pub fn conj_reflect(f: &PowerSeries) -> PowerSeries {
    PowerSeries { coeffs: f.coeffs.iter().map(|c| c.conj()).collect(), rho: f.rho }
}

/// Mean-free Hardy pairing on the circle: sum_{k >= 1} f_k conj(g_k).
pub fn hardy_inner(f: &PowerSeries, g: &PowerSeries) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..f.coeffs.len().min(g.coeffs.len()) {
        acc += f.coeffs[k] * g.coeffs[k].conj();
    }
    acc
}

/// Unconjugated companion of `hardy_inner`: sum_{k >= 1} f_k g_k. This is
/// the pairing that appears in second-moment (pseudo-covariance) formulas.
pub fn pseudo_hardy_inner(f: &PowerSeries, g: &PowerSeries) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..f.coeffs.len().min(g.coeffs.len()) {
        acc += f.coeffs[k] * g.coeffs[k];
    }
    acc
}

/// (1/pi) <f', g'> over the unit disk: sum_{k >= 1} k f_k conj(g_k).
pub fn disk_grad_inner(f: &PowerSeries, g: &PowerSeries) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..f.coeffs.len().min(g.coeffs.len()) {
        acc += f.coeffs[k] * g.coeffs[k].conj() * k as f64;
    }
    acc
}

/// Unconjugated companion of `disk_grad_inner`: sum_{k >= 1} k f_k g_k.
pub fn pseudo_disk_grad_inner(f: &PowerSeries, g: &PowerSeries) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..f.coeffs.len().min(g.coeffs.len()) {
        acc += f.coeffs[k] * g.coeffs[k] * k as f64;
    }
    acc
}

/// Residuals of the double-contour representations of the two circle
/// pairings, evaluated by trapezoid quadrature on `c`.
#[derive(Debug, Clone, Copy)]
pub struct KernelResiduals {
    /// |quadrature - hardy_inner(f, g)| for the conjugated identity
    pub hermitian: f64,
    /// |quadrature - pseudo_hardy_inner(f, g)| for the unconjugated one
    pub pseudo: f64,
}

/// Check both double-contour identities at the given contour:
///
///   (1/4 pi^2) oint oint f(z) conj(g(w)) / (z conj(w) (z conj(w) - 1))
///     = sum_{k>=1} f_k conj(g_k)
///
/// and the unconjugated variant with kernel -1/(z w (z w - 1)). The first
/// uses conjugated weights (the pullback of d conj(w) along the positively
/// oriented circle), which fixes the overall sign.
pub fn kernel_identity_check(
    f: &PowerSeries,
    g: &PowerSeries,
    c: &Contour,
) -> Result<KernelResiduals, FunctionsError> {
    let fv: Vec<Complex64> = c.points().iter().map(|&z| f.eval(z)).collect::<Result<_, _>>()?;
    let gv: Vec<Complex64> = c.points().iter().map(|&z| g.eval(z)).collect::<Result<_, _>>()?;
    let pts = c.points();
    let wts = c.weights();
    let k = pts.len();
    let mut herm = Complex64::new(0.0, 0.0);
    let mut pseudo = Complex64::new(0.0, 0.0);
    for j in 0..k {
        let mut row_h = Complex64::new(0.0, 0.0);
        let mut row_p = Complex64::new(0.0, 0.0);
        for l in 0..k {
            let u = pts[j] * pts[l].conj();
            row_h += wts[l].conj() * gv[l].conj() / (u * (u - 1.0));
            let v = pts[j] * pts[l];
            row_p += wts[l] * gv[l] / (v * (v - 1.0));
        }
        herm += wts[j] * fv[j] * row_h;
        pseudo += wts[j] * fv[j] * row_p;
    }
    let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
    let herm = herm / four_pi_sq;
    let pseudo = -pseudo / four_pi_sq;
    Ok(KernelResiduals {
        hermitian: (herm - hardy_inner(f, g)).norm(),
        pseudo: (pseudo - pseudo_hardy_inner(f, g)).norm(),
    })
}
