//! Trapezoidal quadrature on circles |z| = r. For integrands analytic in an
//! annulus around the circle the node-count error decays geometrically,
//! which is what makes the contour route competitive with direct spectral
//! sums.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ContourError {
    /// The circle must enclose the closed unit disk and stay inside the
    /// analyticity domain of the integrands, so radius 1 is a hard wall.
    #[error("contour radius {0} must exceed 1")]
    BadRadius(f64),
    #[error("contour needs at least 4 nodes, got {0}")]
    BadNodeCount(usize),
    #[error("integrand sample at node {index} is not finite")]
    NonFiniteSample { index: usize },
}

/// Positively oriented circle |z| = radius discretized at equally spaced
/// nodes z_j = r e^{2 pi i j / K} with weights w_j = 2 pi i z_j / K.
#[derive(Debug, Clone)]
pub struct Contour {
    radius: f64,
    points: Vec<Complex64>,
    weights: Vec<Complex64>,
}

/// Equally spaced ring nodes r e^{2 pi i j / count}, j ascending, built so
/// that z_{count-j} is bitwise conj(z_j). The exact mirror symmetry is what
/// lets conjugation-aware callers compute half a ring and reflect the rest.
pub(crate) fn conj_symmetric_ring(radius: f64, count: usize) -> Vec<Complex64> {
    let mut points = vec![Complex64::new(0.0, 0.0); count];
    points[0] = Complex64::new(radius, 0.0);
    for j in 1..=count / 2 {
        let theta = std::f64::consts::TAU * j as f64 / count as f64;
        points[j] = Complex64::from_polar(radius, theta);
    }
    if count % 2 == 0 {
        // the angle-pi node is its own mirror image, so its imaginary part
        // must be exactly zero rather than radius * sin(pi_approx)
        points[count / 2] = Complex64::new(-radius, 0.0);
    }
    for j in count / 2 + 1..count {
        points[j] = points[count - j].conj();
    }
    points
}

/// Production contours want >= 16 nodes; 4 is the floor so that tiny
/// didactic contours remain constructible.
pub fn make_contour(radius: f64, nodes: usize) -> Result<Contour, ContourError> {
    if !(radius > 1.0) || !radius.is_finite() {
        return Err(ContourError::BadRadius(radius));
    }
    if nodes < 4 {
        return Err(ContourError::BadNodeCount(nodes));
    }
    let points = conj_symmetric_ring(radius, nodes);
    let w_scale = Complex64::new(0.0, std::f64::consts::TAU / nodes as f64);
    let weights: Vec<Complex64> = points.iter().map(|&z| w_scale * z).collect();
    Ok(Contour { radius, points, weights })
}

impl Contour {
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn nodes(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    /// Quadrature sum over integrand samples taken at `points()` in order:
    /// sum_j w_j g_j via index-ascending pairwise summation, so the result
    /// is independent of evaluation threading.
    pub fn integrate(&self, samples: &[Complex64]) -> Result<Complex64, ContourError> {
        assert_eq!(samples.len(), self.points.len(), "one sample per node");
        for (index, s) in samples.iter().enumerate() {
            if !s.re.is_finite() || !s.im.is_finite() {
                return Err(ContourError::NonFiniteSample { index });
            }
        }
        let terms: Vec<Complex64> =
            samples.iter().zip(&self.weights).map(|(g, w)| w * g).collect();
        Ok(pairwise_sum(&terms))
    }

    /// Convenience wrapper evaluating `g` at every node.
    pub fn integrate_fn(
        &self,
        mut g: impl FnMut(Complex64) -> Complex64,
    ) -> Result<Complex64, ContourError> {
        let samples: Vec<Complex64> = self.points.iter().map(|&z| g(z)).collect();
        self.integrate(&samples)
    }
}

/// Deterministic pairwise (cascade) summation over index-ascending slices.
pub(crate) fn pairwise_sum(terms: &[Complex64]) -> Complex64 {
    if terms.len() <= 8 {
        let mut acc = Complex64::new(0.0, 0.0);
        for t in terms {
            acc += t;
        }
        return acc;
    }
    let mid = terms.len() / 2;
    pairwise_sum(&terms[..mid]) + pairwise_sum(&terms[mid..])
}
