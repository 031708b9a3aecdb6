//! Linear spectral statistics Tr f(X) A by three routes.
//!
//! The production route integrates Tr(G21 A) around a contour enclosing the
//! spectrum, one positive definite factorization per node. Two independent
//! routes exist to audit it: direct contour integration of the pivoted-LU
//! resolvent trace, and exact polynomial evaluation of f(X) by matrix
//! Horner. The three agree to quadrature accuracy (direct) plus an O(eta^2)
//! Hermitization gap (see `hermitize::girko_bound`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{Contour, ContourError};
use crate::ensemble::SampleSeed;
use crate::functions::{FunctionsError, PowerSeries};
use crate::hermitize::{self, OmegaVerdict, SweepRequest, ViewSpec};
use crate::linalg::{self, DenseMatrix, LinalgError};

#[derive(Debug, Error)]
pub enum StatsError {
    /// Factorization broke down at this many contour nodes; the statistic
    /// is void rather than silently biased.
    #[error("{failed} contour node factorizations failed; statistic voided")]
    NodeFailures { failed: usize },
    /// The direct route's solve at a node did not reach residual 1e-8.
    #[error("direct solve at node {index} is near-singular (residual {residual:.3e})")]
    NearSingularNode { index: usize, residual: f64 },
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Functions(#[from] FunctionsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Which route produced a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StatMethod {
    ContourHermitized,
    ContourDirect,
    HornerOracle,
}

/// One evaluated statistic with its provenance: the route, the node count
/// of the quadrature (0 for Horner), the gap certificate if one was run for
/// this sample, and the sample seed when known.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StatRecord {
    pub value: Complex64,
    pub method: StatMethod,
    pub omega: Option<OmegaVerdict>,
    pub nodes: usize,
    pub seed: Option<SampleSeed>,
}

fn domain_check(f: &PowerSeries, contour: &Contour) -> Result<(), StatsError> {
    if contour.radius() >= f.rho() {
        return Err(FunctionsError::OutsideDomain {
            z: Complex64::new(contour.radius(), 0.0),
            rho: f.rho(),
        }
        .into());
    }
    Ok(())
}

/// Tr f(X) A = -(1 / 2 pi i) sum_j w_j f(z_j) Tr(G21_{z_j} A): the
/// Hermitized contour route. One factorization per node; any node breakdown
/// voids the whole statistic.
pub fn trace_f_hermitized(
    x: &DenseMatrix,
    f: &PowerSeries,
    a: &DenseMatrix,
    contour: &Contour,
    eta: f64,
) -> Result<StatRecord, StatsError> {
    domain_check(f, contour)?;
    if a.n() != x.n() {
        return Err(LinalgError::DimensionMismatch(x.n(), a.n()).into());
    }

    let sparse = hermitize::sparse_pattern(a);
    let views = match &sparse {
        Some((alpha, perm)) => vec![ViewSpec::Sparse { alpha, perm }],
        None => vec![ViewSpec::Dense(a)],
    };
    let out = hermitize::run_sweep(&SweepRequest {
        x,
        eta,
        trace_points: contour.points(),
        conj_pairs: None,
        views: &views,
        omega: None,
    });
    if !out.node_failures.is_empty() {
        return Err(StatsError::NodeFailures { failed: out.node_failures.len() });
    }

    let samples: Vec<Complex64> = contour
        .points()
        .iter()
        .zip(&out.traces[0])
        .map(|(&z, &t)| f.eval(z).map(|fv| fv * t))
        .collect::<Result<_, _>>()?;
    let integral = contour.integrate(&samples)?;
    let value = -integral / Complex64::new(0.0, std::f64::consts::TAU);
    Ok(StatRecord {
        value,
        method: StatMethod::ContourHermitized,
        omega: None,
        nodes: contour.nodes(),
        seed: None,
    })
}

/// Tr f(X) A by direct contour integration of the pivoted-LU resolvent
/// trace, with a per-node residual probe; no Hermitization gap, but no
/// positive definite structure either. The audit route for the sweep.
pub fn trace_f_direct(
    x: &DenseMatrix,
    f: &PowerSeries,
    a: &DenseMatrix,
    contour: &Contour,
) -> Result<StatRecord, StatsError> {
    domain_check(f, contour)?;
    if a.n() != x.n() {
        return Err(LinalgError::DimensionMismatch(x.n(), a.n()).into());
    }
    let n = x.n();
    // deterministic probe for the residual check
    let probe: Vec<Complex64> = (0..n)
        .map(|i| Complex64::new(1.0 + (i as f64) / n as f64, 0.5 - (i as f64) / n as f64))
        .collect();
    let probe_norm = probe.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();

    let mut samples = Vec::with_capacity(contour.nodes());
    for (index, &z) in contour.points().iter().enumerate() {
        let mut y = x.clone();
        y.shift_diag(-z);
        let lu = match linalg::lu_factor(&y) {
            Ok(lu) => lu,
            Err(_) => {
                return Err(StatsError::NearSingularNode { index, residual: f64::INFINITY })
            }
        };
        let sol = lu.solve_vec(&probe);
        let mut rsq = 0.0f64;
        for i in 0..n {
            let mut s = Complex64::new(0.0, 0.0);
            let row = y.row(i);
            for k in 0..n {
                s += row[k] * sol[k];
            }
            rsq += (s - probe[i]).norm_sqr();
        }
        let residual = rsq.sqrt() / probe_norm;
        if residual > 1e-8 {
            return Err(StatsError::NearSingularNode { index, residual });
        }
        let t = lu.solve_mat(a)?.trace();
        samples.push(f.eval(z)? * t);
    }
    let integral = contour.integrate(&samples)?;
    let value = -integral / Complex64::new(0.0, std::f64::consts::TAU);
    Ok(StatRecord {
        value,
        method: StatMethod::ContourDirect,
        omega: None,
        nodes: contour.nodes(),
        seed: None,
    })
}

/// Tr f(X) A by exact matrix Horner evaluation of the polynomial f; the
/// ground-truth oracle, O(deg n^3), no spectral gating of any kind.
pub fn trace_f_horner(
    x: &DenseMatrix,
    f: &PowerSeries,
    a: &DenseMatrix,
) -> Result<StatRecord, StatsError> {
    if a.n() != x.n() {
        return Err(LinalgError::DimensionMismatch(x.n(), a.n()).into());
    }
    let n = x.n();
    let coeffs = f.coeffs();
    let mut b = DenseMatrix::zeros(n);
    if let Some(&last) = coeffs.last() {
        for i in 0..n {
            b.set(i, i, last);
        }
        for &ck in coeffs.iter().rev().skip(1) {
            b = linalg::matmul(x, &b)?;
            b.shift_diag(ck);
        }
    }
    let value = linalg::trace_product(&b, a)?;
    Ok(StatRecord {
        value,
        method: StatMethod::HornerOracle,
        omega: None,
        nodes: 0,
        seed: None,
    })
}
