//! Resolvents of shifted samples through their Hermitian embedding.
//!
//! For Y = X - z the 2n-dimensional Hermitian embedding W = [[0, Y], [Y*, 0]]
//! has resolvent G = (W - i eta)^{-1} whose blocks reduce to two positive
//! definite solves:
//!
//!   G11 = i eta (Y Y* + eta^2)^{-1}        G12 = (Y Y* + eta^2)^{-1} Y
//!   G21 = Y* (Y Y* + eta^2)^{-1}           G22 = i eta (Y* Y + eta^2)^{-1}
//!
//! Both Gram shifts are Hermitian positive definite for eta > 0, so every
//! node of a contour sweep costs one Cholesky per block family instead of a
//! pivoted general solve. G21 is the block that carries the linear
//! statistics: Tr((X - z)^{-1} A) = Tr(G21 A) + O(eta^2) away from the
//! spectrum, which is what `girko_free_error` measures.
//!
//! `run_sweep` is the shared engine: it walks a set of evaluation points,
//! factors once per node, accumulates Tr(G21 A) for every registered view of
//! A, and can ride a spectral-gap certificate (`OmegaVerdict`) on the same
//! factorizations when the certificate grid sits on the sweep nodes.

use std::collections::HashMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::contour::conj_symmetric_ring;
use crate::dyson::{self, DysonError};
use crate::linalg::{self, DenseMatrix, HermitianFactor, LinalgError};
use crate::planar::{self, PMat, SparseA};

#[derive(Debug, Error)]
pub enum HermitizeError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Dyson(#[from] DysonError),
}

/// Factorized resolvent data for one sample at one spectral point (z, eta).
///
/// Construction performs both positive definite factorizations eagerly; the
/// block traces and entries afterwards are O(n^2) or one reference matmul.
/// This is the audit-grade path; bulk contour sweeps use `run_sweep`.
#[derive(Debug, Clone)]
pub struct ResolventWorkspace {
    x: DenseMatrix,
    z: Complex64,
    eta: f64,
    factor: HermitianFactor,
    hinv: DenseMatrix,
    hinv_primed: DenseMatrix,
    y: DenseMatrix,
    y_star: DenseMatrix,
}

impl ResolventWorkspace {
    /// Factors H = Y Y* + eta^2 and H' = Y* Y + eta^2 for Y = X - z.
    /// Fails with NotPositiveDefinite only on non-finite input; for finite X
    /// and eta > 0 both matrices are positive definite by construction.
    pub fn new(x: &DenseMatrix, z: Complex64, eta: f64) -> Result<Self, HermitizeError> {
        assert!(eta > 0.0 && eta.is_finite(), "eta must be positive");
        let n = x.n();

        let xp = PMat::from_dense(x);
        let xt = xp.transposed();
        let xc = xp.conj_transposed();

        let mut h = PMat::zeros(n);
        let mut gram = PMat::zeros(n);
        let mut w = PMat::zeros(n);
        let mut inv = PMat::zeros(n);

        // H = X X* - conj(z) X - z X* + (|z|^2 + eta^2) I
        planar::gram_xxstar(&xp, &mut gram);
        planar::assemble_h(&gram, &xp, &xt, z, eta, &mut h);
        planar::cholesky_in_place(&mut h)
            .map_err(|(row, pivot)| LinalgError::NotPositiveDefinite { row, pivot })?;
        let factor = HermitianFactor::from_lower(&h.to_dense());
        planar::invert_lower(&h, &mut w);
        planar::gram_wstar_w(&w, &mut inv);
        let hinv = inv.to_dense();

        // H' shares the cross terms; only the Gram part changes to X* X
        planar::gram_xxstar(&xc, &mut gram);
        planar::assemble_h(&gram, &xp, &xt, z, eta, &mut h);
        planar::cholesky_in_place(&mut h)
            .map_err(|(row, pivot)| LinalgError::NotPositiveDefinite { row, pivot })?;
        planar::invert_lower(&h, &mut w);
        planar::gram_wstar_w(&w, &mut inv);
        let hinv_primed = inv.to_dense();

        let mut y = x.clone();
        y.shift_diag(-z);
        let y_star = y.conj_transpose();

        Ok(ResolventWorkspace { x: x.clone(), z, eta, factor, hinv, hinv_primed, y, y_star })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.n()
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    #[inline]
    pub fn z(&self) -> Complex64 {
        self.z
    }

    #[inline]
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Cholesky factor of H = (X - z)(X - z)* + eta^2.
    pub fn factor(&self) -> &HermitianFactor {
        &self.factor
    }

    /// Max relative residual ||H F^{-1} b - b|| / ||b|| over deterministic
    /// probe vectors; a factorization health check independent of the
    /// planar pipeline that produced the factor.
    pub fn factor_probe_residual(&self, probes: usize) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..probes.max(1) {
            let b: Vec<Complex64> = (0..n).map(|_| Complex64::new(next(), next())).collect();
            let sol = match self.factor.solve_vec(&b) {
                Ok(s) => s,
                Err(_) => return f64::INFINITY,
            };
            // H v = Y (Y* v) + eta^2 v, applied without forming H
            let mut t = vec![Complex64::new(0.0, 0.0); n];
            for i in 0..n {
                let row = self.y_star.row(i);
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += row[k] * sol[k];
                }
                t[i] = s;
            }
            let e2 = self.eta * self.eta;
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for i in 0..n {
                let row = self.y.row(i);
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += row[k] * t[k];
                }
                s += e2 * sol[i];
                num += (s - b[i]).norm_sqr();
                den += b[i].norm_sqr();
            }
            worst = worst.max((num / den).sqrt());
        }
        worst
    }

    fn check_observable(&self, a: &DenseMatrix) -> Result<(), HermitizeError> {
        if a.n() != self.n() {
            return Err(LinalgError::DimensionMismatch(self.n(), a.n()).into());
        }
        let norm = linalg::op_norm_est(a, 30);
        if norm > 1.0 + 1e-9 {
            eprintln!(
                "observable operator norm {norm:.3e} exceeds 1; trace bounds assume a contraction"
            );
        }
        Ok(())
    }

    /// Tr(G^{kl} A) for block indices in {1, 2}.
    pub fn resolvent_block_trace(
        &self,
        block: (usize, usize),
        a: &DenseMatrix,
    ) -> Result<Complex64, HermitizeError> {
        assert!(
            (1..=2).contains(&block.0) && (1..=2).contains(&block.1),
            "block indices are 1-based in {{1,2}}"
        );
        self.check_observable(a)?;
        let ieta = Complex64::new(0.0, self.eta);
        let t = match block {
            (1, 1) => ieta * linalg::trace_product(a, &self.hinv)?,
            (2, 2) => ieta * linalg::trace_product(a, &self.hinv_primed)?,
            // Tr(H^{-1} Y A), one reference matmul
            (1, 2) => linalg::trace_product(&self.hinv, &linalg::matmul(&self.y, a)?)?,
            // Tr(Y* H^{-1} A) = Tr(H^{-1} A Y*)
            (2, 1) => linalg::trace_product(&self.y_star, &linalg::matmul(&self.hinv, a)?)?,
            _ => unreachable!(),
        };
        Ok(t)
    }

    /// Single resolvent entry G^{kl}_{ij}; O(n) for the off-diagonal blocks.
    pub fn block_entry(&self, block: (usize, usize), i: usize, j: usize) -> Complex64 {
        assert!(
            (1..=2).contains(&block.0) && (1..=2).contains(&block.1),
            "block indices are 1-based in {{1,2}}"
        );
        let n = self.n();
        assert!(i < n && j < n, "entry index out of range");
        let ieta = Complex64::new(0.0, self.eta);
        match block {
            (1, 1) => ieta * self.hinv.at(i, j),
            (2, 2) => ieta * self.hinv_primed.at(i, j),
            (1, 2) => {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += self.hinv.at(i, k) * self.y.at(k, j);
                }
                s
            }
            (2, 1) => {
                let mut s = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += self.y_star.at(i, k) * self.hinv.at(k, j);
                }
                s
            }
            _ => unreachable!(),
        }
    }

    /// Normalized block-trace deviations from the deterministic limit:
    /// err_kl = Tr(A G^{kl}) / n - M_kl <A> with M the scalar limit matrix
    /// [[m, -z u], [-conj(z) u, m]]. Returned in block order
    /// (1,1), (1,2), (2,1), (2,2).
    pub fn local_law_errors(&self, a: &DenseMatrix) -> Result<[Complex64; 4], HermitizeError> {
        self.check_observable(a)?;
        let n = self.n() as f64;
        let avg_a = a.normalized_trace();
        let mb = dyson::solve_m_u(self.z, self.eta)?;
        let (m, u) = (mb.m, mb.u);

        let ieta = Complex64::new(0.0, self.eta);
        // G12 = H^{-1} Y; G21 = (G12)* exactly, so one matmul covers both
        let g12 = linalg::matmul(&self.hinv, &self.y)?;
        let t11 = ieta * linalg::trace_product(a, &self.hinv)?;
        let t12 = linalg::trace_product(a, &g12)?;
        let t21 = linalg::trace_product(a, &g12.conj_transpose())?;
        let t22 = ieta * linalg::trace_product(a, &self.hinv_primed)?;

        Ok([
            t11 / n - m * avg_a,
            t12 / n - (-self.z * u) * avg_a,
            t21 / n - (-self.z.conj() * u) * avg_a,
            t22 / n - m * avg_a,
        ])
    }
}

/// The a priori bound kappa^{-3} n eta^2 on the gap between the direct
/// resolvent trace and its Hermitized block counterpart, valid whenever
/// sigma_min(X - z) >= kappa and ||A|| <= 1.
pub fn girko_bound(kappa: f64, n: usize, eta: f64) -> f64 {
    kappa.powi(-3) * n as f64 * eta * eta
}

/// |Tr((X - z)^{-1} A) - Tr(G21 A)|: the cost of routing a linear statistic
/// through the Hermitian embedding at regularization eta. Warns if the
/// measured difference exceeds `girko_bound(kappa, n, eta)`, which on
/// gap-certified samples indicates a kappa that does not actually hold.
pub fn girko_free_error(
    ws: &ResolventWorkspace,
    a: &DenseMatrix,
    kappa: f64,
) -> Result<f64, HermitizeError> {
    assert!(kappa > 0.0, "kappa must be positive");
    let lu = linalg::lu_factor(&ws.y)?;
    let direct = lu.solve_mat(a)?.trace();
    let herm = ws.resolvent_block_trace((2, 1), a)?;
    let diff = (direct - herm).norm();
    let bound = girko_bound(kappa, ws.n(), ws.eta());
    if diff > bound {
        eprintln!(
            "hermitization error {diff:.3e} exceeds the kappa = {kappa:.3} bound {bound:.3e}"
        );
    }
    Ok(diff)
}

/// Outcome of the spectral-gap certificate on one sample.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OmegaVerdict {
    /// Every probed node cleared kappa plus the grid margin.
    pub passed: bool,
    /// Smallest sigma_min(X - z) estimate seen over both probe rings.
    pub min_sigma: f64,
    /// Chord spacing of the inner grid, 2 (1 + delta/2) sin(pi / grid_nodes);
    /// sigma_min is 1-Lipschitz in z, so this covers the arcs between nodes.
    pub grid_spacing: f64,
    /// min_sigma - (kappa + grid_spacing); negative exactly when failed.
    pub effective_margin: f64,
}

/// Certifies a spectral gap: sigma_min(X - z) >= kappa + spacing at every
/// node of a grid on |z| = 1 + delta/2 plus a coarse ring on |z| = 1 + delta.
/// A Cholesky breakdown at a node counts as sigma = 0 and fails the verdict;
/// there are no error returns.
pub fn omega_check(x: &DenseMatrix, delta: f64, kappa: f64, grid_nodes: usize) -> OmegaVerdict {
    assert!(delta > 0.0 && delta.is_finite(), "delta must be positive");
    assert!(kappa > 0.0 && kappa < delta / 2.0, "kappa must sit in (0, delta/2)");
    assert!(grid_nodes >= 4, "certificate grid needs at least 4 nodes");
    let req = SweepRequest {
        x,
        eta: 0.0,
        trace_points: &[],
        conj_pairs: None,
        views: &[],
        omega: Some(OmegaPlan { delta, kappa, grid_nodes }),
    };
    run_sweep(&req).omega.expect("omega plan was supplied")
}

/// Recognizes observables with exactly one real nonzero per row, the shape
/// the O(n^2) sweep accumulators handle without any matmul: returns
/// (alpha, perm) with A[i, perm[i]] = alpha[i]. Zero rows, complex entries
/// or multiple nonzeros fall back to the dense path.
pub(crate) fn sparse_pattern(a: &DenseMatrix) -> Option<(Vec<f64>, Vec<usize>)> {
    let n = a.n();
    let mut alpha = vec![0.0f64; n];
    let mut perm = vec![0usize; n];
    for i in 0..n {
        let mut seen: Option<(usize, f64)> = None;
        for j in 0..n {
            let v = a.at(i, j);
            if v.re != 0.0 || v.im != 0.0 {
                if v.im != 0.0 || seen.is_some() {
                    return None;
                }
                seen = Some((j, v.re));
            }
        }
        let (j, re) = seen?;
        alpha[i] = re;
        perm[i] = j;
    }
    Some((alpha, perm))
}

/// Gap-certificate parameters for a sweep.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OmegaPlan {
    pub delta: f64,
    pub kappa: f64,
    pub grid_nodes: usize,
}

/// One observable to accumulate Tr(G21 A) for at every sweep node.
pub(crate) enum ViewSpec<'a> {
    /// A[j, perm[j]] = alpha[j]; covers identity, signed diagonals, shifts.
    Sparse { alpha: &'a [f64], perm: &'a [usize] },
    Dense(&'a DenseMatrix),
}

pub(crate) struct SweepRequest<'a> {
    pub x: &'a DenseMatrix,
    pub eta: f64,
    pub trace_points: &'a [Complex64],
    /// Mirror map: conj_pairs[j] = j' with points[j'] = conj(points[j]).
    /// When given (requires a real sample and real observables), only the
    /// representative of each pair is factored and the partner trace is its
    /// exact conjugate.
    pub conj_pairs: Option<&'a [usize]>,
    pub views: &'a [ViewSpec<'a>],
    pub omega: Option<OmegaPlan>,
}

pub(crate) struct SweepOutcome {
    /// traces[view][point] = Tr(G21 A_view) at that point.
    pub traces: Vec<Vec<Complex64>>,
    /// Points whose factorization broke down; their traces are zero filler
    /// and the whole record must be treated as void by callers.
    pub node_failures: Vec<usize>,
    pub omega: Option<OmegaVerdict>,
}

enum PreparedView<'a> {
    Sparse { alpha: &'a [f64], perm: &'a [usize] },
    /// Transposed (A X*)^T and A^T, laid out for contiguous trace loops.
    Dense { ct: PMat, at: PMat },
}

/// sigma_min estimate with escalation: a cheap pass decides clear cases and
/// a tight pass re-resolves anything within 5% of the decision threshold.
fn node_sigma(l: &PMat, eta_sq: f64, threshold: f64) -> f64 {
    let quick = planar::smallest_sigma(l, eta_sq, 1e-5, 200);
    if (quick - threshold).abs() <= 0.05 * threshold {
        planar::smallest_sigma(l, eta_sq, 1e-9, 800)
    } else {
        quick
    }
}

fn key_of(z: Complex64) -> (u64, u64) {
    (z.re.to_bits(), z.im.to_bits())
}

/// Shared contour-sweep engine. One Cholesky per distinct node, all views
/// accumulated from the same inverse, and the gap certificate riding on the
/// node factorizations whenever its grid points coincide bitwise with sweep
/// points (same ring constructor, commensurate node counts).
pub(crate) fn run_sweep(req: &SweepRequest<'_>) -> SweepOutcome {
    let x = req.x;
    let n = x.n();
    let npts = req.trace_points.len();
    let x_is_real = x.data().iter().all(|c| c.im == 0.0);

    if let Some(pairs) = req.conj_pairs {
        assert_eq!(pairs.len(), npts, "one mirror partner per point");
        assert!(x_is_real, "conjugation mirroring requires a real sample");
        for (j, &p) in pairs.iter().enumerate() {
            assert_eq!(pairs[p], j, "mirror map must be an involution");
            let (a, b) = (req.trace_points[j], req.trace_points[p]);
            assert!(
                a.re == b.re && a.im == -b.im,
                "mirror partner of point {j} is not its conjugate"
            );
        }
    }

    let xp = PMat::from_dense(x);
    let xt = xp.transposed();
    let mut gram = PMat::zeros(n);
    planar::gram_xxstar(&xp, &mut gram);

    let prepared: Vec<PreparedView<'_>> = req
        .views
        .iter()
        .map(|v| match v {
            ViewSpec::Sparse { alpha, perm } => {
                assert_eq!(alpha.len(), n);
                assert_eq!(perm.len(), n);
                PreparedView::Sparse { alpha, perm }
            }
            ViewSpec::Dense(a) => {
                assert_eq!(a.n(), n, "observable dimension mismatch");
                if req.conj_pairs.is_some() {
                    assert!(
                        a.data().iter().all(|c| c.im == 0.0),
                        "conjugation mirroring requires real observables"
                    );
                }
                let c = linalg::matmul(a, &x.conj_transpose()).expect("dims checked");
                PreparedView::Dense {
                    ct: PMat::from_dense(&c).transposed(),
                    at: PMat::from_dense(a).transposed(),
                }
            }
        })
        .collect();

    // Gap-certificate geometry and the fusion map from inner-grid slots to
    // sweep points. Outer-ring nodes never fuse (different radius).
    let omega_geom = req.omega.as_ref().map(|plan| {
        let r_in = 1.0 + plan.delta / 2.0;
        let spacing = 2.0 * r_in * (std::f64::consts::PI / plan.grid_nodes as f64).sin();
        let inner = conj_symmetric_ring(r_in, plan.grid_nodes);
        let outer = conj_symmetric_ring(1.0 + plan.delta, 8);
        (plan, inner, outer, spacing)
    });
    let mut inner_sigma: Vec<Option<f64>> = omega_geom
        .as_ref()
        .map(|(_, inner, _, _)| vec![None; inner.len()])
        .unwrap_or_default();
    let mut fused: HashMap<(u64, u64), usize> = HashMap::new();
    if let Some((_, inner, _, _)) = &omega_geom {
        let mut point_index: HashMap<(u64, u64), usize> = HashMap::new();
        for (j, &z) in req.trace_points.iter().enumerate() {
            point_index.entry(key_of(z)).or_insert(j);
        }
        for (g, &z) in inner.iter().enumerate() {
            if let Some(&j) = point_index.get(&key_of(z)) {
                fused.insert(key_of(z), g);
                let _ = j;
            }
        }
    }
    let threshold = omega_geom
        .as_ref()
        .map(|(plan, _, _, spacing)| plan.kappa + spacing)
        .unwrap_or(f64::INFINITY);

    let mut traces = vec![vec![Complex64::new(0.0, 0.0); npts]; prepared.len()];
    let mut failures: Vec<usize> = Vec::new();

    let mut h = PMat::zeros(n);
    let mut w = PMat::zeros(n);
    let mut hinv = PMat::zeros(n);
    let eta_sq = req.eta * req.eta;

    for j in 0..npts {
        if let Some(pairs) = req.conj_pairs {
            if pairs[j] < j {
                continue;
            }
        }
        let z = req.trace_points[j];
        planar::assemble_h(&gram, &xp, &xt, z, req.eta, &mut h);
        if planar::cholesky_in_place(&mut h).is_err() {
            failures.push(j);
            if let Some(g) = fused.get(&key_of(z)) {
                inner_sigma[*g] = Some(0.0);
            }
            continue;
        }
        if let Some(g) = fused.get(&key_of(z)) {
            inner_sigma[*g] = Some(node_sigma(&h, eta_sq, threshold));
        }
        planar::invert_lower(&h, &mut w);
        planar::gram_wstar_w(&w, &mut hinv);
        for (vi, view) in prepared.iter().enumerate() {
            traces[vi][j] = match view {
                PreparedView::Sparse { alpha, perm } => {
                    planar::trace_block21_sparse(&hinv, &xp, z, &SparseA { alpha, perm })
                }
                PreparedView::Dense { ct, at } => planar::trace_block21_dense(&hinv, ct, at, z),
            };
        }
    }

    if let Some(pairs) = req.conj_pairs {
        for j in 0..npts {
            if pairs[j] < j {
                for row in traces.iter_mut() {
                    row[j] = row[pairs[j]].conj();
                }
            }
        }
        let mirrored: Vec<usize> =
            failures.iter().filter(|&&j| pairs[j] != j).map(|&j| pairs[j]).collect();
        failures.extend(mirrored);
        failures.sort_unstable();
        failures.dedup();
    }

    let omega = omega_geom.map(|(plan, inner, outer, spacing)| {
        // sigma(conj z) = sigma(z) for real samples lets the mirrored half
        // of each ring reuse the representative's value
        let mut ring_sigma = |points: &[Complex64], seeded: Option<&mut Vec<Option<f64>>>| {
            let count = points.len();
            let mut out: Vec<f64> = Vec::with_capacity(count);
            let seeded: Vec<Option<f64>> = match seeded {
                Some(s) => std::mem::take(s),
                None => vec![None; count],
            };
            for g in 0..count {
                if let Some(s) = seeded[g] {
                    out.push(s);
                    continue;
                }
                let mirror = (count - g) % count;
                if x_is_real && mirror < g {
                    let v = out[mirror];
                    out.push(v);
                    continue;
                }
                planar::assemble_h(&gram, &xp, &xt, points[g], req.eta, &mut h);
                match planar::cholesky_in_place(&mut h) {
                    Ok(()) => out.push(node_sigma(&h, eta_sq, threshold)),
                    Err(_) => out.push(0.0),
                }
            }
            out
        };
        let inner_vals = ring_sigma(&inner, Some(&mut inner_sigma));
        let outer_vals = ring_sigma(&outer, None);
        let min_sigma = inner_vals
            .iter()
            .chain(outer_vals.iter())
            .copied()
            .fold(f64::INFINITY, f64::min);
        OmegaVerdict {
            passed: min_sigma >= plan.kappa + spacing,
            min_sigma,
            grid_spacing: spacing,
            effective_margin: min_sigma - (plan.kappa + spacing),
        }
    });

    SweepOutcome { traces, node_failures: failures, omega }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::make_contour;
    use crate::ensemble::{sample_iid, EntryLaw, SampleSeed};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn sample(law: EntryLaw, n: usize, index: u64) -> DenseMatrix {
        sample_iid(n, law, SampleSeed { master: 7_777, index })
    }

    /// Dense 2n x 2n embedding resolvent, the independent oracle for every
    /// block formula: G = ([[0, Y], [Y*, 0]] - i eta)^{-1} via pivoted LU.
    fn embedding_resolvent(x: &DenseMatrix, z: Complex64, eta: f64) -> DenseMatrix {
        let n = x.n();
        let mut y = x.clone();
        y.shift_diag(-z);
        let ys = y.conj_transpose();
        let mut big = DenseMatrix::zeros(2 * n);
        for i in 0..n {
            for j in 0..n {
                big.set(i, n + j, y.at(i, j));
                big.set(n + i, j, ys.at(i, j));
            }
        }
        big.shift_diag(c(0.0, -eta));
        let lu = linalg::lu_factor(&big).unwrap();
        lu.solve_mat(&DenseMatrix::identity(2 * n)).unwrap()
    }

    #[test]
    fn zero_sample_closed_forms() {
        let n = 6;
        let x = DenseMatrix::zeros(n);
        let z = c(2.0, 0.0);
        let eta = 1e-3;
        let ws = ResolventWorkspace::new(&x, z, eta).unwrap();
        let a = DenseMatrix::identity(n);
        let denom = 4.0 + eta * eta;

        let t11 = ws.resolvent_block_trace((1, 1), &a).unwrap();
        let want11 = c(0.0, eta * n as f64 / denom);
        assert!((t11 - want11).norm() <= 1e-14 * want11.norm());

        let t21 = ws.resolvent_block_trace((2, 1), &a).unwrap();
        let want21 = c(-2.0 * n as f64 / denom, 0.0);
        assert!((t21 - want21).norm() <= 1e-14 * want21.norm());

        let t12 = ws.resolvent_block_trace((1, 2), &a).unwrap();
        assert!((t12 - want21).norm() <= 1e-14 * want21.norm());

        let t22 = ws.resolvent_block_trace((2, 2), &a).unwrap();
        assert!((t22 - want11).norm() <= 1e-14 * want11.norm());
    }

    #[test]
    fn blocks_match_embedding_resolvent() {
        let n = 7;
        let x = sample(EntryLaw::ComplexGaussian, n, 0);
        let z = c(1.4, -0.6);
        let eta = 3e-3;
        let ws = ResolventWorkspace::new(&x, z, eta).unwrap();
        let g = embedding_resolvent(&x, z, eta);

        let offsets = [(1, 1, 0, 0), (1, 2, 0, n), (2, 1, n, 0), (2, 2, n, n)];
        for &(bk, bl, ri, cj) in &offsets {
            for i in 0..n {
                for j in 0..n {
                    let got = ws.block_entry((bk, bl), i, j);
                    let want = g.at(ri + i, cj + j);
                    assert!(
                        (got - want).norm() <= 1e-10,
                        "block ({bk},{bl}) entry ({i},{j}): {got} vs {want}"
                    );
                }
            }
        }

        // block traces against a dense observable ride the same oracle
        let mut a = sample(EntryLaw::ComplexGaussian, n, 1);
        a = a.scale(c(1.0 / linalg::op_norm_est(&a, 40), 0.0));
        for &(bk, bl, ri, cj) in &offsets {
            let got = ws.resolvent_block_trace((bk, bl), &a).unwrap();
            let mut want = c(0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    want += g.at(ri + i, cj + j) * a.at(j, i);
                }
            }
            assert!(
                (got - want).norm() <= 1e-10 * want.norm().max(1.0),
                "block ({bk},{bl}) trace: {got} vs {want}"
            );
        }
    }

    #[test]
    fn factor_probes_are_tight() {
        let x = sample(EntryLaw::ComplexGaussian, 24, 2);
        let ws = ResolventWorkspace::new(&x, c(1.6, 0.3), 1e-4).unwrap();
        let r = ws.factor_probe_residual(4);
        assert!(r <= 1e-9, "probe residual {r}");
    }

    #[test]
    fn off_diagonal_blocks_are_mutual_adjoints() {
        let n = 16;
        let x = sample(EntryLaw::ComplexGaussian, n, 3);
        let ws = ResolventWorkspace::new(&x, c(-1.1, 0.9), 1e-4).unwrap();
        let a = sample(EntryLaw::RealGaussian, n, 4).scale(c(0.11, 0.0));
        // (G12)* = G21 exactly: Tr(G21 A) = conj(Tr(G12 A*))
        let lhs = ws.resolvent_block_trace((2, 1), &a).unwrap();
        let rhs = ws.resolvent_block_trace((1, 2), &a.conj_transpose()).unwrap().conj();
        assert!((lhs - rhs).norm() <= 1e-9 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn block_traces_respect_gap_bound() {
        let n = 48;
        let x = sample(EntryLaw::ComplexGaussian, n, 5);
        let z = c(1.25, 0.0);
        let mut y = x.clone();
        y.shift_diag(-z);
        let sigma = linalg::smallest_singular_value(&y, 1e-8).unwrap();
        assert!(sigma > 0.01, "degenerate test sample, sigma = {sigma}");
        let ws = ResolventWorkspace::new(&x, z, 1e-4).unwrap();
        let a = DenseMatrix::identity(n);
        let cap = n as f64 / sigma;
        for &blk in &[(1, 1), (1, 2), (2, 1), (2, 2)] {
            let t = ws.resolvent_block_trace(blk, &a).unwrap();
            assert!(t.norm() <= cap, "block {blk:?}: |{t}| > {cap}");
        }
    }

    #[test]
    fn girko_zero_sample_is_exact() {
        let n = 8;
        let x = DenseMatrix::zeros(n);
        let eta = 1e-3;
        let ws = ResolventWorkspace::new(&x, c(2.0, 0.0), eta).unwrap();
        let a = DenseMatrix::identity(n);
        let diff = girko_free_error(&ws, &a, 2.0).unwrap();
        // closed form: n eta^2 / (2 (4 + eta^2)), strictly below the
        // kappa = sigma_min = 2 bound of n eta^2 / 8. The measured diff is a
        // cancellation of two O(n) traces, so it carries ~n*eps of absolute
        // float noise on top of the 1e-6-sized true value.
        let want = n as f64 * eta * eta / (2.0 * (4.0 + eta * eta));
        assert!((diff - want).abs() <= 1e-8 * want, "{diff} vs {want}");
        assert!(diff <= girko_bound(2.0, n, eta));
    }

    #[test]
    fn girko_error_scales_quadratically_in_eta() {
        let n = 32;
        let x = sample(EntryLaw::ComplexGaussian, n, 6);
        let a = DenseMatrix::identity(n);
        let z = c(1.5, 0.0);
        let eta = 1e-3;
        let d1 = girko_free_error(&ResolventWorkspace::new(&x, z, eta).unwrap(), &a, 0.3).unwrap();
        let d2 =
            girko_free_error(&ResolventWorkspace::new(&x, z, eta / 2.0).unwrap(), &a, 0.3).unwrap();
        let ratio = d2 / d1;
        assert!((ratio - 0.25).abs() <= 0.05 * 0.25, "halving eta gave ratio {ratio}");
    }

    #[test]
    fn girko_stays_under_bound_on_certified_samples() {
        let n = 64;
        let eta = 1.0 / (n * n) as f64;
        let kappa = 0.05;
        let mut checked = 0;
        for index in 0..6 {
            let x = sample(EntryLaw::ComplexGaussian, n, 10 + index);
            if !omega_check(&x, 0.5, kappa, 256).passed {
                continue;
            }
            let a = DenseMatrix::identity(n);
            for &z in &[c(1.25, 0.0), c(0.0, 1.25), c(-0.88, 0.88)] {
                let ws = ResolventWorkspace::new(&x, z, eta).unwrap();
                let diff = girko_free_error(&ws, &a, kappa).unwrap();
                assert!(
                    diff <= girko_bound(kappa, n, eta),
                    "certified sample broke the bound: {diff}"
                );
            }
            checked += 1;
        }
        assert!(checked >= 4, "too few certified samples: {checked}");
    }

    #[test]
    fn omega_zero_sample_has_unit_shifted_gap() {
        let v = omega_check(&DenseMatrix::zeros(8), 0.5, 0.2, 64);
        // sigma_min(0 - z) = |z| = 1.25 at every inner node, 1.5 outside
        assert!(v.passed);
        assert!((v.min_sigma - 1.25).abs() <= 1e-9, "{}", v.min_sigma);
        let want_spacing = 2.5 * (std::f64::consts::PI / 64.0).sin();
        assert!((v.grid_spacing - want_spacing).abs() <= 1e-15);
        assert!((v.effective_margin - (1.25 - 0.2 - want_spacing)).abs() <= 1e-9);
    }

    #[test]
    fn omega_flags_planted_eigenvalue_on_grid() {
        let n = 8;
        let mut x = DenseMatrix::zeros(n);
        x.set(0, 0, c(1.25, 0.0));
        // node 0 of the inner grid is exactly 1.25, where X - z is singular
        let v = omega_check(&x, 0.5, 0.2, 64);
        assert!(!v.passed);
        assert!(v.min_sigma <= 1e-8, "{}", v.min_sigma);
        assert!(v.effective_margin < 0.0);
    }

    #[test]
    fn omega_operating_point_admits_gaussian_samples() {
        // kappa = 0.05 with a 256-node grid: threshold ~ 0.081 sits well
        // below the % 0.116 bulk edge of sigma_min on the |z| = 1.25 ring
        for index in 0..3 {
            let x = sample(EntryLaw::ComplexGaussian, 128, 20 + index);
            let v = omega_check(&x, 0.5, 0.05, 256);
            assert!(v.passed, "sample {index} failed: {v:?}");
        }
    }

    #[test]
    fn omega_tight_kappa_rejects_everything() {
        // kappa = 0.2 exceeds the limiting sigma_min ~ 0.116 on the inner
        // ring, so the certificate at this kappa fails for typical samples
        // no matter the grid; this pins the measured geometry
        for index in 0..5 {
            let x = sample(EntryLaw::ComplexGaussian, 128, 40 + index);
            let v = omega_check(&x, 0.5, 0.2, 64);
            assert!(!v.passed, "sample {index} unexpectedly cleared kappa 0.2: {v:?}");
            assert!(v.min_sigma < 0.2, "min sigma {}", v.min_sigma);
        }
    }

    #[test]
    fn sweep_traces_match_workspace() {
        let n = 16;
        let x = sample(EntryLaw::ComplexGaussian, n, 50);
        let contour = make_contour(1.3, 8).unwrap();
        let eta = 1e-3;

        let alpha = vec![1.0; n];
        let perm: Vec<usize> = (0..n).collect();
        let mut a = sample(EntryLaw::ComplexGaussian, n, 51);
        a = a.scale(c(1.0 / linalg::op_norm_est(&a, 40), 0.0));

        let views = [ViewSpec::Sparse { alpha: &alpha, perm: &perm }, ViewSpec::Dense(&a)];
        let out = run_sweep(&SweepRequest {
            x: &x,
            eta,
            trace_points: contour.points(),
            conj_pairs: None,
            views: &views,
            omega: None,
        });
        assert!(out.node_failures.is_empty());

        let eye = DenseMatrix::identity(n);
        for (j, &z) in contour.points().iter().enumerate() {
            let ws = ResolventWorkspace::new(&x, z, eta).unwrap();
            let want_eye = ws.resolvent_block_trace((2, 1), &eye).unwrap();
            let want_a = ws.resolvent_block_trace((2, 1), &a).unwrap();
            assert!(
                (out.traces[0][j] - want_eye).norm() <= 1e-10 * want_eye.norm().max(1.0),
                "sparse node {j}"
            );
            assert!(
                (out.traces[1][j] - want_a).norm() <= 1e-10 * want_a.norm().max(1.0),
                "dense node {j}"
            );
        }
    }

    #[test]
    fn sweep_mirror_halving_is_bitwise_exact() {
        let n = 16;
        let x = sample(EntryLaw::RealGaussian, n, 60);
        let contour = make_contour(1.25, 8).unwrap();
        let k = contour.nodes();
        let pairs: Vec<usize> = (0..k).map(|j| (k - j) % k).collect();

        let alpha: Vec<f64> = (0..n).map(|j| if j % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let perm: Vec<usize> = (0..n).map(|j| (j + 1) % n).collect();
        let views = [ViewSpec::Sparse { alpha: &alpha, perm: &perm }];

        let base = SweepRequest {
            x: &x,
            eta: 1e-4,
            trace_points: contour.points(),
            conj_pairs: None,
            views: &views,
            omega: Some(OmegaPlan { delta: 0.5, kappa: 0.05, grid_nodes: 8 }),
        };
        let full = run_sweep(&base);
        let halved = run_sweep(&SweepRequest { conj_pairs: Some(&pairs), ..base });

        for j in 0..k {
            let (a, b) = (full.traces[0][j], halved.traces[0][j]);
            assert_eq!(a.re.to_bits(), b.re.to_bits(), "node {j}");
            assert_eq!(a.im.to_bits(), b.im.to_bits(), "node {j}");
        }
        let (vf, vh) = (full.omega.unwrap(), halved.omega.unwrap());
        assert_eq!(vf.passed, vh.passed);
        assert!((vf.min_sigma - vh.min_sigma).abs() <= 1e-12 * vf.min_sigma.max(1e-300));
    }

    #[test]
    fn sweep_fusion_matches_standalone_certificate() {
        let n = 32;
        let x = sample(EntryLaw::ComplexGaussian, n, 70);
        let contour = make_contour(1.25, 64).unwrap();
        let alpha = vec![1.0; n];
        let perm: Vec<usize> = (0..n).collect();
        let views = [ViewSpec::Sparse { alpha: &alpha, perm: &perm }];
        // 32 divides 64: every inner-grid point rides a sweep factorization
        let out = run_sweep(&SweepRequest {
            x: &x,
            eta: 1e-6,
            trace_points: contour.points(),
            conj_pairs: None,
            views: &views,
            omega: Some(OmegaPlan { delta: 0.5, kappa: 0.05, grid_nodes: 32 }),
        });
        let fusedv = out.omega.unwrap();
        let standalone = omega_check(&x, 0.5, 0.05, 32);
        assert_eq!(fusedv.passed, standalone.passed);
        // fused sigmas carry the sweep's eta^2 cushion, removed inside the
        // estimator, so the two routes agree to iteration tolerance
        assert!(
            (fusedv.min_sigma - standalone.min_sigma).abs() <= 1e-4 * standalone.min_sigma,
            "{} vs {}",
            fusedv.min_sigma,
            standalone.min_sigma
        );
    }

    #[test]
    fn sweep_reports_broken_nodes() {
        let n = 6;
        let mut x = DenseMatrix::zeros(n);
        x.set(0, 0, c(f64::NAN, 0.0));
        let contour = make_contour(1.25, 4).unwrap();
        let alpha = vec![1.0; n];
        let perm: Vec<usize> = (0..n).collect();
        let views = [ViewSpec::Sparse { alpha: &alpha, perm: &perm }];
        let out = run_sweep(&SweepRequest {
            x: &x,
            eta: 1e-3,
            trace_points: contour.points(),
            conj_pairs: None,
            views: &views,
            omega: None,
        });
        assert_eq!(out.node_failures.len(), contour.nodes());
    }

    #[test]
    fn local_law_errors_shrink_with_dimension() {
        let z = c(1.5, 0.0);
        let a = |n: usize| DenseMatrix::identity(n);
        let median_err = |n: usize, count: u64| -> f64 {
            let mut vals: Vec<f64> = (0..count)
                .map(|index| {
                    let x = sample_iid(
                        n,
                        EntryLaw::ComplexGaussian,
                        SampleSeed { master: 4_242, index },
                    );
                    let eta = 1.0 / (n * n) as f64;
                    let ws = ResolventWorkspace::new(&x, z, eta).unwrap();
                    let errs = ws.local_law_errors(&a(n)).unwrap();
                    errs.iter().map(|e| e.norm()).fold(0.0, f64::max)
                })
                .collect();
            vals.sort_by(|p, q| p.total_cmp(q));
            vals[vals.len() / 2]
        };
        let m32 = median_err(32, 40);
        let m64 = median_err(64, 40);
        assert!(m64 < 0.75 * m32, "medians {m32} -> {m64} did not shrink");
        // the averaged law is an O(1/N) statement: generous absolute caps
        assert!(m32 <= 10.0 / 32.0, "median {m32} out of scale at n = 32");
        assert!(m64 <= 10.0 / 64.0, "median {m64} out of scale at n = 64");
    }

    #[test]
    fn local_law_entrywise_scale() {
        // single entries fluctuate at N^{-1/2}, much larger than the
        // averaged O(1/N) traces; pin the scale so the two are not conflated
        let n = 64;
        let z = c(1.5, 0.0);
        let eta = 1.0 / (n * n) as f64;
        let mb = dyson::solve_m_u(z, eta).unwrap();
        let mut worst = 0.0f64;
        for index in 0..8 {
            let x = sample(EntryLaw::ComplexGaussian, n, 90 + index);
            let ws = ResolventWorkspace::new(&x, z, eta).unwrap();
            let dev = (ws.block_entry((1, 2), 3, 3) - (-z * mb.u)).norm();
            worst = worst.max(dev);
        }
        let scale = (n as f64).powf(-0.5);
        assert!(worst <= 10.0 * scale, "worst entry deviation {worst}");
        assert!(worst >= scale / 30.0, "suspiciously small deviation {worst}");
    }
}
