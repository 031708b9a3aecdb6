//! End-to-end acceptance gate for the workspace: deterministic kernel and
//! solver checks, cross-route agreement on certified samples, decay of the
//! resolvent approximation error, and Monte Carlo fluctuation statistics
//! resumed from the committed checkpoints under data/acceptance. One PASS or
//! FAIL line per check; nonzero exit if any line fails. Pass check numbers
//! as arguments to run a subset.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use num_complex::Complex64;

use tracelab::contour::make_contour;
use tracelab::dyson::{m_matrix, solve_m_u};
use tracelab::ensemble::{sample_iid, EntryLaw, SampleSeed};
use tracelab::functions::{hardy_inner, kernel_identity_check, PowerSeries};
use tracelab::harness::{
    covariance_gap_medians, local_law_scan, resolvent_clt_experiment, run_experiment,
    DimReport, ExperimentConfig, ExperimentReport, MatrixSpec,
};
use tracelab::hermitize::{girko_bound, omega_check};
use tracelab::linalg::DenseMatrix;
use tracelab::stats::{trace_f_direct, trace_f_hermitized, trace_f_horner};

const TREND_REPS: u64 = 5;

type Check = Result<(bool, String), String>;

#[derive(Default)]
struct Gate {
    passed: usize,
    failed: usize,
}

impl Gate {
    fn report(&mut self, id: u32, name: &str, outcome: Check) {
        match outcome {
            Ok((true, detail)) => {
                self.passed += 1;
                println!("[PASS] {id:>2} {name}: {detail}");
            }
            Ok((false, detail)) => {
                self.failed += 1;
                println!("[FAIL] {id:>2} {name}: {detail}");
            }
            Err(e) => {
                self.failed += 1;
                println!("[FAIL] {id:>2} {name}: error: {e}");
            }
        }
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn load_config(file: &str) -> Result<ExperimentConfig, String> {
    let root = repo_root();
    let path = root.join("data/acceptance/configs").join(file);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(err)?;
    // absolute so the checkpoints resolve regardless of the test working dir
    cfg.output_dir = Some(root.join("data/acceptance/runs"));
    Ok(cfg)
}

fn load_functional(file: &str) -> Result<ExperimentReport, String> {
    run_experiment(&load_config(file)?).map_err(err)
}

fn load_resolvent(file: &str) -> Result<ExperimentReport, String> {
    resolvent_clt_experiment(&load_config(file)?).map_err(err)
}

fn enough_samples(d: &DimReport) -> Result<(), String> {
    if d.samples_included * 4 < d.samples_requested * 3 {
        return Err(format!(
            "only {}/{} samples included at n = {}",
            d.samples_included, d.samples_requested, d.n
        ));
    }
    Ok(())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = xs.len();
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Monomial orthonormality of the boundary pairing, plus the double-contour
/// identities for both kernels. The coefficient decay 0.725^k keeps the
/// trapezoid aliasing visible above machine precision at 256 nodes, so the
/// improvement under node doubling is measurable.
fn check_kernels() -> Check {
    let mut worst = 0.0f64;
    for j in 0..=8usize {
        for k in 0..=8usize {
            let f = PowerSeries::monomial(j, 2.0).map_err(err)?;
            let g = PowerSeries::monomial(k, 2.0).map_err(err)?;
            let want = if j == k && j >= 1 { 1.0 } else { 0.0 };
            worst = worst.max((hardy_inner(&f, &g) - Complex64::new(want, 0.0)).norm());
        }
    }

    let q = 0.725f64;
    let f = PowerSeries::new(
        (0..=600).map(|k| Complex64::new(q.powi(k), 0.0)),
        1.37,
    )
    .map_err(err)?;
    let g = PowerSeries::new(
        (0..=600).map(|k| Complex64::from_polar(0.9 * q.powi(k), 0.4 * k as f64)),
        1.37,
    )
    .map_err(err)?;
    let coarse =
        kernel_identity_check(&f, &g, &make_contour(1.25, 256).map_err(err)?).map_err(err)?;
    let fine =
        kernel_identity_check(&f, &g, &make_contour(1.25, 512).map_err(err)?).map_err(err)?;

    let improved = fine.hermitian < (0.1 * coarse.hermitian).max(1e-14)
        && fine.pseudo < (0.1 * coarse.pseudo).max(1e-14);
    let pass =
        worst <= 1e-12 && coarse.hermitian <= 1e-8 && coarse.pseudo <= 1e-8 && improved;
    Ok((
        pass,
        format!(
            "monomial residual {worst:.1e}; identity residuals {:.1e}/{:.1e} at 256 nodes -> {:.1e}/{:.1e} at 512",
            coarse.hermitian, coarse.pseudo, fine.hermitian, fine.pseudo
        ),
    ))
}

/// Self-consistency residual of the scalar solution over a (z, eta) grid,
/// and the eta^2 rate at which the 2x2 solution matrix approaches its
/// small-eta limit form.
fn check_dyson() -> Check {
    let radii = [1.3, 1.45, 1.6, 1.8, 2.0, 2.4, 3.0, 4.0, 6.0, 10.0];
    let etas = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 2.0];
    let mut worst = 0.0f64;
    let mut bounded = true;
    let mut count = 0usize;
    for (i, &r) in radii.iter().enumerate() {
        for (j, &eta) in etas.iter().enumerate() {
            let z = Complex64::from_polar(r, 0.37 * (i * 10 + j) as f64);
            let b = solve_m_u(z, eta).map_err(err)?;
            worst = worst.max(b.residual());
            bounded &= b.is_norm_bounded();
            count += 1;
        }
    }

    let dev = |z: Complex64, eta: f64| -> Result<f64, String> {
        let b = solve_m_u(z, eta).map_err(err)?;
        let s = z.norm_sqr();
        let asym = DenseMatrix::new(
            2,
            vec![
                Complex64::new(0.0, eta / (s - 1.0)),
                -z / s,
                -z.conj() / s,
                Complex64::new(0.0, eta / (s - 1.0)),
            ],
        )
        .map_err(err)?;
        Ok(m_matrix(&b).sub(&asym).map_err(err)?.max_abs())
    };
    let mut ratios = Vec::new();
    for z in [Complex64::new(2.0, 0.0), Complex64::new(1.2, 1.1)] {
        ratios.push(dev(z, 1e-4)? / dev(z, 5e-5)?);
    }
    let ratio_ok = ratios.iter().all(|r| (r - 4.0).abs() <= 0.2);

    let pass = count == 100 && worst <= 1e-12 && bounded && ratio_ok;
    Ok((
        pass,
        format!(
            "residual {worst:.1e} on {count} (z, eta) points; eta^2 ratios {:.3} and {:.3} (want 4 +/- 0.2)",
            ratios[0], ratios[1]
        ),
    ))
}

/// Agreement of the three evaluation routes on 50 certified draws at n = 64:
/// the hermitized route against exact polynomial evaluation (relative), and
/// against the direct route within the eta^2 trace-gap bound.
fn check_routes() -> Check {
    let n = 64usize;
    let (delta, kappa) = (0.5, 0.05);
    let eta = 1e-7;
    let f = PowerSeries::new(
        [
            Complex64::new(1.0, 0.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        ],
        2.0,
    )
    .map_err(err)?;
    let a = DenseMatrix::identity(n);
    let contour = make_contour(1.0 + delta / 2.0, 256).map_err(err)?;
    let bound = girko_bound(kappa, n, eta);

    let mut used = 0usize;
    let mut index = 0u64;
    let mut worst_rel = 0.0f64;
    let mut worst_gap = 0.0f64;
    while used < 50 && index < 200 {
        let x = sample_iid(n, EntryLaw::ComplexGaussian, SampleSeed { master: 816003, index });
        index += 1;
        if !omega_check(&x, delta, kappa, 256).passed {
            continue;
        }
        used += 1;
        let h = trace_f_hermitized(&x, &f, &a, &contour, eta).map_err(err)?;
        let d = trace_f_direct(&x, &f, &a, &contour).map_err(err)?;
        let o = trace_f_horner(&x, &f, &a).map_err(err)?;
        worst_rel = worst_rel.max((h.value - o.value).norm() / o.value.norm());
        worst_gap = worst_gap.max((h.value - d.value).norm());
    }

    let pass = used == 50 && worst_rel <= 1e-6 && worst_gap <= bound;
    Ok((
        pass,
        format!(
            "{used} certified draws ({index} sampled); worst relative error vs exact {worst_rel:.1e} (cap 1e-6); worst route gap {worst_gap:.1e} (bound {bound:.1e})"
        ),
    ))
}

/// Median deviation of the sampled resolvent blocks from the deterministic
/// solution falls like 1/N at a fixed spectral point.
fn check_local_law() -> Check {
    let scan = local_law_scan(
        &[64, 128, 256, 512],
        100,
        Complex64::new(1.5, 0.0),
        1.0,
        EntryLaw::ComplexGaussian,
        &MatrixSpec::Identity,
        816004,
    )
    .map_err(err)?;
    let meds: Vec<String> = scan
        .max_block_medians
        .iter()
        .map(|(n, m)| format!("{n}: {m:.2e}"))
        .collect();
    let pass = (scan.slope + 1.0).abs() <= 0.3;
    Ok((
        pass,
        format!("medians {}; slope {:.3} (want -1 +/- 0.3)", meds.join(", "), scan.slope),
    ))
}

/// Resolvent trace fluctuations at z = 2 for the complex Gaussian ensemble:
/// variances against 1/9 (identity) and 1/12 (cyclic shift), pseudo moments
/// against zero, all within four jackknife standard errors.
fn check_resolvent_complex(rep: &Result<ExperimentReport, String>) -> Check {
    let rep = rep.as_ref().map_err(Clone::clone)?;
    let d = &rep.dims[0];
    enough_samples(d)?;

    let th_ok = (d.cov_theory[0][0] - Complex64::new(1.0 / 9.0, 0.0)).norm() <= 1e-12
        && (d.cov_theory[1][1] - Complex64::new(1.0 / 12.0, 0.0)).norm() <= 1e-12
        && d.pseudo_theory.iter().flatten().all(|p| p.norm() == 0.0);
    let cov_ok = d.cov_z[0][0] <= 4.0 && d.cov_z[1][1] <= 4.0;
    let pseudo_max = d.pseudo_z.iter().flatten().cloned().fold(0.0, f64::max);

    let pass = th_ok && cov_ok && pseudo_max <= 4.0;
    Ok((
        pass,
        format!(
            "var(identity) {:.4} vs 1/9 (|z| {:.2}); var(shift) {:.4} vs 1/12 (|z| {:.2}); max pseudo |z| {:.2}; included {}/{}",
            d.cov_empirical[0][0].re,
            d.cov_z[0][0],
            d.cov_empirical[1][1].re,
            d.cov_z[1][1],
            pseudo_max,
            d.samples_included,
            d.samples_requested
        ),
    ))
}

/// Contour statistics for the pairs (z^2, identity) and (z, cyclic shift):
/// covariance against diag(2, 1) with vanishing cross terms and pseudo
/// moments, plus Gaussianity diagnostics on the sampled values.
fn check_functional(rep: &Result<ExperimentReport, String>) -> Check {
    let rep = rep.as_ref().map_err(Clone::clone)?;
    let d = &rep.dims[0];
    enough_samples(d)?;

    let want = [
        [Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ];
    let mut th_ok = d.pseudo_theory.iter().flatten().all(|p| p.norm() == 0.0);
    for i in 0..2 {
        for j in 0..2 {
            th_ok &= (d.cov_theory[i][j] - want[i][j]).norm() <= 1e-12;
        }
    }
    let moment_max = d
        .mean_z
        .iter()
        .chain(d.cov_z.iter().flatten())
        .chain(d.pseudo_z.iter().flatten())
        .cloned()
        .fold(0.0, f64::max);
    let g = d.gaussianity.as_ref().ok_or("diagnostics missing from report")?;
    let kurt_max = g.kurtosis.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let energy_ok = g.energy.p_value > 0.01;

    let pass = th_ok && moment_max <= 4.0 && kurt_max <= 4.0 && energy_ok;
    Ok((
        pass,
        format!(
            "cov diag {:.3}, {:.3} (want 2, 1); max moment |z| {:.2}; max kurtosis |z| {:.2}; energy p {:.3}; included {}/{}",
            d.cov_empirical[0][0].re,
            d.cov_empirical[1][1].re,
            moment_max,
            kurt_max,
            g.energy.p_value,
            d.samples_included,
            d.samples_requested
        ),
    ))
}

/// Mean shifts that separate the symmetry classes: Tr X^2 centers on 1 for
/// real entries and on 0 for complex entries, and the real-class resolvent
/// trace at z = 2 carries the finite correction -1/6 beyond -n/2.
fn check_real_means(
    rep_f: &Result<ExperimentReport, String>,
    rep_r: &Result<ExperimentReport, String>,
    rep_c: &Result<ExperimentReport, String>,
) -> Check {
    let rep_f = rep_f.as_ref().map_err(Clone::clone)?;
    let rep_r = rep_r.as_ref().map_err(Clone::clone)?;
    let rep_c = rep_c.as_ref().map_err(Clone::clone)?;
    let df = &rep_f.dims[0];
    let dr = &rep_r.dims[0];
    let dc = &rep_c.dims[0];
    enough_samples(df)?;
    enough_samples(dr)?;
    enough_samples(dc)?;

    let real_th = (df.mean_theory[0] - Complex64::new(1.0, 0.0)).norm() <= 1e-12;
    let real_ok = df.mean_z[0] <= 4.0;

    let complex_th = dc.mean_theory.iter().all(|m| m.norm() == 0.0);
    let complex_max = dc.mean_z.iter().cloned().fold(0.0, f64::max);

    let shift = dr.n as f64 / 2.0;
    let res_th =
        (dr.mean_theory[0] - Complex64::new(-shift - 1.0 / 6.0, 0.0)).norm() <= 1e-9;
    let res_ok = dr.mean_z[0] <= 4.0;

    let pass = real_th && real_ok && complex_th && complex_max <= 4.0 && res_th && res_ok;
    Ok((
        pass,
        format!(
            "real Tr X^2 mean {:.4} vs 1 (|z| {:.2}); complex mean max |z| {:.2}; real resolvent mean + n/2 = {:.4} vs -1/6 (|z| {:.2})",
            df.mean_empirical[0].re,
            df.mean_z[0],
            complex_max,
            dr.mean_empirical[0].re + shift,
            dr.mean_z[0]
        ),
    ))
}

/// Discard rate of the spectral-gap certificate at kappa = 0.2. The margin
/// sits above the inner-ring singular value minima typical at this scale
/// (near 0.12), so the measured rate is reported against the 5% target
/// without relaxing the threshold.
fn check_certificate_margin() -> Check {
    let n = 128usize;
    let (delta, kappa) = (0.5, 0.2);
    let grid = 256usize;
    let total = 200u64;
    let mut discards = 0usize;
    let mut minima = Vec::with_capacity(total as usize);
    for index in 0..total {
        let x = sample_iid(n, EntryLaw::ComplexGaussian, SampleSeed { master: 816019, index });
        let v = omega_check(&x, delta, kappa, grid);
        if !v.passed {
            discards += 1;
        }
        minima.push(v.min_sigma);
    }
    let rate = discards as f64 / total as f64;
    let threshold = kappa + 2.0 * (1.0 + delta / 2.0) * (std::f64::consts::PI / grid as f64).sin();
    Ok((
        rate < 0.05,
        format!(
            "discard rate {:.1}% over {total} draws at n = {n} (target < 5%); certificate threshold {threshold:.3}, median ring minimum {:.3}",
            100.0 * rate,
            median(minima)
        ),
    ))
}

/// Median covariance gap over repeated experiments does not increase as N
/// doubles.
fn check_trend() -> Check {
    let cfg = load_config("trend-resolvent-complex.json")?;
    let medians = covariance_gap_medians(&cfg, TREND_REPS).map_err(err)?;
    let pass = medians.windows(2).all(|w| w[1] <= w[0]);
    let detail: Vec<String> = cfg
        .dims
        .iter()
        .zip(&medians)
        .map(|(n, m)| format!("{n}: {m:.4}"))
        .collect();
    Ok((
        pass,
        format!("gap medians {} over {TREND_REPS} repetitions", detail.join(", ")),
    ))
}

fn main() -> ExitCode {
    let wanted: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let run = |k: u32| wanted.is_empty() || wanted.contains(&k);
    let mut gate = Gate::default();

    if run(1) {
        gate.report(1, "kernel pairings", check_kernels());
    }
    if run(2) {
        gate.report(2, "deterministic solver", check_dyson());
    }
    if run(3) {
        gate.report(3, "route agreement", check_routes());
    }
    if run(4) {
        gate.report(4, "local law decay", check_local_law());
    }
    if run(5) {
        let rep = load_resolvent("c5-resolvent-complex.json");
        gate.report(5, "resolvent fluctuations (complex)", check_resolvent_complex(&rep));
    }
    let rep6 = if run(6) || run(7) {
        Some(load_functional("c6-functional-complex.json"))
    } else {
        None
    };
    if run(6) {
        gate.report(
            6,
            "contour fluctuations (complex gaussian)",
            check_functional(rep6.as_ref().expect("loaded above")),
        );
    }
    if run(7) {
        let rep_f = load_functional("c7-functional-real.json");
        let rep_r = load_resolvent("c7-resolvent-real.json");
        gate.report(
            7,
            "real class means",
            check_real_means(&rep_f, &rep_r, rep6.as_ref().expect("loaded above")),
        );
    }
    if run(8) {
        let rep = load_functional("c8-functional-rademacher.json");
        gate.report(8, "contour fluctuations (phase rademacher)", check_functional(&rep));
    }
    if run(9) {
        gate.report(9, "certificate margin at kappa 0.2", check_certificate_margin());
    }
    if run(10) {
        gate.report(10, "covariance gap trend", check_trend());
    }

    println!("acceptance: {} passed, {} failed", gate.passed, gate.failed);
    if gate.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
