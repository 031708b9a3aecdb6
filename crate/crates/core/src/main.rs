//! Command line front end: sampling, solver probes, kernel verification,
//! and the checkpointed CLT experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use num_complex::Complex64;

use tracelab::contour::make_contour;
use tracelab::dyson;
use tracelab::ensemble::{sample_iid, EntryLaw, SampleSeed};
use tracelab::functions::{self, PowerSeries};
use tracelab::harness::{self, ExperimentConfig, ExperimentReport, MatrixSpec};
use tracelab::hermitize;
use tracelab::linalg;

#[derive(Parser)]
#[command(
    name = "tracelab",
    version,
    about = "Fluctuations of Tr f(X) A for i.i.d. non-Hermitian matrix ensembles"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw one sample, print its gap certificate, optionally save it
    Sample {
        #[arg(long)]
        n: usize,
        #[arg(long, value_parser = parse_law, default_value = "complex-gaussian")]
        law: EntryLaw,
        #[arg(long, default_value_t = 0)]
        master: u64,
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0.05)]
        kappa: f64,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        /// Write the matrix as JSON rows of [re, im] entries
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the self-consistent resolvent equation at one (z, eta)
    Dyson {
        #[arg(long)]
        z_re: f64,
        #[arg(long, default_value_t = 0.0)]
        z_im: f64,
        #[arg(long)]
        eta: f64,
    },
    /// Verify kernel orthonormality and the double-contour identities
    VerifyKernels {
        #[arg(long, default_value_t = 256)]
        nodes: usize,
        #[arg(long, default_value_t = 1.25)]
        radius: f64,
    },
    /// Run or resume a contour-statistics experiment from a JSON config
    CltExperiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run or resume a resolvent-trace experiment from a JSON config
    ResolventClt {
        #[arg(long)]
        config: PathBuf,
    },
    /// Median resolvent deviation from its deterministic limit versus N
    LocalLawScan {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 1.5)]
        z_re: f64,
        #[arg(long, default_value_t = 0.0)]
        z_im: f64,
        #[arg(long, default_value_t = 1.0)]
        eta_exponent: f64,
        #[arg(long, value_parser = parse_law, default_value = "complex-gaussian")]
        law: EntryLaw,
        #[arg(long, value_parser = parse_matrix, default_value = "identity")]
        matrix: MatrixSpec,
        #[arg(long, default_value_t = 0)]
        master: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Median covariance gap per dimension over repeated experiments
    Trend {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 5)]
        reps: u64,
    },
    /// Re-aggregate a (possibly finished) experiment and print the tables
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_law(s: &str) -> Result<EntryLaw, String> {
    serde_json::from_str(&format!("\"{s}\"")).map_err(|_| {
        format!(
            "unknown law {s}; expected complex-gaussian, real-gaussian, \
             complex-phase-rademacher, real-rademacher, or real-uniform"
        )
    })
}

fn parse_matrix(s: &str) -> Result<MatrixSpec, String> {
    Ok(match s {
        "identity" => MatrixSpec::Identity,
        "alt-diag" | "traceless-alternating-diagonal" => {
            MatrixSpec::TracelessAlternatingDiagonal
        }
        "cyclic-shift" => MatrixSpec::CyclicShift,
        other => MatrixSpec::CustomFile { path: PathBuf::from(other) },
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.cmd {
        Cmd::Sample { n, law, master, index, delta, kappa, grid, out } => {
            let seed = SampleSeed { master, index };
            let x = sample_iid(n, law, seed);
            println!("n = {n}, law = {law:?}, master = {master}, index = {index}");
            println!("operator norm estimate: {:.6}", linalg::op_norm_est(&x, 60));
            let verdict = hermitize::omega_check(&x, delta, kappa, grid);
            println!(
                "certificate (delta = {delta}, kappa = {kappa}, grid = {grid}): {}",
                if verdict.passed { "PASS" } else { "FAIL" }
            );
            println!(
                "  min sigma = {:.6}, grid spacing = {:.6}, margin = {:+.6}",
                verdict.min_sigma, verdict.grid_spacing, verdict.effective_margin
            );
            if let Some(path) = out {
                let rows: Vec<Vec<[f64; 2]>> = (0..n)
                    .map(|i| (0..n).map(|j| [x.at(i, j).re, x.at(i, j).im]).collect())
                    .collect();
                std::fs::write(&path, serde_json::to_string(&rows)?)?;
                println!("matrix written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Dyson { z_re, z_im, eta } => {
            let z = Complex64::new(z_re, z_im);
            let block = dyson::solve_m_u(z, eta)?;
            println!("z = {z}, eta = {eta}");
            println!("m = {}", block.m);
            println!("u = {}", block.u);
            println!("off-diagonal entries: {} and {}", -z * block.u, -z.conj() * block.u);
            println!("self-consistency residual = {:.3e}", block.residual());
            println!("norm bounded: {}", block.is_norm_bounded());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::VerifyKernels { nodes, radius } => {
            let mut worst = 0.0f64;
            for j in 0..=8usize {
                for k in 0..=8usize {
                    let f = PowerSeries::monomial(j, 2.0)?;
                    let g = PowerSeries::monomial(k, 2.0)?;
                    let want = if j == k && j >= 1 { 1.0 } else { 0.0 };
                    let got = functions::hardy_inner(&f, &g);
                    worst = worst.max((got - want).norm());
                }
            }
            let ortho_ok = worst <= 1e-12;
            println!(
                "monomial orthonormality: max residual {worst:.3e} [{}]",
                if ortho_ok { "PASS" } else { "FAIL" }
            );

            let f = PowerSeries::new(
                [
                    Complex64::new(0.3, 0.0),
                    Complex64::new(1.0, -0.5),
                    Complex64::new(0.0, 0.7),
                    Complex64::new(-0.2, 0.1),
                ],
                2.0,
            )?;
            let g = PowerSeries::new(
                [
                    Complex64::new(-0.1, 0.2),
                    Complex64::new(0.8, 0.0),
                    Complex64::new(0.4, -0.3),
                ],
                2.0,
            )?;
            let coarse =
                functions::kernel_identity_check(&f, &g, &make_contour(radius, nodes)?)?;
            let fine =
                functions::kernel_identity_check(&f, &g, &make_contour(radius, 2 * nodes)?)?;
            let quad_ok = coarse.hermitian <= 1e-8
                && coarse.pseudo <= 1e-8
                && fine.hermitian < coarse.hermitian.max(1e-14)
                && fine.pseudo < coarse.pseudo.max(1e-14);
            println!(
                "double-contour identities at {nodes} nodes: hermitian {:.3e}, pseudo {:.3e}",
                coarse.hermitian, coarse.pseudo
            );
            println!(
                "             at {} nodes: hermitian {:.3e}, pseudo {:.3e} [{}]",
                2 * nodes,
                fine.hermitian,
                fine.pseudo,
                if quad_ok { "PASS" } else { "FAIL" }
            );
            Ok(if ortho_ok && quad_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::CltExperiment { config } => {
            let cfg = load_config(&config)?;
            let report = harness::run_experiment(&cfg)?;
            write_artifacts(&cfg, &report)?;
            print_summary(&report);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ResolventClt { config } => {
            let cfg = load_config(&config)?;
            let report = harness::resolvent_clt_experiment(&cfg)?;
            write_artifacts(&cfg, &report)?;
            print_summary(&report);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::LocalLawScan {
            dims,
            samples,
            z_re,
            z_im,
            eta_exponent,
            law,
            matrix,
            master,
            out,
        } => {
            let scan = harness::local_law_scan(
                &dims,
                samples,
                Complex64::new(z_re, z_im),
                eta_exponent,
                law,
                &matrix,
                master,
            )?;
            for &(n, med) in &scan.max_block_medians {
                println!("n = {n:5}: median max-block error {med:.6e}");
            }
            println!("log-log slope: {:.4}", scan.slope);
            if let Some(path) = out {
                harness::write_local_law_csv(&scan, &path)?;
                println!("table written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Trend { config, reps } => {
            let cfg = load_config(&config)?;
            let medians = harness::covariance_gap_medians(&cfg, reps)?;
            let mut monotone = true;
            for (&n, &med) in cfg.dims.iter().zip(&medians) {
                println!("n = {n:5}: median covariance gap {med:.6}");
            }
            for pair in medians.windows(2) {
                monotone &= pair[1] <= pair[0];
            }
            println!(
                "gap medians over {reps} repetitions: {}",
                if monotone { "non-increasing" } else { "NOT monotone" }
            );
            Ok(if monotone { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Cmd::Report { config } => {
            let cfg = load_config(&config)?;
            let report = harness::run_experiment(&cfg)?;
            write_artifacts(&cfg, &report)?;
            print_summary(&report);
            print_tables(&report);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
) -> Result<(), Box<dyn std::error::Error>> {
    let root = harness::output_root(cfg);
    std::fs::create_dir_all(&root)?;
    let stem = format!("{}-{}", report.name, report.config_hash);
    let json_path = root.join(format!("{stem}-report.json"));
    std::fs::write(&json_path, serde_json::to_string_pretty(report)?)?;
    harness::write_moments_csv(report, &root.join(format!("{stem}-moments.csv")))?;
    harness::write_gap_csv(report, &root.join(format!("{stem}-gaps.csv")))?;
    println!("report written to {}", json_path.display());
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    println!(
        "experiment {} ({:?}, {:?}), hash {}",
        report.name, report.law, report.class, report.config_hash
    );
    for dim in &report.dims {
        let worst_mean = dim.mean_z.iter().cloned().fold(0.0, f64::max);
        let worst_cov = dim
            .cov_z
            .iter()
            .chain(&dim.pseudo_z)
            .flatten()
            .cloned()
            .fold(0.0, f64::max);
        print!(
            "  n = {:5}: included {}/{} (omega discards {}), max |z| mean {:.2}, moments {:.2}, cov gap {:.4}",
            dim.n,
            dim.samples_included,
            dim.samples_requested,
            dim.omega_discards,
            worst_mean,
            worst_cov,
            dim.cov_abs_gap,
        );
        if let Some(g) = &dim.gaussianity {
            let worst_kurt =
                g.kurtosis.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
            print!(", kurtosis max |z| {:.2}, energy p {:.3}", worst_kurt, g.energy.p_value);
        }
        println!(" [{:.1}s]", dim.runtime_secs);
    }
}

fn print_tables(report: &ExperimentReport) {
    for dim in &report.dims {
        println!("n = {}:", dim.n);
        for (i, label) in dim.observable_labels.iter().enumerate() {
            println!(
                "  mean[{label}] = {:.6} vs {:.6} (se {:.2e}, z {:.2})",
                dim.mean_empirical[i], dim.mean_theory[i], dim.mean_se[i], dim.mean_z[i]
            );
        }
        let k = dim.observable_labels.len();
        for kind in ["cov", "pseudo"] {
            let (emp, th, se, z) = if kind == "cov" {
                (&dim.cov_empirical, &dim.cov_theory, &dim.cov_se, &dim.cov_z)
            } else {
                (&dim.pseudo_empirical, &dim.pseudo_theory, &dim.pseudo_se, &dim.pseudo_z)
            };
            for i in 0..k {
                for j in 0..k {
                    println!(
                        "  {kind}[{i}][{j}] = {:.6} vs {:.6} (se {:.2e}, z {:.2})",
                        emp[i][j], th[i][j], se[i][j], z[i][j]
                    );
                }
            }
        }
        if let Some(g) = &dim.gaussianity {
            for row in &g.kurtosis {
                println!(
                    "  kurtosis {}: excess {:+.4} (se {:.4}, z {:+.2})",
                    row.label, row.excess, row.se, row.z
                );
            }
            println!(
                "  energy distance {:.6}, p = {:.4} over {} permutations of {} draws",
                g.energy.statistic, g.energy.p_value, g.energy.permutations, g.energy.group_size
            );
        }
    }
}
