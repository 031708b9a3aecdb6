//! Monte Carlo experiment runner.
//!
//! An experiment draws matrices, gates each on the spectral-gap certificate,
//! evaluates the configured observables through one fused sweep per sample,
//! persists every sample to an append-only JSONL checkpoint, and aggregates
//! empirical moments against the theory predictions with jackknife error
//! bars. Reports are a pure function of (config, master seed): worker
//! threads only race on file row order, and aggregation re-sorts by index.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contour::{make_contour, Contour, ContourError};
use crate::ensemble::{sample_iid, EntryLaw, SampleSeed};
use crate::functions::{FunctionsError, PowerSeries};
use crate::hermitize::{
    self, HermitizeError, OmegaPlan, OmegaVerdict, ResolventWorkspace, SweepRequest, ViewSpec,
};
use crate::linalg::{self, DenseMatrix, LinalgError};
use crate::theory::{self, CovarianceModel, SymmetryClass, TestPair, TheoryError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("checkpoint {path} was written by config {found}, expected {expected}")]
    CheckpointMismatch { path: String, found: String, expected: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Functions(#[from] FunctionsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Hermitize(#[from] HermitizeError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
}

/// Deterministic observable matrices. Every kind is normalized to operator
/// norm at most 1, and the traceless kinds have exact zero trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MatrixSpec {
    Identity,
    TracelessAlternatingDiagonal,
    CyclicShift,
    CustomFile { path: PathBuf },
}

impl MatrixSpec {
    pub fn build(&self, n: usize) -> Result<DenseMatrix, HarnessError> {
        match self {
            MatrixSpec::Identity => Ok(DenseMatrix::identity(n)),
            MatrixSpec::TracelessAlternatingDiagonal => {
                if n % 2 != 0 {
                    return Err(HarnessError::ConfigInvalid(format!(
                        "alternating diagonal needs even dimension, got {n}"
                    )));
                }
                let signs: Vec<Complex64> = (0..n)
                    .map(|i| Complex64::new(if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0))
                    .collect();
                Ok(DenseMatrix::diag(&signs))
            }
            MatrixSpec::CyclicShift => {
                if n < 2 {
                    return Err(HarnessError::ConfigInvalid(
                        "cyclic shift needs dimension at least 2".into(),
                    ));
                }
                let mut s = DenseMatrix::zeros(n);
                for i in 0..n {
                    s.set((i + 1) % n, i, Complex64::new(1.0, 0.0));
                }
                Ok(s)
            }
            MatrixSpec::CustomFile { path } => {
                let text = fs::read_to_string(path)?;
                let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(&text)?;
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(HarnessError::ConfigInvalid(format!(
                        "matrix file {} is not {n} x {n}",
                        path.display()
                    )));
                }
                let a = DenseMatrix::from_fn(n, |i, j| {
                    Complex64::new(rows[i][j][0], rows[i][j][1])
                });
                let est = linalg::op_norm_est(&a, 60);
                if est > 1.0 {
                    Ok(a.scale(Complex64::new(1.0 / est, 0.0)))
                } else {
                    Ok(a)
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            MatrixSpec::Identity => "identity".into(),
            MatrixSpec::TracelessAlternatingDiagonal => "alt-diag".into(),
            MatrixSpec::CyclicShift => "cyclic-shift".into(),
            MatrixSpec::CustomFile { path } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
        }
    }
}

/// One test pair: an analytic function given by its coefficient series and
/// the observable matrix spec to pair it with.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSpec {
    pub f: PowerSeries,
    pub matrix: MatrixSpec,
}

impl PairSpec {
    fn label(&self) -> String {
        let nonzero: Vec<usize> = self
            .f
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.norm() > 0.0)
            .map(|(k, _)| k)
            .collect();
        let f_label = match nonzero.as_slice() {
            [k] if self.f.coeff(*k) == Complex64::new(1.0, 0.0) => format!("z^{k}"),
            _ => format!("poly{}", nonzero.last().copied().unwrap_or(0)),
        };
        format!("{f_label} | {}", self.matrix.label())
    }
}

/// What the experiment measures on each sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ObservableSet {
    /// Contour statistics Tr f_i(X) A_i, one per pair.
    Functional { pairs: Vec<PairSpec> },
    /// Raw resolvent traces Tr(G21_z A), one observable per (point, matrix)
    /// in point-major order.
    Resolvent { points: Vec<[f64; 2]>, matrices: Vec<MatrixSpec> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dims: Vec<usize>,
    pub samples: usize,
    pub law: EntryLaw,
    pub class: SymmetryClass,
    pub delta: f64,
    pub kappa: f64,
    /// eta = N^{-eta_exponent}; must exceed 1/2 so eta vanishes faster than
    /// the fluctuation scale.
    pub eta_exponent: f64,
    pub contour_nodes: usize,
    pub omega_grid_nodes: usize,
    pub observables: ObservableSet,
    pub master_seed: u64,
    /// Run Gaussianity diagnostics on each dimension's included values.
    #[serde(default)]
    pub diagnostics: bool,
    /// Checkpoints and reports land here; falls back to TRACELAB_OUT, then
    /// data/runs. Not part of the config hash.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn contour_radius(&self) -> f64 {
        1.0 + self.delta / 2.0
    }

    pub fn eta_for(&self, n: usize) -> f64 {
        (n as f64).powf(-self.eta_exponent)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::ConfigInvalid(msg));
        if self.dims.is_empty() || self.dims.iter().any(|&n| n < 2) {
            return bad("dims must be nonempty with every N >= 2".into());
        }
        if self.samples < 3 {
            return bad("need at least 3 samples for jackknife aggregation".into());
        }
        if !(self.kappa > 0.0 && self.kappa < self.delta / 2.0) {
            return bad(format!(
                "kappa must lie in (0, delta/2): kappa = {}, delta = {}",
                self.kappa, self.delta
            ));
        }
        if !(self.eta_exponent > 0.5) {
            return bad(format!(
                "eta exponent must exceed 1/2, got {}",
                self.eta_exponent
            ));
        }
        if self.contour_nodes < 4 || self.omega_grid_nodes < 4 {
            return bad("contour and certificate grids need at least 4 nodes".into());
        }
        if self.law.is_real() != self.class.is_real() {
            return bad(format!(
                "entry law {:?} does not match symmetry class {:?}",
                self.law, self.class
            ));
        }
        match &self.observables {
            ObservableSet::Functional { pairs } => {
                if pairs.is_empty() {
                    return bad("functional mode needs at least one pair".into());
                }
                for pair in pairs {
                    if pair.f.rho() <= self.contour_radius() {
                        return bad(format!(
                            "series domain {} does not cover the contour radius {}",
                            pair.f.rho(),
                            self.contour_radius()
                        ));
                    }
                }
                let stride_ok = self.contour_nodes % self.omega_grid_nodes == 0
                    && (self.contour_nodes / self.omega_grid_nodes).is_power_of_two();
                if !stride_ok {
                    eprintln!(
                        "note: certificate grid {} will not fuse with the {}-node contour; \
                         expect that many extra factorizations per sample",
                        self.omega_grid_nodes, self.contour_nodes
                    );
                }
            }
            ObservableSet::Resolvent { points, matrices } => {
                if points.is_empty() || matrices.is_empty() {
                    return bad("resolvent mode needs points and matrices".into());
                }
                let floor = self.contour_radius();
                for &[re, im] in points {
                    if Complex64::new(re, im).norm() < floor {
                        return bad(format!(
                            "resolvent point {re}+{im}i lies inside radius {floor}"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// FNV-1a over the canonical JSON of the config with the disk-layout field
/// blanked: the hash names the scientific content of a run, so two runs of
/// the same experiment into different directories share checkpoints names.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut scientific = cfg.clone();
    scientific.output_dir = None;
    let text = serde_json::to_string(&scientific).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in text.as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// One sample's checkpoint row. Discarded samples keep their certificate
/// (min sigma included) and values for audit; `included` is the single
/// aggregation gate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRecord {
    pub index: u64,
    pub seed: SampleSeed,
    pub omega: OmegaVerdict,
    pub included: bool,
    pub node_failures: usize,
    pub values: Vec<Complex64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config_hash: String,
    n: usize,
    version: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KurtosisRow {
    pub label: String,
    pub excess: f64,
    pub se: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnergyTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub group_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub kurtosis: Vec<KurtosisRow>,
    pub energy: EnergyTest,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimReport {
    pub n: usize,
    pub samples_requested: usize,
    pub samples_included: usize,
    pub omega_discards: usize,
    pub node_failures: usize,
    pub observable_labels: Vec<String>,
    pub mean_empirical: Vec<Complex64>,
    pub mean_theory: Vec<Complex64>,
    pub mean_se: Vec<f64>,
    pub mean_z: Vec<f64>,
    pub cov_empirical: Vec<Vec<Complex64>>,
    pub cov_theory: Vec<Vec<Complex64>>,
    pub cov_se: Vec<Vec<f64>>,
    pub cov_z: Vec<Vec<f64>>,
    pub pseudo_empirical: Vec<Vec<Complex64>>,
    pub pseudo_theory: Vec<Vec<Complex64>>,
    pub pseudo_se: Vec<Vec<f64>>,
    pub pseudo_z: Vec<Vec<f64>>,
    /// Sum of |C_emp - C_theory| over covariance entries: the convergence
    /// trend scalar.
    pub cov_abs_gap: f64,
    pub gaussianity: Option<GaussianityReport>,
    /// Wall clock; the only field excluded from reproducibility.
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub law: EntryLaw,
    pub class: SymmetryClass,
    pub dims: Vec<DimReport>,
}

enum PlanKind {
    Functional,
    Resolvent,
}

/// Everything derivable from (config, n) once per dimension, shared
/// read-only across workers.
struct ObservablePlan {
    kind: PlanKind,
    eta: f64,
    omega: OmegaPlan,
    /// Points the sweep traces at: contour nodes or resolvent points.
    points: Vec<Complex64>,
    conj_pairs: Option<Vec<usize>>,
    contour: Option<Contour>,
    /// One view per pair (functional) or per matrix (resolvent).
    matrices: Vec<DenseMatrix>,
    sparse: Vec<Option<(Vec<f64>, Vec<usize>)>>,
    series: Vec<PowerSeries>,
    labels: Vec<String>,
    obs_count: usize,
}

impl ObservablePlan {
    fn build(cfg: &ExperimentConfig, n: usize) -> Result<Self, HarnessError> {
        let omega = OmegaPlan {
            delta: cfg.delta,
            kappa: cfg.kappa,
            grid_nodes: cfg.omega_grid_nodes,
        };
        let eta = cfg.eta_for(n);
        match &cfg.observables {
            ObservableSet::Functional { pairs } => {
                let contour = make_contour(cfg.contour_radius(), cfg.contour_nodes)?;
                let points = contour.points().to_vec();
                let matrices: Vec<DenseMatrix> =
                    pairs.iter().map(|p| p.matrix.build(n)).collect::<Result<_, _>>()?;
                let sparse = matrices.iter().map(hermitize::sparse_pattern).collect();
                let all_real = matrices
                    .iter()
                    .all(|a| a.data().iter().all(|c| c.im == 0.0));
                // the ring construction pins points[k] = conj(points[K-k])
                // bitwise, so real samples get the mirror-halving path
                let conj_pairs = if cfg.law.is_real() && all_real {
                    let k = points.len();
                    Some((0..k).map(|j| (k - j) % k).collect())
                } else {
                    None
                };
                let labels = pairs.iter().map(|p| p.label()).collect();
                Ok(ObservablePlan {
                    kind: PlanKind::Functional,
                    eta,
                    omega,
                    points,
                    conj_pairs,
                    contour: Some(contour),
                    obs_count: pairs.len(),
                    series: pairs.iter().map(|p| p.f.clone()).collect(),
                    sparse,
                    matrices,
                    labels,
                })
            }
            ObservableSet::Resolvent { points, matrices } => {
                let zs: Vec<Complex64> =
                    points.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
                let mats: Vec<DenseMatrix> =
                    matrices.iter().map(|m| m.build(n)).collect::<Result<_, _>>()?;
                let sparse = mats.iter().map(hermitize::sparse_pattern).collect();
                let mut labels = Vec::new();
                for z in &zs {
                    for m in matrices {
                        labels.push(format!("G21({z}) | {}", m.label()));
                    }
                }
                Ok(ObservablePlan {
                    kind: PlanKind::Resolvent,
                    eta,
                    omega,
                    obs_count: zs.len() * mats.len(),
                    points: zs,
                    conj_pairs: None,
                    contour: None,
                    series: Vec::new(),
                    sparse,
                    matrices: mats,
                    labels,
                })
            }
        }
    }
}

/// Per-dimension master offset: keeps sample streams distinct across N
/// within one experiment while staying a pure function of (seed, n).
fn dim_master(master_seed: u64, n: usize) -> u64 {
    master_seed ^ (n as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn thread_count() -> usize {
    std::env::var("TRACELAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        })
}

pub fn output_root(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .or_else(|| std::env::var_os("TRACELAB_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/runs"))
}

fn checkpoint_path(root: &Path, name: &str, hash: &str, n: usize) -> PathBuf {
    root.join(format!("{name}-{hash}-n{n}.jsonl"))
}

/// Loads surviving records from a checkpoint. Corrupt lines (interrupted
/// writes) are skipped with a note; duplicate indices keep the last row.
fn load_checkpoint(
    path: &Path,
    hash: &str,
    n: usize,
) -> Result<HashMap<u64, SampleRecord>, HarnessError> {
    let mut records = HashMap::new();
    let file = match fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(e.into()),
    };
    let mut lines = BufReader::new(file).lines();
    let Some(first) = lines.next() else {
        return Ok(records);
    };
    let header: CheckpointHeader = serde_json::from_str(&first?).map_err(|_| {
        HarnessError::CheckpointMismatch {
            path: path.display().to_string(),
            found: "unreadable header".into(),
            expected: hash.into(),
        }
    })?;
    if header.config_hash != hash || header.n != n {
        return Err(HarnessError::CheckpointMismatch {
            path: path.display().to_string(),
            found: format!("{} (n = {})", header.config_hash, header.n),
            expected: format!("{hash} (n = {n})"),
        });
    }
    for line in lines {
        let line = line?;
        match serde_json::from_str::<SampleRecord>(&line) {
            Ok(rec) => {
                records.insert(rec.index, rec);
            }
            Err(_) => eprintln!(
                "note: skipping corrupt checkpoint line in {}",
                path.display()
            ),
        }
    }
    Ok(records)
}

fn compute_record(
    cfg: &ExperimentConfig,
    plan: &ObservablePlan,
    n: usize,
    index: u64,
) -> Result<SampleRecord, HarnessError> {
    let seed = SampleSeed { master: dim_master(cfg.master_seed, n), index };
    let x = sample_iid(n, cfg.law, seed);
    let views: Vec<ViewSpec> = plan
        .matrices
        .iter()
        .zip(&plan.sparse)
        .map(|(m, s)| match s {
            Some((alpha, perm)) => {
                ViewSpec::Sparse { alpha: alpha.as_slice(), perm: perm.as_slice() }
            }
            None => ViewSpec::Dense(m),
        })
        .collect();
    let out = hermitize::run_sweep(&SweepRequest {
        x: &x,
        eta: plan.eta,
        trace_points: &plan.points,
        conj_pairs: plan.conj_pairs.as_deref(),
        views: &views,
        omega: Some(plan.omega),
    });
    let omega = out.omega.expect("sweep ran with a certificate plan");
    let clean = out.node_failures.is_empty();
    let values = if !clean {
        vec![Complex64::new(0.0, 0.0); plan.obs_count]
    } else {
        match plan.kind {
            PlanKind::Functional => {
                let contour = plan.contour.as_ref().expect("functional plan has a contour");
                let mut values = Vec::with_capacity(plan.obs_count);
                for (f, traces) in plan.series.iter().zip(&out.traces) {
                    let samples: Vec<Complex64> = plan
                        .points
                        .iter()
                        .zip(traces)
                        .map(|(&z, &t)| f.eval(z).map(|v| v * t))
                        .collect::<Result<_, _>>()?;
                    let integral = contour.integrate(&samples)?;
                    values.push(-integral / Complex64::new(0.0, std::f64::consts::TAU));
                }
                values
            }
            PlanKind::Resolvent => {
                let mut values = Vec::with_capacity(plan.obs_count);
                for pi in 0..plan.points.len() {
                    for traces in &out.traces {
                        values.push(traces[pi]);
                    }
                }
                values
            }
        }
    };
    Ok(SampleRecord {
        index,
        seed,
        omega,
        included: omega.passed && clean,
        node_failures: out.node_failures.len(),
        values,
    })
}

fn run_dimension(
    cfg: &ExperimentConfig,
    plan: &ObservablePlan,
    n: usize,
    hash: &str,
) -> Result<Vec<SampleRecord>, HarnessError> {
    let root = output_root(cfg);
    fs::create_dir_all(&root)?;
    let path = checkpoint_path(&root, &cfg.name, hash, n);
    let mut existing = load_checkpoint(&path, hash, n)?;
    let pending: Vec<u64> =
        (0..cfg.samples as u64).filter(|i| !existing.contains_key(i)).collect();

    if !pending.is_empty() {
        let fresh = fs::metadata(&path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut writer = BufWriter::new(file);
        if fresh {
            let header = CheckpointHeader { config_hash: hash.into(), n, version: 1 };
            serde_json::to_writer(&mut writer, &header)?;
            writer.write_all(b"\n")?;
            writer.flush()?;
        }
        let writer = Mutex::new(writer);
        let sink: Mutex<Vec<SampleRecord>> = Mutex::new(Vec::new());
        let failure: Mutex<Option<HarnessError>> = Mutex::new(None);
        let cursor = AtomicUsize::new(0);
        let workers = thread_count().min(pending.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if failure.lock().expect("failure lock").is_some() {
                        return;
                    }
                    let slot = cursor.fetch_add(1, Ordering::Relaxed);
                    let Some(&index) = pending.get(slot) else { return };
                    match compute_record(cfg, plan, n, index) {
                        Ok(rec) => {
                            let line =
                                serde_json::to_string(&rec).expect("record serializes");
                            let mut w = writer.lock().expect("writer lock");
                            // flush per record so interruption loses at most
                            // one (tolerated as a corrupt tail line)
                            let io = w
                                .write_all(line.as_bytes())
                                .and_then(|_| w.write_all(b"\n"))
                                .and_then(|_| w.flush());
                            drop(w);
                            if let Err(e) = io {
                                failure
                                    .lock()
                                    .expect("failure lock")
                                    .get_or_insert(e.into());
                                return;
                            }
                            sink.lock().expect("sink lock").push(rec);
                        }
                        Err(e) => {
                            failure.lock().expect("failure lock").get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });
        if let Some(e) = failure.into_inner().expect("failure lock") {
            return Err(e);
        }
        for rec in sink.into_inner().expect("sink lock") {
            existing.insert(rec.index, rec);
        }
    }

    (0..cfg.samples as u64)
        .map(|i| {
            existing.remove(&i).ok_or_else(|| {
                HarnessError::ConfigInvalid(format!("checkpoint hole at sample {i}"))
            })
        })
        .collect()
}

/// Empirical moments of the included samples with delete-one jackknife
/// standard errors on every entry.
struct Aggregate {
    included: usize,
    mean: Vec<Complex64>,
    mean_se: Vec<f64>,
    cov: Vec<Vec<Complex64>>,
    cov_se: Vec<Vec<f64>>,
    pseudo: Vec<Vec<Complex64>>,
    pseudo_se: Vec<Vec<f64>>,
}

fn aggregate_values(vals: &[Vec<Complex64>], k: usize) -> Result<Aggregate, HarnessError> {
    let m = vals.len();
    if m < 3 {
        return Err(HarnessError::TooFewSamples { got: m, need: 3 });
    }
    if vals.iter().any(|v| v.len() != k) {
        return Err(HarnessError::ConfigInvalid(
            "checkpoint record has wrong observable count".into(),
        ));
    }
    let mf = m as f64;
    let zero = Complex64::new(0.0, 0.0);

    let mut sums = vec![zero; k];
    for v in vals {
        for i in 0..k {
            sums[i] += v[i];
        }
    }
    let mean: Vec<Complex64> = sums.iter().map(|s| s / mf).collect();
    // jackknife SE of the mean coincides with the classical standard error
    let mean_se: Vec<f64> = (0..k)
        .map(|i| {
            let ss: f64 = vals.iter().map(|v| (v[i] - mean[i]).norm_sqr()).sum();
            (ss / (mf * (mf - 1.0))).sqrt()
        })
        .collect();

    let mut cov = vec![vec![zero; k]; k];
    let mut cov_se = vec![vec![0.0; k]; k];
    let mut pseudo = vec![vec![zero; k]; k];
    let mut pseudo_se = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            let s_conj: Complex64 = vals.iter().map(|v| v[i] * v[j].conj()).sum();
            let s_plain: Complex64 = vals.iter().map(|v| v[i] * v[j]).sum();
            cov[i][j] = (s_conj - mf * mean[i] * mean[j].conj()) / (mf - 1.0);
            pseudo[i][j] = (s_plain - mf * mean[i] * mean[j]) / (mf - 1.0);

            // delete-one second moments from the streaming totals
            let mut loo_conj = Vec::with_capacity(m);
            let mut loo_plain = Vec::with_capacity(m);
            for v in vals {
                let mu_i = (sums[i] - v[i]) / (mf - 1.0);
                let mu_j = (sums[j] - v[j]) / (mf - 1.0);
                loo_conj.push(
                    (s_conj - v[i] * v[j].conj() - (mf - 1.0) * mu_i * mu_j.conj())
                        / (mf - 2.0),
                );
                loo_plain.push(
                    (s_plain - v[i] * v[j] - (mf - 1.0) * mu_i * mu_j) / (mf - 2.0),
                );
            }
            cov_se[i][j] = jackknife_se(&loo_conj);
            pseudo_se[i][j] = jackknife_se(&loo_plain);
        }
    }
    Ok(Aggregate { included: m, mean, mean_se, cov, cov_se, pseudo, pseudo_se })
}

/// sqrt((m-1)/m sum |theta_t - theta_bar|^2) over the delete-one values;
/// the complex modulus pools both components, which only widens the band.
fn jackknife_se(loo: &[Complex64]) -> f64 {
    let m = loo.len() as f64;
    let bar = loo.iter().sum::<Complex64>() / m;
    let ss: f64 = loo.iter().map(|t| (t - bar).norm_sqr()).sum();
    ((m - 1.0) / m * ss).sqrt()
}

fn theory_for(
    cfg: &ExperimentConfig,
    plan: &ObservablePlan,
    n: usize,
) -> Result<(Vec<Complex64>, CovarianceModel), HarnessError> {
    match plan.kind {
        PlanKind::Functional => {
            let pairs: Vec<TestPair> = plan
                .series
                .iter()
                .zip(&plan.matrices)
                .map(|(f, a)| TestPair::new(f.clone(), a.clone()))
                .collect();
            let model = theory::covariance_model(&pairs, cfg.class);
            let mean = theory::mean_prediction(&pairs, n, cfg.class)?;
            Ok((mean, model))
        }
        PlanKind::Resolvent => {
            let k = plan.obs_count;
            let nm = plan.matrices.len();
            let at = |alpha: usize| (&plan.points[alpha / nm], &plan.matrices[alpha % nm]);
            let mut mean = Vec::with_capacity(k);
            let mut c = vec![vec![Complex64::new(0.0, 0.0); k]; k];
            let mut p = c.clone();
            for alpha in 0..k {
                let (&z, a) = at(alpha);
                mean.push(theory::resolvent_mean_prediction(z, a, cfg.class));
                for beta in 0..k {
                    let (&w, b) = at(beta);
                    let (cov, pseudo) =
                        theory::resolvent_covariance(z, w, a, b, cfg.class)?;
                    c[alpha][beta] = cov;
                    p[alpha][beta] = pseudo;
                }
            }
            Ok((mean, CovarianceModel { c, p }))
        }
    }
}

fn z_scores_vec(emp: &[Complex64], th: &[Complex64], se: &[f64]) -> Vec<f64> {
    emp.iter()
        .zip(th)
        .zip(se)
        .map(|((e, t), s)| {
            let gap = (e - t).norm();
            if gap == 0.0 {
                0.0
            } else {
                gap / s
            }
        })
        .collect()
}

fn z_scores_mat(
    emp: &[Vec<Complex64>],
    th: &[Vec<Complex64>],
    se: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    emp.iter()
        .zip(th)
        .zip(se)
        .map(|((er, tr), sr)| z_scores_vec(er, tr, sr))
        .collect()
}

fn aggregate_dimension(
    cfg: &ExperimentConfig,
    plan: &ObservablePlan,
    n: usize,
    hash: &str,
    records: &[SampleRecord],
    runtime_secs: f64,
) -> Result<DimReport, HarnessError> {
    let included_values: Vec<Vec<Complex64>> = records
        .iter()
        .filter(|r| r.included)
        .map(|r| r.values.clone())
        .collect();
    let omega_discards = records.iter().filter(|r| !r.omega.passed).count();
    let node_failures = records.iter().filter(|r| r.node_failures > 0).count();
    let agg = aggregate_values(&included_values, plan.obs_count)?;
    let (mean_theory, model) = theory_for(cfg, plan, n)?;

    let cov_abs_gap: f64 = agg
        .cov
        .iter()
        .zip(&model.c)
        .flat_map(|(er, tr)| er.iter().zip(tr).map(|(e, t)| (e - t).norm()))
        .sum();

    let gaussianity = if cfg.diagnostics {
        let seed = diagnostics_seed(hash, n);
        Some(gaussianity_diagnostics(&included_values, &model, seed)?)
    } else {
        None
    };

    Ok(DimReport {
        n,
        samples_requested: cfg.samples,
        samples_included: agg.included,
        omega_discards,
        node_failures,
        observable_labels: plan.labels.clone(),
        mean_z: z_scores_vec(&agg.mean, &mean_theory, &agg.mean_se),
        mean_empirical: agg.mean,
        mean_theory,
        mean_se: agg.mean_se,
        cov_z: z_scores_mat(&agg.cov, &model.c, &agg.cov_se),
        cov_empirical: agg.cov,
        cov_se: agg.cov_se,
        pseudo_z: z_scores_mat(&agg.pseudo, &model.p, &agg.pseudo_se),
        pseudo_empirical: agg.pseudo,
        pseudo_se: agg.pseudo_se,
        cov_theory: model.c,
        pseudo_theory: model.p,
        cov_abs_gap,
        gaussianity,
        runtime_secs,
    })
}

fn diagnostics_seed(hash: &str, n: usize) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in format!("{hash}:{n}:diagnostics").as_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Runs (or resumes) the full experiment: every dimension, checkpointed,
/// aggregated against theory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    cfg.validate()?;
    let hash = config_hash(cfg);
    let mut dims = Vec::with_capacity(cfg.dims.len());
    for &n in &cfg.dims {
        let start = Instant::now();
        let plan = ObservablePlan::build(cfg, n)?;
        let records = run_dimension(cfg, &plan, n, &hash)?;
        dims.push(aggregate_dimension(
            cfg,
            &plan,
            n,
            &hash,
            &records,
            start.elapsed().as_secs_f64(),
        )?);
    }
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        config_hash: hash,
        master_seed: cfg.master_seed,
        law: cfg.law,
        class: cfg.class,
        dims,
    })
}

/// Same pipeline with the observables pinned to raw resolvent traces.
pub fn resolvent_clt_experiment(
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, HarnessError> {
    match cfg.observables {
        ObservableSet::Resolvent { .. } => run_experiment(cfg),
        ObservableSet::Functional { .. } => Err(HarnessError::ConfigInvalid(
            "resolvent experiment requires resolvent-mode observables".into(),
        )),
    }
}

/// Higher-cumulant checks of the sampled statistics against the limiting
/// Gaussian: excess kurtosis of every real and imaginary projection, and a
/// two-sample energy-distance permutation test against `limit_sampler`
/// draws at the matched (C, P). Values are centered empirically first.
pub fn gaussianity_diagnostics(
    values: &[Vec<Complex64>],
    model: &CovarianceModel,
    seed: u64,
) -> Result<GaussianityReport, HarnessError> {
    let m = values.len();
    if m < 200 {
        return Err(HarnessError::TooFewSamples { got: m, need: 200 });
    }
    let k = model.dim();
    if values.iter().any(|v| v.len() != k) {
        return Err(HarnessError::ConfigInvalid(
            "diagnostic values do not match the model dimension".into(),
        ));
    }
    let mf = m as f64;
    let mean: Vec<Complex64> = (0..k)
        .map(|i| values.iter().map(|v| v[i]).sum::<Complex64>() / mf)
        .collect();
    let centered: Vec<Vec<Complex64>> = values
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, mu)| x - mu).collect())
        .collect();

    let mut kurtosis = Vec::with_capacity(2 * k);
    let se = (24.0 / mf).sqrt();
    for i in 0..k {
        for (part, name) in [(0usize, "re"), (1, "im")] {
            let xs: Vec<f64> = centered
                .iter()
                .map(|v| if part == 0 { v[i].re } else { v[i].im })
                .collect();
            let m2 = xs.iter().map(|x| x * x).sum::<f64>() / mf;
            let m4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / mf;
            // a projection can be degenerate (real class imaginary parts)
            let excess = if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 };
            kurtosis.push(KurtosisRow {
                label: format!("{name}[{i}]"),
                excess,
                se,
                z: excess / se,
            });
        }
    }

    let energy = energy_permutation_test(&centered, model, seed)?;
    Ok(GaussianityReport { kurtosis, energy })
}

const ENERGY_PERMUTATIONS: usize = 200;
const ENERGY_GROUP_CAP: usize = 512;

fn energy_permutation_test(
    centered: &[Vec<Complex64>],
    model: &CovarianceModel,
    seed: u64,
) -> Result<EnergyTest, HarnessError> {
    let k = model.dim();
    let g = centered.len().min(ENERGY_GROUP_CAP);
    let embed = |v: &[Complex64]| -> Vec<f64> {
        v.iter().flat_map(|c| [c.re, c.im]).collect()
    };
    let mut pool: Vec<Vec<f64>> = centered[..g].iter().map(|v| embed(v)).collect();
    let mut sampler = theory::limit_sampler(model, seed)?;
    for _ in 0..g {
        pool.push(embed(&sampler.draw()));
    }
    let total = 2 * g;
    let dim = 2 * k;
    let mut dist = vec![0.0f64; total * total];
    for i in 0..total {
        for j in i + 1..total {
            let mut ss = 0.0;
            for d in 0..dim {
                let diff = pool[i][d] - pool[j][d];
                ss += diff * diff;
            }
            let dv = ss.sqrt();
            dist[i * total + j] = dv;
            dist[j * total + i] = dv;
        }
    }

    // E = 2 mean cross - mean within-x - mean within-y over distinct pairs
    let stat = |labels: &[u8]| -> f64 {
        let mut sxx = 0.0;
        let mut syy = 0.0;
        let mut sxy = 0.0;
        for i in 0..total {
            for j in i + 1..total {
                let d = dist[i * total + j];
                match (labels[i], labels[j]) {
                    (0, 0) => sxx += d,
                    (1, 1) => syy += d,
                    _ => sxy += d,
                }
            }
        }
        let gf = g as f64;
        let within = gf * (gf - 1.0) / 2.0;
        2.0 * sxy / (gf * gf) - sxx / within - syy / within
    };

    let mut labels: Vec<u8> = (0..total).map(|i| u8::from(i >= g)).collect();
    let observed = stat(&labels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x454e_4552_4759);
    let mut at_least = 0usize;
    for _ in 0..ENERGY_PERMUTATIONS {
        labels.shuffle(&mut rng);
        if stat(&labels) >= observed {
            at_least += 1;
        }
    }
    Ok(EnergyTest {
        statistic: observed,
        p_value: (1.0 + at_least as f64) / (ENERGY_PERMUTATIONS as f64 + 1.0),
        permutations: ENERGY_PERMUTATIONS,
        group_size: g,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLawRow {
    pub n: usize,
    pub z: Complex64,
    /// Block label in {11, 12, 21, 22}.
    pub block: u32,
    pub median_error: f64,
    pub mad: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalLawScan {
    pub rows: Vec<LocalLawRow>,
    /// Per dimension: median over samples of the max block error.
    pub max_block_medians: Vec<(usize, f64)>,
    /// Least-squares slope of log(median max error) against log N.
    pub slope: f64,
    pub master_seed: u64,
}

/// Measures |<A (G - M)^{kl}>| decay across dimensions at a fixed point
/// outside the spectrum, eta = N^{-eta_exponent}.
pub fn local_law_scan(
    dims: &[usize],
    samples: usize,
    z: Complex64,
    eta_exponent: f64,
    law: EntryLaw,
    a_spec: &MatrixSpec,
    master_seed: u64,
) -> Result<LocalLawScan, HarnessError> {
    if dims.is_empty() || samples == 0 {
        return Err(HarnessError::ConfigInvalid(
            "local law scan needs dimensions and samples".into(),
        ));
    }
    let block_labels = [11u32, 12, 21, 22];
    let mut rows = Vec::new();
    let mut max_block_medians = Vec::new();
    for &n in dims {
        let a = a_spec.build(n)?;
        let eta = (n as f64).powf(-eta_exponent);
        let mut per_block: [Vec<f64>; 4] = Default::default();
        let mut maxima = Vec::with_capacity(samples);
        for index in 0..samples as u64 {
            let seed = SampleSeed { master: dim_master(master_seed, n), index };
            let x = sample_iid(n, law, seed);
            let ws = ResolventWorkspace::new(&x, z, eta)?;
            let errs = ws.local_law_errors(&a)?;
            let mut worst = 0.0f64;
            for (slot, err) in errs.iter().enumerate() {
                let e = err.norm();
                per_block[slot].push(e);
                worst = worst.max(e);
            }
            maxima.push(worst);
        }
        for (slot, label) in block_labels.iter().enumerate() {
            let med = median(&mut per_block[slot]);
            let mut dev: Vec<f64> = per_block[slot].iter().map(|e| (e - med).abs()).collect();
            rows.push(LocalLawRow {
                n,
                z,
                block: *label,
                median_error: med,
                mad: median(&mut dev),
                samples,
            });
        }
        max_block_medians.push((n, median(&mut maxima)));
    }
    let xs: Vec<f64> = max_block_medians.iter().map(|&(n, _)| (n as f64).ln()).collect();
    let ys: Vec<f64> = max_block_medians.iter().map(|&(_, e)| e.ln()).collect();
    Ok(LocalLawScan { rows, max_block_medians, slope: log_slope(&xs, &ys), master_seed })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = xs.len();
    if m == 0 {
        return f64::NAN;
    }
    if m % 2 == 1 {
        xs[m / 2]
    } else {
        0.5 * (xs[m / 2 - 1] + xs[m / 2])
    }
}

/// Least-squares slope of ys against xs.
pub fn log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    sxy / sxx
}

/// Repeats the experiment with shifted master seeds and reports, per
/// dimension, the median over repetitions of the covariance gap. The gap
/// medians should not increase as N doubles once the repetition count
/// drowns per-run noise.
pub fn covariance_gap_medians(
    base: &ExperimentConfig,
    reps: u64,
) -> Result<Vec<f64>, HarnessError> {
    if reps == 0 {
        return Err(HarnessError::ConfigInvalid("need at least one repetition".into()));
    }
    let mut gaps: Vec<Vec<f64>> = vec![Vec::new(); base.dims.len()];
    for rep in 0..reps {
        let mut cfg = base.clone();
        cfg.name = format!("{}-rep{rep}", base.name);
        cfg.master_seed = base.master_seed.wrapping_add(rep);
        let report = run_experiment(&cfg)?;
        for (slot, dim) in report.dims.iter().enumerate() {
            gaps[slot].push(dim.cov_abs_gap);
        }
    }
    Ok(gaps.iter_mut().map(|g| median(g)).collect())
}

/// CSV rows: n,i,j,kind,empirical_re,empirical_im,theory_re,theory_im,se,z
/// with one kind=mean row per observable (j mirrors i there).
pub fn write_moments_csv(report: &ExperimentReport, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from("n,i,j,kind,empirical_re,empirical_im,theory_re,theory_im,se,z\n");
    for dim in &report.dims {
        let k = dim.observable_labels.len();
        for i in 0..k {
            out.push_str(&format!(
                "{},{},{},mean,{},{},{},{},{},{}\n",
                dim.n,
                i,
                i,
                dim.mean_empirical[i].re,
                dim.mean_empirical[i].im,
                dim.mean_theory[i].re,
                dim.mean_theory[i].im,
                dim.mean_se[i],
                dim.mean_z[i],
            ));
        }
        for (kind, emp, th, se, z) in [
            ("cov", &dim.cov_empirical, &dim.cov_theory, &dim.cov_se, &dim.cov_z),
            ("pseudo", &dim.pseudo_empirical, &dim.pseudo_theory, &dim.pseudo_se, &dim.pseudo_z),
        ] {
            for i in 0..k {
                for j in 0..k {
                    out.push_str(&format!(
                        "{},{},{},{kind},{},{},{},{},{},{}\n",
                        dim.n,
                        i,
                        j,
                        emp[i][j].re,
                        emp[i][j].im,
                        th[i][j].re,
                        th[i][j].im,
                        se[i][j],
                        z[i][j],
                    ));
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV rows: n,included,omega_discards,node_failures,cov_abs_gap,runtime_secs
/// (the error-versus-N curve).
pub fn write_gap_csv(report: &ExperimentReport, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from("n,included,omega_discards,node_failures,cov_abs_gap,runtime_secs\n");
    for dim in &report.dims {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            dim.n,
            dim.samples_included,
            dim.omega_discards,
            dim.node_failures,
            dim.cov_abs_gap,
            dim.runtime_secs,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// CSV rows: n,z_re,z_im,block,median_error,mad,samples,seed.
pub fn write_local_law_csv(scan: &LocalLawScan, path: &Path) -> Result<(), HarnessError> {
    let mut out = String::from("n,z_re,z_im,block,median_error,mad,samples,seed\n");
    for row in &scan.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.n,
            row.z.re,
            row.z.im,
            row.block,
            row.median_error,
            row.mad,
            row.samples,
            scan.master_seed,
        ));
    }
    fs::write(path, out)?;
    Ok(())
}
