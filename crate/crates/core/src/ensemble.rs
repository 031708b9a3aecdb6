//! Reproducible sampling of i.i.d. random matrices with entries n^{-1/2} chi
//! for several normalized entry laws.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;

/// Entry law for chi, normalized so E chi = 0, E |chi|^2 = 1, and
/// E chi^2 = 0 for the complex kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryLaw {
    ComplexGaussian,
    RealGaussian,
    ComplexPhaseRademacher,
    RealRademacher,
    RealUniform,
}

impl EntryLaw {
    /// Laws whose entries are real, which also forces E chi^2 = 1.
    pub fn is_real(self) -> bool {
        matches!(self, Self::RealGaussian | Self::RealRademacher | Self::RealUniform)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::ComplexGaussian => "complex-gaussian",
            Self::RealGaussian => "real-gaussian",
            Self::ComplexPhaseRademacher => "complex-phase-rademacher",
            Self::RealRademacher => "real-rademacher",
            Self::RealUniform => "real-uniform",
        }
    }
}

impl std::fmt::Display for EntryLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EntryLaw {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "complex-gaussian" => Ok(Self::ComplexGaussian),
            "real-gaussian" => Ok(Self::RealGaussian),
            "complex-phase-rademacher" => Ok(Self::ComplexPhaseRademacher),
            "real-rademacher" => Ok(Self::RealRademacher),
            "real-uniform" => Ok(Self::RealUniform),
            other => Err(format!("unknown entry law '{other}'")),
        }
    }
}

/// Counter-based seed: every (master, index) pair owns an independent RNG
/// stream, so the sample for index i never depends on how indices are
/// partitioned among workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSeed {
    pub master: u64,
    pub index: u64,
}

impl SampleSeed {
    pub fn new(master: u64, index: u64) -> Self {
        Self { master, index }
    }

    pub(crate) fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

fn draw_chi(law: EntryLaw, rng: &mut ChaCha8Rng) -> Complex64 {
    match law {
        EntryLaw::ComplexGaussian => {
            // two real Gaussians at variance 1/2 each, so E chi^2 = 0 exactly
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
        }
        EntryLaw::RealGaussian => Complex64::new(rng.sample(StandardNormal), 0.0),
        EntryLaw::ComplexPhaseRademacher => {
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            Complex64::new(theta.cos(), theta.sin())
        }
        EntryLaw::RealRademacher => {
            let sign = if rng.gen::<f64>() < 0.5 { 1.0 } else { -1.0 };
            Complex64::new(sign, 0.0)
        }
        EntryLaw::RealUniform => {
            let x = (rng.gen::<f64>() * 2.0 - 1.0) * 3f64.sqrt();
            Complex64::new(x, 0.0)
        }
    }
}

/// n x n matrix with i.i.d. entries distributed as n^{-1/2} chi, row-major
/// fill order. Deterministic in (n, law, seed).
pub fn sample_iid(n: usize, law: EntryLaw, seed: SampleSeed) -> DenseMatrix {
    assert!(n >= 1, "dimension must be at least 1");
    let mut rng = seed.rng();
    let scale = 1.0 / (n as f64).sqrt();
    let data: Vec<Complex64> = (0..n * n).map(|_| draw_chi(law, &mut rng) * scale).collect();
    DenseMatrix::new(n, data).expect("sampled entries are finite")
}

/// One empirical moment with its standard error.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: Complex64,
    pub se: f64,
}

/// Empirical first, second, and fourth moments of chi.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentReport {
    pub law: EntryLaw,
    pub samples: usize,
    pub e_chi: MomentEstimate,
    pub e_abs2: MomentEstimate,
    pub e_chi2: MomentEstimate,
    pub e_abs4: MomentEstimate,
}

impl std::fmt::Display for MomentReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "law {} ({} samples)", self.law, self.samples)?;
        for (name, m) in [
            ("E chi     ", &self.e_chi),
            ("E |chi|^2 ", &self.e_abs2),
            ("E chi^2   ", &self.e_chi2),
            ("E |chi|^4 ", &self.e_abs4),
        ] {
            writeln!(
                f,
                "  {name} = {:+.6} {:+.6}i  (se {:.2e})",
                m.value.re, m.value.im, m.se
            )?;
        }
        Ok(())
    }
}

fn estimate(values: &[Complex64]) -> MomentEstimate {
    let m = values.len() as f64;
    let mean = values.iter().sum::<Complex64>() / m;
    let var = values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (m - 1.0);
    MomentEstimate { value: mean, se: (var / m).sqrt() }
}

/// Monte Carlo moment table for a law, from a single chi stream.
pub fn law_moment_report(law: EntryLaw, samples: usize, seed: SampleSeed) -> MomentReport {
    assert!(samples >= 100, "need at least 100 samples");
    let mut rng = seed.rng();
    let draws: Vec<Complex64> = (0..samples).map(|_| draw_chi(law, &mut rng)).collect();
    let abs2: Vec<Complex64> = draws.iter().map(|c| Complex64::new(c.norm_sqr(), 0.0)).collect();
    let chi2: Vec<Complex64> = draws.iter().map(|c| c * c).collect();
    let abs4: Vec<Complex64> =
        draws.iter().map(|c| Complex64::new(c.norm_sqr() * c.norm_sqr(), 0.0)).collect();
    MomentReport {
        law,
        samples,
        e_chi: estimate(&draws),
        e_abs2: estimate(&abs2),
        e_chi2: estimate(&chi2),
        e_abs4: estimate(&abs4),
    }
}
