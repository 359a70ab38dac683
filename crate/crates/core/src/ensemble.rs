//! Random entry arrays, the sample covariance matrix and its Hermitization.
//!
//! Every replicate draws from its own ChaCha stream, keyed by the base seed
//! and the replicate index, so a replicate's entries do not depend on which
//! thread produces it or in what order.

use rand::distr::{Bernoulli, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::{Error, Result};

/// Entry law of `X`. Every variant has mean 0 and variance 1 exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryDist {
    Rademacher,
    Gaussian,
    /// Uniform on `[-√3, √3]`.
    UniformScaled,
    /// `√((1-q)/q)` with probability `q`, `-√(q/(1-q))` otherwise.
    TwoPoint { q: f64 },
}

impl EntryDist {
    pub fn validate(&self) -> Result<()> {
        if let EntryDist::TwoPoint { q } = *self {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::Config(format!("two_point needs q in (0, 1), got {q}")));
            }
        }
        Ok(())
    }

    /// `E X⁴`.
    pub fn fourth_moment(&self) -> f64 {
        match *self {
            EntryDist::Rademacher => 1.0,
            EntryDist::Gaussian => 3.0,
            EntryDist::UniformScaled => 9.0 / 5.0,
            EntryDist::TwoPoint { q } => (1.0 - q) * (1.0 - q) / q + q * q / (1.0 - q),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            EntryDist::Rademacher => "rademacher".into(),
            EntryDist::Gaussian => "gaussian".into(),
            EntryDist::UniformScaled => "uniform_scaled".into(),
            EntryDist::TwoPoint { q } => format!("two_point({q})"),
        }
    }

    /// Draw one entry. Assumes [`validate`](Self::validate) succeeded.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            EntryDist::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryDist::Gaussian => rng.sample(StandardNormal),
            EntryDist::UniformScaled => {
                let r = 3f64.sqrt();
                rng.random_range(-r..r)
            }
            EntryDist::TwoPoint { q } => {
                if rng.random::<f64>() < q {
                    ((1.0 - q) / q).sqrt()
                } else {
                    -(q / (1.0 - q)).sqrt()
                }
            }
        }
    }
}

/// Parameters of one ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    /// Columns of `X` (sample size).
    pub n: usize,
    /// Rows of `X` (dimension).
    pub p: usize,
    pub entry_dist: EntryDist,
    /// Bernoulli keep-probability of each entry, if sparsified.
    #[serde(default)]
    pub sparsity: Option<f64>,
    pub base_seed: u64,
}

impl EnsembleConfig {
    pub fn dense(n: usize, p: usize, entry_dist: EntryDist, base_seed: u64) -> Self {
        Self {
            n,
            p,
            entry_dist,
            sparsity: None,
            base_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::Config(format!("n and p must be positive, got n={}, p={}", self.n, self.p)));
        }
        if self.p > self.n {
            return Err(Error::Config(format!("need p <= n, got p={} > n={}", self.p, self.n)));
        }
        if let Some(pn) = self.sparsity {
            if !(pn > 0.0 && pn <= 1.0) {
                return Err(Error::Config(format!("sparsity must lie in (0, 1], got {pn}")));
            }
        }
        self.entry_dist.validate()
    }

    /// `y = p/n`.
    pub fn y(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// Keep-probability, 1 for dense ensembles.
    pub fn keep_probability(&self) -> f64 {
        self.sparsity.unwrap_or(1.0)
    }

    /// `n · p_n`, the effective number of nonzero entries per row.
    pub fn effective_n(&self) -> f64 {
        self.n as f64 * self.keep_probability()
    }
}

/// Independent random streams derived from one base seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Entries,
    Mask,
    /// Choice of rows audited by the resolvent diagnostics.
    Audit,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Entries => 0x5EED_0001,
            Stream::Mask => 0x5EED_0002,
            Stream::Audit => 0x5EED_0003,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The generator for `(base_seed, replicate, stream)`.
pub fn replicate_rng(base_seed: u64, replicate: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(base_seed ^ splitmix64(stream.tag())));
    rng.set_stream(replicate);
    rng
}

/// One realization of the `p × n` entry array.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix<T> {
    /// `p × n`, masked but not rescaled.
    pub entries: Matrix<T>,
    pub config: EnsembleConfig,
    pub replicate_index: u64,
}

impl<T: Real> SampleMatrix<T> {
    /// Wrap an explicit entry array, mostly for tests.
    pub fn from_entries(entries: Matrix<T>, config: EnsembleConfig) -> Result<Self> {
        config.validate()?;
        if entries.rows() != config.p || entries.cols() != config.n {
            return Err(Error::Contract(format!(
                "entries are {}x{} but config asks for p={} by n={}",
                entries.rows(),
                entries.cols(),
                config.p,
                config.n
            )));
        }
        Ok(Self {
            entries,
            config,
            replicate_index: 0,
        })
    }

    /// Dense-normalized sample from an explicit `p × n` array.
    pub fn from_array(entries: Matrix<T>) -> Result<Self> {
        let config = EnsembleConfig::dense(entries.cols(), entries.rows(), EntryDist::Rademacher, 0);
        Self::from_entries(entries, config)
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn p(&self) -> usize {
        self.config.p
    }

    /// `1/√(n p_n)`, the factor applied to `X` in `W` and `H`.
    pub fn scale(&self) -> T {
        T::one() / T::lit(self.config.effective_n()).sqrt()
    }
}

/// Draw replicate `replicate_index` of the ensemble.
pub fn sample_matrix<T: Real>(config: &EnsembleConfig, replicate_index: u64) -> Result<SampleMatrix<T>> {
    config.validate()?;
    let (p, n) = (config.p, config.n);
    let mut rng = replicate_rng(config.base_seed, replicate_index, Stream::Entries);
    let mut data: Vec<T> = (0..p * n).map(|_| T::lit(config.entry_dist.draw(&mut rng))).collect();
    if let Some(pn) = config.sparsity {
        // With p_n = 1 the mask is all ones; skipping it keeps the dense and
        // sparse paths bit-identical.
        if pn < 1.0 {
            let keep = Bernoulli::new(pn).map_err(|e| Error::Config(e.to_string()))?;
            let mut mask_rng = replicate_rng(config.base_seed, replicate_index, Stream::Mask);
            for x in data.iter_mut() {
                if !keep.sample(&mut mask_rng) {
                    *x = T::zero();
                }
            }
        }
    }
    Ok(SampleMatrix {
        entries: Matrix::from_row_major(p, n, data)?,
        config: *config,
        replicate_index,
    })
}

/// `W = (1/(n p_n)) X Xᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct CovarianceMatrix<T> {
    pub values: Matrix<T>,
    pub y: T,
}

pub fn covariance_matrix<T: Real>(x: &SampleMatrix<T>) -> CovarianceMatrix<T> {
    let s = x.scale();
    CovarianceMatrix {
        values: x.entries.scaled_gram_rows(s * s),
        y: T::lit(x.config.y()),
    }
}

/// `H = [[0, A], [Aᵀ, 0]]` with `A = Xᵀ/√(n p_n)`, of order `n + p`.
///
/// Indices `0..n` correspond to the columns of `X` and `n..n+p` to its rows,
/// so `H[i][n+k] = X[k][i] / √(n p_n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitizationMatrix<T> {
    pub values: Matrix<T>,
    pub n: usize,
    pub p: usize,
}

impl<T: Real> HermitizationMatrix<T> {
    pub fn order(&self) -> usize {
        self.n + self.p
    }
}

pub fn hermitization<T: Real>(x: &SampleMatrix<T>) -> HermitizationMatrix<T> {
    let (n, p) = (x.n(), x.p());
    let c = x.scale();
    let mut h = Matrix::zeros(n + p, n + p);
    for k in 0..p {
        for (i, &v) in x.entries.row(k).iter().enumerate() {
            h[(i, n + k)] = c * v;
            h[(n + k, i)] = c * v;
        }
    }
    HermitizationMatrix { values: h, n, p }
}
