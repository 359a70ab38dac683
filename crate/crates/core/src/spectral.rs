//! Spectra and empirical spectral distribution functions.

use std::io::Write;

use crate::ensemble::CovarianceMatrix;
use crate::linalg::{self, Matrix};
use crate::scalar::Real;
use crate::{Error, Result};

/// Relative symmetry tolerance accepted by the eigensolver.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Negative eigenvalues of `W` down to `-PSD_CLAMP · ‖W‖` are rounding noise.
pub const PSD_CLAMP: f64 = 1e-10;

/// Eigenvalues in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum<T> {
    pub eigenvalues: Vec<T>,
    pub source_dim: usize,
}

/// Eigenvalues of a symmetric matrix.
pub fn symmetric_eigenvalues<T: Real>(m: &Matrix<T>) -> Result<Spectrum<T>> {
    if !m.is_square() {
        return Err(Error::Contract(format!("matrix is {}x{}, not square", m.rows(), m.cols())));
    }
    let asym = m.asymmetry();
    if asym > T::lit(SYMMETRY_TOLERANCE) * m.frobenius() {
        return Err(Error::Contract(format!("matrix is not symmetric (max |A - Aᵀ| = {asym:e})")));
    }
    Ok(Spectrum {
        eigenvalues: linalg::symmetric_eigenvalues(m)?,
        source_dim: m.rows(),
    })
}

/// Spectrum of `W` with rounding-level negative eigenvalues set to zero.
pub fn covariance_spectrum<T: Real>(w: &CovarianceMatrix<T>) -> Result<Spectrum<T>> {
    let mut spec = symmetric_eigenvalues(&w.values)?;
    let floor = -T::lit(PSD_CLAMP) * w.values.frobenius();
    for x in spec.eigenvalues.iter_mut() {
        if *x < T::zero() {
            if *x < floor {
                return Err(Error::Numerical(format!(
                    "covariance eigenvalue {x} is below the clamp floor {floor}"
                )));
            }
            *x = T::zero();
        }
    }
    Ok(spec)
}

/// Right-continuous step CDF with rational jumps.
///
/// Masses are stored as integer counts, so ties merge exactly and the final
/// value is exactly one.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf<T> {
    jumps: Vec<T>,
    cumulative: Vec<u64>,
    total: u64,
}

impl<T: Real> EmpiricalCdf<T> {
    /// Unit-mass atoms at the given points (any order).
    pub fn from_atoms(points: &[T]) -> Result<Self> {
        let mut sorted = points.to_vec();
        if sorted.is_empty() {
            return Err(Error::Contract("empirical CDF of an empty sample".into()));
        }
        if sorted.iter().any(|x| x.is_nan()) {
            return Err(Error::Contract("empirical CDF of a sample containing NaN".into()));
        }
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        Ok(Self::from_sorted_counts(sorted.into_iter().map(|x| (x, 1))))
    }

    fn from_sorted_counts(items: impl IntoIterator<Item = (T, u64)>) -> Self {
        let mut jumps: Vec<T> = Vec::new();
        let mut cumulative: Vec<u64> = Vec::new();
        let mut total = 0u64;
        for (x, c) in items {
            total += c;
            if jumps.last() == Some(&x) {
                *cumulative.last_mut().expect("nonempty") = total;
            } else {
                jumps.push(x);
                cumulative.push(total);
            }
        }
        Self {
            jumps,
            cumulative,
            total,
        }
    }

    /// Pooled ESD of several samples, i.e. their pointwise average when every
    /// sample has the same size.
    pub fn pooled<'a>(samples: impl IntoIterator<Item = &'a [T]>) -> Result<Self> {
        let mut all = Vec::new();
        for s in samples {
            all.extend_from_slice(s);
        }
        Self::from_atoms(&all)
    }

    pub fn jump_points(&self) -> &[T] {
        &self.jumps
    }

    /// Value right after each jump.
    pub fn cumulative(&self) -> Vec<T> {
        self.cumulative.iter().map(|&c| self.fraction(c)).collect()
    }

    pub fn total_count(&self) -> u64 {
        self.total
    }

    #[inline]
    fn fraction(&self, count: u64) -> T {
        if count == self.total {
            T::one()
        } else {
            T::lit(count as f64) / T::lit(self.total as f64)
        }
    }

    /// Number of jump points `≤ x`.
    fn rank(&self, x: T) -> usize {
        self.jumps.partition_point(|&j| j <= x)
    }

    /// `F(x)`.
    pub fn eval(&self, x: T) -> T {
        match self.rank(x) {
            0 => T::zero(),
            k => self.fraction(self.cumulative[k - 1]),
        }
    }

    /// `F(x⁻)`.
    pub fn eval_left(&self, x: T) -> T {
        match self.jumps.partition_point(|&j| j < x) {
            0 => T::zero(),
            k => self.fraction(self.cumulative[k - 1]),
        }
    }

    /// `F` just before jump `i`.
    pub fn value_before(&self, i: usize) -> T {
        if i == 0 {
            T::zero()
        } else {
            self.fraction(self.cumulative[i - 1])
        }
    }

    /// `F` at jump `i`.
    pub fn value_at(&self, i: usize) -> T {
        self.fraction(self.cumulative[i])
    }

    /// Mass of the atom at jump `i`.
    pub fn mass_at(&self, i: usize) -> T {
        let below = if i == 0 { 0 } else { self.cumulative[i - 1] };
        self.fraction(self.cumulative[i] - below)
    }

    /// Write `x,F` rows, one per jump point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,F")?;
        for i in 0..self.jumps.len() {
            writeln!(out, "{},{}", self.jumps[i], self.value_at(i))?;
        }
        Ok(())
    }
}

/// Empirical spectral distribution of a spectrum.
pub fn esd<T: Real>(spec: &Spectrum<T>) -> Result<EmpiricalCdf<T>> {
    EmpiricalCdf::from_atoms(&spec.eigenvalues)
}

/// `F̃(x) = ½(1 + sgn(x) F(x²))`: every atom at `λ` splits into two halves
/// at `±√λ`.
pub fn symmetrize_cdf<T: Real>(f: &EmpiricalCdf<T>) -> Result<EmpiricalCdf<T>> {
    if let Some(&lo) = f.jumps.first() {
        if lo < T::zero() {
            return Err(Error::Contract(format!("cannot symmetrize a law with mass at {lo} < 0")));
        }
    }
    let mut atoms: Vec<(T, u64)> = Vec::with_capacity(2 * f.jumps.len());
    for i in (0..f.jumps.len()).rev() {
        let c = f.cumulative[i] - if i == 0 { 0 } else { f.cumulative[i - 1] };
        atoms.push((-f.jumps[i].sqrt(), c));
    }
    for i in 0..f.jumps.len() {
        let c = f.cumulative[i] - if i == 0 { 0 } else { f.cumulative[i - 1] };
        atoms.push((f.jumps[i].sqrt(), c));
    }
    Ok(EmpiricalCdf::from_sorted_counts(atoms))
}
