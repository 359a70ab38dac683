//! Kolmogorov distances, their Monte Carlo estimators and the contour
//! functionals of the smoothing inequality.

use rayon::prelude::*;
use serde::Serialize;

use crate::ensemble::{covariance_matrix, sample_matrix, EnsembleConfig};
use crate::law::{ComplexPoint, MpLaw};
use crate::quad::adaptive_simpson;
use crate::scalar::{kmean, ksum_complex, Cplx, Real};
use crate::spectral::{covariance_spectrum, EmpiricalCdf, Spectrum};
use crate::{Error, Result};

/// Slack allowed when checking that a CDF evaluator is nondecreasing.
const MONOTONE_SLACK: f64 = 1e-9;

/// Absolute tolerance of the contour integrals.
pub const CONTOUR_TOLERANCE: f64 = 1e-8;

/// Half-width added on both sides of the interval for the horizontal integral.
pub const HORIZONTAL_MARGIN: f64 = 5.0;

/// A CDF that can be evaluated at and just left of any point.
pub trait CdfEvaluator<T: Copy> {
    fn cdf(&self, x: T) -> Result<T>;

    /// `(G(x⁻), G(x))`.
    fn cdf_pair(&self, x: T) -> Result<(T, T)> {
        let g = self.cdf(x)?;
        Ok((g, g))
    }
}

impl<T: Real> CdfEvaluator<T> for MpLaw<T> {
    fn cdf(&self, x: T) -> Result<T> {
        MpLaw::cdf(self, x)
    }

    fn cdf_pair(&self, x: T) -> Result<(T, T)> {
        let g = MpLaw::cdf(self, x)?;
        if x == T::zero() && self.atom_at_zero() > T::zero() {
            return Ok((T::zero(), g));
        }
        Ok((g, g))
    }
}

/// The symmetrized law `½(1 + sgn(x) F_y(x²))`.
#[derive(Clone, Copy, Debug)]
pub struct SymmetrizedLaw<T>(pub MpLaw<T>);

impl<T: Real> CdfEvaluator<T> for SymmetrizedLaw<T> {
    fn cdf(&self, x: T) -> Result<T> {
        self.0.symmetrized_cdf(x)
    }

    fn cdf_pair(&self, x: T) -> Result<(T, T)> {
        let g = self.0.symmetrized_cdf(x)?;
        if x == T::zero() && self.0.atom_at_zero() > T::zero() {
            return Ok((T::lit(0.5) * (T::one() - self.0.atom_at_zero()), g));
        }
        Ok((g, g))
    }
}

/// Wraps a closure as a continuous CDF.
pub struct FnCdf<F>(pub F);

impl<T: Real, F: Fn(T) -> T> CdfEvaluator<T> for FnCdf<F> {
    fn cdf(&self, x: T) -> Result<T> {
        Ok((self.0)(x))
    }
}

/// Which one-sided value of the step function attains the supremum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    LeftLimit,
    RightValue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KolmogorovResult<T> {
    pub delta: T,
    pub arg_x: T,
    pub side: Side,
}

/// Exact `sup_x |F(x) - G(x)|` for a step function `F` and a nondecreasing `G`.
///
/// Between jumps `F` is constant and `G` monotone, so the supremum is one of
/// the one-sided differences at a jump point; the two tails reduce to the
/// outermost of these.
pub fn kolmogorov_step_vs_cdf<T: Real, G: CdfEvaluator<T> + ?Sized>(
    f: &EmpiricalCdf<T>,
    g: &G,
) -> Result<KolmogorovResult<T>> {
    let slack = T::lit(MONOTONE_SLACK);
    let mut best = KolmogorovResult {
        delta: -T::one(),
        arg_x: T::zero(),
        side: Side::RightValue,
    };
    let mut prev = T::neg_infinity();
    for (i, &x) in f.jump_points().iter().enumerate() {
        let (gl, gr) = g.cdf_pair(x)?;
        if gl < prev - slack || gr < gl - slack || gl.is_nan() || gr.is_nan() {
            return Err(Error::Contract(format!("reference CDF is not monotone near x = {x}")));
        }
        prev = gr;
        let left = (f.value_before(i) - gl).abs();
        let right = (f.value_at(i) - gr).abs();
        if left > best.delta {
            best = KolmogorovResult {
                delta: left,
                arg_x: x,
                side: Side::LeftLimit,
            };
        }
        if right > best.delta {
            best = KolmogorovResult {
                delta: right,
                arg_x: x,
                side: Side::RightValue,
            };
        }
    }
    Ok(best)
}

/// Exact `sup_x |F(x) - G(x)|` for two step functions.
pub fn kolmogorov_step_vs_step<T: Real>(f: &EmpiricalCdf<T>, g: &EmpiricalCdf<T>) -> KolmogorovResult<T> {
    let mut best = KolmogorovResult {
        delta: T::zero(),
        arg_x: T::zero(),
        side: Side::RightValue,
    };
    let (fx, gx) = (f.jump_points(), g.jump_points());
    let (mut i, mut j) = (0, 0);
    while i < fx.len() || j < gx.len() {
        let x = match (fx.get(i), gx.get(j)) {
            (Some(&a), Some(&b)) => a.min(b),
            (Some(&a), None) => a,
            (None, Some(&b)) => b,
            (None, None) => unreachable!(),
        };
        while i < fx.len() && fx[i] == x {
            i += 1;
        }
        while j < gx.len() && gx[j] == x {
            j += 1;
        }
        // Right values; left limits equal the right value at the previous point.
        let fv = if i == 0 { T::zero() } else { f.value_at(i - 1) };
        let gv = if j == 0 { T::zero() } else { g.value_at(j - 1) };
        let d = (fv - gv).abs();
        if d > best.delta {
            best = KolmogorovResult {
                delta: d,
                arg_x: x,
                side: Side::RightValue,
            };
        }
    }
    best
}

/// Spectra of `W` for replicates `0..replicates`, in replicate order.
pub fn replicate_spectra<T: Real>(config: &EnsembleConfig, replicates: usize) -> Result<Vec<Spectrum<T>>> {
    config.validate()?;
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let x = sample_matrix::<T>(config, r)?;
            covariance_spectrum(&covariance_matrix(&x))
        })
        .collect()
}

/// Both Monte Carlo distance statistics for one replicate set.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceEstimate<T> {
    /// Distance of the averaged ESD.
    pub delta_p: KolmogorovResult<T>,
    pub se_p: T,
    /// Mean of the per-replicate distances.
    pub delta_p_star: T,
    pub se_star: T,
    pub per_replicate: Vec<T>,
}

/// Contiguous near-equal batches: at most 10, at least one replicate each.
pub fn batch_ranges(replicates: usize) -> Vec<std::ops::Range<usize>> {
    let b = replicates.min(10);
    let (base, extra) = (replicates / b.max(1), replicates % b.max(1));
    let mut out = Vec::with_capacity(b);
    let mut start = 0;
    for k in 0..b {
        let len = base + usize::from(k < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Standard error of the mean from a list of batch statistics.
fn batch_standard_error<T: Real>(values: &[T]) -> T {
    let b = values.len();
    if b < 2 {
        return T::nan();
    }
    let mean = kmean(values.iter().copied()).expect("nonempty");
    let ss = crate::scalar::ksum(values.iter().map(|&x| (x - mean) * (x - mean)));
    (ss / T::from_usize_lossy(b - 1) / T::from_usize_lossy(b)).sqrt()
}

/// Distance statistics of a replicate set against a reference CDF.
pub fn estimate_from_spectra<T: Real, G: CdfEvaluator<T> + Sync>(
    spectra: &[Spectrum<T>],
    reference: &G,
) -> Result<DistanceEstimate<T>> {
    if spectra.is_empty() {
        return Err(Error::Contract("no replicates".into()));
    }
    let pooled = EmpiricalCdf::pooled(spectra.iter().map(|s| s.eigenvalues.as_slice()))?;
    let delta_p = kolmogorov_step_vs_cdf(&pooled, reference)?;
    let per_replicate: Vec<T> = spectra
        .par_iter()
        .map(|s| Ok(kolmogorov_step_vs_cdf(&EmpiricalCdf::from_atoms(&s.eigenvalues)?, reference)?.delta))
        .collect::<Result<_>>()?;
    let batches = batch_ranges(spectra.len());
    let batch_p: Vec<T> = batches
        .par_iter()
        .map(|r| {
            let f = EmpiricalCdf::pooled(spectra[r.clone()].iter().map(|s| s.eigenvalues.as_slice()))?;
            Ok(kolmogorov_step_vs_cdf(&f, reference)?.delta)
        })
        .collect::<Result<_>>()?;
    let batch_star: Vec<T> = batches
        .iter()
        .map(|r| kmean(per_replicate[r.clone()].iter().copied()).expect("nonempty batch"))
        .collect();
    Ok(DistanceEstimate {
        delta_p,
        se_p: batch_standard_error(&batch_p),
        delta_p_star: kmean(per_replicate.iter().copied()).expect("nonempty"),
        se_star: batch_standard_error(&batch_star),
        per_replicate,
    })
}

fn law_for<T: Real>(config: &EnsembleConfig) -> Result<MpLaw<T>> {
    MpLaw::new(T::lit(config.y()))
}

/// `Δ_p` with its batch standard error.
pub fn delta_p_mc<T: Real>(config: &EnsembleConfig, replicates: usize) -> Result<(KolmogorovResult<T>, T)> {
    if replicates < 2 {
        return Err(Error::Contract(format!("Δ_p needs at least 2 replicates, got {replicates}")));
    }
    let spectra = replicate_spectra::<T>(config, replicates)?;
    let est = estimate_from_spectra(&spectra, &law_for::<T>(config)?)?;
    Ok((est.delta_p, est.se_p))
}

/// `Δ_p*` with its batch standard error (NaN for a single replicate).
pub fn delta_p_star_mc<T: Real>(config: &EnsembleConfig, replicates: usize) -> Result<(T, T)> {
    if replicates == 0 {
        return Err(Error::Contract("Δ_p* needs at least one replicate".into()));
    }
    let spectra = replicate_spectra::<T>(config, replicates)?;
    let est = estimate_from_spectra(&spectra, &law_for::<T>(config)?)?;
    Ok((est.delta_p_star, est.se_star))
}

/// Stieltjes transform `(1/N) Σ 1/(λ_k - z)` of the atoms `λ_k`.
pub fn empirical_stieltjes<T: Real>(atoms: &[T], z: ComplexPoint<T>) -> Cplx<T> {
    let zc = z.z();
    ksum_complex(atoms.iter().map(|&l| (Cplx::new(l, T::zero()) - zc).inv())) / T::from_usize_lossy(atoms.len())
}

/// Raw functionals of the smoothing inequality, without its constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothingReport<T> {
    pub v: T,
    #[serde(rename = "V")]
    pub big_v: T,
    pub interval: [T; 2],
    /// `∫ |s - t|(u + iV) du` over the interval widened by the margin.
    pub term_horizontal: T,
    /// Estimate of the part of the horizontal integral cut off by truncation.
    pub truncation_error: T,
    /// `sup_x |Re ∫_v^V (s - t)(x + iw) dw|` over the x grid.
    pub term_vertical: T,
    pub term_v: T,
}

/// Evaluate the three smoothing functionals for two Stieltjes transforms.
pub fn smoothing_terms<T, S, L>(
    s_emp: S,
    s_law: L,
    v: T,
    big_v: T,
    interval: [T; 2],
    grid_points: usize,
) -> Result<SmoothingReport<T>>
where
    T: Real,
    S: Fn(ComplexPoint<T>) -> Result<Cplx<T>> + Sync,
    L: Fn(ComplexPoint<T>) -> Result<Cplx<T>> + Sync,
{
    if !(v > T::zero() && v < big_v) {
        return Err(Error::Contract(format!("need 0 < v < V, got v={v}, V={big_v}")));
    }
    if !(interval[0] <= interval[1]) {
        return Err(Error::Contract("interval endpoints out of order".into()));
    }
    let tol = T::lit(CONTOUR_TOLERANCE);
    let diff = |u: T, w: T| -> Result<Cplx<T>> {
        let z = ComplexPoint::new(u, w)?;
        Ok(s_emp(z)? - s_law(z)?)
    };

    let margin = T::lit(HORIZONTAL_MARGIN);
    let (lo, hi) = (interval[0] - margin, interval[1] + margin);
    let mut failure = None;
    let term_horizontal = adaptive_simpson(
        |u: T| match diff(u, big_v) {
            Ok(d) => d.norm(),
            Err(e) => {
                failure.get_or_insert(e);
                T::zero()
            }
        },
        lo,
        hi,
        tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    // Both transforms behave like -1/z at infinity, so the difference decays
    // at least like |u|⁻² and the cut-off tail is about |Δ(U)|·|U - c|.
    let centre = T::lit(0.5) * (interval[0] + interval[1]);
    let truncation_error =
        diff(hi, big_v)?.norm() * (hi - centre).abs() + diff(lo, big_v)?.norm() * (lo - centre).abs();

    let m = grid_points.max(2);
    let verticals: Vec<T> = (0..m)
        .into_par_iter()
        .map(|k| {
            let x = interval[0] + (interval[1] - interval[0]) * T::from_usize_lossy(k) / T::from_usize_lossy(m - 1);
            let mut failure = None;
            let re = adaptive_simpson(
                |w: T| match diff(x, w) {
                    Ok(d) => d.re,
                    Err(e) => {
                        failure.get_or_insert(e);
                        T::zero()
                    }
                },
                v,
                big_v,
                tol,
            )?;
            match failure {
                Some(e) => Err(e),
                None => Ok(re.abs()),
            }
        })
        .collect::<Result<_>>()?;
    let term_vertical = verticals.iter().fold(T::zero(), |a, &b| a.max(b));
    Ok(SmoothingReport {
        v,
        big_v,
        interval,
        term_horizontal,
        truncation_error,
        term_vertical,
        term_v: v,
    })
}
