//! Row-wise perturbation terms of the self-consistent equation, their
//! ensemble aggregate, and moment sweeps over `n`.
//!
//! For a bottom row `r` of `H` (row `r` of `X`) let `h = X[r,:]/√(n p_n)` and
//! let `T⁽ʳ⁾` be the top block of the resolvent of `H` with that row and
//! column removed. The Schur complement gives
//!
//! ```text
//! -1/R_{n+r} = z + hᵀT⁽ʳ⁾h = z + m̂ + ε1 + ε2 + ε3 + ε4
//! ε1 = Σ_{i≠i'} h_i h_i' T⁽ʳ⁾_{ii'}
//! ε2 = Σ_i (h_i² - 1/n) T⁽ʳ⁾_{ii}
//! ε3 = (Tr T⁽ʳ⁾ - Tr T)/n
//! ε4 = Tr T/n - m̂
//! ```
//!
//! where `m̂ = y ŝ + (y-1)/z` is the ensemble mean of `Tr T/n` and `ŝ` the
//! ensemble mean of the symmetrized transform `Tr R_bottom/p`. Writing
//! `D̂ = z + m̂`, every row satisfies `R = -(1 + εR)/D̂` exactly.
//!
//! `T⁽ʳ⁾` is never formed. With `K' = (W⁽ʳ⁾ - z²)⁻¹`,
//! `T⁽ʳ⁾ = (A⁽ʳ⁾K'A⁽ʳ⁾ᵀ - I)/z`, so only the `(p-1)`-dimensional
//! covariance of the remaining rows is needed. [`DeletionMethod::Direct`]
//! eigendecomposes `W⁽ʳ⁾` for every audited row; [`DeletionMethod::Downdate`]
//! obtains `K'` from one eigendecomposition of `W` through the block-inverse
//! identity `K' = K₋ᵣ₋ᵣ - K₋ᵣᵣ Kᵣ₋ᵣ / Kᵣᵣ`.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{covariance_matrix, replicate_rng, sample_matrix, EnsembleConfig, EntryDist, SampleMatrix, Stream};
use crate::law::{ComplexPoint, MpLaw};
use crate::linalg::{symmetric_eigen, symmetric_eigenvalues, ComplexLu, Matrix, SymmetricEigen};
use crate::scalar::{kmean, ksum, ksum_complex, Cplx, Real};
use crate::{Error, Result};

/// Tolerance of the row identity `R = -(1 + εR)/D̂`.
pub const ROW_IDENTITY_TOLERANCE: f64 = 1e-8;

/// How the deleted-row resolvent is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeletionMethod {
    /// Eigendecompose the reduced covariance for every audited row; the
    /// diagonal resolvent entry comes from an independent complex LU solve.
    Direct,
    /// Exact block-inverse downdate from one eigendecomposition of `W`.
    Downdate,
}

/// The four terms for one row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowEpsilon<T> {
    pub row: usize,
    pub eps1: Cplx<T>,
    pub eps2: Cplx<T>,
    pub eps3: Cplx<T>,
    pub eps4: Cplx<T>,
    /// `R_{n+r, n+r}`.
    pub r_diag: Cplx<T>,
    /// `|R - (-(1 + εR)/D̂)|`.
    pub identity_residual: T,
}

impl<T: Real> RowEpsilon<T> {
    pub fn total(&self) -> Cplx<T> {
        self.eps1 + self.eps2 + self.eps3 + self.eps4
    }
}

/// Terms for the audited rows of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonDecomposition<T> {
    pub z: ComplexPoint<T>,
    pub s_hat: Cplx<T>,
    /// `D̂ = z + y ŝ + (y-1)/z`.
    pub denominator: Cplx<T>,
    /// This sample's `Tr R_bottom / p`.
    pub s_tilde: Cplx<T>,
    /// `Tr T / n - m̂`, shared by all rows of the sample.
    pub eps4: Cplx<T>,
    pub rows: Vec<RowEpsilon<T>>,
    /// Mean over the audited rows of `-ε R / D̂`.
    pub delta_p: Cplx<T>,
    /// `s̃ + 1/D̂ - δ`; zero when every row is audited.
    pub master_residual: Cplx<T>,
}

impl<T: Real> EpsilonDecomposition<T> {
    pub fn max_identity_residual(&self) -> T {
        self.rows.iter().fold(T::zero(), |m, r| m.max(r.identity_residual))
    }
}

/// Per-sample quantities that do not depend on the ensemble mean.
#[derive(Clone, Debug)]
struct RawRow<T> {
    row: usize,
    e1: Cplx<T>,
    e2: Cplx<T>,
    e3: Cplx<T>,
    r: Cplx<T>,
}

#[derive(Clone, Debug)]
struct RawSample<T> {
    s_tilde: Cplx<T>,
    top_mean: Cplx<T>,
    rows: Vec<RawRow<T>>,
    /// `(1/p) Σ_r |R_{n+r}|²` and the mean of `|R_kk|²` over all `n + p` indices.
    r_sq: Option<(T, T)>,
}

fn cz<T: Real>(re: T) -> Cplx<T> {
    Cplx::new(re, T::zero())
}

/// `Σ z/(λ - z²)`, the bottom trace of the resolvent.
fn bottom_trace<T: Real>(eigs: &[T], z: Cplx<T>) -> Cplx<T> {
    let z2 = z * z;
    ksum_complex(eigs.iter().map(|&l| z / (cz(l) - z2)))
}

fn sample_traces<T: Real>(eigs: &[T], z: Cplx<T>, n: usize, p: usize) -> (Cplx<T>, Cplx<T>) {
    let bottom = bottom_trace(eigs, z);
    let top = bottom - z.inv() * T::from_usize_lossy(n - p);
    (bottom / T::from_usize_lossy(p), top / T::from_usize_lossy(n))
}

/// Rows audited in replicate `replicate`: `k` distinct rows, ascending.
pub fn audited_rows(config: &EnsembleConfig, replicate: u64, k: usize) -> Vec<usize> {
    let mut rng = replicate_rng(config.base_seed, replicate, Stream::Audit);
    let mut rows = sample(&mut rng, config.p, k.min(config.p)).into_vec();
    rows.sort_unstable();
    rows
}

/// Reduced-row data shared by both methods: `T⁽ʳ⁾_ii` for all `i`, `hᵀT⁽ʳ⁾h`.
fn row_terms<T: Real>(x: &SampleMatrix<T>, r: usize, t_diag: &[Cplx<T>], quad: Cplx<T>, top_trace: Cplx<T>) -> (Cplx<T>, Cplx<T>, Cplx<T>) {
    let n = x.n();
    let c = x.scale();
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut hh_t = Cplx::new(T::zero(), T::zero());
    let mut e2 = Cplx::new(T::zero(), T::zero());
    let mut tr = Cplx::new(T::zero(), T::zero());
    for (i, &t) in t_diag.iter().enumerate() {
        let h = c * x.entries[(r, i)];
        let h2 = h * h;
        hh_t = hh_t + t * h2;
        e2 = e2 + t * (h2 - inv_n);
        tr = tr + t;
    }
    let e1 = quad - hh_t;
    let e3 = (tr - top_trace) * inv_n;
    (e1, e2, e3)
}

fn raw_direct<T: Real>(
    x: &SampleMatrix<T>,
    w: &Matrix<T>,
    eigs: &[T],
    zs: &[ComplexPoint<T>],
    rows: &[usize],
) -> Result<Vec<RawSample<T>>> {
    let (n, p) = (x.n(), x.p());
    if p < 2 {
        return Err(Error::Contract("row deletion needs p >= 2".into()));
    }
    let c = x.scale();
    let mut out: Vec<RawSample<T>> = zs
        .iter()
        .map(|z| {
            let (s_tilde, top_mean) = sample_traces(eigs, z.z(), n, p);
            RawSample {
                s_tilde,
                top_mean,
                rows: Vec::with_capacity(rows.len()),
                r_sq: None,
            }
        })
        .collect();
    let lus: Vec<ComplexLu<T>> = zs
        .iter()
        .map(|z| {
            let z2 = z.z() * z.z();
            let mut a = w.to_complex();
            for i in 0..p {
                a[(i, i)] = a[(i, i)] - z2;
            }
            ComplexLu::factor(&a)
        })
        .collect::<Result<_>>()?;

    for &r in rows {
        let reduced = w.delete_row_col(r);
        let eig = symmetric_eigen(&reduced)?;
        let others: Vec<usize> = (0..p).filter(|&k| k != r).collect();
        // C' = U' (c X⁽ʳ⁾), (p-1) × n.
        let mut cmat = Matrix::<T>::zeros(p - 1, n);
        for m in 0..p - 1 {
            let urow = eig.vectors.row(m);
            let crow = cmat.row_mut(m);
            for (a, &k) in others.iter().enumerate() {
                let coef = urow[a] * c;
                for (o, &v) in crow.iter_mut().zip(x.entries.row(k)) {
                    *o = *o + coef * v;
                }
            }
        }
        let wcol: Vec<T> = others.iter().map(|&k| w[(k, r)]).collect();
        let uw = eig.vectors.matvec(&wcol);
        for (zi, z) in zs.iter().enumerate() {
            let zc = z.z();
            let z2 = zc * zc;
            let g: Vec<Cplx<T>> = eig.values.iter().map(|&l| (cz(l) - z2).inv()).collect();
            let mut acc = vec![Cplx::new(T::zero(), T::zero()); n];
            for m in 0..p - 1 {
                let gm = g[m];
                for (a, &cv) in acc.iter_mut().zip(cmat.row(m)) {
                    *a = *a + gm * (cv * cv);
                }
            }
            let zinv = zc.inv();
            let t_diag: Vec<Cplx<T>> = acc.iter().map(|&a| (a - T::one()) * zinv).collect();
            let quad = (ksum_complex(g.iter().zip(&uw).map(|(&gm, &u)| gm * (u * u))) - w[(r, r)]) * zinv;
            let top_trace = out[zi].top_mean * T::from_usize_lossy(n);
            let (e1, e2, e3) = row_terms(x, r, &t_diag, quad, top_trace);
            let mut e = vec![Cplx::new(T::zero(), T::zero()); p];
            e[r] = cz(T::one());
            let k_rr = lus[zi].solve(&e)?[r];
            out[zi].rows.push(RawRow {
                row: r,
                e1,
                e2,
                e3,
                r: zc * k_rr,
            });
        }
    }
    Ok(out)
}

fn raw_downdate<T: Real>(
    x: &SampleMatrix<T>,
    w: &Matrix<T>,
    eig: &SymmetricEigen<T>,
    zs: &[ComplexPoint<T>],
    rows: &[usize],
    want_r_sq: bool,
) -> Result<Vec<RawSample<T>>> {
    let (n, p) = (x.n(), x.p());
    if p < 2 {
        return Err(Error::Contract("row deletion needs p >= 2".into()));
    }
    let c = x.scale();
    let u = &eig.vectors;
    // C = U (c X), p × n.
    let cx = x.entries.map(|v| v * c);
    let cmat = u.matmul(&cx)?;
    let mut out = Vec::with_capacity(zs.len());
    for z in zs {
        let zc = z.z();
        let z2 = zc * zc;
        let zinv = zc.inv();
        let (s_tilde, top_mean) = sample_traces(&eig.values, zc, n, p);
        let g: Vec<Cplx<T>> = eig.values.iter().map(|&l| (cz(l) - z2).inv()).collect();
        let k_diag: Vec<Cplx<T>> = (0..p)
            .map(|r| ksum_complex((0..p).map(|m| g[m] * (u[(m, r)] * u[(m, r)]))))
            .collect();
        let mut raw_rows = Vec::with_capacity(rows.len());
        for &r in rows {
            let krr = k_diag[r];
            let cx_r = cx.row(r);
            let mut a = vec![Cplx::new(T::zero(), T::zero()); n];
            let mut b = vec![Cplx::new(T::zero(), T::zero()); n];
            for m in 0..p {
                let (gm, umr) = (g[m], u[(m, r)]);
                let gu = gm * umr;
                for (i, &cmi) in cmat.row(m).iter().enumerate() {
                    let ch = cmi - umr * cx_r[i];
                    a[i] = a[i] + gm * (ch * ch);
                    b[i] = b[i] + gu * ch;
                }
            }
            let t_diag: Vec<Cplx<T>> = a
                .iter()
                .zip(&b)
                .map(|(&ai, &bi)| (ai - bi * bi / krr - T::one()) * zinv)
                .collect();
            let wrr = w[(r, r)];
            let mut alpha = Cplx::new(T::zero(), T::zero());
            let mut beta = Cplx::new(T::zero(), T::zero());
            for m in 0..p {
                let d = eig.values[m] - wrr;
                let u2 = u[(m, r)] * u[(m, r)];
                alpha = alpha + g[m] * (d * d * u2);
                beta = beta + g[m] * (d * u2);
            }
            let quad = (alpha - beta * beta / krr - wrr) * zinv;
            let (e1, e2, e3) = row_terms(x, r, &t_diag, quad, top_mean * T::from_usize_lossy(n));
            raw_rows.push(RawRow {
                row: r,
                e1,
                e2,
                e3,
                r: zc * krr,
            });
        }
        let r_sq = want_r_sq.then(|| {
            let bottom: Vec<T> = k_diag.iter().map(|&k| (zc * k).norm_sqr()).collect();
            let mut top = vec![Cplx::new(T::zero(), T::zero()); n];
            for m in 0..p {
                let gm = g[m];
                for (t, &cmi) in top.iter_mut().zip(cmat.row(m)) {
                    *t = *t + gm * (cmi * cmi);
                }
            }
            let top_sq = top.iter().map(|&t| ((t - T::one()) * zinv).norm_sqr());
            let bottom_mean = kmean(bottom.iter().copied()).expect("p >= 2");
            let all = ksum(bottom.iter().copied().chain(top_sq)) / T::from_usize_lossy(n + p);
            (bottom_mean, all)
        });
        out.push(RawSample {
            s_tilde,
            top_mean,
            rows: raw_rows,
            r_sq,
        });
    }
    Ok(out)
}

fn finalize<T: Real>(raw: &RawSample<T>, z: ComplexPoint<T>, y: T, s_hat: Cplx<T>) -> EpsilonDecomposition<T> {
    let zc = z.z();
    let m_hat = s_hat * y + zc.inv() * (y - T::one());
    let d = zc + m_hat;
    let eps4 = raw.top_mean - m_hat;
    let rows: Vec<RowEpsilon<T>> = raw
        .rows
        .iter()
        .map(|rr| {
            let eps = rr.e1 + rr.e2 + rr.e3 + eps4;
            let predicted = -(cz(T::one()) + eps * rr.r) / d;
            RowEpsilon {
                row: rr.row,
                eps1: rr.e1,
                eps2: rr.e2,
                eps3: rr.e3,
                eps4,
                r_diag: rr.r,
                identity_residual: (rr.r - predicted).norm(),
            }
        })
        .collect();
    let delta_p = if rows.is_empty() {
        Cplx::new(T::zero(), T::zero())
    } else {
        ksum_complex(rows.iter().map(|r| -(r.total() * r.r_diag) / d)) / T::from_usize_lossy(rows.len())
    };
    EpsilonDecomposition {
        z,
        s_hat,
        denominator: d,
        s_tilde: raw.s_tilde,
        eps4,
        master_residual: raw.s_tilde + d.inv() - delta_p,
        rows,
        delta_p,
    }
}

fn raw_for<T: Real>(
    x: &SampleMatrix<T>,
    zs: &[ComplexPoint<T>],
    rows: &[usize],
    method: DeletionMethod,
    want_r_sq: bool,
) -> Result<Vec<RawSample<T>>> {
    if let Some(&bad) = rows.iter().find(|&&r| r >= x.p()) {
        return Err(Error::Contract(format!("row {bad} out of range for p = {}", x.p())));
    }
    let w = covariance_matrix(x).values;
    match method {
        DeletionMethod::Direct => {
            let eigs = symmetric_eigenvalues(&w)?;
            raw_direct(x, &w, &eigs, zs, rows)
        }
        DeletionMethod::Downdate => {
            let eig = symmetric_eigen(&w)?;
            raw_downdate(x, &w, &eig, zs, rows, want_r_sq)
        }
    }
}

/// ε terms of the given rows of one sample against a supplied ensemble mean
/// `s_hat` of the symmetrized transform.
pub fn epsilon_decomposition<T: Real>(
    x: &SampleMatrix<T>,
    z: ComplexPoint<T>,
    s_hat: Cplx<T>,
    rows: &[usize],
    method: DeletionMethod,
) -> Result<EpsilonDecomposition<T>> {
    let raw = raw_for(x, &[z], rows, method, false)?;
    Ok(finalize(&raw[0], z, T::lit(x.config.y()), s_hat))
}

/// Two-pass ensemble result at one point `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleEpsilon<T> {
    pub z: ComplexPoint<T>,
    pub replicates: usize,
    pub s_hat: Cplx<T>,
    pub denominator: Cplx<T>,
    /// Mean of `-εR/D̂` over all audited (replicate, row) pairs.
    pub delta_hat: Cplx<T>,
    /// `ŝ + 1/D̂ - δ̂`.
    pub master_residual: Cplx<T>,
    pub max_identity_residual: T,
    /// `max |ε3| · n v`, at most one.
    pub max_eps3_scaled: T,
    pub samples: Vec<EpsilonDecomposition<T>>,
}

/// Pass one averages the symmetrized transform over the replicates; pass two
/// evaluates every audited row against that mean.
pub fn ensemble_epsilon<T: Real>(
    config: &EnsembleConfig,
    z: ComplexPoint<T>,
    replicates: usize,
    rows_per_replicate: usize,
    method: DeletionMethod,
) -> Result<EnsembleEpsilon<T>> {
    config.validate()?;
    if replicates == 0 {
        return Err(Error::Contract("no replicates".into()));
    }
    let raws: Vec<RawSample<T>> = (0..replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let x = sample_matrix::<T>(config, rep)?;
            let rows = audited_rows(config, rep, rows_per_replicate);
            Ok(raw_for(&x, &[z], &rows, method, false)?.remove(0))
        })
        .collect::<Result<_>>()?;
    let y = T::lit(config.y());
    let s_hat = ksum_complex(raws.iter().map(|r| r.s_tilde)) / T::from_usize_lossy(replicates);
    let samples: Vec<EpsilonDecomposition<T>> = raws.iter().map(|r| finalize(r, z, y, s_hat)).collect();
    let denominator = samples[0].denominator;
    let pairs: Vec<Cplx<T>> = samples
        .iter()
        .flat_map(|s| s.rows.iter().map(|r| -(r.total() * r.r_diag) / denominator))
        .collect();
    let delta_hat = if pairs.is_empty() {
        Cplx::new(T::zero(), T::zero())
    } else {
        ksum_complex(pairs.iter().copied()) / T::from_usize_lossy(pairs.len())
    };
    let nv = T::from_usize_lossy(config.n) * z.v;
    let rows = samples.iter().flat_map(|s| s.rows.iter());
    let (max_res, max_e3) = rows.fold((T::zero(), T::zero()), |(a, b), r| {
        (a.max(r.identity_residual), b.max(r.eps3.norm() * nv))
    });
    Ok(EnsembleEpsilon {
        z,
        replicates,
        s_hat,
        denominator,
        delta_hat,
        master_residual: s_hat + denominator.inv() - delta_hat,
        max_identity_residual: max_res,
        max_eps3_scaled: max_e3,
        samples,
    })
}

/// Choice of the imaginary part `v` as a function of `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VSchedule {
    Fixed(f64),
    /// `v = c / √n`.
    Scaled(f64),
}

impl VSchedule {
    /// `v = 2 √M₄ / √n`, the threshold scale of the diagnostics.
    pub fn threshold(dist: EntryDist) -> Self {
        VSchedule::Scaled(2.0 * dist.fourth_moment().sqrt())
    }

    pub fn v(&self, n: usize) -> f64 {
        match *self {
            VSchedule::Fixed(v) => v,
            VSchedule::Scaled(c) => c / (n as f64).sqrt(),
        }
    }
}

/// Grid of a moment sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub ns: Vec<usize>,
    pub y: f64,
    pub entry_dist: EntryDist,
    pub u: f64,
    pub v_schedules: Vec<VSchedule>,
    pub replicates: usize,
    pub rows_per_replicate: usize,
    pub base_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepMoments {
    pub eps1_sq: f64,
    pub eps2_sq: f64,
    pub eps4_sq: f64,
    pub eps4_quartic: f64,
    /// `(1/p) Σ_r E|R_{n+r}|²`.
    pub r_sq: f64,
    /// Mean of `E|R_kk|²` over all `n + p` indices.
    pub r_sq_all: f64,
}

/// Rate expressions the moments are compared against (unit constants).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRates {
    /// `(1 + |ŝ|)/(n v)`.
    pub eps12: f64,
    /// `4/(n v²)`.
    pub eps4_sq: f64,
    /// `M₄ (1 + |ŝ|)/(n² v³)`.
    pub eps4_quartic: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRatios {
    pub eps1: f64,
    pub eps2: f64,
    pub eps4_sq: f64,
    pub eps4_quartic: f64,
    pub r_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepPoint {
    pub n: usize,
    pub p: usize,
    pub u: f64,
    pub v: f64,
    pub s_hat: [f64; 2],
    pub moments: SweepMoments,
    pub rates: SweepRates,
    pub ratios: SweepRatios,
    pub max_eps3_scaled: f64,
    pub max_identity_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaSweepReport {
    pub spec: SweepSpec,
    pub points: Vec<SweepPoint>,
}

impl LemmaSweepReport {
    pub fn point(&self, n: usize, v: f64) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.n == n && p.v == v)
    }
}

/// Measured moments of the ε terms and of the resolvent diagonal over an
/// `(n, v)` grid, using the downdate route.
pub fn lemma_bound_sweep(spec: &SweepSpec) -> Result<LemmaSweepReport> {
    if spec.ns.is_empty() || spec.v_schedules.is_empty() {
        return Err(Error::Plan("sweep grid is empty".into()));
    }
    if spec.replicates == 0 {
        return Err(Error::Plan("sweep needs at least one replicate".into()));
    }
    let m4 = spec.entry_dist.fourth_moment();
    let mut points = Vec::new();
    for &n in &spec.ns {
        let p = ((spec.y * n as f64).round() as usize).max(2);
        let config = EnsembleConfig::dense(n, p, spec.entry_dist, spec.base_seed);
        config.validate()?;
        let zs: Vec<ComplexPoint<f64>> = spec
            .v_schedules
            .iter()
            .map(|s| ComplexPoint::new(spec.u, s.v(n)))
            .collect::<Result<_>>()?;
        let raws: Vec<Vec<RawSample<f64>>> = (0..spec.replicates as u64)
            .into_par_iter()
            .map(|rep| {
                let x = sample_matrix::<f64>(&config, rep)?;
                let rows = audited_rows(&config, rep, spec.rows_per_replicate);
                raw_for(&x, &zs, &rows, DeletionMethod::Downdate, true)
            })
            .collect::<Result<_>>()?;
        let y = config.y();
        for (zi, &z) in zs.iter().enumerate() {
            let s_hat = ksum_complex(raws.iter().map(|r| r[zi].s_tilde)) / spec.replicates as f64;
            let decs: Vec<EpsilonDecomposition<f64>> = raws.iter().map(|r| finalize(&r[zi], z, y, s_hat)).collect();
            let rows = || decs.iter().flat_map(|d| d.rows.iter());
            let eps1_sq = kmean(rows().map(|r| r.eps1.norm_sqr())).unwrap_or(f64::NAN);
            let eps2_sq = kmean(rows().map(|r| r.eps2.norm_sqr())).unwrap_or(f64::NAN);
            let e4: Vec<f64> = decs.iter().map(|d| d.eps4.norm_sqr()).collect();
            let eps4_sq = kmean(e4.iter().copied()).expect("replicates > 0");
            let eps4_quartic = kmean(e4.iter().map(|&a| a * a)).expect("replicates > 0");
            let r_sq = kmean(raws.iter().map(|r| r[zi].r_sq.expect("requested").0)).expect("replicates > 0");
            let r_sq_all = kmean(raws.iter().map(|r| r[zi].r_sq.expect("requested").1)).expect("replicates > 0");
            let nf = n as f64;
            let s_abs = s_hat.norm();
            let rates = SweepRates {
                eps12: (1.0 + s_abs) / (nf * z.v),
                eps4_sq: 4.0 / (nf * z.v * z.v),
                eps4_quartic: m4 * (1.0 + s_abs) / (nf * nf * z.v.powi(3)),
            };
            let nv = nf * z.v;
            points.push(SweepPoint {
                n,
                p,
                u: z.u,
                v: z.v,
                s_hat: [s_hat.re, s_hat.im],
                moments: SweepMoments {
                    eps1_sq,
                    eps2_sq,
                    eps4_sq,
                    eps4_quartic,
                    r_sq,
                    r_sq_all,
                },
                ratios: SweepRatios {
                    eps1: eps1_sq / rates.eps12,
                    eps2: eps2_sq / rates.eps12,
                    eps4_sq: eps4_sq / rates.eps4_sq,
                    eps4_quartic: eps4_quartic / rates.eps4_quartic,
                    r_sq,
                },
                rates,
                max_eps3_scaled: rows().fold(0.0, |m, r| m.max(r.eps3.norm() * nv)),
                max_identity_residual: rows().fold(0.0, |m, r| m.max(r.identity_residual)),
            });
        }
    }
    Ok(LemmaSweepReport {
        spec: spec.clone(),
        points,
    })
}

/// One grid point of [`herglotz_region_check`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HerglotzPoint {
    pub u: f64,
    pub v: f64,
    pub s_hat: [f64; 2],
    /// `|z + y ŝ + (y-1)/z|`.
    pub modulus: f64,
    pub im_denominator: f64,
    /// The same modulus with the limiting transform in place of `ŝ`.
    pub modulus_exact: f64,
    /// `Im(y δ + z + (y-1)/z) ≥ 0` with `δ = ŝ + 1/D̂`.
    pub unit_bound_hypothesis: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HerglotzReport {
    pub n: usize,
    pub p: usize,
    pub y: f64,
    pub replicates: usize,
    pub points: Vec<HerglotzPoint>,
    /// Points with `Im D̂ ≤ 0`.
    pub positivity_failures: usize,
    /// `1/√y`.
    pub reciprocal_bound: f64,
    /// `√y`, which the limiting law attains as an infimum.
    pub sqrt_bound: f64,
    /// Points with `|D̂| < 1/√y`.
    pub below_reciprocal: usize,
    /// Points with `|D| < 1/√y` for the limiting transform.
    pub exact_below_reciprocal: usize,
    /// Points with `|D| < √y` for the limiting transform.
    pub exact_below_sqrt: usize,
    /// Points failing the hypothesis of the lower bound `|D̂| ≥ 1`.
    pub unit_bound_excluded: usize,
    /// Points meeting the hypothesis with `|D̂| < 1`.
    pub unit_bound_violations: usize,
}

/// Sign and modulus of the fixed-point denominator over a grid of `z`,
/// using the Monte Carlo mean of the symmetrized transform.
pub fn herglotz_region_check(
    config: &EnsembleConfig,
    grid: &[ComplexPoint<f64>],
    replicates: usize,
) -> Result<HerglotzReport> {
    config.validate()?;
    let threshold = VSchedule::threshold(config.entry_dist).v(config.n);
    if let Some(z) = grid.iter().find(|z| z.v < threshold) {
        return Err(Error::Contract(format!(
            "v = {} is below the threshold 2√M4/√n = {threshold}",
            z.v
        )));
    }
    let spectra = crate::distance::replicate_spectra::<f64>(config, replicates)?;
    let y = config.y();
    let law = MpLaw::new(y)?;
    let (rb, sb) = (1.0 / y.sqrt(), y.sqrt());
    let mut points = Vec::with_capacity(grid.len());
    for &z in grid {
        let zc = z.z();
        let s_hat = ksum_complex(spectra.iter().map(|s| bottom_trace(&s.eigenvalues, zc) / s.eigenvalues.len() as f64))
            / replicates as f64;
        let d = law.fixed_point_denominator(z, s_hat);
        let exact = law.symmetrized_stieltjes(z)?.value;
        let delta = s_hat + d.inv();
        let hyp = (delta * y + zc + zc.inv() * (y - 1.0)).im >= 0.0;
        points.push(HerglotzPoint {
            u: z.u,
            v: z.v,
            s_hat: [s_hat.re, s_hat.im],
            modulus: d.norm(),
            im_denominator: d.im,
            modulus_exact: law.fixed_point_denominator(z, exact).norm(),
            unit_bound_hypothesis: hyp,
        });
    }
    let count = |f: &dyn Fn(&HerglotzPoint) -> bool| points.iter().filter(|p| f(p)).count();
    Ok(HerglotzReport {
        n: config.n,
        p: config.p,
        y,
        replicates,
        positivity_failures: count(&|p| p.im_denominator <= 0.0),
        reciprocal_bound: rb,
        sqrt_bound: sb,
        below_reciprocal: count(&|p| p.modulus < rb),
        exact_below_reciprocal: count(&|p| p.modulus_exact < rb),
        exact_below_sqrt: count(&|p| p.modulus_exact < sb * (1.0 - 1e-12)),
        unit_bound_excluded: count(&|p| !p.unit_bound_hypothesis),
        unit_bound_violations: count(&|p| p.unit_bound_hypothesis && p.modulus < 1.0),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(u: f64, v: f64) -> ComplexPoint<f64> {
        ComplexPoint::new(u, v).unwrap()
    }

    #[test]
    fn methods_agree() {
        let c = EnsembleConfig::dense(24, 12, EntryDist::Gaussian, 8);
        let x = sample_matrix::<f64>(&c, 0).unwrap();
        let z = pt(0.7, 0.2);
        let s_hat = Cplx::new(-0.3, 0.9);
        let rows = [0, 5, 11];
        let a = epsilon_decomposition(&x, z, s_hat, &rows, DeletionMethod::Direct).unwrap();
        let b = epsilon_decomposition(&x, z, s_hat, &rows, DeletionMethod::Downdate).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert!((ra.eps1 - rb.eps1).norm() < 1e-10);
            assert!((ra.eps2 - rb.eps2).norm() < 1e-10);
            assert!((ra.eps3 - rb.eps3).norm() < 1e-10);
            assert!((ra.r_diag - rb.r_diag).norm() < 1e-10);
        }
        assert!(a.max_identity_residual() < 1e-10);
        assert!(b.max_identity_residual() < 1e-10);
    }

    #[test]
    fn single_nonzero_row_has_no_cross_terms() {
        let mut entries = Matrix::<f64>::zeros(3, 5);
        for i in 0..5 {
            entries[(1, i)] = (i as f64) - 1.7;
        }
        let x = SampleMatrix::from_array(entries).unwrap();
        let d = epsilon_decomposition(&x, pt(0.2, 0.5), Cplx::new(0.0, 1.0), &[1], DeletionMethod::Direct).unwrap();
        assert!(d.rows[0].eps1.norm() < 1e-14);
    }

    #[test]
    fn all_rows_close_the_master_equation() {
        let c = EnsembleConfig::dense(16, 8, EntryDist::Rademacher, 4);
        let e = ensemble_epsilon::<f64>(&c, pt(0.5, 0.4), 6, 8, DeletionMethod::Downdate).unwrap();
        assert!(e.master_residual.norm() < 1e-12);
        assert!(e.max_eps3_scaled <= 1.0);
        for s in &e.samples {
            assert!(s.master_residual.norm() < 1e-12);
        }
    }

    #[test]
    fn rademacher_rows_have_no_variance_term() {
        let c = EnsembleConfig::dense(16, 8, EntryDist::Rademacher, 4);
        let x = sample_matrix::<f64>(&c, 0).unwrap();
        let d = epsilon_decomposition(&x, pt(0.5, 0.4), Cplx::new(0.0, 1.0), &[0, 3], DeletionMethod::Downdate).unwrap();
        assert!(d.rows.iter().all(|r| r.eps2.norm() < 1e-13));
    }

    #[test]
    fn audited_rows_are_distinct_and_reproducible() {
        let c = EnsembleConfig::dense(64, 32, EntryDist::Gaussian, 1);
        let a = audited_rows(&c, 5, 8);
        assert_eq!(a, audited_rows(&c, 5, 8));
        assert_eq!(a.len(), 8);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(audited_rows(&c, 0, 100).len(), 32);
    }

    #[test]
    fn herglotz_rejects_small_v() {
        let c = EnsembleConfig::dense(64, 64, EntryDist::Rademacher, 1);
        assert!(herglotz_region_check(&c, &[pt(1.0, 0.01)], 2).is_err());
    }

    #[test]
    fn v_schedules() {
        assert_eq!(VSchedule::Fixed(0.5).v(100), 0.5);
        assert_eq!(VSchedule::threshold(EntryDist::Rademacher).v(16), 0.5);
        let json = serde_json::to_string(&VSchedule::Scaled(2.0)).unwrap();
        assert_eq!(json, r#"{"scaled":2.0}"#);
    }
}
