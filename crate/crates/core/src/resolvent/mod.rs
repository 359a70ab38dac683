//! Resolvents of the Hermitized sample matrix and the algebraic identities
//! they satisfy.
//!
//! With `A = Xᵀ/√(n p_n)` and `H = [[0, A], [Aᵀ, 0]]`, the resolvent
//! `R(z) = (H - z)⁻¹` has the closed block form
//!
//! ```text
//! [ z (AAᵀ - z²)⁻¹     A (AᵀA - z²)⁻¹ ]
//! [ (AᵀA - z²)⁻¹ Aᵀ    z (AᵀA - z²)⁻¹ ]
//! ```
//!
//! and `AᵀA = W`. The first `n` indices ("top") belong to the columns of `X`,
//! the last `p` ("bottom") to its rows.

mod epsilon;

pub use epsilon::{
    audited_rows, ensemble_epsilon, epsilon_decomposition, herglotz_region_check, lemma_bound_sweep,
    DeletionMethod, EnsembleEpsilon, EpsilonDecomposition, HerglotzPoint, HerglotzReport, LemmaSweepReport,
    RowEpsilon, SweepMoments, SweepPoint, SweepRates, SweepRatios, SweepSpec, VSchedule, ROW_IDENTITY_TOLERANCE,
};

use serde::Serialize;

use crate::ensemble::{HermitizationMatrix, SampleMatrix};
use crate::law::ComplexPoint;
use crate::linalg::{inverse_with_residual, symmetric_eigenvalues, Matrix};
use crate::scalar::{ksum_complex, Cplx, Real};
use crate::{Error, Result};

/// `‖(H - z)R - I‖_max` accepted from the complex solver.
pub const INVERSE_TOLERANCE: f64 = 1e-9;
/// Block formula deviation accepted by [`verify_block_formula`].
pub const BLOCK_TOLERANCE: f64 = 1e-8;
/// Trace identity residual accepted by [`trace_identities`].
pub const TRACE_TOLERANCE: f64 = 1e-9;
/// Schur complement residual accepted by [`schur_check`].
pub const SCHUR_TOLERANCE: f64 = 1e-8;
/// Slack on the interlacing bound.
pub const INTERLACING_SLACK: f64 = 1e-12;

/// Diagonal and traces of one resolvent.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSample<T> {
    pub z: ComplexPoint<T>,
    pub diag: Vec<Cplx<T>>,
    pub trace: Cplx<T>,
    /// (sum over the first `n` indices, sum over the last `p`).
    pub block_traces: (Cplx<T>, Cplx<T>),
    pub n: usize,
    pub p: usize,
    /// `‖(H - z)R - I‖_max`.
    pub inverse_residual: T,
}

/// `(M - z)⁻¹` for a real symmetric `M`, with its residual.
pub fn shifted_inverse<T: Real>(m: &Matrix<T>, z: Cplx<T>) -> Result<(Matrix<Cplx<T>>, T)> {
    let mut a = m.to_complex();
    for i in 0..m.rows() {
        a[(i, i)] = a[(i, i)] - z;
    }
    inverse_with_residual(&a)
}

/// Resolvent of `H` at `z`, checked against the spectral bounds
/// `|R_jj| ≤ 1/v` and `Im Tr R > 0`.
pub fn resolvent<T: Real>(h: &HermitizationMatrix<T>, z: ComplexPoint<T>) -> Result<ResolventSample<T>> {
    let (r, res) = shifted_inverse(&h.values, z.z())?;
    if !(res <= T::lit(INVERSE_TOLERANCE)) {
        return Err(Error::Numerical(format!("resolvent residual {res:e} exceeds {INVERSE_TOLERANCE:e}")));
    }
    let diag = r.diagonal();
    let bound = T::one() / z.v;
    let worst = diag.iter().fold(T::zero(), |m, d| m.max(d.norm()));
    if worst > bound * (T::one() + T::lit(1e-12)) {
        return Err(Error::identity(
            "|R_jj| <= 1/v",
            (worst - bound).to_f64_lossy(),
            0.0,
        ));
    }
    let top = ksum_complex(diag[..h.n].iter().copied());
    let bottom = ksum_complex(diag[h.n..].iter().copied());
    let trace = top + bottom;
    if !(trace.im > T::zero()) {
        return Err(Error::identity("Im Tr R > 0", -trace.im.to_f64_lossy(), 0.0));
    }
    Ok(ResolventSample {
        z,
        diag,
        trace,
        block_traces: (top, bottom),
        n: h.n,
        p: h.p,
        inverse_residual: res,
    })
}

/// Largest elementwise deviation between the directly inverted resolvent and
/// its closed block form.
pub fn verify_block_formula<T: Real>(x: &SampleMatrix<T>, z: ComplexPoint<T>) -> Result<T> {
    let (n, p) = (x.n(), x.p());
    let c = x.scale();
    let zc = z.z();
    let z2 = zc * zc;
    let h = crate::ensemble::hermitization(x);
    let (r, _) = shifted_inverse(&h.values, zc)?;

    // (AAᵀ - z²)⁻¹ with AAᵀ = c² XᵀX, and (AᵀA - z²)⁻¹ with AᵀA = W.
    let aat = x.entries.transpose().scaled_gram_rows(c * c);
    let w = x.entries.scaled_gram_rows(c * c);
    let (g_top, _) = shifted_inverse(&aat, z2)?;
    let (g_bot, _) = shifted_inverse(&w, z2)?;
    let a = |i: usize, k: usize| x.entries[(k, i)] * c;

    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((r[(i, j)] - g_top[(i, j)] * zc).norm());
        }
        for k in 0..p {
            // (A G_bot)_{ik} and (G_bot Aᵀ)_{ki}
            let mut tr = Cplx::new(T::zero(), T::zero());
            for m in 0..p {
                tr = tr + g_bot[(m, k)] * a(i, m);
            }
            worst = worst.max((r[(i, n + k)] - tr).norm());
            let mut bl = Cplx::new(T::zero(), T::zero());
            for m in 0..p {
                bl = bl + g_bot[(k, m)] * a(i, m);
            }
            worst = worst.max((r[(n + k, i)] - bl).norm());
        }
    }
    for k in 0..p {
        for l in 0..p {
            worst = worst.max((r[(n + k, n + l)] - g_bot[(k, l)] * zc).norm());
        }
    }
    if worst > T::lit(BLOCK_TOLERANCE) {
        return Err(Error::identity("block resolvent formula", worst.to_f64_lossy(), BLOCK_TOLERANCE));
    }
    Ok(worst)
}

/// Residuals of the two linear relations between the block traces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceResiduals<T> {
    /// `|(1/n) Tr_top - [(1/n) Tr_bottom + (y-1)/z]|`.
    pub top_from_bottom: T,
    /// `|(1/p) Tr_bottom - [(1/p) Tr_top - (y-1)/(yz)]|`.
    pub bottom_from_top: T,
}

/// Check the trace identities. The `n - p` zero eigenvalues of `H` put
/// exactly `(y-1)/z` of extra mass into the normalized top trace.
pub fn trace_identities<T: Real>(r: &ResolventSample<T>, y: T, z: ComplexPoint<T>) -> Result<TraceResiduals<T>> {
    let zc = z.z();
    let n = T::from_usize_lossy(r.n);
    let p = T::from_usize_lossy(r.p);
    let (top, bottom) = r.block_traces;
    let shift = zc.inv() * (y - T::one());
    let first = (top / n - (bottom / n + shift)).norm();
    let second = (bottom / p - (top / p - shift / y)).norm();
    let worst = first.max(second);
    if worst > T::lit(TRACE_TOLERANCE) {
        return Err(Error::identity("block trace identity", worst.to_f64_lossy(), TRACE_TOLERANCE));
    }
    Ok(TraceResiduals {
        top_from_bottom: first,
        bottom_from_top: second,
    })
}

/// `|1/R_jj - (H_jj - z - h_jᵀ (H⁽ʲ⁾ - z)⁻¹ h_j)|`, both sides by direct inversion.
pub fn schur_check<T: Real>(h: &Matrix<T>, z: ComplexPoint<T>, j: usize) -> Result<T> {
    if !h.is_square() || j >= h.rows() {
        return Err(Error::Contract(format!("index {j} out of range for order {}", h.rows())));
    }
    let zc = z.z();
    let (r, _) = shifted_inverse(h, zc)?;
    let reduced = h.delete_row_col(j);
    let (rj, _) = shifted_inverse(&reduced, zc)?;
    let hj: Vec<T> = (0..h.rows()).filter(|&k| k != j).map(|k| h[(j, k)]).collect();
    let mut quad = Cplx::new(T::zero(), T::zero());
    for (a, &ha) in hj.iter().enumerate() {
        if ha == T::zero() {
            continue;
        }
        for (b, &hb) in hj.iter().enumerate() {
            quad = quad + rj[(a, b)] * (ha * hb);
        }
    }
    let rhs = Cplx::new(h[(j, j)], T::zero()) - zc - quad;
    let res = (r[(j, j)].inv() - rhs).norm();
    if res > T::lit(SCHUR_TOLERANCE) {
        return Err(Error::identity("Schur complement", res.to_f64_lossy(), SCHUR_TOLERANCE));
    }
    Ok(res)
}

/// `(|Tr R - Tr R⁽ᵏ⁾|, 1/v)` from the eigenvalues of `H` and of `H` with row
/// and column `k` deleted.
pub fn interlacing_check<T: Real>(h: &Matrix<T>, z: ComplexPoint<T>, k: usize) -> Result<(T, T)> {
    if !h.is_square() || k >= h.rows() {
        return Err(Error::Contract(format!("index {k} out of range for order {}", h.rows())));
    }
    let zc = z.z();
    let trace = |eigs: &[T]| ksum_complex(eigs.iter().map(|&mu| (Cplx::new(mu, T::zero()) - zc).inv()));
    let full = symmetric_eigenvalues(h)?;
    let reduced = symmetric_eigenvalues(&h.delete_row_col(k))?;
    let lhs = (trace(&full) - trace(&reduced)).norm();
    let bound = T::one() / z.v;
    if lhs > bound + T::lit(INTERLACING_SLACK) {
        return Err(Error::identity(
            "|Tr R - Tr R^(k)| <= 1/v",
            (lhs - bound).to_f64_lossy(),
            INTERLACING_SLACK,
        ));
    }
    Ok((lhs, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{hermitization, sample_matrix, EnsembleConfig, EntryDist};

    fn pt(u: f64, v: f64) -> ComplexPoint<f64> {
        ComplexPoint::new(u, v).unwrap()
    }

    #[test]
    fn zero_matrix_resolvent() {
        let h = HermitizationMatrix {
            values: Matrix::<f64>::zeros(2, 2),
            n: 1,
            p: 1,
        };
        let r = resolvent(&h, pt(0.0, 1.0)).unwrap();
        for d in &r.diag {
            assert!((d - Cplx::new(0.0, 1.0)).norm() < 1e-15);
        }
        assert!((r.trace - Cplx::new(0.0, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn scalar_block_formula() {
        let x = SampleMatrix::from_array(Matrix::from_row_major(1, 1, vec![1.0f64]).unwrap()).unwrap();
        let z = pt(0.3, 0.7);
        let dev = verify_block_formula(&x, z).unwrap();
        assert!(dev < 1e-15);
        let r = resolvent(&hermitization(&x), z).unwrap();
        let zc = z.z();
        let closed = zc / (Cplx::new(1.0, 0.0) - zc * zc);
        assert!((r.diag[0] - closed).norm() < 1e-15);
    }

    #[test]
    fn order_two_schur() {
        let h = Matrix::from_row_major(2, 2, vec![0.0, 1.5, 1.5, 0.0]).unwrap();
        let z = pt(0.2, 0.4);
        assert!(schur_check(&h, z, 0).unwrap() < 1e-14);
        assert!(schur_check(&h, z, 1).unwrap() < 1e-14);
        assert!(schur_check(&h, z, 2).is_err());
    }

    #[test]
    fn deletion_from_zero_matrix() {
        let h = Matrix::<f64>::zeros(4, 4);
        let z = pt(0.5, 0.25);
        let (lhs, bound) = interlacing_check(&h, z, 2).unwrap();
        assert!((lhs - 1.0 / z.z().norm()).abs() < 1e-14);
        assert_eq!(bound, 4.0);
    }

    #[test]
    fn square_case_block_traces_agree() {
        let c = EnsembleConfig::dense(6, 6, EntryDist::Gaussian, 2);
        let x = sample_matrix::<f64>(&c, 0).unwrap();
        let r = resolvent(&hermitization(&x), pt(0.4, 0.3)).unwrap();
        assert!((r.block_traces.0 - r.block_traces.1).norm() < 1e-12);
    }

    #[test]
    fn trace_residual_rejects_tampering() {
        let c = EnsembleConfig::dense(8, 4, EntryDist::Rademacher, 2);
        let x = sample_matrix::<f64>(&c, 0).unwrap();
        let z = pt(0.4, 0.3);
        let mut r = resolvent(&hermitization(&x), z).unwrap();
        assert!(trace_identities(&r, 0.5, z).is_ok());
        r.block_traces.0 += Cplx::new(1e-6, 0.0);
        assert!(matches!(
            trace_identities(&r, 0.5, z),
            Err(Error::IdentityViolation { .. })
        ));
    }
}
