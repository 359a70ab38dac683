//! Symmetric eigensolver: Householder reduction to tridiagonal form followed
//! by the implicit-shift QL iteration (the EISPACK tred2/tql2 pair).
//!
//! The reduction keeps the full symmetric matrix in storage and applies each
//! reflector as a symmetric rank-two update, so every inner loop runs over a
//! contiguous row. Eigenvectors, when requested, are carried as the rows of
//! `Vᵀ` for the same reason.

use crate::linalg::{axpy, dot, Matrix};
use crate::scalar::Real;
use crate::{Error, Result};

/// Eigenvalues in ascending order with matching eigenvectors stored as rows.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    /// Row `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix<T>,
}

impl<T: Real> SymmetricEigen<T> {
    /// `max_k ‖A v_k − λ_k v_k‖∞`.
    pub fn residual(&self, a: &Matrix<T>) -> T {
        let mut worst = T::zero();
        for (k, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.row(k);
            let av = a.matvec(v);
            for (x, &vi) in av.iter().zip(v) {
                worst = worst.max((*x - lambda * vi).abs());
            }
        }
        worst
    }

    /// Reassemble `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.values.len();
        let mut out = Matrix::zeros(n, n);
        for (k, &lambda) in self.values.iter().enumerate() {
            let v = self.vectors.row(k);
            for i in 0..n {
                let s = lambda * v[i];
                axpy(s, v, out.row_mut(i));
            }
        }
        out
    }
}

/// Reduce a symmetric matrix to tridiagonal form `Qᵀ A Q = T`.
///
/// Returns `(d, e, qt)` where `d` is the diagonal of `T`, `e[i]` couples
/// indices `i - 1` and `i` (`e[0] = 0`), and `qt` holds `Qᵀ` when requested.
pub fn tridiagonalize<T: Real>(a: &Matrix<T>, want_q: bool) -> (Vec<T>, Vec<T>, Option<Matrix<T>>) {
    let n = a.rows();
    let mut w = a.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    // Householder vectors live in the strict lower part of `w`; `hs[i]` is
    // the matching normaliser (0 marks an identity reflector).
    let mut hs = vec![T::zero(); n];
    let mut u = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];

    for i in (1..n).rev() {
        let l = i - 1;
        d[i] = w[(i, i)];
        if l == 0 {
            e[i] = w[(i, 0)];
            continue;
        }
        let scale = w.row(i)[..=l].iter().fold(T::zero(), |s, x| s + x.abs());
        if scale == T::zero() {
            e[i] = T::zero();
            continue;
        }
        let u = &mut u[..=l];
        for (uk, &x) in u.iter_mut().zip(&w.row(i)[..=l]) {
            *uk = x / scale;
        }
        let mut h = dot(u, u);
        let f = u[l];
        let g = if f >= T::zero() { -h.sqrt() } else { h.sqrt() };
        e[i] = scale * g;
        h = h - f * g;
        u[l] = f - g;

        let p = &mut p[..=l];
        for j in 0..=l {
            p[j] = dot(&w.row(j)[..=l], u) / h;
        }
        let k = dot(u, p) / (h + h);
        for j in 0..=l {
            p[j] = p[j] - k * u[j];
        }
        for j in 0..=l {
            let (uj, qj) = (u[j], p[j]);
            let row = &mut w.row_mut(j)[..=l];
            for ((x, &qk), &uk) in row.iter_mut().zip(p.iter()).zip(u.iter()) {
                *x = *x - (uj * qk + qj * uk);
            }
        }
        w.row_mut(i)[..=l].copy_from_slice(u);
        hs[i] = h;
    }
    if n > 0 {
        d[0] = w[(0, 0)];
    }

    let qt = want_q.then(|| {
        let mut y = Matrix::identity(n);
        for i in 1..n {
            let h = hs[i];
            if h == T::zero() {
                continue;
            }
            let l = i - 1;
            let u = &w.row(i)[..=l];
            // Y ← Y P_i; rows beyond l are still unit vectors outside 0..=l.
            for r in 0..=l {
                let row = &mut y.row_mut(r)[..=l];
                let s = dot(row, u) / h;
                axpy(-s, u, row);
            }
        }
        y
    });
    (d, e, qt)
}

/// Implicit-shift QL on a symmetric tridiagonal matrix.
///
/// `d` and `e` follow the [`tridiagonalize`] convention. On return `d` holds
/// the eigenvalues in ascending order; if `vt` is given its rows are rotated
/// (and permuted) along, turning `Qᵀ` into the transposed eigenvector matrix.
pub fn tridiagonal_ql<T: Real>(d: &mut [T], e: &mut [T], mut vt: Option<&mut Matrix<T>>) -> Result<()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let eps = T::epsilon();
    let two = T::lit(2.0);
    let max_iter = 30 + n;
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > max_iter {
                    return Err(Error::Numerical(format!(
                        "QL iteration did not converge for eigenvalue {l} of {n}"
                    )));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di = *di - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(vt) = vt.as_deref_mut() {
                        rotate_rows(vt, i, c, s);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }

    // Selection sort keeps eigenvalue/eigenvector pairs together.
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        for j in (i + 1)..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            if let Some(vt) = vt.as_deref_mut() {
                swap_rows(vt, i, k);
            }
        }
    }
    Ok(())
}

fn rotate_rows<T: Real>(vt: &mut Matrix<T>, i: usize, c: T, s: T) {
    let n = vt.cols();
    let (lo, hi) = vt.as_mut_slice().split_at_mut((i + 1) * n);
    let ri = &mut lo[i * n..];
    let ri1 = &mut hi[..n];
    for (a, b) in ri.iter_mut().zip(ri1.iter_mut()) {
        let h = *b;
        *b = s * *a + c * h;
        *a = c * *a - s * h;
    }
}

fn swap_rows<T: Real>(m: &mut Matrix<T>, i: usize, k: usize) {
    let n = m.cols();
    let (i, k) = (i.min(k), i.max(k));
    let (lo, hi) = m.as_mut_slice().split_at_mut(k * n);
    lo[i * n..(i + 1) * n].swap_with_slice(&mut hi[..n]);
}

/// All eigenvalues of a symmetric matrix, ascending. The input is assumed
/// symmetric; only its lower triangle influences the result.
pub fn symmetric_eigenvalues<T: Real>(a: &Matrix<T>) -> Result<Vec<T>> {
    let (mut d, mut e, _) = tridiagonalize(a, false);
    tridiagonal_ql(&mut d, &mut e, None)?;
    Ok(d)
}

/// Eigenvalues and orthonormal eigenvectors of a symmetric matrix.
pub fn symmetric_eigen<T: Real>(a: &Matrix<T>) -> Result<SymmetricEigen<T>> {
    let (mut d, mut e, qt) = tridiagonalize(a, true);
    let mut vt = qt.expect("requested");
    tridiagonal_ql(&mut d, &mut e, Some(&mut vt))?;
    Ok(SymmetricEigen {
        values: d,
        vectors: vt,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.random_range(-1.0..1.0);
                a[(i, j)] = x;
                a[(j, i)] = x;
            }
        }
        a
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_diagonal(&[3.0, -1.0, 7.0]);
        assert_eq!(symmetric_eigenvalues(&a).unwrap(), vec![-1.0, 3.0, 7.0]);
    }

    #[test]
    fn two_by_two_closed_form() {
        let a = Matrix::from_row_major(2, 2, vec![2.0f64, 1.0, 1.0, 2.0]).unwrap();
        let ev = symmetric_eigenvalues(&a).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-15 && (ev[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_sizes() {
        assert!(symmetric_eigenvalues(&Matrix::<f64>::zeros(0, 0)).unwrap().is_empty());
        let one = Matrix::from_row_major(1, 1, vec![4.5]).unwrap();
        let eig = symmetric_eigen(&one).unwrap();
        assert_eq!(eig.values, vec![4.5]);
        assert_eq!(eig.vectors[(0, 0)], 1.0);
    }

    #[test]
    fn eigenpairs_are_backward_stable() {
        for (n, seed) in [(7, 1), (40, 2), (200, 3)] {
            let a = random_symmetric(n, seed);
            let eig = symmetric_eigen(&a).unwrap();
            let norm = a.frobenius();
            assert!(eig.residual(&a) <= 1e-9 * norm, "n={n}");
            let rebuilt = eig.reconstruct();
            for i in 0..n {
                for j in 0..n {
                    assert!((rebuilt[(i, j)] - a[(i, j)]).abs() <= 1e-11 * norm);
                }
            }
            assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn values_only_agrees_with_full_decomposition() {
        let a = random_symmetric(33, 9);
        let v = symmetric_eigenvalues(&a).unwrap();
        let full = symmetric_eigen(&a).unwrap();
        for (x, y) in v.iter().zip(&full.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_precision_path() {
        let a = random_symmetric(12, 4).map(|x| x as f32);
        let eig = symmetric_eigen(&a).unwrap();
        assert!(eig.residual(&a) <= 1e-4 * a.frobenius());
    }
}
