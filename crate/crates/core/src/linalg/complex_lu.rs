//! LU factorisation with partial pivoting for dense complex systems.

use num_traits::Zero;

use crate::linalg::Matrix;
use crate::scalar::{Cplx, Real};
use crate::{Error, Result};

/// `P A = L U`, stored in place with unit lower `L`.
#[derive(Clone, Debug)]
pub struct ComplexLu<T> {
    lu: Matrix<Cplx<T>>,
    perm: Vec<usize>,
}

impl<T: Real> ComplexLu<T> {
    pub fn factor(a: &Matrix<Cplx<T>>) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Contract(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[(k, k)].norm_sqr();
            for i in (k + 1)..n {
                let m = lu[(i, k)].norm_sqr();
                if m > best {
                    best = m;
                    piv = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::Numerical(format!("singular pivot at column {k}")));
            }
            if piv != k {
                perm.swap(piv, k);
                let (lo, hi) = lu.as_mut_slice().split_at_mut(piv * n);
                lo[k * n..(k + 1) * n].swap_with_slice(&mut hi[..n]);
            }
            let pivot_inv = lu[(k, k)].inv();
            let (top, bottom) = lu.as_mut_slice().split_at_mut((k + 1) * n);
            let pivot_row = &top[k * n..(k + 1) * n];
            for row in bottom.chunks_exact_mut(n) {
                let factor = row[k] * pivot_inv;
                row[k] = factor;
                if factor.is_zero() {
                    continue;
                }
                for (x, &pj) in row[(k + 1)..].iter_mut().zip(&pivot_row[(k + 1)..]) {
                    *x = *x - factor * pj;
                }
            }
        }
        Ok(Self { lu, perm })
    }

    pub fn order(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
        let n = self.order();
        if b.len() != n {
            return Err(Error::Contract(format!("rhs length {} != {n}", b.len())));
        }
        let mut x: Vec<Cplx<T>> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s = s - row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in (i + 1)..n {
                s = s - row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        Ok(x)
    }

    /// Full inverse, one column at a time.
    pub fn inverse(&self) -> Matrix<Cplx<T>> {
        let n = self.order();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![Cplx::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = Cplx::zero());
            e[j] = Cplx::new(T::one(), T::zero());
            let col = self.solve(&e).expect("length matches");
            for (i, v) in col.into_iter().enumerate() {
                inv[(i, j)] = v;
            }
        }
        inv
    }
}

/// Inverse of a complex matrix together with `‖A X − I‖_max`.
pub fn inverse_with_residual<T: Real>(a: &Matrix<Cplx<T>>) -> Result<(Matrix<Cplx<T>>, T)> {
    let inv = ComplexLu::factor(a)?.inverse();
    let prod = a.cmatmul(&inv)?;
    let n = a.rows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { T::one() } else { T::zero() };
            worst = worst.max((prod[(i, j)] - Cplx::new(target, T::zero())).norm());
        }
    }
    Ok((inv, worst))
}
