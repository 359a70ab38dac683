//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + LowerExp + Sum + Send + Sync + 'static
{
    /// Lossless-or-rounded conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex scalar over a [`Real`].
pub type Cplx<T> = Complex<T>;

/// Magnitude used for error control in generic integrators and pivoting.
pub trait Magnitude<T> {
    fn magnitude(&self) -> T;
}

impl<T: Real> Magnitude<T> for T {
    fn magnitude(&self) -> T {
        self.abs()
    }
}

impl<T: Real> Magnitude<T> for Complex<T> {
    fn magnitude(&self) -> T {
        self.norm()
    }
}

/// Neumaier-compensated running sum.
///
/// Aggregation across replicates always goes through this in index order, so
/// results do not depend on how work was scheduled.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

impl<T: Real> FromIterator<T> for CompensatedSum<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Compensated sum of a real sequence.
pub fn ksum<T: Real, I: IntoIterator<Item = T>>(iter: I) -> T {
    iter.into_iter().collect::<CompensatedSum<T>>().value()
}

/// Compensated sum of a complex sequence (real and imaginary parts separately).
pub fn ksum_complex<T: Real, I: IntoIterator<Item = Complex<T>>>(iter: I) -> Complex<T> {
    let mut re = CompensatedSum::new();
    let mut im = CompensatedSum::new();
    for z in iter {
        re.add(z.re);
        im.add(z.im);
    }
    Complex::new(re.value(), im.value())
}

/// Compensated mean; `None` for an empty sequence.
pub fn kmean<T: Real, I: IntoIterator<Item = T>>(iter: I) -> Option<T> {
    let mut acc = CompensatedSum::new();
    let mut count = 0usize;
    for x in iter {
        acc.add(x);
        count += 1;
    }
    (count > 0).then(|| acc.value() / T::from_usize_lossy(count))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1.0e16_f64];
        xs.extend(std::iter::repeat_n(1.0, 1000));
        xs.push(-1.0e16);
        assert_eq!(ksum(xs.iter().copied()), 1000.0);
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, 1000.0);
    }

    #[test]
    fn mean_of_empty_is_none() {
        assert!(kmean(std::iter::empty::<f64>()).is_none());
        assert_eq!(kmean([1.0f32, 2.0, 3.0]), Some(2.0));
    }
}
