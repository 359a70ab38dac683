//! The Marchenko–Pastur law and its Stieltjes transforms.
//!
//! For aspect ratio `y = p/n` the law has edges `a = (1-√y)²`, `b = (1+√y)²`,
//! density `√((b-x)(x-a)) / (2π x y)` on `[a, b]` and, when `y > 1`, an atom
//! of mass `1 - 1/y` at zero. The symmetrized law is the distribution of
//! `±√ξ` with a fair random sign; it is the spectral law of the Hermitized
//! sample matrix.
//!
//! All complex transforms are evaluated from their defining quadratic; the
//! physical branch is the unique root in the upper half plane.

use serde::{Deserialize, Serialize};

use crate::quad::gauss_kronrod;
use crate::scalar::{Cplx, Real};
use crate::{Error, Result};

/// Absolute tolerance used for CDF evaluation.
pub const CDF_TOLERANCE: f64 = 1e-12;

/// A point `u + iv` of the open upper half plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexPoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> ComplexPoint<T> {
    pub fn new(u: T, v: T) -> Result<Self> {
        if !(v > T::zero()) || !u.is_finite() || !v.is_finite() {
            return Err(Error::Contract(format!(
                "point must lie in the open upper half plane, got u={u}, v={v}"
            )));
        }
        Ok(Self { u, v })
    }

    #[inline]
    pub fn z(&self) -> Cplx<T> {
        Cplx::new(self.u, self.v)
    }

    /// `-conj(z)`, the mirror image across the imaginary axis.
    pub fn reflect(&self) -> Self {
        Self { u: -self.u, v: self.v }
    }
}

/// A Stieltjes transform value tagged with the point it was evaluated at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StieltjesValue<T> {
    pub value: Cplx<T>,
    pub z: ComplexPoint<T>,
}

/// The Marchenko–Pastur law for a fixed aspect ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpLaw<T> {
    y: T,
    a: T,
    b: T,
    atom: T,
}

impl<T: Real> MpLaw<T> {
    pub fn new(y: T) -> Result<Self> {
        if !(y > T::zero()) || !y.is_finite() {
            return Err(Error::Config(format!("aspect ratio must be positive and finite, got {y}")));
        }
        let r = y.sqrt();
        let one = T::one();
        Ok(Self {
            y,
            a: (one - r) * (one - r),
            b: (one + r) * (one + r),
            atom: if y > one { one - one / y } else { T::zero() },
        })
    }

    pub fn y(&self) -> T {
        self.y
    }

    /// Lower support edge `(1-√y)²`.
    pub fn a(&self) -> T {
        self.a
    }

    /// Upper support edge `(1+√y)²`.
    pub fn b(&self) -> T {
        self.b
    }

    pub fn atom_at_zero(&self) -> T {
        self.atom
    }

    /// Density of the continuous part (the atom is excluded).
    ///
    /// At `y = 1` the density is unbounded at the hard edge: `pdf(0)` is `+∞`.
    pub fn pdf(&self, x: T) -> T {
        if x < self.a || x > self.b {
            return T::zero();
        }
        if x == T::zero() {
            return T::infinity();
        }
        let prod = ((self.b - x) * (x - self.a)).max(T::zero());
        prod.sqrt() / (T::lit(2.0) * T::PI() * x * self.y)
    }

    /// `x(θ) = a + (b-a) sin²θ`; maps `[0, π/2]` onto the support.
    #[inline]
    fn edge_map(&self, theta: T) -> T {
        let s = theta.sin();
        self.a + (self.b - self.a) * s * s
    }

    /// Density pulled back to `θ`: smooth on `[0, π/2]`, no edge singularities.
    #[inline]
    fn theta_density(&self, theta: T) -> T {
        let w = self.b - self.a;
        let s2 = (T::lit(2.0) * theta).sin();
        let x = self.edge_map(theta);
        if x <= T::zero() {
            // a = 0 and θ = 0: the limit of w² sin²2θ / (4πyx) is w/(πy).
            return w / (T::PI() * self.y);
        }
        w * w * s2 * s2 / (T::lit(4.0) * T::PI() * self.y * x)
    }

    fn theta_of(&self, x: T) -> T {
        let t = ((x - self.a) / (self.b - self.a)).max(T::zero()).min(T::one());
        t.sqrt().asin()
    }

    /// Mass of the continuous part on `[a, x]`.
    fn continuous_mass_below(&self, x: T) -> Result<T> {
        let theta = self.theta_of(x);
        let quarter = T::FRAC_PI_2();
        let tol = T::lit(CDF_TOLERANCE).max(T::epsilon() * T::lit(8.0));
        let f = |t: T| self.theta_density(t);
        if theta <= T::lit(0.5) * quarter {
            gauss_kronrod(f, T::zero(), theta, tol)
        } else {
            let upper = gauss_kronrod(f, theta, quarter, tol)?;
            Ok(T::one() - self.atom - upper)
        }
    }

    /// Total mass of the continuous part, integrated numerically.
    pub fn continuous_mass(&self) -> Result<T> {
        let tol = T::lit(CDF_TOLERANCE).max(T::epsilon() * T::lit(8.0));
        gauss_kronrod(|t: T| self.theta_density(t), T::zero(), T::FRAC_PI_2(), tol)
    }

    /// `F_y(x)`, including the atom for `x ≥ 0`.
    pub fn cdf(&self, x: T) -> Result<T> {
        if x < T::zero() {
            return Ok(T::zero());
        }
        if x <= self.a {
            return Ok(self.atom);
        }
        if x >= self.b {
            return Ok(T::one());
        }
        let v = self.atom + self.continuous_mass_below(x)?;
        Ok(v.max(T::zero()).min(T::one()))
    }

    /// Left limit `F_y(x⁻)`; differs from [`cdf`](Self::cdf) only at an atom.
    pub fn cdf_left(&self, x: T) -> Result<T> {
        if x <= T::zero() {
            return Ok(T::zero());
        }
        self.cdf(x)
    }

    /// Density of the symmetrized law, `|x| f_y(x²)`.
    pub fn symmetrized_pdf(&self, x: T) -> T {
        let x2 = x * x;
        if x2 < self.a || x2 > self.b {
            return T::zero();
        }
        let two_pi_y = T::lit(2.0) * T::PI() * self.y;
        if self.a == T::zero() {
            // √((x²-0)(b-x²)) / |x| simplifies to √(b-x²).
            return (self.b - x2).max(T::zero()).sqrt() / two_pi_y;
        }
        ((x2 - self.a) * (self.b - x2)).max(T::zero()).sqrt() / (two_pi_y * x.abs())
    }

    /// CDF of the symmetrized law. Any atom of `F_y` at zero stays at zero.
    pub fn symmetrized_cdf(&self, x: T) -> Result<T> {
        let half = T::lit(0.5);
        if x > T::zero() {
            Ok(half * (T::one() + self.cdf(x * x)?))
        } else if x < T::zero() {
            Ok(half * (T::one() - self.cdf_left(x * x)?))
        } else {
            Ok(half * (T::one() + self.atom))
        }
    }

    /// `s_y(z)`, the root of `y z s² + (z + y - 1) s + 1 = 0` with `Im s > 0`.
    pub fn stieltjes(&self, z: ComplexPoint<T>) -> Result<StieltjesValue<T>> {
        let zc = z.z();
        let one = Cplx::new(T::one(), T::zero());
        let value = upper_root(
            zc * self.y,
            zc + Cplx::new(self.y - T::one(), T::zero()),
            one,
            z.v,
            "Marchenko-Pastur Stieltjes transform",
        )?;
        Ok(StieltjesValue { value, z })
    }

    /// `s_y` by direct quadrature of `∫ f_y(x)/(x-z) dx + atom/(0-z)`.
    pub fn stieltjes_quadrature(&self, z: ComplexPoint<T>, tol: T) -> Result<Cplx<T>> {
        let zc = z.z();
        let cont = gauss_kronrod(
            |t: T| {
                let x = self.edge_map(t);
                (Cplx::new(x, T::zero()) - zc).inv() * self.theta_density(t)
            },
            T::zero(),
            T::FRAC_PI_2(),
            tol,
        )?;
        Ok(cont - zc.inv() * self.atom)
    }

    /// `s̃_y(z) = z s_y(z²)`, the Stieltjes transform of the symmetrized law,
    /// taken as the upper-half-plane root of `y s̃² + (z + (y-1)/z) s̃ + 1 = 0`.
    pub fn symmetrized_stieltjes(&self, z: ComplexPoint<T>) -> Result<StieltjesValue<T>> {
        let zc = z.z();
        let omega = zc + zc.inv() * (self.y - T::one());
        let value = upper_root(
            Cplx::new(self.y, T::zero()),
            omega,
            Cplx::new(T::one(), T::zero()),
            z.v,
            "symmetrized Stieltjes transform",
        )?;
        Ok(StieltjesValue { value, z })
    }

    /// `z + y s̃_y(z) + (y-1)/z`, the denominator of the fixed-point equation.
    pub fn fixed_point_denominator(&self, z: ComplexPoint<T>, s_tilde: Cplx<T>) -> Cplx<T> {
        let zc = z.z();
        zc + s_tilde * self.y + zc.inv() * (self.y - T::one())
    }

    /// `|s̃ + 1/(z + y s̃ + (y-1)/z)|`.
    pub fn fixed_point_residual(&self, z: ComplexPoint<T>, s_tilde: Cplx<T>) -> T {
        (s_tilde + self.fixed_point_denominator(z, s_tilde).inv()).norm()
    }

    /// Grid maximum of the symmetrized density next to the closed-form
    /// constant `1/(π√y(1+√y))` that is sometimes quoted as its supremum.
    /// Only the measured value is meaningful; at `y = 1` the two differ by a
    /// factor of two.
    pub fn symmetrized_density_sup(&self, grid_points: usize) -> (T, T) {
        let lo = self.a.sqrt();
        let hi = self.b.sqrt();
        let m = grid_points.max(2);
        let mut best = T::zero();
        for i in 0..m {
            let t = T::from_usize_lossy(i) / T::from_usize_lossy(m - 1);
            best = best.max(self.symmetrized_pdf(lo + (hi - lo) * t));
        }
        let r = self.y.sqrt();
        (best, T::one() / (T::PI() * r * (T::one() + r)))
    }
}

/// Root of `A s² + B s + C = 0` with positive imaginary part.
///
/// Uses the cancellation-free pair `q/A`, `C/q`. The physical root must also
/// respect `|s| ≤ 1/v`; if that does not single out exactly one root the
/// branch is reported as ambiguous.
fn upper_root<T: Real>(a: Cplx<T>, b: Cplx<T>, c: Cplx<T>, v: T, what: &str) -> Result<Cplx<T>> {
    let disc = (b * b - a * c * T::lit(4.0)).sqrt();
    let half = T::lit(0.5);
    let q = if (b.conj() * disc).re >= T::zero() {
        -(b + disc) * half
    } else {
        -(b - disc) * half
    };
    if q.norm() == T::zero() {
        return Err(Error::Numerical(format!("{what}: degenerate quadratic")));
    }
    let roots = [q / a, c / q];
    let bound = (T::one() + T::lit(1e-9)) / v;
    let mut upper = roots.iter().filter(|r| r.im > T::zero() && r.norm() <= bound);
    match (upper.next(), upper.next()) {
        (Some(&r), None) => Ok(r),
        (Some(_), Some(_)) => Err(Error::Numerical(format!("{what}: both roots in the upper half plane"))),
        (None, _) => Err(Error::Numerical(format!("{what}: no root in the upper half plane"))),
    }
}

/// `q(z) = -(z - √(z² - 4y)) / (2y)` on the branch with `Im q > 0`; it equals
/// `s_sc(z/√y)/√y` for the standard semicircle transform `s_sc`.
pub fn q_func<T: Real>(y: T, z: ComplexPoint<T>) -> Result<Cplx<T>> {
    if !(y > T::zero()) {
        return Err(Error::Config(format!("q(z) needs y > 0, got {y}")));
    }
    upper_root(
        Cplx::new(y, T::zero()),
        z.z(),
        Cplx::new(T::one(), T::zero()),
        z.v,
        "q(z)",
    )
}

/// Stieltjes transform of the standard semicircle law on `[-2, 2]`.
pub fn semicircle_stieltjes<T: Real>(z: ComplexPoint<T>) -> Result<Cplx<T>> {
    q_func(T::one(), z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(u: f64, v: f64) -> ComplexPoint<f64> {
        ComplexPoint::new(u, v).unwrap()
    }

    #[test]
    fn edges_for_y_one() {
        let law = MpLaw::new(1.0).unwrap();
        assert_eq!(law.a(), 0.0);
        assert_eq!(law.b(), 4.0);
        assert_eq!(law.atom_at_zero(), 0.0);
        assert_eq!(law.pdf(0.0), f64::INFINITY);
    }

    #[test]
    fn pdf_hand_evaluation() {
        let law = MpLaw::new(0.25).unwrap();
        let expect = ((2.25f64 - 1.0) * (1.0 - 0.25)).sqrt() / (2.0 * std::f64::consts::PI * 0.25);
        assert!((law.pdf(1.0) - expect).abs() < 1e-15);
        assert_eq!(law.pdf(0.1), 0.0);
        assert_eq!(law.pdf(2.5), 0.0);
    }

    #[test]
    fn cdf_edges() {
        for y in [0.25, 0.5, 1.0] {
            let law = MpLaw::new(y).unwrap();
            assert_eq!(law.cdf(law.b()).unwrap(), 1.0);
            assert_eq!(law.cdf(law.a()).unwrap() - law.atom_at_zero(), 0.0);
        }
        let law = MpLaw::new(2.0f64).unwrap();
        assert!((law.cdf(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(law.cdf_left(0.0).unwrap(), 0.0);
        assert_eq!(law.cdf(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(MpLaw::<f64>::new(0.0).is_err());
        assert!(MpLaw::<f64>::new(f64::NAN).is_err());
        assert!(ComplexPoint::new(0.0, 0.0).is_err());
        assert!(ComplexPoint::new(0.0, -1.0).is_err());
    }

    #[test]
    fn symmetrized_density_is_even_and_supported() {
        let law = MpLaw::new(0.5).unwrap();
        for i in 0..100 {
            let x = -3.0 + 6.0 * i as f64 / 99.0;
            assert_eq!(law.symmetrized_pdf(x), law.symmetrized_pdf(-x));
            if x * x < law.a() || x * x > law.b() {
                assert_eq!(law.symmetrized_pdf(x), 0.0);
            }
        }
    }

    #[test]
    fn hard_edge_symmetrized_sup_exceeds_quoted_constant() {
        let law = MpLaw::new(1.0).unwrap();
        let (measured, quoted) = law.symmetrized_density_sup(2001);
        assert!((measured - 1.0 / std::f64::consts::PI).abs() < 1e-12);
        assert!((quoted - 0.5 / std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn stieltjes_large_z_tail() {
        let law = MpLaw::new(0.5).unwrap();
        let z = pt(1.0e3 * 0.6, 1.0e3 * 0.8);
        let s = law.stieltjes(z).unwrap().value;
        let approx = -z.z().inv();
        assert!((s - approx).norm() / approx.norm() <= 10.0 / 1.0e3);
        let q = q_func(0.5, z).unwrap();
        assert!((q - approx).norm() / approx.norm() <= 10.0 / 1.0e3);
    }

    #[test]
    fn atom_law_branch_matches_quadrature() {
        let law = MpLaw::new(2.0f64).unwrap();
        for (u, v) in [(0.5, 0.1), (3.0, 0.05), (-1.0, 1.0), (0.0, 0.3)] {
            let z = pt(u, v);
            let s = law.stieltjes(z).unwrap().value;
            let qd = law.stieltjes_quadrature(z, 1e-11).unwrap();
            assert!((s - qd).norm() < 1e-8, "z={u}+{v}i: {s} vs {qd}");
        }
    }

    #[test]
    fn symmetrized_cdf_handles_atom() {
        let law = MpLaw::new(4.0f64).unwrap();
        let m = law.atom_at_zero();
        assert!((law.symmetrized_cdf(0.0).unwrap() - 0.5 * (1.0 + m)).abs() < 1e-15);
        let left: f64 = law.symmetrized_cdf(-1e-9).unwrap();
        assert!((left - 0.5 * (1.0 - m)).abs() < 1e-12);
    }

    #[test]
    fn single_precision_law() {
        let law = MpLaw::<f32>::new(0.5).unwrap();
        let s = law.symmetrized_stieltjes(ComplexPoint::new(0.7f32, 0.2).unwrap()).unwrap();
        assert!(s.value.im > 0.0);
        assert!(law.fixed_point_residual(s.z, s.value) < 1e-5);
    }
}
