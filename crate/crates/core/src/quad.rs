//! Adaptive one-dimensional quadrature: Gauss–Kronrod (7/15) for the law
//! evaluations and adaptive Simpson for the contour functionals.

use std::ops::{Add, Mul, Sub};

use crate::scalar::{Magnitude, Real};
use crate::{Error, Result};

/// Values an integrator can accumulate: reals and complex numbers.
pub trait QuadValue<T>: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<T, Output = Self> + Magnitude<T> {
    fn zero() -> Self;
}

impl<T: Real> QuadValue<T> for T {
    fn zero() -> Self {
        T::zero()
    }
}

impl<T: Real> QuadValue<T> for num_complex::Complex<T> {
    fn zero() -> Self {
        num_complex::Complex::new(T::zero(), T::zero())
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<T: Real, V: QuadValue<T>>(f: &mut impl FnMut(T) -> V, a: T, b: T) -> (V, T) {
    let half = T::lit(0.5);
    let center = half * (a + b);
    let half_len = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let pair = f1 + f2;
        kronrod = kronrod + pair * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(WG[j / 2]);
        }
    }
    let err = (kronrod - gauss).magnitude() * half_len.abs();
    (kronrod * half_len, err)
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol` by recursive
/// bisection with a Gauss–Kronrod 7/15 rule on each panel.
pub fn gauss_kronrod<T: Real, V: QuadValue<T>>(mut f: impl FnMut(T) -> V, a: T, b: T, tol: T) -> Result<V> {
    if a == b {
        return Ok(V::zero());
    }
    const MAX_PANELS: usize = 4000;
    let (whole, err) = gk15(&mut f, a, b);
    // Panels kept in a max-heap-less list; the panel with the largest error
    // is split next.
    let mut panels = vec![(a, b, whole, err)];
    let mut total_err = err;
    while total_err > tol {
        if panels.len() >= MAX_PANELS {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] stalled at error {total_err:e} (tolerance {tol:e})"
            )));
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (lo, hi, _, _) = panels.swap_remove(idx);
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::Numerical(format!("quadrature panel collapsed near {mid}")));
        }
        let left = gk15(&mut f, lo, mid);
        let right = gk15(&mut f, mid, hi);
        panels.push((lo, mid, left.0, left.1));
        panels.push((mid, hi, right.0, right.1));
        total_err = panels.iter().fold(T::zero(), |s, p| s + p.3);
    }
    Ok(panels.iter().fold(V::zero(), |s, p| s + p.2))
}

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson<T: Real, V: QuadValue<T>>(mut f: impl FnMut(T) -> V, a: T, b: T, tol: T) -> Result<V> {
    if a == b {
        return Ok(V::zero());
    }
    let mid = T::lit(0.5) * (a + b);
    let (fa, fm, fb) = (f(a), f(mid), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    simpson_step(&mut f, a, b, fa, fm, fb, whole, tol, 50)
}

fn simpson<T: Real, V: QuadValue<T>>(a: T, b: T, fa: V, fm: V, fb: V) -> V {
    (fa + fm * T::lit(4.0) + fb) * ((b - a) / T::lit(6.0))
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real, V: QuadValue<T>>(
    f: &mut impl FnMut(T) -> V,
    a: T,
    b: T,
    fa: V,
    fm: V,
    fb: V,
    whole: V,
    tol: T,
    depth: u32,
) -> Result<V> {
    let m = T::lit(0.5) * (a + b);
    let lm = T::lit(0.5) * (a + m);
    let rm = T::lit(0.5) * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if delta.magnitude() <= T::lit(15.0) * tol {
        return Ok(left + right + delta * T::lit(1.0 / 15.0));
    }
    if depth == 0 {
        return Err(Error::Numerical(format!(
            "adaptive Simpson exhausted its depth on [{a}, {b}]"
        )));
    }
    let half_tol = T::lit(0.5) * tol;
    let l = simpson_step(f, a, m, fa, flm, fm, left, half_tol, depth - 1)?;
    let r = simpson_step(f, m, b, fm, frm, fb, right, half_tol, depth - 1)?;
    Ok(l + r)
}
