//! Finite-n convergence of sample covariance spectra to the Marchenko–Pastur law.
#![allow(clippy::excessive_precision, clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
mod error;
pub mod distance;
pub mod ensemble;
pub mod harness;
pub mod law;
pub mod linalg;
pub mod quad;
pub mod resolvent;
pub mod scalar;
pub mod spectral;

pub use error::{Error, Result};

pub type MpLaw64 = law::MpLaw<f64>;
pub type MpLaw32 = law::MpLaw<f32>;
pub type ComplexPoint64 = law::ComplexPoint<f64>;
pub type SampleMatrix64 = ensemble::SampleMatrix<f64>;
pub type Spectrum64 = spectral::Spectrum<f64>;
pub type EmpiricalCdf64 = spectral::EmpiricalCdf<f64>;
pub type Matrix64 = linalg::Matrix<f64>;
