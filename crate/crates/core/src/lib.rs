//! Truncated Karhunen-Loève expansions of stationary isotropic Gaussian random
//! fields on axis-aligned boxes.
//!
//! The pipeline fits the covariance with a non-negative squared-exponential
//! mixture ([`sefit`]), assembles parity-split Legendre-Galerkin blocks
//! ([`assembly`]), forms Kronecker-structured operators ([`kronop`]), solves
//! for the leading eigenpairs ([`eigsolve`]) and evaluates or samples the
//! resulting field ([`klfield`]).

pub mod assembly;
pub mod eigsolve;
pub mod error;
pub mod kernels;
pub mod klfield;
pub mod kronop;
pub mod linalg;
pub mod orthopoly;
pub mod scalar;
pub mod sefit;

pub use error::{Error, Result};
pub use kernels::{kernel_eval, kernel_eval_batch, IsotropicKernel, KernelId, KernelSpec};
pub use scalar::Real;
pub use sefit::{fit_mixture, FitConfig, SqExpMixture};

pub type GaussRule64 = orthopoly::GaussRule<f64>;
pub type GaussRule32 = orthopoly::GaussRule<f32>;
pub type Interval64 = orthopoly::Interval<f64>;
pub type Mat64 = linalg::Mat<f64>;
pub type Domain64 = kronop::Domain<f64>;
pub type KronOperator64 = kronop::KronOperator<f64>;
pub type KronOperator32 = kronop::KronOperator<f32>;
pub type Spectrum64 = eigsolve::Spectrum<f64>;

pub use klfield::{decompose, DecomposeOptions, KLExpansion};
