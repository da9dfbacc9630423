//! Directional embedding inversion on the unit hypersphere.
//!
//! A learned token embedding is split as `e = m*·v` with the magnitude `m*`
//! frozen at the vocabulary's typical norm and only the direction `v` trained,
//! by Riemannian SGD with normalized gradients under a von Mises-Fisher prior.
//! The crate also carries the experiments explaining why large embedding norms
//! hurt pre-norm Transformers: positional attenuation inside scale-invariant
//! normalization, and residual stagnation across stacked blocks.
//!
//! All math is generic over [`Scalar`] (`f64` or `f32`); the `*64` aliases
//! below are the instantiations the CLI and tests use.

// `!(x > eps)` also rejects NaN, which is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod inversion;
pub mod linalg;
pub mod prenorm;
pub mod probe;
pub mod scalar;
pub mod seeding;
pub mod sphere;

pub use error::{DtiError, ErrorClass, Result};
pub use scalar::Scalar;

pub type UnitDirection64 = sphere::UnitDirection<f64>;
pub type UnitDirection32 = sphere::UnitDirection<f32>;
pub type TangentVector64 = sphere::TangentVector<f64>;
pub type VmfPrior64 = sphere::VmfPrior<f64>;
pub type PreNormStack64 = prenorm::PreNormStack<f64>;
pub type PreNormStack32 = prenorm::PreNormStack<f32>;
pub type DriftReport64 = prenorm::DriftReport<f64>;
pub type EmbeddingTable64 = geometry::EmbeddingTable<f64>;
pub type InversionConfig64 = inversion::InversionConfig<f64>;
pub type InversionResult64 = inversion::InversionResult<f64>;
pub type ProbeModel64 = probe::ProbeModel<f64>;
pub type ProbeDataset64 = probe::ProbeDataset<f64>;
