//! Dual front/back normal-map diffusion and mesh carving at desk scale.
//!
//! Geometry, rendering and sampling are generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the scalar for the common cases.

pub mod carve;
pub mod denoiser;
pub mod diffusion;
pub mod error;
pub mod mesh;
pub mod optim;
pub mod pipeline;
pub mod raster;
pub mod scalar;
pub mod vec3;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Mesh64 = mesh::Mesh<f64>;
pub type Mesh32 = mesh::Mesh<f32>;
pub type NormalMap64 = raster::NormalMap<f64>;
pub type NormalMap32 = raster::NormalMap<f32>;
pub type Camera64 = raster::Camera<f64>;
pub type Camera32 = raster::Camera<f32>;
pub type Sample64 = diffusion::Sample<f64>;
pub type Sample32 = diffusion::Sample<f32>;
pub type Schedule64 = diffusion::VarianceSchedule<f64>;
pub type Schedule32 = diffusion::VarianceSchedule<f32>;
/// Checkpoints store `f32`, so the trained model is used at that precision.
pub type ToyDenoiser = denoiser::DenoiserParams<f32>;
