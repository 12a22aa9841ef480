//! Articulated 3D object pipeline at desk scale.
//!
//! The crate covers the full loop: procedural articulated furniture,
//! voxelization into articulation-aware sparse grids, a channel encoding
//! for a 3D-conv VAE, a flow-matching latent prior with classifier-free
//! guidance, per-voxel Gaussian decoding with a differentiable CPU splat
//! renderer, DBSCAN-based part segmentation, joint kinematics, and
//! Chamfer/articulation-parameter evaluation.
//!
//! All core math is generic over the scalar type via [`real::Real`]
//! (`f32` or `f64`); concrete aliases live at the crate root.

pub mod artgrid;
pub mod eval;
pub mod geom;
pub mod ingest;
pub mod kinematics;
pub mod models;
pub mod numerics;
pub mod real;
pub mod segment;
pub mod splat;

pub use real::Real;

/// Grid types at the default evaluation precision.
pub type Grid64 = artgrid::ArticulatedVoxelGrid<f64>;
pub type Grid32 = artgrid::ArticulatedVoxelGrid<f32>;
pub type Volume64 = artgrid::ChannelVolume<f64>;
pub type Volume32 = artgrid::ChannelVolume<f32>;
pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type Object64 = ingest::ArticulatedObject<f64>;
pub type Splats64 = splat::SplatSet<f64>;
pub type Image64 = splat::Image<f64>;
