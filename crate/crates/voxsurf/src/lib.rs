//! Sparse-voxel neural implicit surface toolkit.
//!
//! A scene is a sparse set of cubic leaf voxels whose corner vertices carry
//! trainable embeddings. Two small MLPs decode interpolated embeddings into
//! a signed distance + feature (geometry) and a view-dependent color
//! (appearance). Training renders rays by S-density alpha compositing and
//! minimizes photometric, eikonal, and optional occupancy depth losses while
//! progressively pruning empty voxels and splitting surface voxels.
//!
//! Modules follow the pipeline: [`voxgrid`] (structure), [`field`] (learned
//! functions), [`sampler`] (rays and points), [`renderer`] (compositing),
//! [`trainer`] (losses, optimization, schedule, checkpoints), [`mesher`]
//! (extraction and metrics), [`synth`] (analytic ground-truth datasets).

pub mod aabb;
pub mod error;
pub mod field;
pub mod mesher;
pub mod pfm;
pub mod renderer;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod voxgrid;

pub use aabb::Aabb;
pub use error::{Error, Result};
