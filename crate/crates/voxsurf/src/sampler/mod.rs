//! Ray generation, voxel-hit traversal, and per-voxel inverse-CDF point
//! sampling with surface-aware reweighting.

pub mod camera;
pub mod sampling;

pub use camera::{generate_rays, Camera, Ray};
pub use sampling::{
    clamp_intervals, mark_important_voxels, sample_ray, surface_aware_resample,
    uniform_voxel_sampling, CrossingMode, Sample, SamplingMode,
};

use crate::voxgrid::{VoxelGrid, VoxelHit};

/// Ordered voxel intersections of one ray.
#[derive(Debug, Clone)]
pub struct RayHits {
    pub ray: Ray,
    pub hits: Vec<VoxelHit>,
}

impl RayHits {
    /// Total in-voxel path length.
    pub fn total_span(&self) -> f64 {
        self.hits.iter().map(|h| h.span()).sum()
    }
}

/// Front-to-back voxel hits of `ray` against the grid's octree, truncated at
/// `max_hits`. Rays that hit nothing return an empty list (the caller culls).
pub fn intersect(grid: &VoxelGrid, ray: &Ray, max_hits: usize) -> RayHits {
    debug_assert!((ray.dir.norm() - 1.0).abs() < 1e-6, "ray direction must be unit");
    RayHits {
        ray: *ray,
        hits: grid.octree().intersect(&ray.origin, &ray.dir, max_hits),
    }
}
