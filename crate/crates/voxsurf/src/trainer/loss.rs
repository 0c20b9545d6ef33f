//! Training losses: photometric L1, eikonal, and occupancy-based depth
//! supervision over three ray intervals.

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::renderer::density::sigmoid;
use crate::rng::{self, Domain};
use crate::voxgrid::VoxelGrid;

/// Mean over rays of the L1 color difference (sum over channels per ray).
pub fn color_loss(rendered: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    assert_eq!(rendered.len(), gt.len(), "ray count mismatch");
    if rendered.is_empty() {
        return 0.0;
    }
    let sum: f64 = rendered
        .iter()
        .zip(gt)
        .map(|(c, g)| (c - g).abs().sum())
        .sum();
    sum / rendered.len() as f64
}

/// Mean of (|grad sigma| - 1)^2.
pub fn eikonal_loss(grads: &[Vector3<f64>]) -> f64 {
    if grads.is_empty() {
        return 0.0;
    }
    grads.iter().map(|g| (g.norm() - 1.0).powi(2)).sum::<f64>() / grads.len() as f64
}

/// Scaled truncated occupancy of a signed distance: sigmoid(-scale * sigma).
pub fn occupancy(sigma: f64, scale: f64) -> f64 {
    debug_assert!(scale > 0.0);
    sigmoid(-scale * sigma)
}

/// Which depth-loss interval a sample time falls into, relative to the
/// ground-truth depth and the near-band half width.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthBand {
    /// t < t_hat - delta: free space in front of the surface.
    Outside,
    /// |t - t_hat| <= delta: constrain the SDF to zero.
    Near,
    /// t > t_hat + delta: behind the surface.
    Inside,
}

pub fn depth_band(t: f64, t_hat: f64, delta: f64) -> DepthBand {
    if t < t_hat - delta {
        DepthBand::Outside
    } else if t > t_hat + delta {
        DepthBand::Inside
    } else {
        DepthBand::Near
    }
}

/// Per-point depth-loss value and d(term)/d(sigma).
///
/// Sign-consistent orientation (positive SDF = outside): free-space points
/// push occupancy toward 0, behind-surface points toward 1, near points push
/// sigma itself to 0. `paper_literal` swaps the two occupancy targets.
pub fn depth_term(band: DepthBand, sigma: f64, scale: f64, paper_literal: bool) -> (f64, f64) {
    let occ = occupancy(sigma, scale);
    let docc = -scale * occ * (1.0 - occ);
    let toward_zero = (occ * occ, 2.0 * occ * docc);
    let toward_one = ((1.0 - occ).powi(2), -2.0 * (1.0 - occ) * docc);
    match band {
        DepthBand::Near => (sigma * sigma, 2.0 * sigma),
        DepthBand::Outside => {
            if paper_literal {
                toward_one
            } else {
                toward_zero
            }
        }
        DepthBand::Inside => {
            if paper_literal {
                toward_zero
            } else {
                toward_one
            }
        }
    }
}

/// Stratified jittered points inside every voxel (`n` per voxel, first `n`
/// cells of the ceil(n^(1/3))³ subdivision), with their voxel arena indices.
pub fn regularization_points(
    grid: &VoxelGrid,
    n_per_voxel: usize,
    seed: u64,
    counter: u64,
) -> Vec<(Point3<f64>, u32)> {
    if n_per_voxel == 0 {
        return Vec::new();
    }
    let side = (n_per_voxel as f64).cbrt().ceil() as usize;
    let cell = grid.voxel_size() / side as f64;
    let mut rng = rng::stream(seed, Domain::RegPoints, counter);
    let mut out = Vec::with_capacity(grid.voxel_count() * n_per_voxel);
    for (vi, v) in grid.voxels().iter().enumerate() {
        let base = grid.vertex_position(*v);
        let mut taken = 0;
        'cells: for a in 0..side {
            for b in 0..side {
                for c in 0..side {
                    if taken == n_per_voxel {
                        break 'cells;
                    }
                    let p = Point3::new(
                        base.x + (a as f64 + rng.gen::<f64>()) * cell,
                        base.y + (b as f64 + rng.gen::<f64>()) * cell,
                        base.z + (c as f64 + rng.gen::<f64>()) * cell,
                    );
                    out.push((p, vi as u32));
                    taken += 1;
                }
            }
        }
    }
    out
}
