//! Explicit surface extraction (marching cubes over retained voxels) and
//! evaluation metrics.

pub mod mesh;
pub mod metrics;
mod tables;

pub use mesh::TriangleMesh;
pub use metrics::{chamfer, chamfer_squared, f_score, psnr, KdTree};

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;

use crate::field::{self, FieldModel, FieldWorkspace};
use crate::voxgrid::{Ijk, VoxelGrid};

use tables::{triangle_table, EDGE_AXIS, EDGE_CORNERS};

/// Zero-level-set extraction. Every retained voxel is subdivided into
/// `cells_per_voxel`³ cells; the SDF is sampled at cell corners through each
/// voxel's own parameterization (shared-face values agree bitwise, so the
/// welded mesh is watertight). Linear interpolation places vertices on cut
/// edges; vertices are deduplicated on global edge keys.
pub fn extract_mesh(
    grid: &VoxelGrid,
    sdf: &(dyn Fn(&Point3<f64>, Ijk) -> f64 + Sync),
    cells_per_voxel: usize,
) -> TriangleMesh {
    assert!(cells_per_voxel >= 1);
    let cpv = cells_per_voxel as i64;
    let table = triangle_table();

    // Per voxel: triangles as (edge key, position) triples.
    type EdgeKey = (i64, i64, i64, u8);
    let per_voxel: Vec<Vec<[(EdgeKey, Point3<f64>); 3]>> = grid
        .voxels()
        .par_iter()
        .map(|&v| {
            let base = grid.vertex_position(v);
            let cell = grid.voxel_size() / cells_per_voxel as f64;
            let n = cells_per_voxel + 1;
            // Closed corner lattice of this voxel.
            let mut values = vec![0.0f64; n * n * n];
            for a in 0..n {
                for b in 0..n {
                    for c in 0..n {
                        let p = Point3::new(
                            base.x + a as f64 * cell,
                            base.y + b as f64 * cell,
                            base.z + c as f64 * cell,
                        );
                        values[(a * n + b) * n + c] = sdf(&p, v);
                    }
                }
            }
            let at = |a: usize, b: usize, c: usize| values[(a * n + b) * n + c];
            let global = |a: usize, b: usize, c: usize| {
                (
                    v.i as i64 * cpv + a as i64,
                    v.j as i64 * cpv + b as i64,
                    v.k as i64 * cpv + c as i64,
                )
            };
            let pos = |g: (i64, i64, i64)| {
                Point3::new(
                    grid.origin().x + g.0 as f64 * cell,
                    grid.origin().y + g.1 as f64 * cell,
                    grid.origin().z + g.2 as f64 * cell,
                )
            };

            let mut tris = Vec::new();
            for a in 0..cells_per_voxel {
                for b in 0..cells_per_voxel {
                    for c in 0..cells_per_voxel {
                        let corner_val = |bit: usize| {
                            at(a + (bit & 1), b + ((bit >> 1) & 1), c + ((bit >> 2) & 1))
                        };
                        let mut config = 0usize;
                        for bit in 0..8 {
                            if corner_val(bit) < 0.0 {
                                config |= 1 << bit;
                            }
                        }
                        if config == 0 || config == 255 {
                            continue;
                        }
                        let corner_global = |bit: usize| {
                            global(a + (bit & 1), b + ((bit >> 1) & 1), c + ((bit >> 2) & 1))
                        };
                        for tri in &table[config] {
                            let mut out = [((0i64, 0i64, 0i64, 0u8), Point3::origin()); 3];
                            for (slot, &e) in tri.iter().enumerate() {
                                let (ca, cb) = EDGE_CORNERS[e as usize];
                                let (va, vb) = (corner_val(ca), corner_val(cb));
                                let t = (va / (va - vb)).clamp(0.0, 1.0);
                                let (ga, gb) = (corner_global(ca), corner_global(cb));
                                let (pa, pb) = (pos(ga), pos(gb));
                                let key = (ga.0, ga.1, ga.2, EDGE_AXIS[e as usize] as u8);
                                debug_assert!(
                                    ga.0 <= gb.0 && ga.1 <= gb.1 && ga.2 <= gb.2,
                                    "edge corners ordered min-first"
                                );
                                out[slot] = (key, pa + (pb - pa) * t);
                            }
                            tris.push(out);
                        }
                    }
                }
            }
            tris
        })
        .collect();

    // Serial weld in voxel order: deterministic vertex ids, shared edges
    // resolve to a single vertex.
    let mut mesh = TriangleMesh::default();
    let mut edge_vertex: HashMap<EdgeKey, u32> = HashMap::new();
    for tris in per_voxel {
        for tri in tris {
            let mut ids = [0u32; 3];
            for (slot, (key, p)) in tri.into_iter().enumerate() {
                let id = *edge_vertex.entry(key).or_insert_with(|| {
                    mesh.vertices.push(p);
                    (mesh.vertices.len() - 1) as u32
                });
                ids[slot] = id;
            }
            // Clamped interpolation can collapse a triangle to a segment.
            if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                mesh.triangles.push(ids);
            }
        }
    }
    mesh
}

/// Extraction for a learned field: the SDF is evaluated through each
/// voxel's trilinear parameterization.
pub fn extract_mesh_learned(
    grid: &VoxelGrid,
    model: &FieldModel,
    cells_per_voxel: usize,
) -> TriangleMesh {
    let sdf = move |p: &Point3<f64>, v: Ijk| {
        let mut ws = FieldWorkspace::new(&model.config);
        let vi = grid.voxel_index(v).expect("extraction voxel in grid");
        field::sdf_in_voxel(model, grid, vi, p, &mut ws)
    };
    extract_mesh(grid, &sdf, cells_per_voxel)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AttributeStats {
    /// Vertices that fell outside every voxel and were clamped to the
    /// nearest one (numerical drift at the outer boundary).
    pub clamped: usize,
}

/// Fills per-vertex normals (normalized SDF gradients) and colors
/// (appearance at the vertex, viewed along -normal unless `view` is given).
pub fn mesh_normals_and_colors(
    mesh: &mut TriangleMesh,
    grid: &VoxelGrid,
    model: &FieldModel,
    view: Option<Vector3<f64>>,
) -> AttributeStats {
    let bounds = grid.bounds().expect("grid not empty");
    let eps = 1e-9 * grid.voxel_size();
    let results: Vec<(Vector3<f64>, Vector3<f64>, bool)> = mesh
        .vertices
        .par_iter()
        .map_init(
            || FieldWorkspace::new(&model.config),
            |ws, v| {
                let mut p = *v;
                let mut clamped = false;
                if grid.locate(&p).is_none() {
                    // Nudge inside the outer boundary, then fall back to the
                    // nearest voxel center direction.
                    for a in 0..3 {
                        p[a] = p[a].clamp(bounds.min[a] + eps, bounds.max[a] - eps);
                    }
                    if grid.locate(&p).is_none() {
                        let nearest = grid
                            .voxels()
                            .iter()
                            .min_by(|x, y| {
                                let dx = (grid.voxel_center(**x) - *v).norm_squared();
                                let dy = (grid.voxel_center(**y) - *v).norm_squared();
                                dx.total_cmp(&dy)
                            })
                            .copied()
                            .unwrap();
                        let c = grid.voxel_center(nearest);
                        p = c + (p - c).normalize() * (0.5 * grid.voxel_size() - eps);
                    }
                    clamped = true;
                }
                let vi = grid.locate(&p).expect("clamped point lies in a voxel");
                let geo = field::autodiff::geometry_forward(model, grid, vi, &p, true, ws);
                let g = geo.grad.unwrap();
                let normal = if g.norm() > 1e-12 {
                    g.normalize()
                } else {
                    Vector3::new(0.0, 0.0, 1.0)
                };
                let d = view.unwrap_or(-normal);
                let c = field::autodiff::appearance_forward(model, &d.normalize(), ws);
                (normal, Vector3::new(c[0], c[1], c[2]), clamped)
            },
        )
        .collect();

    let mut stats = AttributeStats::default();
    let mut normals = Vec::with_capacity(results.len());
    let mut colors = Vec::with_capacity(results.len());
    for (n, c, clamped) in results {
        normals.push(n);
        colors.push(c);
        stats.clamped += clamped as usize;
    }
    mesh.normals = Some(normals);
    mesh.colors = Some(colors);
    stats
}
