//! Sparse voxel structure with shared corner-vertex embeddings.
//!
//! Leaf voxels live on an integer lattice anchored at a fixed world origin;
//! all leaves share one edge length `voxel_size = initial_size / 2^level`.
//! Vertices are keyed by lattice coordinates so adjacent voxels share corner
//! embeddings exactly, with no float comparisons. Splitting rescales keys by
//! two and initializes new vertices from the trilinear field of the parent
//! grid, which leaves the interpolated field unchanged.

mod octree;
pub mod scene;
pub mod trilinear;

pub use octree::{Octree, VoxelHit};

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::Rng;
use rayon::prelude::*;

use crate::aabb::Aabb;
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Integer lattice coordinate, used for both voxel cells and corner vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ijk {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl Ijk {
    pub fn new(i: i32, j: i32, k: i32) -> Self {
        Ijk { i, j, k }
    }

    pub fn offset(self, d: [i32; 3]) -> Self {
        Ijk::new(self.i + d[0], self.j + d[1], self.k + d[2])
    }

    pub fn inf(self, o: &Ijk) -> Self {
        Ijk::new(self.i.min(o.i), self.j.min(o.j), self.k.min(o.k))
    }

    pub fn sup(self, o: &Ijk) -> Self {
        Ijk::new(self.i.max(o.i), self.j.max(o.j), self.k.max(o.k))
    }

    pub fn doubled(self) -> Self {
        Ijk::new(self.i * 2, self.j * 2, self.k * 2)
    }

    /// Parent cell at the next coarser level (floor division).
    pub fn halved(self) -> Self {
        Ijk::new(self.i.div_euclid(2), self.j.div_euclid(2), self.k.div_euclid(2))
    }

    pub fn as_vector(self) -> Vector3<f64> {
        Vector3::new(self.i as f64, self.j as f64, self.k as f64)
    }
}

/// Corner order: bit 0 = +i, bit 1 = +j, bit 2 = +k.
pub const CORNER_OFFSETS: [[i32; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// A set of voxel ids captured from one grid.
#[derive(Debug, Clone)]
pub struct VoxelSelection {
    pub ids: Vec<Ijk>,
}

/// Region argument for [`VoxelGrid::select_voxels`].
#[derive(Debug, Clone)]
pub enum SelectRegion {
    /// Voxels whose centers lie inside the box.
    Box(Aabb),
    /// Explicit ids; every id must exist in the grid.
    Ids(Vec<Ijk>),
}

#[derive(Debug, Clone, Copy)]
pub struct PruneReport {
    pub kept: usize,
    pub removed: usize,
}

/// Sparse set of cubic leaf voxels plus the shared vertex embedding store.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    level: u32,
    voxel_size: f64,
    origin: Point3<f64>,
    embedding_len: usize,
    voxels: Vec<Ijk>,
    voxel_lookup: HashMap<Ijk, u32>,
    /// Per voxel, arena indices of its 8 corner vertices in `CORNER_OFFSETS` order.
    corner_indices: Vec<[u32; 8]>,
    vertex_keys: Vec<Ijk>,
    vertex_lookup: HashMap<Ijk, u32>,
    /// Dense arena, `vertex_count * embedding_len`, f32 to match the on-disk format.
    embeddings: Vec<f32>,
    octree: Octree,
}

impl VoxelGrid {
    /// Tiles `bounds` with cubes of edge `voxel_size`, expanding symmetrically
    /// to the next whole multiple per axis. Embeddings are seeded uniform in
    /// [-1e-2, 1e-2].
    pub fn init(bounds: Aabb, voxel_size: f64, embedding_len: usize, seed: u64) -> Result<Self> {
        if voxel_size <= 0.0 || !voxel_size.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "voxel_size must be positive, got {voxel_size}"
            )));
        }
        if bounds.is_empty() {
            return Err(Error::InvalidArgument("empty bounds".into()));
        }
        let extent = bounds.extent();
        let min_extent = extent.min();
        if voxel_size > min_extent {
            return Err(Error::DegenerateGrid {
                voxel_size,
                extent: min_extent,
            });
        }
        if embedding_len == 0 {
            return Err(Error::InvalidArgument("embedding_len must be positive".into()));
        }

        let counts = [
            (extent.x / voxel_size).ceil() as i32,
            (extent.y / voxel_size).ceil() as i32,
            (extent.z / voxel_size).ceil() as i32,
        ];
        let center = bounds.center();
        let origin = Point3::new(
            center.x - counts[0] as f64 * voxel_size * 0.5,
            center.y - counts[1] as f64 * voxel_size * 0.5,
            center.z - counts[2] as f64 * voxel_size * 0.5,
        );

        let mut voxels = Vec::with_capacity((counts[0] * counts[1] * counts[2]) as usize);
        for i in 0..counts[0] {
            for j in 0..counts[1] {
                for k in 0..counts[2] {
                    voxels.push(Ijk::new(i, j, k));
                }
            }
        }
        voxels.sort_unstable();

        let mut rng = rng::stream(seed, Domain::EmbeddingInit, 0);
        Ok(Self::assemble(0, voxel_size, origin, embedding_len, voxels, |_key| {
            (0..embedding_len).map(|_| rng.gen_range(-1e-2..1e-2)).collect()
        }))
    }

    /// Builds the arena and octree from a sorted voxel list. `embed_for` is
    /// called once per vertex in ascending key order, which keeps seeded
    /// initialization deterministic.
    fn assemble(
        level: u32,
        voxel_size: f64,
        origin: Point3<f64>,
        embedding_len: usize,
        voxels: Vec<Ijk>,
        mut embed_for: impl FnMut(Ijk) -> Vec<f32>,
    ) -> Self {
        debug_assert!(voxels.windows(2).all(|w| w[0] < w[1]), "voxels sorted+unique");

        let mut vertex_keys: Vec<Ijk> = voxels
            .iter()
            .flat_map(|v| CORNER_OFFSETS.iter().map(move |d| v.offset(*d)))
            .collect();
        vertex_keys.sort_unstable();
        vertex_keys.dedup();

        let vertex_lookup: HashMap<Ijk, u32> = vertex_keys
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, i as u32))
            .collect();

        let mut embeddings = Vec::with_capacity(vertex_keys.len() * embedding_len);
        for key in &vertex_keys {
            let e = embed_for(*key);
            debug_assert_eq!(e.len(), embedding_len);
            embeddings.extend_from_slice(&e);
        }

        let corner_indices: Vec<[u32; 8]> = voxels
            .iter()
            .map(|v| {
                let mut c = [0u32; 8];
                for (slot, d) in CORNER_OFFSETS.iter().enumerate() {
                    c[slot] = vertex_lookup[&v.offset(*d)];
                }
                c
            })
            .collect();

        let voxel_lookup: HashMap<Ijk, u32> = voxels
            .iter()
            .enumerate()
            .map(|(i, v)| (*v, i as u32))
            .collect();

        let size = voxel_size;
        let org = origin;
        let octree = Octree::build(&voxels, |v| voxel_aabb_raw(org, size, &v));

        VoxelGrid {
            level,
            voxel_size,
            origin,
            embedding_len,
            voxels,
            voxel_lookup,
            corner_indices,
            vertex_keys,
            vertex_lookup,
            embeddings,
            octree,
        }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn origin(&self) -> Point3<f64> {
        self.origin
    }

    pub fn embedding_len(&self) -> usize {
        self.embedding_len
    }

    pub fn voxel_count(&self) -> usize {
        self.voxels.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_keys.len()
    }

    /// Sorted occupied cells.
    pub fn voxels(&self) -> &[Ijk] {
        &self.voxels
    }

    /// Sorted vertex keys; index order matches the embedding arena.
    pub fn vertex_keys(&self) -> &[Ijk] {
        &self.vertex_keys
    }

    pub fn octree(&self) -> &Octree {
        &self.octree
    }

    pub fn voxel_index(&self, key: Ijk) -> Option<u32> {
        self.voxel_lookup.get(&key).copied()
    }

    pub fn vertex_index(&self, key: Ijk) -> Option<u32> {
        self.vertex_lookup.get(&key).copied()
    }

    pub fn corner_indices(&self, voxel_index: u32) -> &[u32; 8] {
        &self.corner_indices[voxel_index as usize]
    }

    pub fn embedding(&self, vertex_index: u32) -> &[f32] {
        let s = vertex_index as usize * self.embedding_len;
        &self.embeddings[s..s + self.embedding_len]
    }

    pub fn embeddings(&self) -> &[f32] {
        &self.embeddings
    }

    pub fn embeddings_mut(&mut self) -> &mut [f32] {
        &mut self.embeddings
    }

    pub fn voxel_aabb(&self, key: Ijk) -> Aabb {
        voxel_aabb_raw(self.origin, self.voxel_size, &key)
    }

    pub fn voxel_center(&self, key: Ijk) -> Point3<f64> {
        self.origin + (key.as_vector() + Vector3::repeat(0.5)) * self.voxel_size
    }

    pub fn vertex_position(&self, key: Ijk) -> Point3<f64> {
        self.origin + key.as_vector() * self.voxel_size
    }

    /// World box spanned by the occupied voxels (None when empty).
    pub fn bounds(&self) -> Option<Aabb> {
        self.octree.root_aabb()
    }

    /// Containing voxel of `p` under the half-open convention [min, max) per
    /// axis, or None when `p` lies in no occupied voxel.
    pub fn locate(&self, p: &Point3<f64>) -> Option<u32> {
        let cell = Ijk::new(
            ((p.x - self.origin.x) / self.voxel_size).floor() as i32,
            ((p.y - self.origin.y) / self.voxel_size).floor() as i32,
            ((p.z - self.origin.z) / self.voxel_size).floor() as i32,
        );
        self.voxel_index(cell)
    }

    /// Local coordinates of `p` in voxel `key`, in [0, 1]³ for points inside.
    pub fn local_coords(&self, key: Ijk, p: &Point3<f64>) -> [f64; 3] {
        let rel = (p - self.origin) / self.voxel_size - key.as_vector();
        [rel.x, rel.y, rel.z]
    }

    /// Trilinear interpolation of corner embeddings at local coordinates `u`
    /// of the voxel at `voxel_index`. `out` must have length `embedding_len`.
    pub fn interpolate(&self, voxel_index: u32, u: [f64; 3], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.embedding_len);
        out.fill(0.0);
        let w = trilinear::weights(u);
        let corners = &self.corner_indices[voxel_index as usize];
        for (c, &vi) in corners.iter().enumerate() {
            let e = self.embedding(vi);
            let wc = w[c];
            for (o, &ev) in out.iter_mut().zip(e) {
                *o += wc * ev as f64;
            }
        }
    }

    /// Voxels whose centers lie in `region` (box form), or the validated
    /// explicit list. An empty result is not an error.
    pub fn select_voxels(&self, region: &SelectRegion) -> Result<VoxelSelection> {
        match region {
            SelectRegion::Box(aabb) => {
                if aabb.min.iter().chain(aabb.max.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite selection box".into()));
                }
                let ids = self
                    .voxels
                    .iter()
                    .copied()
                    .filter(|v| aabb.contains(&self.voxel_center(*v)))
                    .collect();
                Ok(VoxelSelection { ids })
            }
            SelectRegion::Ids(ids) => {
                for id in ids {
                    if self.voxel_index(*id).is_none() {
                        return Err(Error::InvalidArgument(format!(
                            "selection id {id:?} not in grid"
                        )));
                    }
                }
                Ok(VoxelSelection { ids: ids.clone() })
            }
        }
    }

    /// New grid keeping only `keep` (sorted or not), dropping vertices no
    /// surviving voxel references. Level and lattice are unchanged.
    pub fn subset(&self, keep: &[Ijk]) -> Result<VoxelGrid> {
        let mut voxels: Vec<Ijk> = Vec::with_capacity(keep.len());
        for v in keep {
            if self.voxel_index(*v).is_none() {
                return Err(Error::InvalidArgument(format!("voxel {v:?} not in grid")));
            }
            voxels.push(*v);
        }
        voxels.sort_unstable();
        voxels.dedup();
        Ok(Self::assemble(
            self.level,
            self.voxel_size,
            self.origin,
            self.embedding_len,
            voxels,
            |key| self.embedding(self.vertex_lookup[&key]).to_vec(),
        ))
    }

    /// Keeps every voxel in which some sampled point has |sdf| < tau (the
    /// reserve test), dropping the rest. Sampling is a stratified jittered
    /// grid of ceil(n^(1/3))³ points per voxel.
    ///
    /// `sdf` receives the sample position and the voxel id it came from.
    pub fn prune(
        &self,
        sdf: &(dyn Fn(&Point3<f64>, Ijk) -> f64 + Sync),
        tau: f64,
        samples_per_voxel: usize,
        seed: u64,
    ) -> Result<(VoxelGrid, PruneReport)> {
        if tau <= 0.0 {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        if samples_per_voxel < 8 {
            return Err(Error::InvalidArgument(
                "samples_per_voxel must be at least 8".into(),
            ));
        }
        let side = (samples_per_voxel as f64).cbrt().ceil() as usize;
        let cell = self.voxel_size / side as f64;

        let kept_flags: Vec<bool> = self
            .voxels
            .par_iter()
            .enumerate()
            .map(|(vi, v)| {
                let mut rng = rng::stream(seed, Domain::PruneSampling, vi as u64);
                let base = self.vertex_position(*v);
                let mut found = false;
                'search: for a in 0..side {
                    for b in 0..side {
                        for c in 0..side {
                            let p = Point3::new(
                                base.x + (a as f64 + rng.gen::<f64>()) * cell,
                                base.y + (b as f64 + rng.gen::<f64>()) * cell,
                                base.z + (c as f64 + rng.gen::<f64>()) * cell,
                            );
                            if sdf(&p, *v).abs() < tau {
                                found = true;
                                break 'search;
                            }
                        }
                    }
                }
                found
            })
            .collect();

        let kept: Vec<Ijk> = self
            .voxels
            .iter()
            .zip(&kept_flags)
            .filter(|(_, &k)| k)
            .map(|(v, _)| *v)
            .collect();

        if kept.is_empty() {
            return Err(Error::EmptyGridAfterPrune { tau });
        }
        let report = PruneReport {
            kept: kept.len(),
            removed: self.voxels.len() - kept.len(),
        };
        let grid = Self::assemble(
            self.level,
            self.voxel_size,
            self.origin,
            self.embedding_len,
            kept,
            |key| self.embedding(self.vertex_lookup[&key]).to_vec(),
        );
        Ok((grid, report))
    }

    /// Replaces every voxel by its 8 children at the next level. Existing
    /// vertex embeddings carry over (keys rescaled by 2); new vertices take
    /// the trilinear field of this grid at their positions, so the
    /// interpolated field is preserved.
    pub fn split(&self) -> Result<VoxelGrid> {
        if self.voxels.is_empty() {
            return Err(Error::InvalidArgument("cannot split an empty grid".into()));
        }
        let mut children = Vec::with_capacity(self.voxels.len() * 8);
        for v in &self.voxels {
            let base = v.doubled();
            for d in CORNER_OFFSETS {
                children.push(base.offset(d));
            }
        }
        children.sort_unstable();

        let child_size = self.voxel_size * 0.5;
        let mut scratch = vec![0.0f64; self.embedding_len];
        Ok(Self::assemble(
            self.level + 1,
            child_size,
            self.origin,
            self.embedding_len,
            children,
            |key| {
                // Carried-over vertex: even key with an entry in the parent store.
                if key.i % 2 == 0 && key.j % 2 == 0 && key.k % 2 == 0 {
                    if let Some(&old) = self.vertex_lookup.get(&key.halved()) {
                        return self.embedding(old).to_vec();
                    }
                }
                // New vertex: evaluate the parent grid's field at its position.
                // Any adjacent parent voxel gives the same value (shared-face
                // continuity); take the first in fixed order for determinism.
                for d in CORNER_OFFSETS {
                    let cell = key.offset([-d[0], -d[1], -d[2]]);
                    let parent = cell.halved();
                    if let Some(&pi) = self.voxel_lookup.get(&parent) {
                        let u = [
                            (key.i as f64 - 2.0 * parent.i as f64) * 0.5,
                            (key.j as f64 - 2.0 * parent.j as f64) * 0.5,
                            (key.k as f64 - 2.0 * parent.k as f64) * 0.5,
                        ];
                        self.interpolate(pi, u, &mut scratch);
                        return scratch.iter().map(|&x| x as f32).collect();
                    }
                }
                unreachable!("new vertex must touch a parent voxel");
            },
        ))
    }
}

fn voxel_aabb_raw(origin: Point3<f64>, size: f64, v: &Ijk) -> Aabb {
    let min = origin + v.as_vector() * size;
    Aabb::new(min, min + Vector3::repeat(size))
}
