//! Hierarchical index over occupied leaf voxels.
//!
//! The tree partitions the voxel lattice into octants; every node stores the
//! tight world-space box of the voxels below it, so ray traversal is a
//! cascade of slab tests that emits leaves strictly front to back.

use nalgebra::{Point3, Vector3};

use crate::aabb::Aabb;

use super::Ijk;

/// One leaf intersection along a ray. `t` values are in world units of the
/// (possibly unnormalized) query direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelHit {
    pub voxel: Ijk,
    pub t_enter: f64,
    pub t_exit: f64,
}

impl VoxelHit {
    /// In-voxel path length of the ray.
    pub fn span(&self) -> f64 {
        self.t_exit - self.t_enter
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf { voxel: Ijk },
    Branch { children: Vec<u32> },
}

#[derive(Debug, Clone)]
struct Node {
    aabb: Aabb,
    kind: NodeKind,
}

#[derive(Debug, Clone)]
pub struct Octree {
    nodes: Vec<Node>,
    leaf_count: usize,
}

impl Octree {
    /// Builds the tree over `voxels` (must be sorted and unique). `box_of`
    /// maps a lattice coordinate to its world box.
    pub fn build(voxels: &[Ijk], box_of: impl Fn(Ijk) -> Aabb) -> Self {
        let mut tree = Octree {
            nodes: Vec::new(),
            leaf_count: voxels.len(),
        };
        if !voxels.is_empty() {
            let mut scratch: Vec<Ijk> = voxels.to_vec();
            tree.build_node(&mut scratch, &box_of);
        }
        tree
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn root_aabb(&self) -> Option<Aabb> {
        self.nodes.first().map(|n| n.aabb)
    }

    fn build_node(&mut self, voxels: &mut [Ijk], box_of: &impl Fn(Ijk) -> Aabb) -> u32 {
        debug_assert!(!voxels.is_empty());
        let index = self.nodes.len() as u32;
        if voxels.len() == 1 {
            self.nodes.push(Node {
                aabb: box_of(voxels[0]),
                kind: NodeKind::Leaf { voxel: voxels[0] },
            });
            return index;
        }

        let mut lo = voxels[0];
        let mut hi = voxels[0];
        for v in voxels.iter() {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        // Midpoint split in lattice space; `mid` is the first coordinate of
        // the upper half so single-cell axes never produce empty recursion.
        let mid = Ijk::new(
            lo.i + (hi.i - lo.i + 1) / 2,
            lo.j + (hi.j - lo.j + 1) / 2,
            lo.k + (hi.k - lo.k + 1) / 2,
        );
        let octant = |v: &Ijk| -> usize {
            ((v.i >= mid.i) as usize) | (((v.j >= mid.j) as usize) << 1) | (((v.k >= mid.k) as usize) << 2)
        };
        voxels.sort_by_key(|v| octant(v));

        self.nodes.push(Node {
            // Placeholder; patched after children exist.
            aabb: Aabb::new(Point3::origin(), Point3::origin()),
            kind: NodeKind::Branch { children: Vec::new() },
        });

        let mut children = Vec::new();
        let mut start = 0;
        while start < voxels.len() {
            let oct = octant(&voxels[start]);
            let mut end = start + 1;
            while end < voxels.len() && octant(&voxels[end]) == oct {
                end += 1;
            }
            // A degenerate split (all voxels in one octant) cannot happen:
            // the bounding lattice box spans at least two cells on some axis,
            // and `mid` separates it on that axis.
            let child = {
                let (_, rest) = voxels.split_at_mut(start);
                let (chunk, _) = rest.split_at_mut(end - start);
                self.build_node(chunk, box_of)
            };
            children.push(child);
            start = end;
        }

        let mut aabb = self.nodes[children[0] as usize].aabb;
        for &c in &children[1..] {
            aabb = aabb.union(&self.nodes[c as usize].aabb);
        }
        self.nodes[index as usize].aabb = aabb;
        self.nodes[index as usize].kind = NodeKind::Branch { children };
        index
    }

    /// Front-to-back leaf intersections, truncated at `max_hits`.
    ///
    /// `dir` may be unnormalized (instanced traversal passes scaled
    /// directions); `t` values are parametric along the given `dir`.
    pub fn intersect(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        max_hits: usize,
    ) -> Vec<VoxelHit> {
        let mut hits = Vec::new();
        if self.nodes.is_empty() || max_hits == 0 {
            return hits;
        }
        let inv = dir.map(|x| 1.0 / x);
        self.visit(0, origin, &inv, max_hits, &mut hits);
        hits
    }

    fn visit(
        &self,
        node: u32,
        origin: &Point3<f64>,
        inv_dir: &Vector3<f64>,
        max_hits: usize,
        hits: &mut Vec<VoxelHit>,
    ) {
        if hits.len() >= max_hits {
            return;
        }
        let n = &self.nodes[node as usize];
        let Some((t0, t1)) = n.aabb.ray_range(origin, inv_dir, 0.0) else {
            return;
        };
        match &n.kind {
            NodeKind::Leaf { voxel } => hits.push(VoxelHit {
                voxel: *voxel,
                t_enter: t0,
                t_exit: t1,
            }),
            NodeKind::Branch { children } => {
                // Octants are spatially disjoint, so ordering children by
                // entry distance yields a globally front-to-back emission.
                let mut order: Vec<(f64, u32)> = children
                    .iter()
                    .filter_map(|&c| {
                        self.nodes[c as usize]
                            .aabb
                            .ray_range(origin, inv_dir, 0.0)
                            .map(|(t0, _)| (t0, c))
                    })
                    .collect();
                order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                for (_, c) in order {
                    self.visit(c, origin, inv_dir, max_hits, hits);
                    if hits.len() >= max_hits {
                        return;
                    }
                }
            }
        }
    }

    /// All leaves, in tree order.
    pub fn leaves(&self) -> Vec<Ijk> {
        let mut out = Vec::with_capacity(self.leaf_count);
        for n in &self.nodes {
            if let NodeKind::Leaf { voxel } = n.kind {
                out.push(voxel);
            }
        }
        out
    }

    /// Leaves whose boxes overlap `query` with positive volume.
    pub fn query_box(&self, query: &Aabb) -> Vec<Ijk> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.query_node(0, query, &mut out);
        }
        out
    }

    fn query_node(&self, node: u32, query: &Aabb, out: &mut Vec<Ijk>) {
        let n = &self.nodes[node as usize];
        let overlaps = (0..3).all(|a| n.aabb.min[a] < query.max[a] && query.min[a] < n.aabb.max[a]);
        if !overlaps {
            return;
        }
        match &n.kind {
            NodeKind::Leaf { voxel } => out.push(*voxel),
            NodeKind::Branch { children } => {
                for &c in children {
                    self.query_node(c, query, out);
                }
            }
        }
    }
}
