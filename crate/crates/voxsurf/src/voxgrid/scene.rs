//! Multi-instance scenes: voxel editing, object composition, and collision
//! queries over transformed voxel boxes.
//!
//! Edits never rewrite embeddings. A selected subset becomes its own
//! instance with a rigid-or-similarity transform applied at query time;
//! geometry queries map points back through the inverse transform before
//! retrieval, so `sdf_world(p) = scale * sdf_local(inverse(p))` holds
//! exactly.

use std::sync::Arc;

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};

use crate::aabb::Aabb;
use crate::error::{Error, Result};
use crate::field::FieldModel;

use super::{Ijk, VoxelGrid, VoxelSelection};

/// Rigid motion plus uniform scale, applied local-to-world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceTransform {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
    pub scale: f64,
}

impl InstanceTransform {
    pub fn identity() -> Self {
        InstanceTransform {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    pub fn translation(offset: Vector3<f64>) -> Self {
        InstanceTransform {
            rotation: Rotation3::identity(),
            translation: offset,
            scale: 1.0,
        }
    }

    /// Uniform scaling about a pivot point.
    pub fn scaling_about(factor: f64, pivot: Point3<f64>) -> Self {
        InstanceTransform {
            rotation: Rotation3::identity(),
            translation: pivot.coords * (1.0 - factor),
            scale: factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.rotation.matrix();
        let err = (m.transpose() * m - Matrix3::identity()).norm();
        if err > 1e-6 || (m.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument("rotation not orthonormal".into()));
        }
        if self.scale <= 0.0 || !self.scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale {}", self.scale)));
        }
        Ok(())
    }

    pub fn to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * Point3::from(p.coords * self.scale) + self.translation
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from((self.rotation.inverse() * (p - self.translation)) / self.scale)
    }

    /// World direction into the local frame, unscaled; keeps the world
    /// parameterization: p_local(t) = to_local(o) + t * dir_to_local(d).
    pub fn dir_to_local(&self, d: &Vector3<f64>) -> Vector3<f64> {
        (self.rotation.inverse() * d) / self.scale
    }

    pub fn dir_to_world_rotation(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * d
    }

    /// Homogeneous local-to-world matrix (rotation * scale | translation).
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(self.rotation.matrix() * self.scale));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let a = m.fixed_view::<3, 3>(0, 0).into_owned();
        let det = a.determinant();
        if det <= 0.0 || !det.is_finite() {
            return Err(Error::InvalidArgument(format!("transform determinant {det}")));
        }
        let scale = det.cbrt();
        let rotation = Rotation3::from_matrix_unchecked(a / scale);
        let t = InstanceTransform {
            rotation,
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
            scale,
        };
        t.validate()?;
        Ok(t)
    }
}

/// One placed object: a voxel grid, its field, and a transform.
#[derive(Debug, Clone)]
pub struct SceneInstance {
    pub grid: Arc<VoxelGrid>,
    pub field: Arc<FieldModel>,
    pub transform: InstanceTransform,
}

impl SceneInstance {
    /// Signed distance of the instanced field at a world point.
    pub fn sdf_world(&self, p: &Point3<f64>) -> Option<f64> {
        let local = self.transform.to_local(p);
        crate::field::sdf(&self.field, &self.grid, &local).map(|s| s * self.transform.scale)
    }

    /// World-space oriented box of one leaf voxel.
    pub fn voxel_obb(&self, v: Ijk) -> Obb {
        let aabb = self.grid.voxel_aabb(v);
        let center = self.transform.to_world(&aabb.center());
        let half = 0.5 * self.grid.voxel_size() * self.transform.scale;
        Obb {
            center,
            axes: *self.transform.rotation.matrix(),
            half_extents: Vector3::repeat(half),
        }
    }
}

/// A renderable multi-object scene.
#[derive(Debug, Clone, Default)]
pub struct SceneGrid {
    pub instances: Vec<SceneInstance>,
}

impl SceneGrid {
    pub fn single(grid: Arc<VoxelGrid>, field: Arc<FieldModel>) -> Self {
        SceneGrid {
            instances: vec![SceneInstance {
                grid,
                field,
                transform: InstanceTransform::identity(),
            }],
        }
    }
}

/// Combines objects into one scene, validating every transform.
pub fn compose(
    instances: Vec<(Arc<VoxelGrid>, InstanceTransform, Arc<FieldModel>)>,
) -> Result<SceneGrid> {
    let mut scene = SceneGrid::default();
    for (grid, transform, field) in instances {
        transform.validate()?;
        scene.instances.push(SceneInstance {
            grid,
            field,
            transform,
        });
    }
    Ok(scene)
}

/// Voxel editing operations.
#[derive(Debug, Clone)]
pub enum EditOp {
    /// Offset must be a whole multiple of the voxel size per axis.
    Translate(Vector3<f64>),
    Scale { factor: f64, pivot: Point3<f64> },
    /// Lattice-aligned copy of the selection.
    Duplicate(Vector3<f64>),
    Delete,
}

/// Applies an edit to the selected voxels, producing a scene whose
/// instances share the original embeddings and field.
///
/// Translate and duplicate reject destination overlap with the remaining
/// voxels unless `allow_overlap` (compositing) is requested.
pub fn edit_voxels(
    grid: &Arc<VoxelGrid>,
    field: &Arc<FieldModel>,
    sel: &VoxelSelection,
    op: &EditOp,
    allow_overlap: bool,
) -> Result<SceneGrid> {
    for id in &sel.ids {
        if grid.voxel_index(*id).is_none() {
            return Err(Error::InvalidArgument(format!("selection id {id:?} not in grid")));
        }
    }
    let selected: std::collections::HashSet<Ijk> = sel.ids.iter().copied().collect();
    let rest: Vec<Ijk> = grid
        .voxels()
        .iter()
        .copied()
        .filter(|v| !selected.contains(v))
        .collect();

    let lattice_offset = |offset: &Vector3<f64>| -> Result<Ijk> {
        let size = grid.voxel_size();
        let mut cells = [0i32; 3];
        for a in 0..3 {
            let c = offset[a] / size;
            if (c - c.round()).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "offset component {} is not a multiple of voxel size {size}",
                    offset[a]
                )));
            }
            cells[a] = c.round() as i32;
        }
        Ok(Ijk::new(cells[0], cells[1], cells[2]))
    };

    let check_overlap = |moved: &[Ijk], cell_off: Ijk, against: &[Ijk]| -> Result<()> {
        if allow_overlap {
            return Ok(());
        }
        let occupied: std::collections::HashSet<Ijk> = against.iter().copied().collect();
        let count = moved
            .iter()
            .filter(|v| occupied.contains(&v.offset([cell_off.i, cell_off.j, cell_off.k])))
            .count();
        if count > 0 {
            return Err(Error::OverlappingInstance { count });
        }
        Ok(())
    };

    let mut scene = SceneGrid::default();
    match op {
        EditOp::Translate(offset) => {
            let cell_off = lattice_offset(offset)?;
            check_overlap(&sel.ids, cell_off, &rest)?;
            if !rest.is_empty() {
                scene.instances.push(SceneInstance {
                    grid: Arc::new(grid.subset(&rest)?),
                    field: field.clone(),
                    transform: InstanceTransform::identity(),
                });
            }
            scene.instances.push(SceneInstance {
                grid: Arc::new(grid.subset(&sel.ids)?),
                field: field.clone(),
                transform: InstanceTransform::translation(*offset),
            });
        }
        EditOp::Duplicate(offset) => {
            let cell_off = lattice_offset(offset)?;
            check_overlap(&sel.ids, cell_off, grid.voxels())?;
            scene.instances.push(SceneInstance {
                grid: grid.clone(),
                field: field.clone(),
                transform: InstanceTransform::identity(),
            });
            scene.instances.push(SceneInstance {
                grid: Arc::new(grid.subset(&sel.ids)?),
                field: field.clone(),
                transform: InstanceTransform::translation(*offset),
            });
        }
        EditOp::Scale { factor, pivot } => {
            if *factor <= 0.0 {
                return Err(Error::InvalidArgument(format!("scale factor {factor}")));
            }
            if !rest.is_empty() {
                scene.instances.push(SceneInstance {
                    grid: Arc::new(grid.subset(&rest)?),
                    field: field.clone(),
                    transform: InstanceTransform::identity(),
                });
            }
            scene.instances.push(SceneInstance {
                grid: Arc::new(grid.subset(&sel.ids)?),
                field: field.clone(),
                transform: InstanceTransform::scaling_about(*factor, *pivot),
            });
        }
        EditOp::Delete => {
            if rest.is_empty() {
                return Err(Error::InvalidArgument("delete would empty the scene".into()));
            }
            scene.instances.push(SceneInstance {
                grid: Arc::new(grid.subset(&rest)?),
                field: field.clone(),
                transform: InstanceTransform::identity(),
            });
        }
    }
    Ok(scene)
}

/// Oriented box: center, rotation matrix columns as axes, half extents.
#[derive(Debug, Clone, Copy)]
pub struct Obb {
    pub center: Point3<f64>,
    pub axes: Matrix3<f64>,
    pub half_extents: Vector3<f64>,
}

impl Obb {
    /// World-space enclosing AABB.
    pub fn aabb(&self) -> Aabb {
        let mut half = Vector3::zeros();
        for a in 0..3 {
            half[a] = (0..3)
                .map(|b| self.axes[(a, b)].abs() * self.half_extents[b])
                .sum();
        }
        Aabb::new(self.center - half, self.center + half)
    }
}

/// Separating-axis test; true when the boxes overlap with positive volume
/// (face contact does not count).
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let t = b.center - a.center;
    let mut axes: Vec<Vector3<f64>> = Vec::with_capacity(15);
    for i in 0..3 {
        axes.push(a.axes.column(i).into_owned());
        axes.push(b.axes.column(i).into_owned());
    }
    for i in 0..3 {
        for j in 0..3 {
            let c = a.axes.column(i).cross(&b.axes.column(j));
            if c.norm_squared() > 1e-12 {
                axes.push(c);
            }
        }
    }
    for axis in &axes {
        let ra: f64 = (0..3)
            .map(|i| (a.axes.column(i).dot(axis)).abs() * a.half_extents[i])
            .sum();
        let rb: f64 = (0..3)
            .map(|i| (b.axes.column(i).dot(axis)).abs() * b.half_extents[i])
            .sum();
        if t.dot(axis).abs() >= ra + rb - 1e-12 {
            return false;
        }
    }
    true
}

/// All pairs of leaf voxels from `a` and `b` whose transformed boxes
/// intersect, found by walking `b`'s octree with each of `a`'s boxes.
/// Returns (any overlap, pairs in (a voxel, b voxel) order).
pub fn collision_query(a: &SceneInstance, b: &SceneInstance) -> (bool, Vec<(Ijk, Ijk)>) {
    let mut pairs = Vec::new();
    for &va in a.grid.voxels() {
        let obb_a = a.voxel_obb(va);
        // Conservative bound of a's box in b's local frame drives the octree walk.
        let local = Obb {
            center: b.transform.to_local(&obb_a.center),
            axes: (b.transform.rotation.inverse().matrix() * obb_a.axes),
            half_extents: obb_a.half_extents / b.transform.scale,
        };
        let query = local.aabb();
        for vb in b.grid.octree().query_box(&query) {
            if obb_overlap(&obb_a, &b.voxel_obb(vb)) {
                pairs.push((va, vb));
            }
        }
    }
    (!pairs.is_empty(), pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;

    fn tiny_field() -> Arc<FieldModel> {
        Arc::new(FieldModel::new(
            FieldConfig {
                embedding_len: 4,
                feature_len: 8,
                hidden_dim: 8,
                geometry_layers: 2,
                appearance_layers: 2,
                freq_e: 2,
                freq_d: 2,
            },
            1,
        ))
    }

    fn unit_grid() -> Arc<VoxelGrid> {
        Arc::new(
            VoxelGrid::init(
                Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)),
                0.5,
                4,
                1,
            )
            .unwrap(),
        )
    }

    #[test]
    fn transform_round_trip_and_scaling_identity() {
        let t = InstanceTransform {
            rotation: Rotation3::from_euler_angles(0.2, -0.7, 1.1),
            translation: Vector3::new(0.3, -2.0, 0.9),
            scale: 2.5,
        };
        let p = Point3::new(0.4, 0.6, -0.2);
        let q = t.to_local(&t.to_world(&p));
        assert!((q - p).norm() < 1e-12);

        let s = InstanceTransform::scaling_about(2.0, Point3::new(1.0, 0.0, -1.0));
        // to_local must equal pivot + (p - pivot) / factor.
        let p = Point3::new(3.0, 2.0, 1.0);
        let expect = Point3::new(1.0 + 1.0, 1.0, -1.0 + 1.0);
        assert!((s.to_local(&p) - expect).norm() < 1e-12);

        let m = t.matrix();
        let back = InstanceTransform::from_matrix(&m).unwrap();
        assert!((back.scale - t.scale).abs() < 1e-9);
        assert!((back.translation - t.translation).norm() < 1e-12);
        assert!((back.rotation.matrix() - t.rotation.matrix()).norm() < 1e-9);
    }

    #[test]
    fn translate_edit_moves_sdf_field() {
        let grid = unit_grid();
        let field = tiny_field();
        let sel = VoxelSelection { ids: grid.voxels().to_vec() };
        let offset = Vector3::new(grid.voxel_size(), 0.0, 0.0);
        let scene = edit_voxels(&grid, &field, &sel, &EditOp::Translate(offset), false).unwrap();
        assert_eq!(scene.instances.len(), 1);
        let moved = &scene.instances[0];
        let p = Point3::new(0.8, 0.4, 0.3);
        let s_new = moved.sdf_world(&p).unwrap();
        let s_old = crate::field::sdf(&field, &grid, &Point3::from(p - offset)).unwrap();
        assert!((s_new - s_old).abs() < 1e-12);
    }

    #[test]
    fn translate_collision_detected_unless_composited() {
        let grid = unit_grid();
        let field = tiny_field();
        // Move the low-x half onto the high-x half: overlap.
        let ids: Vec<Ijk> = grid.voxels().iter().copied().filter(|v| v.i == 0).collect();
        let sel = VoxelSelection { ids };
        let offset = Vector3::new(grid.voxel_size(), 0.0, 0.0);
        let err = edit_voxels(&grid, &field, &sel, &EditOp::Translate(offset), false).unwrap_err();
        assert!(matches!(err, Error::OverlappingInstance { count: 4 }));
        assert!(edit_voxels(&grid, &field, &sel, &EditOp::Translate(offset), true).is_ok());
        // Non-lattice offset rejected.
        let bad = Vector3::new(0.3, 0.0, 0.0);
        assert!(edit_voxels(&grid, &field, &sel, &EditOp::Translate(bad), false).is_err());
    }

    #[test]
    fn scale_edit_satisfies_similarity_identity() {
        let grid = unit_grid();
        let field = tiny_field();
        let sel = VoxelSelection { ids: grid.voxels().to_vec() };
        let pivot = Point3::new(0.5, 0.5, 0.5);
        let scene = edit_voxels(&grid, &field, &sel, &EditOp::Scale { factor: 2.0, pivot }, false).unwrap();
        let inst = &scene.instances[0];
        let p = Point3::new(1.1, 0.7, 0.2);
        let s_new = inst.sdf_world(&p).unwrap();
        let local = Point3::from(pivot.coords + (p - pivot) / 2.0);
        let s_old = crate::field::sdf(&field, &grid, &local).unwrap();
        assert!((s_new - 2.0 * s_old).abs() < 1e-12);
    }

    #[test]
    fn delete_leaves_survivors_only() {
        let grid = unit_grid();
        let field = tiny_field();
        let dropped: Vec<Ijk> = grid.voxels().iter().copied().filter(|v| v.k == 0).collect();
        let scene = edit_voxels(
            &grid,
            &field,
            &VoxelSelection { ids: dropped.clone() },
            &EditOp::Delete,
            false,
        )
        .unwrap();
        assert_eq!(scene.instances.len(), 1);
        let g = &scene.instances[0].grid;
        assert_eq!(g.voxel_count(), 4);
        for v in g.voxels() {
            assert!(!dropped.contains(v));
        }
    }

    #[test]
    fn collision_self_and_separated() {
        let grid = unit_grid();
        let field = tiny_field();
        let inst = SceneInstance {
            grid: grid.clone(),
            field: field.clone(),
            transform: InstanceTransform::identity(),
        };
        // Identical instance vs itself: every voxel collides with itself
        // (face-adjacent neighbors touch with zero volume and do not count).
        let (hit, pairs) = collision_query(&inst, &inst);
        assert!(hit);
        let diagonal: Vec<(Ijk, Ijk)> = grid.voxels().iter().map(|v| (*v, *v)).collect();
        let mut sorted = pairs.clone();
        sorted.sort();
        assert_eq!(sorted, diagonal);

        // Far apart: nothing.
        let far = SceneInstance {
            grid: grid.clone(),
            field: field.clone(),
            transform: InstanceTransform::translation(Vector3::new(50.0, 0.0, 0.0)),
        };
        let (hit, pairs) = collision_query(&inst, &far);
        assert!(!hit);
        assert!(pairs.is_empty());
    }

    #[test]
    fn collision_half_voxel_offset_single_pair() {
        // Two single-voxel grids offset by half a voxel: exactly one pair.
        let g1 = Arc::new(
            VoxelGrid::init(
                Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)),
                1.0,
                4,
                1,
            )
            .unwrap(),
        );
        let field = tiny_field();
        let a = SceneInstance {
            grid: g1.clone(),
            field: field.clone(),
            transform: InstanceTransform::identity(),
        };
        let b = SceneInstance {
            grid: g1.clone(),
            field,
            transform: InstanceTransform::translation(Vector3::new(0.5, 0.0, 0.0)),
        };
        let (hit, pairs) = collision_query(&a, &b);
        assert!(hit);
        assert_eq!(pairs.len(), 1);
    }
}
