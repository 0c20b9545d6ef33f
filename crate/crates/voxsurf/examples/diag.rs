use voxsurf::aabb::Aabb;
use voxsurf::voxgrid::{Ijk, VoxelGrid};
use nalgebra::Point3;

fn main() {
    let g = VoxelGrid::init(Aabb::cube(Point3::origin(), 2.0), 0.25, 4, 3).unwrap();
    let sdf = |p: &Point3<f64>, _v: Ijk| p.coords.norm() - 1.0;
    let (pruned, _) = g.prune(&sdf, 0.01, 512, 7).unwrap();
    let kept: std::collections::HashSet<Ijk> = pruned.voxels().iter().copied().collect();

    let mut n_diff = 0;
    for v in g.voxels() {
        let base = g.vertex_position(*v);
        let step = g.voxel_size() / 16.0;
        let mut min_abs = f64::INFINITY;
        for a in 0..=16 { for b in 0..=16 { for c in 0..=16 {
            let p = Point3::new(base.x + a as f64 * step, base.y + b as f64 * step, base.z + c as f64 * step);
            min_abs = min_abs.min(sdf(&p, *v).abs());
        }}}
        let oracle_keep = min_abs < 0.01;
        if oracle_keep != kept.contains(v) {
            n_diff += 1;
            if n_diff < 12 {
                println!("voxel {:?}: dense min {:.5}, oracle {}, prune {}", v, min_abs, oracle_keep, kept.contains(v));
            }
        }
    }
    println!("total differing: {n_diff}, kept {} of {}", kept.len(), g.voxel_count());
}
