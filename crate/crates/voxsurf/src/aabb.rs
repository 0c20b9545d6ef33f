use nalgebra::{Point3, Vector3};

/// Axis-aligned box in scene units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Aabb { min, max }
    }

    /// Cube of the given side length centered at `center`.
    pub fn cube(center: Point3<f64>, side: f64) -> Self {
        let h = Vector3::repeat(side * 0.5);
        Aabb {
            min: center - h,
            max: center + h,
        }
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|a| self.max[a] <= self.min[a])
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    /// Slab test. Returns the parametric overlap of the ray with the box,
    /// clamped to `t >= t_min`, or `None` when the ray misses.
    ///
    /// `dir` need not be unit length; `inv_dir` is the componentwise
    /// reciprocal (infinities for zero components are fine).
    pub fn ray_range(
        &self,
        origin: &Point3<f64>,
        inv_dir: &Vector3<f64>,
        t_min: f64,
    ) -> Option<(f64, f64)> {
        let mut t0 = t_min;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if inv_dir[a].is_infinite() {
                // Parallel to this slab: inside (closed) or a clean miss.
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let lo = (self.min[a] - origin[a]) * inv_dir[a];
            let hi = (self.max[a] - origin[a]) * inv_dir[a];
            let (near, far) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            if near > t0 {
                t0 = near;
            }
            if far < t1 {
                t1 = far;
            }
            if t0 > t1 {
                return None;
            }
        }
        if t1 <= t0 {
            return None;
        }
        Some((t0, t1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_axis_hit() {
        let b = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        let o = Point3::new(-1.0, 0.5, 0.5);
        let d = Vector3::new(1.0, 0.0, 0.0);
        let inv = d.map(|x| 1.0 / x);
        let (t0, t1) = b.ray_range(&o, &inv, 0.0).unwrap();
        assert_eq!(t0, 1.0);
        assert_eq!(t1, 2.0);
    }

    #[test]
    fn slab_miss() {
        let b = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        let o = Point3::new(-1.0, 2.5, 0.5);
        let d = Vector3::new(1.0, 0.0, 0.0);
        let inv = d.map(|x| 1.0 / x);
        assert!(b.ray_range(&o, &inv, 0.0).is_none());
    }

    #[test]
    fn slab_origin_inside_clamps_entry() {
        let b = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        let o = Point3::new(0.5, 0.5, 0.5);
        let d = Vector3::new(0.0, 0.0, 1.0);
        let inv = d.map(|x| 1.0 / x);
        let (t0, t1) = b.ray_range(&o, &inv, 0.0).unwrap();
        assert_eq!(t0, 0.0);
        assert_eq!(t1, 0.5);
    }
}
