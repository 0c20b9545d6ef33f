//! Pinhole cameras and ray generation.
//!
//! Camera frame: +x right, +y down, +z forward (pixel (cx, cy) looks along
//! +z). Poses are camera-to-world.

use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Vector3};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, dir: Vector3<f64>) -> Self {
        Ray {
            origin,
            dir: dir.normalize(),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.dir * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: Rotation3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidArgument(format!("focal lengths {fx}, {fy}")));
        }
        let m = rotation.matrix();
        let err = (m.transpose() * m - Matrix3::identity()).norm();
        if err > 1e-8 || (m.determinant() - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument("rotation not orthonormal".into()));
        }
        Ok(Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        })
    }

    pub fn center(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }

    /// Row-major camera-to-world 4x4.
    pub fn pose_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_pose_matrix(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        pose: &Matrix4<f64>,
    ) -> Result<Self> {
        let r = Rotation3::from_matrix_unchecked(pose.fixed_view::<3, 3>(0, 0).into_owned());
        let t = pose.fixed_view::<3, 1>(0, 3).into_owned();
        Camera::new(fx, fy, cx, cy, width, height, r, t)
    }

    /// World ray through continuous pixel position (px, py).
    pub fn ray(&self, px: f64, py: f64) -> Ray {
        let d_cam = Vector3::new((px - self.cx) / self.fx, (py - self.cy) / self.fy, 1.0);
        Ray::new(self.center(), self.rotation * d_cam)
    }
}

/// Rays through the given continuous pixel positions.
pub fn generate_rays(camera: &Camera, pixels: &[(f64, f64)]) -> Vec<Ray> {
    debug_assert!(pixels
        .iter()
        .all(|&(x, y)| x >= 0.0 && x <= camera.width as f64 && y >= 0.0 && y <= camera.height as f64));
    pixels.iter().map(|&(x, y)| camera.ray(x, y)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_cam() -> Camera {
        Camera::new(
            50.0,
            50.0,
            32.0,
            24.0,
            64,
            48,
            Rotation3::identity(),
            Vector3::zeros(),
        )
        .unwrap()
    }

    #[test]
    fn principal_pixel_is_optical_axis() {
        let rot = Rotation3::from_euler_angles(0.3, -0.8, 0.4);
        let cam = Camera::new(50.0, 50.0, 32.0, 24.0, 64, 48, rot, Vector3::new(1.0, 2.0, 3.0)).unwrap();
        let r = cam.ray(32.0, 24.0);
        let axis = rot * Vector3::new(0.0, 0.0, 1.0);
        assert!((r.dir - axis).norm() < 1e-12);
        assert_eq!(r.origin, Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn offset_pixel_direction() {
        let cam = identity_cam();
        let r = cam.ray(cam.cx + cam.fx, cam.cy);
        let expect = Vector3::new(1.0, 0.0, 1.0).normalize();
        assert!((r.dir - expect).norm() < 1e-12);
    }

    #[test]
    fn all_rays_unit_norm() {
        let cam = identity_cam();
        let pixels: Vec<(f64, f64)> = (0..64)
            .flat_map(|x| (0..48).map(move |y| (x as f64 + 0.5, y as f64 + 0.5)))
            .collect();
        for r in generate_rays(&cam, &pixels) {
            assert!((r.dir.norm() - 1.0).abs() < 1e-6);
        }
    }
}
