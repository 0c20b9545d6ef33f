//! Sphere-traced ground-truth rendering and camera trajectory generation.

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use rayon::prelude::*;

use crate::pfm::FloatMap;
use crate::sampler::Camera;

use super::AnalyticScene;

#[derive(Debug, Clone, Copy)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    /// Centered principal point with a ~45 degree horizontal field of view.
    pub fn simple(width: u32, height: u32) -> Self {
        let f = 1.2 * width as f64;
        Intrinsics {
            fx: f,
            fy: f,
            cx: width as f64 * 0.5,
            cy: height as f64 * 0.5,
            width,
            height,
        }
    }
}

/// Camera-to-world rotation looking from `eye` toward `target` (+z forward,
/// +y down), world up +z with a +y fallback at the poles.
fn look_at_rotation(eye: &Point3<f64>, target: &Point3<f64>) -> Rotation3<f64> {
    let forward = (target - eye).normalize();
    let mut up = Vector3::new(0.0, 0.0, 1.0);
    if forward.cross(&up).norm() < 1e-6 {
        up = Vector3::new(0.0, 1.0, 0.0);
    }
    let x = forward.cross(&up).normalize();
    let y = forward.cross(&x);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, forward]))
}

/// `n` poses on a spiral over the upper (+z) hemisphere of radius `radius`
/// around `target`, all looking at it. The first pose sits on the +z axis.
pub fn make_cameras(n: usize, radius: f64, target: Point3<f64>, intr: Intrinsics) -> Vec<Camera> {
    assert!(n >= 1);
    let golden = 2.399963229728653;
    let max_polar = 80.0f64.to_radians();
    (0..n)
        .map(|i| {
            let polar = max_polar * i as f64 / (n as f64 - 1.0).max(1.0);
            let azim = golden * i as f64;
            let dir = Vector3::new(
                polar.sin() * azim.cos(),
                polar.sin() * azim.sin(),
                polar.cos(),
            );
            let eye = target + dir * radius;
            let rot = look_at_rotation(&eye, &target);
            Camera::new(
                intr.fx,
                intr.fy,
                intr.cx,
                intr.cy,
                intr.width,
                intr.height,
                rot,
                eye.coords,
            )
            .expect("look-at rotation is orthonormal")
        })
        .collect()
}

/// Sphere-traces the scene from `camera`. Hits are Lambertian-shaded; misses
/// get the scene background and the depth sentinel 0.
pub fn gt_render(scene: &AnalyticScene, camera: &Camera, t_max: f64) -> (image::RgbImage, FloatMap) {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let pixels: Vec<(Vector3<f64>, f64)> = (0..w * h)
        .into_par_iter()
        .map(|idx| {
            let (x, y) = (idx % w, idx / w);
            let ray = camera.ray(x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 0.0;
            for _ in 0..256 {
                let p = ray.at(t);
                let d = scene.sdf(&p);
                if d.abs() < 1e-5 {
                    return (scene.shade(&p, &ray.dir), t);
                }
                t += d;
                if t > t_max {
                    break;
                }
            }
            (scene.background, 0.0)
        })
        .collect();

    let mut img = image::RgbImage::new(camera.width, camera.height);
    let mut depth = FloatMap::new(w, h);
    for (idx, (c, t)) in pixels.iter().enumerate() {
        let (x, y) = (idx % w, idx / w);
        let to8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        img.put_pixel(x as u32, y as u32, image::Rgb([to8(c.x), to8(c.y), to8(c.z)]));
        depth.set(x, y, *t as f32);
    }
    (img, depth)
}
