//! Desk-scale ground truth: analytic CSG signed-distance scenes with exact
//! geometry oracles, camera trajectories, and sphere-traced RGB-D renders.

pub mod dataset;
pub mod render;

pub use dataset::{gen_dataset, load_dataset, SceneDataset};
pub use render::{gt_render, make_cameras, Intrinsics};

use nalgebra::{Point3, Vector3};

use crate::renderer::AnalyticField;

/// CSG tree of exact signed-distance primitives. Union/intersection/
/// subtraction combine via min/max, a distance bound (exact for disjoint
/// parts).
#[derive(Debug, Clone)]
pub enum SdfNode {
    Sphere {
        center: Point3<f64>,
        radius: f64,
        albedo: Vector3<f64>,
    },
    Cuboid {
        center: Point3<f64>,
        half_extents: Vector3<f64>,
        albedo: Vector3<f64>,
    },
    /// Axis-z torus: major ring radius and tube radius.
    Torus {
        center: Point3<f64>,
        major: f64,
        minor: f64,
        albedo: Vector3<f64>,
    },
    Union(Box<SdfNode>, Box<SdfNode>),
    Intersection(Box<SdfNode>, Box<SdfNode>),
    Subtraction(Box<SdfNode>, Box<SdfNode>),
}

impl SdfNode {
    /// Signed distance and the albedo of the winning primitive.
    pub fn eval(&self, p: &Point3<f64>) -> (f64, Vector3<f64>) {
        match self {
            SdfNode::Sphere { center, radius, albedo } => ((p - center).norm() - radius, *albedo),
            SdfNode::Cuboid {
                center,
                half_extents,
                albedo,
            } => {
                let q = (p - center).abs() - half_extents;
                let outside = q.map(|x| x.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                (outside + inside, *albedo)
            }
            SdfNode::Torus {
                center,
                major,
                minor,
                albedo,
            } => {
                let q = p - center;
                let ring = (q.x * q.x + q.y * q.y).sqrt() - major;
                ((ring * ring + q.z * q.z).sqrt() - minor, *albedo)
            }
            SdfNode::Union(a, b) => {
                let (da, ca) = a.eval(p);
                let (db, cb) = b.eval(p);
                if da <= db {
                    (da, ca)
                } else {
                    (db, cb)
                }
            }
            SdfNode::Intersection(a, b) => {
                let (da, ca) = a.eval(p);
                let (db, cb) = b.eval(p);
                if da >= db {
                    (da, ca)
                } else {
                    (db, cb)
                }
            }
            SdfNode::Subtraction(a, b) => {
                let (da, ca) = a.eval(p);
                let (db, _) = b.eval(p);
                ((-db).max(da), ca)
            }
        }
    }
}

/// An analytic scene: geometry, a directional light, and shading knobs.
#[derive(Debug, Clone)]
pub struct AnalyticScene {
    pub root: SdfNode,
    /// Unit vector pointing from surfaces toward the light.
    pub light: Vector3<f64>,
    pub ambient: f64,
    /// Adds a specular lobe, exercising view-dependent appearance.
    pub glossy: bool,
    pub background: Vector3<f64>,
}

impl AnalyticScene {
    pub fn new(root: SdfNode) -> Self {
        AnalyticScene {
            root,
            light: Vector3::new(0.4, 0.25, 0.88).normalize(),
            ambient: 0.15,
            glossy: false,
            background: Vector3::zeros(),
        }
    }

    pub fn sdf(&self, p: &Point3<f64>) -> f64 {
        self.root.eval(p).0
    }

    /// Central-difference surface normal.
    pub fn normal(&self, p: &Point3<f64>) -> Vector3<f64> {
        let h = 1e-5;
        let mut n = Vector3::zeros();
        for a in 0..3 {
            let mut pp = *p;
            let mut pm = *p;
            pp[a] += h;
            pm[a] -= h;
            n[a] = self.sdf(&pp) - self.sdf(&pm);
        }
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vector3::new(0.0, 0.0, 1.0)
        }
    }

    /// Lambertian shading of the winning primitive's albedo; `view` is the
    /// unit ray direction pointing at the surface.
    pub fn shade(&self, p: &Point3<f64>, view: &Vector3<f64>) -> Vector3<f64> {
        let (_, albedo) = self.root.eval(p);
        let n = self.normal(p);
        let lambert = n.dot(&self.light).max(0.0);
        let mut c = albedo * (self.ambient + (1.0 - self.ambient) * lambert);
        if self.glossy {
            let half = (self.light - view).normalize();
            let spec = n.dot(&half).max(0.0).powi(64);
            c += Vector3::repeat(0.4 * spec);
        }
        c.map(|x| x.clamp(0.0, 1.0))
    }

    /// Named scene presets used by the CLI and acceptance runs.
    pub fn preset(name: &str) -> Option<AnalyticScene> {
        let red = Vector3::new(0.85, 0.25, 0.2);
        let blue = Vector3::new(0.2, 0.4, 0.85);
        let sand = Vector3::new(0.85, 0.75, 0.5);
        match name {
            "sphere" => Some(AnalyticScene::new(SdfNode::Sphere {
                center: Point3::origin(),
                radius: 0.5,
                albedo: red,
            })),
            "glossy-sphere" => {
                let mut s = AnalyticScene::preset("sphere")?;
                s.glossy = true;
                Some(s)
            }
            "two-spheres" => Some(AnalyticScene::new(SdfNode::Union(
                Box::new(SdfNode::Sphere {
                    center: Point3::new(-0.35, 0.0, 0.0),
                    radius: 0.3,
                    albedo: red,
                }),
                Box::new(SdfNode::Sphere {
                    center: Point3::new(0.4, 0.0, 0.1),
                    radius: 0.25,
                    albedo: blue,
                }),
            ))),
            "torus" => Some(AnalyticScene::new(SdfNode::Torus {
                center: Point3::origin(),
                major: 0.4,
                minor: 0.15,
                albedo: sand,
            })),
            "csg" => Some(AnalyticScene::new(SdfNode::Subtraction(
                Box::new(SdfNode::Intersection(
                    Box::new(SdfNode::Cuboid {
                        center: Point3::origin(),
                        half_extents: Vector3::repeat(0.4),
                        albedo: sand,
                    }),
                    Box::new(SdfNode::Sphere {
                        center: Point3::origin(),
                        radius: 0.52,
                        albedo: sand,
                    }),
                )),
                Box::new(SdfNode::Sphere {
                    center: Point3::new(0.0, 0.0, 0.45),
                    radius: 0.25,
                    albedo: blue,
                }),
            ))),
            _ => None,
        }
    }
}

impl AnalyticField for AnalyticScene {
    fn sigma(&self, p: &Point3<f64>) -> f64 {
        self.sdf(p)
    }
    fn color(&self, p: &Point3<f64>, d: &Vector3<f64>) -> Vector3<f64> {
        self.shade(p, d)
    }
}

/// Near-uniform points on a sphere (golden spiral); geometry oracle for
/// chamfer and f-score checks.
pub fn sphere_surface_points(n: usize, center: Point3<f64>, radius: f64) -> Vec<Point3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let a = golden * i as f64;
            center + Vector3::new(r * a.cos(), r * a.sin(), z) * radius
        })
        .collect()
}
