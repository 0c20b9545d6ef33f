//! On-disk datasets: posed color images, optional depth maps, and a
//! line-based manifest.
//!
//! Manifest layout (`manifest.txt`, whitespace-separated):
//!
//! ```text
//! voxsurf-dataset 1
//! bounds minx miny minz maxx maxy maxz
//! intrinsics fx fy cx cy width height
//! depth_sentinel 0
//! views <n>
//! view <i>
//! pose <16 floats, row-major camera-to-world>
//! color <relative path>
//! depth <relative path>      # optional line
//! ```
//!
//! Depth maps are grayscale PFM; a stored 0 means "no depth" (the sentinel).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Point3, Vector3};

use crate::aabb::Aabb;
use crate::error::{Error, Result};
use crate::pfm::{self, FloatMap};
use crate::sampler::Camera;

use super::render::{gt_render, make_cameras, Intrinsics};
use super::AnalyticScene;

#[derive(Debug, Clone)]
pub struct ViewEntry {
    pub camera: Camera,
    pub color_path: PathBuf,
    pub depth_path: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct SceneDataset {
    pub dir: PathBuf,
    pub bounds: Aabb,
    pub views: Vec<ViewEntry>,
}

/// One view's pixel data, colors in [0, 1].
#[derive(Debug, Clone)]
pub struct ViewPixels {
    pub colors: Vec<Vector3<f64>>,
    pub depth: Option<FloatMap>,
    pub width: usize,
    pub height: usize,
}

impl SceneDataset {
    pub fn load_view(&self, index: usize) -> Result<ViewPixels> {
        let v = &self.views[index];
        let img = image::open(&v.color_path)?.to_rgb8();
        let (width, height) = (img.width() as usize, img.height() as usize);
        let colors = img
            .pixels()
            .map(|p| Vector3::new(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect();
        let depth = match &v.depth_path {
            Some(p) => Some(pfm::read_pfm(p)?),
            None => None,
        };
        Ok(ViewPixels {
            colors,
            depth,
            width,
            height,
        })
    }
}

/// Renders `n_views` spiral views of the scene and writes the dataset.
/// Regeneration with the same arguments is byte-identical.
pub fn gen_dataset(
    scene: &AnalyticScene,
    n_views: usize,
    width: u32,
    height: u32,
    camera_radius: f64,
    bounds: Aabb,
    out_dir: &Path,
    seed: u64,
) -> Result<SceneDataset> {
    fs::create_dir_all(out_dir.join("images"))?;
    fs::create_dir_all(out_dir.join("depths"))?;
    let intr = Intrinsics::simple(width, height);
    let cameras = make_cameras(n_views, camera_radius, bounds.center(), intr);
    let t_max = 2.0 * camera_radius + bounds.extent().norm();

    let mut views = Vec::with_capacity(n_views);
    for (i, cam) in cameras.iter().enumerate() {
        let (img, depth) = gt_render(scene, cam, t_max);
        let color_rel = format!("images/view_{i:03}.png");
        let depth_rel = format!("depths/view_{i:03}.pfm");
        img.save(out_dir.join(&color_rel))?;
        pfm::write_pfm(&out_dir.join(&depth_rel), &depth)?;
        views.push(ViewEntry {
            camera: *cam,
            color_path: out_dir.join(&color_rel),
            depth_path: Some(out_dir.join(&depth_rel)),
        });
    }

    let mut m = String::new();
    m.push_str("voxsurf-dataset 1\n");
    m.push_str(&format!(
        "bounds {} {} {} {} {} {}\n",
        bounds.min.x, bounds.min.y, bounds.min.z, bounds.max.x, bounds.max.y, bounds.max.z
    ));
    m.push_str(&format!(
        "intrinsics {} {} {} {} {} {}\n",
        intr.fx, intr.fy, intr.cx, intr.cy, width, height
    ));
    m.push_str(&format!("seed {seed}\n"));
    m.push_str("depth_sentinel 0\n");
    m.push_str(&format!("views {n_views}\n"));
    for (i, cam) in cameras.iter().enumerate() {
        m.push_str(&format!("view {i}\n"));
        let p = cam.pose_matrix();
        m.push_str("pose");
        for r in 0..4 {
            for c in 0..4 {
                m.push_str(&format!(" {}", p[(r, c)]));
            }
        }
        m.push('\n');
        m.push_str(&format!("color images/view_{i:03}.png\n"));
        m.push_str(&format!("depth depths/view_{i:03}.pfm\n"));
    }
    let mut f = fs::File::create(out_dir.join("manifest.txt"))?;
    f.write_all(m.as_bytes())?;

    Ok(SceneDataset {
        dir: out_dir.to_path_buf(),
        bounds,
        views,
    })
}

pub fn load_dataset(dir: &Path) -> Result<SceneDataset> {
    let path = dir.join("manifest.txt");
    let text = fs::read_to_string(&path)?;
    let mut tokens = text.split_whitespace().peekable();

    fn expect<'a>(
        tokens: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>,
        path: &Path,
        what: &str,
    ) -> Result<()> {
        match tokens_next(tokens, path)? {
            t if t == what => Ok(()),
            t => Err(Error::format(path, format!("expected {what:?}, got {t:?}"))),
        }
    }
    expect(&mut tokens, &path, "voxsurf-dataset")?;
    let version: u32 = parse(&mut tokens, &path)?;
    if version != 1 {
        return Err(Error::format(&path, format!("unsupported version {version}")));
    }

    let mut bounds = Aabb::cube(Point3::origin(), 2.0);
    let mut intr: Option<Intrinsics> = None;
    let mut n_views = 0usize;
    loop {
        let tok = tokens_next(&mut tokens, &path)?;
        match tok.as_str() {
            "bounds" => {
                let v: Vec<f64> = parse_n(&mut tokens, 6, &path)?;
                bounds = Aabb::new(Point3::new(v[0], v[1], v[2]), Point3::new(v[3], v[4], v[5]));
            }
            "intrinsics" => {
                let v: Vec<f64> = parse_n(&mut tokens, 6, &path)?;
                intr = Some(Intrinsics {
                    fx: v[0],
                    fy: v[1],
                    cx: v[2],
                    cy: v[3],
                    width: v[4] as u32,
                    height: v[5] as u32,
                });
            }
            "seed" | "depth_sentinel" => {
                let _: f64 = parse(&mut tokens, &path)?;
            }
            "views" => {
                n_views = parse(&mut tokens, &path)?;
                break;
            }
            other => return Err(Error::format(&path, format!("unknown key {other:?}"))),
        }
    }
    let intr = intr.ok_or_else(|| Error::format(&path, "missing intrinsics"))?;

    let mut views = Vec::with_capacity(n_views);
    for i in 0..n_views {
        expect(&mut tokens, &path, "view")?;
        let idx: usize = parse(&mut tokens, &path)?;
        if idx != i {
            return Err(Error::format(&path, format!("view {idx} out of order")));
        }
        expect(&mut tokens, &path, "pose")?;
        let v: Vec<f64> = parse_n(&mut tokens, 16, &path)?;
        let pose = Matrix4::from_row_slice(&v);
        let camera = Camera::from_pose_matrix(
            intr.fx, intr.fy, intr.cx, intr.cy, intr.width, intr.height, &pose,
        )?;
        expect(&mut tokens, &path, "color")?;
        let color_path = dir.join(tokens_next(&mut tokens, &path)?);
        if !color_path.exists() {
            return Err(Error::format(&color_path, "missing color image"));
        }
        let depth_path = if tokens.peek() == Some(&"depth") {
            tokens.next();
            let p = dir.join(tokens_next(&mut tokens, &path)?);
            if !p.exists() {
                return Err(Error::format(&p, "missing depth map"));
            }
            Some(p)
        } else {
            None
        };
        views.push(ViewEntry {
            camera,
            color_path,
            depth_path,
        });
    }

    Ok(SceneDataset {
        dir: dir.to_path_buf(),
        bounds,
        views,
    })
}

fn tokens_next<'a>(
    tokens: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>,
    path: &Path,
) -> Result<String> {
    tokens
        .next()
        .map(str::to_owned)
        .ok_or_else(|| Error::format(path, "truncated manifest"))
}

fn parse<'a, T: std::str::FromStr>(
    tokens: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>,
    path: &Path,
) -> Result<T> {
    let t = tokens_next(tokens, path)?;
    t.parse()
        .map_err(|_| Error::format(path, format!("bad numeric token {t:?}")))
}

fn parse_n<'a, T: std::str::FromStr>(
    tokens: &mut std::iter::Peekable<impl Iterator<Item = &'a str>>,
    n: usize,
    path: &Path,
) -> Result<Vec<T>> {
    (0..n).map(|_| parse(tokens, path)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let scene = AnalyticScene::preset("sphere").unwrap();
        let bounds = Aabb::cube(Point3::origin(), 2.0);
        let ds = gen_dataset(&scene, 4, 16, 16, 2.0, bounds, dir.path(), 5).unwrap();
        assert_eq!(ds.views.len(), 4);

        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.views.len(), 4);
        for (a, b) in ds.views.iter().zip(&back.views) {
            assert!((a.camera.pose_matrix() - b.camera.pose_matrix()).norm() < 1e-7);
        }
        let px = back.load_view(0).unwrap();
        assert_eq!(px.colors.len(), 256);
        assert!(px.depth.is_some());

        // Regeneration is byte-identical.
        let dir2 = tempfile::tempdir().unwrap();
        gen_dataset(&scene, 4, 16, 16, 2.0, bounds, dir2.path(), 5).unwrap();
        let a = std::fs::read(dir.path().join("images/view_002.png")).unwrap();
        let b = std::fs::read(dir2.path().join("images/view_002.png")).unwrap();
        assert_eq!(a, b);
        let a = std::fs::read(dir.path().join("manifest.txt")).unwrap();
        let b = std::fs::read(dir2.path().join("manifest.txt")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let scene = AnalyticScene::preset("sphere").unwrap();
        let bounds = Aabb::cube(Point3::origin(), 2.0);
        gen_dataset(&scene, 2, 8, 8, 2.0, bounds, dir.path(), 5).unwrap();
        std::fs::remove_file(dir.path().join("images/view_001.png")).unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
