//! Triangle meshes: storage, surface sampling, and PLY/OBJ files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Default)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
    pub colors: Option<Vec<Vector3<f64>>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_area(&self, t: &[u32; 3]) -> f64 {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Area-weighted surface samples (falls back to vertices for meshes
    /// without faces, e.g. point-cloud PLYs).
    pub fn sample_surface(&self, n: usize, seed: u64) -> Vec<Point3<f64>> {
        if self.triangles.is_empty() {
            return self.vertices.clone();
        }
        let mut cum = Vec::with_capacity(self.triangles.len());
        let mut total = 0.0;
        for t in &self.triangles {
            total += self.triangle_area(t);
            cum.push(total);
        }
        let mut rng = rng::stream(seed, Domain::PointSampling, 17);
        (0..n)
            .map(|_| {
                let u = rng.gen::<f64>() * total;
                let idx = cum.partition_point(|&c| c < u).min(self.triangles.len() - 1);
                let [a, b, c] = self.triangles[idx].map(|i| self.vertices[i as usize]);
                let (mut r1, mut r2) = (rng.gen::<f64>(), rng.gen::<f64>());
                if r1 + r2 > 1.0 {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                a + (b - a) * r1 + (c - a) * r2
            })
            .collect()
    }

    /// ASCII PLY with positions and any present normals/colors.
    pub fn write_ply(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "ply\nformat ascii 1.0")?;
        writeln!(w, "element vertex {}", self.vertices.len())?;
        writeln!(w, "property float x\nproperty float y\nproperty float z")?;
        if self.normals.is_some() {
            writeln!(w, "property float nx\nproperty float ny\nproperty float nz")?;
        }
        if self.colors.is_some() {
            writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
        }
        writeln!(w, "element face {}", self.triangles.len())?;
        writeln!(w, "property list uchar int vertex_indices")?;
        writeln!(w, "end_header")?;
        for (i, v) in self.vertices.iter().enumerate() {
            write!(w, "{} {} {}", v.x as f32, v.y as f32, v.z as f32)?;
            if let Some(n) = &self.normals {
                write!(w, " {} {} {}", n[i].x as f32, n[i].y as f32, n[i].z as f32)?;
            }
            if let Some(c) = &self.colors {
                let q = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
                write!(w, " {} {} {}", q(c[i].x), q(c[i].y), q(c[i].z))?;
            }
            writeln!(w)?;
        }
        for t in &self.triangles {
            writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    /// OBJ, positions only.
    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x as f32, v.y as f32, v.z as f32)?;
        }
        for t in &self.triangles {
            writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
        }
        Ok(())
    }

    /// Minimal ASCII PLY reader: positions and faces, other properties
    /// skipped by position.
    pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let mut next = || -> Result<String> {
            lines
                .next()
                .transpose()?
                .ok_or_else(|| Error::format(path, "truncated PLY"))
        };
        if next()?.trim() != "ply" {
            return Err(Error::format(path, "not a PLY file"));
        }
        let mut n_vert = 0usize;
        let mut n_face = 0usize;
        let mut vertex_props: Vec<String> = Vec::new();
        let mut in_vertex = false;
        loop {
            let line = next()?;
            let mut tok = line.split_whitespace();
            match tok.next() {
                Some("format") => {
                    if tok.next() != Some("ascii") {
                        return Err(Error::format(path, "binary PLY not supported"));
                    }
                }
                Some("comment") => {}
                Some("element") => match (tok.next(), tok.next()) {
                    (Some("vertex"), Some(n)) => {
                        n_vert = n.parse().map_err(|_| Error::format(path, "bad vertex count"))?;
                        in_vertex = true;
                    }
                    (Some("face"), Some(n)) => {
                        n_face = n.parse().map_err(|_| Error::format(path, "bad face count"))?;
                        in_vertex = false;
                    }
                    _ => in_vertex = false,
                },
                Some("property") => {
                    if in_vertex {
                        let name = line.split_whitespace().last().unwrap_or("").to_string();
                        vertex_props.push(name);
                    }
                }
                Some("end_header") => break,
                _ => {}
            }
        }
        let (ix, iy, iz) = (
            vertex_props.iter().position(|p| p == "x"),
            vertex_props.iter().position(|p| p == "y"),
            vertex_props.iter().position(|p| p == "z"),
        );
        let (ix, iy, iz) = match (ix, iy, iz) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::format(path, "PLY vertices lack x/y/z")),
        };

        let mut mesh = TriangleMesh::default();
        for _ in 0..n_vert {
            let line = next()?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().unwrap_or(f64::NAN))
                .collect();
            if vals.len() < vertex_props.len() {
                return Err(Error::format(path, "short vertex row"));
            }
            let v = Point3::new(vals[ix], vals[iy], vals[iz]);
            if v.coords.iter().any(|x| !x.is_finite()) {
                return Err(Error::format(path, "non-finite vertex"));
            }
            mesh.vertices.push(v);
        }
        for _ in 0..n_face {
            let line = next()?;
            let vals: Vec<usize> = line
                .split_whitespace()
                .filter_map(|t| t.parse().ok())
                .collect();
            if vals.len() < 4 || vals[0] < 3 {
                return Err(Error::format(path, "bad face row"));
            }
            // Fan-triangulate polygons.
            for i in 2..vals[0] {
                mesh.triangles.push([vals[1] as u32, vals[i] as u32, vals[i + 1] as u32]);
            }
        }
        Ok(mesh)
    }
}
