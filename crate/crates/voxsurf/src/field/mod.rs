//! The learned field: trilinear embedding retrieval, geometry extractor
//! (signed distance + feature), appearance extractor (view-dependent RGB),
//! and exact analytic derivatives in both input position and parameters.

pub mod autodiff;
pub mod encoding;
pub mod mlp;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::voxgrid::{Ijk, VoxelGrid};

pub use autodiff::{FieldGrads, FieldWorkspace, SampleUpstream};
pub use mlp::{Mlp, MlpCache, MlpGrads, OutputActivation};

/// Network shape. Layer counts are weight layers; hidden widths apply to all
/// interior activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldConfig {
    pub embedding_len: usize,
    pub feature_len: usize,
    pub hidden_dim: usize,
    pub geometry_layers: usize,
    pub appearance_layers: usize,
    pub freq_e: usize,
    pub freq_d: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            embedding_len: 16,
            feature_len: 128,
            hidden_dim: 128,
            geometry_layers: 4,
            appearance_layers: 4,
            freq_e: 4,
            freq_d: 8,
        }
    }
}

impl FieldConfig {
    pub fn encoded_embedding_len(&self) -> usize {
        encoding::encoded_len(self.embedding_len, self.freq_e)
    }

    pub fn encoded_direction_len(&self) -> usize {
        encoding::encoded_len(3, self.freq_d)
    }

    pub fn geometry_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.encoded_embedding_len()];
        dims.extend(std::iter::repeat(self.hidden_dim).take(self.geometry_layers - 1));
        dims.push(1 + self.feature_len);
        dims
    }

    pub fn appearance_dims(&self) -> Vec<usize> {
        let input = self.feature_len + self.encoded_direction_len() + self.encoded_embedding_len();
        let mut dims = vec![input];
        dims.extend(std::iter::repeat(self.hidden_dim).take(self.appearance_layers - 1));
        dims.push(3);
        dims
    }
}

/// Geometry + appearance extractors and the S-density sharpness scalar,
/// reparameterized as `s = exp(log_s)` so it stays positive under any
/// optimizer step.
#[derive(Debug, Clone)]
pub struct FieldModel {
    pub config: FieldConfig,
    pub geometry: Mlp,
    pub appearance: Mlp,
    pub log_s: f32,
}

impl FieldModel {
    pub fn new(config: FieldConfig, seed: u64) -> Self {
        assert!(config.geometry_layers >= 1 && config.appearance_layers >= 1);
        let geometry = Mlp::new(&config.geometry_dims(), OutputActivation::Linear, seed, 0);
        let appearance = Mlp::new(&config.appearance_dims(), OutputActivation::Sigmoid, seed, 1);
        FieldModel {
            config,
            geometry,
            appearance,
            log_s: 0.0,
        }
    }

    pub fn s(&self) -> f64 {
        (self.log_s as f64).exp()
    }

    pub fn param_count(&self) -> usize {
        self.geometry.param_count() + self.appearance.param_count() + 1
    }

    /// Signed distance and geometry feature of an embedding vector.
    pub fn geometry_eval(&self, e: &[f64]) -> Result<(f64, Vec<f64>)> {
        if e.len() != self.config.embedding_len {
            return Err(Error::InvalidArgument(format!(
                "embedding length {} != {}",
                e.len(),
                self.config.embedding_len
            )));
        }
        let mut cache = MlpCache::default();
        let pe = encoding::encode(e, self.config.freq_e);
        let out = self.geometry.forward(&pe, &mut cache);
        let sigma = out[0];
        let feature = out[1..].to_vec();
        if !sigma.is_finite() || feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite geometry output".into()));
        }
        Ok((sigma, feature))
    }

    /// View-dependent color from a geometry feature, unit view direction,
    /// and raw embedding. Output is componentwise in [0, 1].
    pub fn appearance_eval(&self, f: &[f64], d: &Vector3<f64>, e: &[f64]) -> Result<[f64; 3]> {
        let n = d.norm();
        if n < 1e-12 {
            return Err(Error::InvalidArgument("zero-length view direction".into()));
        }
        if (n - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("view direction norm {n} != 1")));
        }
        if f.len() != self.config.feature_len {
            return Err(Error::InvalidArgument("feature length mismatch".into()));
        }
        let mut input = Vec::with_capacity(self.appearance.in_dim());
        input.extend_from_slice(f);
        input.extend(encoding::encode(&[d.x, d.y, d.z], self.config.freq_d));
        input.extend(encoding::encode(e, self.config.freq_e));
        let mut cache = MlpCache::default();
        let out = self.appearance.forward(&input, &mut cache);
        Ok([out[0], out[1], out[2]])
    }

    /// Applies `f` to every parameter tensor in serialization order:
    /// geometry layers (weights then bias each), appearance layers, log_s.
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f32])) {
        self.geometry.for_each_tensor(&mut f);
        self.appearance.for_each_tensor(&mut f);
        f(std::slice::from_ref(&self.log_s));
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f32])) {
        self.geometry.for_each_tensor_mut(&mut f);
        self.appearance.for_each_tensor_mut(&mut f);
        f(std::slice::from_mut(&mut self.log_s));
    }
}

/// Trilinear embedding retrieval at `p`: the interpolated embedding and the
/// containing voxel id, or None when `p` lies outside every voxel (the
/// caller decides how to handle the miss).
pub fn gamma(grid: &VoxelGrid, p: &Point3<f64>) -> Option<(Vec<f64>, Ijk)> {
    let vi = grid.locate(p)?;
    let key = grid.voxels()[vi as usize];
    let mut e = vec![0.0; grid.embedding_len()];
    grid.interpolate(vi, grid.local_coords(key, p), &mut e);
    Some((e, key))
}

/// Signed distance of the learned field at `p`, or None outside the grid.
pub fn sdf(model: &FieldModel, grid: &VoxelGrid, p: &Point3<f64>) -> Option<f64> {
    let vi = grid.locate(p)?;
    let mut ws = FieldWorkspace::new(&model.config);
    Some(autodiff::geometry_forward(model, grid, vi, p, false, &mut ws).sigma)
}

/// Signed distance evaluated through the given voxel's parameterization.
/// Valid for local coordinates in [0, 1]³ including the closed faces, so
/// boundary points (voxel exits, outer cell corners) resolve without a miss.
pub fn sdf_in_voxel(
    model: &FieldModel,
    grid: &VoxelGrid,
    voxel_index: u32,
    p: &Point3<f64>,
    ws: &mut FieldWorkspace,
) -> f64 {
    autodiff::geometry_forward(model, grid, voxel_index, p, false, ws).sigma
}

/// Exact input-space gradient of the signed distance at `p` (chain rule
/// through the trilinear weights, the encoding, and the geometry MLP).
/// Points on shared faces resolve by the half-open cell convention.
pub fn sdf_gradient(
    model: &FieldModel,
    grid: &VoxelGrid,
    p: &Point3<f64>,
) -> Option<(f64, Vector3<f64>)> {
    let vi = grid.locate(p)?;
    let mut ws = FieldWorkspace::new(&model.config);
    let out = autodiff::geometry_forward(model, grid, vi, p, true, &mut ws);
    Some((out.sigma, out.grad.unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aabb::Aabb;
    use crate::rng::{self, Domain};
    use rand::Rng;

    fn small_config() -> FieldConfig {
        FieldConfig {
            embedding_len: 4,
            feature_len: 8,
            hidden_dim: 8,
            geometry_layers: 2,
            appearance_layers: 2,
            freq_e: 4,
            freq_d: 8,
        }
    }

    fn unit_grid(le: usize, seed: u64) -> VoxelGrid {
        VoxelGrid::init(
            Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0)),
            0.5,
            le,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn default_dims_match_reference_setup() {
        let c = FieldConfig::default();
        assert_eq!(c.encoded_embedding_len(), 144);
        assert_eq!(c.geometry_dims(), vec![144, 128, 128, 128, 129]);
        assert_eq!(c.appearance_dims(), vec![128 + 51 + 144, 128, 128, 128, 3]);
    }

    #[test]
    fn gamma_constant_corners_everywhere_equal() {
        let mut g = unit_grid(3, 1);
        let v = [0.3f32, -0.7, 0.2];
        for chunk in g.embeddings_mut().chunks_mut(3) {
            chunk.copy_from_slice(&v);
        }
        let (e, _) = gamma(&g, &Point3::new(0.31, 0.77, 0.13)).unwrap();
        for (a, b) in e.iter().zip(&v) {
            assert!((a - *b as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn gamma_at_corner_and_center() {
        let g = unit_grid(4, 2);
        // Corner of voxel (0,0,0) at local origin: exactly that vertex.
        let p = g.vertex_position(Ijk::new(0, 0, 0));
        let (e, key) = gamma(&g, &p).unwrap();
        assert_eq!(key, Ijk::new(0, 0, 0));
        let vi = g.vertex_index(Ijk::new(0, 0, 0)).unwrap();
        for (a, b) in e.iter().zip(g.embedding(vi)) {
            assert!((a - *b as f64).abs() < 1e-12);
        }
        // Voxel center: mean of the 8 corners.
        let c = g.voxel_center(Ijk::new(0, 0, 0));
        let (e, _) = gamma(&g, &c).unwrap();
        let mut mean = vec![0.0f64; 4];
        for &ci in g.corner_indices(g.voxel_index(Ijk::new(0, 0, 0)).unwrap()) {
            for (m, &x) in mean.iter_mut().zip(g.embedding(ci)) {
                *m += x as f64 / 8.0;
            }
        }
        for (a, b) in e.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
        // Outside: miss.
        assert!(gamma(&g, &Point3::new(5.0, 5.0, 5.0)).is_none());
    }

    #[test]
    fn fresh_model_zero_embedding_is_small_and_deterministic() {
        let model = FieldModel::new(FieldConfig::default(), 7);
        let e = vec![0.0; 16];
        let (s1, f1) = model.geometry_eval(&e).unwrap();
        let (s2, f2) = model.geometry_eval(&e).unwrap();
        assert!(s1.is_finite() && s1.abs() < 1.0, "init sdf {s1}");
        assert_eq!(s1.to_bits(), s2.to_bits());
        assert_eq!(f1, f2);
        assert_eq!(f1.len(), 128);
    }

    #[test]
    fn appearance_bounded_and_direction_sensitive() {
        let model = FieldModel::new(small_config(), 3);
        let mut rng = rng::stream(9, Domain::PointSampling, 0);
        for _ in 0..1000 {
            let f: Vec<f64> = (0..8).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let e: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if d.norm() < 1e-3 {
                continue;
            }
            let c = model.appearance_eval(&f, &d.normalize(), &e).unwrap();
            assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)), "c out of range: {c:?}");
        }
        let f = vec![0.5; 8];
        let e = vec![0.1; 4];
        let c1 = model.appearance_eval(&f, &Vector3::new(1.0, 0.0, 0.0), &e).unwrap();
        let c2 = model.appearance_eval(&f, &Vector3::new(0.0, 0.0, 1.0), &e).unwrap();
        assert_ne!(c1, c2);
        assert!(model.appearance_eval(&f, &Vector3::zeros(), &e).is_err());
    }

    #[test]
    fn sdf_continuous_across_shared_face() {
        let g = unit_grid(4, 5);
        let model = FieldModel::new(small_config(), 11);
        let mut ws = FieldWorkspace::new(&model.config);
        let o = g.origin();
        // Points on the x = origin + 0.5 face between voxels (0,j,k) and (1,j,k),
        // evaluated through both voxel parameterizations.
        let mut rng = rng::stream(13, Domain::PointSampling, 1);
        for _ in 0..50 {
            let p = Point3::new(o.x + 0.5, o.y + rng.gen_range(0.01..0.49), o.z + rng.gen_range(0.01..0.49));
            let left = g.voxel_index(Ijk::new(0, 0, 0)).unwrap();
            let right = g.voxel_index(Ijk::new(1, 0, 0)).unwrap();
            let a = sdf_in_voxel(&model, &g, left, &p, &mut ws);
            let b = sdf_in_voxel(&model, &g, right, &p, &mut ws);
            assert!((a - b).abs() < 1e-6, "face discontinuity {a} vs {b}");
        }
    }

    #[test]
    fn gradient_zero_for_constant_embeddings() {
        let mut g = unit_grid(4, 1);
        let v = [0.4f32, 0.1, -0.2, 0.33];
        for chunk in g.embeddings_mut().chunks_mut(4) {
            chunk.copy_from_slice(&v);
        }
        let model = FieldModel::new(small_config(), 2);
        let (_, grad) = sdf_gradient(&model, &g, &Point3::new(0.3, 0.6, 0.2)).unwrap();
        assert!(grad.norm() < 1e-9, "grad {grad:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = unit_grid(4, 21);
        let model = FieldModel::new(small_config(), 22);
        let b = g.bounds().unwrap();
        let mut rng = rng::stream(23, Domain::PointSampling, 2);
        let h = 1e-4 * g.voxel_size();
        for _ in 0..100 {
            let p = Point3::new(
                rng.gen_range(b.min.x + 0.01..b.max.x - 0.01),
                rng.gen_range(b.min.y + 0.01..b.max.y - 0.01),
                rng.gen_range(b.min.z + 0.01..b.max.z - 0.01),
            );
            let (_, grad) = sdf_gradient(&model, &g, &p).unwrap();
            for a in 0..3 {
                let mut pp = p;
                let mut pm = p;
                pp[a] += h;
                pm[a] -= h;
                // Skip probes that cross a voxel face; the field is C0 there.
                if g.locate(&pp) != g.locate(&pm) {
                    continue;
                }
                let fd = (sdf(&model, &g, &pp).unwrap() - sdf(&model, &g, &pm).unwrap()) / (2.0 * h);
                let denom = fd.abs().max(grad[a].abs()).max(1e-8);
                assert!(
                    (fd - grad[a]).abs() / denom < 1e-3 || (fd - grad[a]).abs() < 1e-8,
                    "axis {a}: fd {fd} vs analytic {}",
                    grad[a]
                );
            }
        }
    }
}
