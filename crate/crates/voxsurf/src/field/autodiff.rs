//! Per-sample forward and reverse passes through the whole field:
//! trilinear retrieval -> positional encoding -> geometry MLP, plus the
//! appearance branch. Reverse accumulation lands in [`FieldGrads`], whose
//! embedding buffer is arena-aligned with the grid's vertex store.
//!
//! Gradients of the input-space SDF gradient (the eikonal term) run as
//! reverse accumulation over a three-tangent forward pass, so second-order
//! terms are exact rather than approximated.

use nalgebra::{Point3, Vector3};

use crate::voxgrid::{trilinear, VoxelGrid};

use super::encoding;
use super::mlp::{MlpCache, MlpGrads};
use super::{FieldConfig, FieldModel};

/// Reusable per-thread scratch for field evaluation. Holds the forward
/// caches consumed by [`sample_backward`]; one sample at a time.
#[derive(Debug, Clone)]
pub struct FieldWorkspace {
    // Forward state.
    pub e: Vec<f64>,
    pub edot: [Vec<f64>; 3],
    pe: Vec<f64>,
    pedot: [Vec<f64>; 3],
    ped: Vec<f64>,
    app_in: Vec<f64>,
    pub geo: MlpCache,
    pub app: MlpCache,
    weights: [f64; 8],
    weight_grads: [[f64; 3]; 8],
    corners: [u32; 8],
    inv_size: f64,
    with_grad: bool,
    appearance_ran: bool,
    // Backward scratch.
    g_pe: Vec<f64>,
    g_pedot: [Vec<f64>; 3],
    g_pe_app: Vec<f64>,
    ge: Vec<f64>,
    gedot: [Vec<f64>; 3],
    g_app_in: Vec<f64>,
    gout_geo: Vec<f64>,
    goutdot: [Vec<f64>; 3],
}

impl FieldWorkspace {
    pub fn new(config: &FieldConfig) -> Self {
        let le = config.embedding_len;
        let pe_len = config.encoded_embedding_len();
        let ped_len = config.encoded_direction_len();
        let out_len = 1 + config.feature_len;
        let app_in_len = config.feature_len + ped_len + pe_len;
        let v3 = |n: usize| [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        FieldWorkspace {
            e: vec![0.0; le],
            edot: v3(le),
            pe: vec![0.0; pe_len],
            pedot: v3(pe_len),
            ped: vec![0.0; ped_len],
            app_in: vec![0.0; app_in_len],
            geo: MlpCache::default(),
            app: MlpCache::default(),
            weights: [0.0; 8],
            weight_grads: [[0.0; 3]; 8],
            corners: [0; 8],
            inv_size: 0.0,
            with_grad: false,
            appearance_ran: false,
            g_pe: vec![0.0; pe_len],
            g_pedot: v3(pe_len),
            g_pe_app: vec![0.0; pe_len],
            ge: vec![0.0; le],
            gedot: v3(le),
            g_app_in: vec![0.0; app_in_len],
            gout_geo: vec![0.0; out_len],
            goutdot: v3(out_len),
        }
    }

    /// Geometry feature of the last forward (borrow ends before appearance).
    pub fn feature<'a>(&'a self, model: &FieldModel) -> &'a [f64] {
        &model.geometry.output_of(&self.geo)[1..]
    }
}

/// Geometry output at one sample.
#[derive(Debug, Clone, Copy)]
pub struct GeoSample {
    pub sigma: f64,
    /// Input-space SDF gradient; present when the dual pass ran.
    pub grad: Option<Vector3<f64>>,
}

/// Evaluates the geometry branch at `p` through voxel `voxel_index`.
/// `with_grad` additionally carries d/dp through the pass (needed for the
/// eikonal term, normals, and any later [`sample_backward`] with `g_grad`).
pub fn geometry_forward(
    model: &FieldModel,
    grid: &VoxelGrid,
    voxel_index: u32,
    p: &Point3<f64>,
    with_grad: bool,
    ws: &mut FieldWorkspace,
) -> GeoSample {
    let key = grid.voxels()[voxel_index as usize];
    let u = grid.local_coords(key, p);
    ws.weights = trilinear::weights(u);
    ws.corners = *grid.corner_indices(voxel_index);
    ws.inv_size = 1.0 / grid.voxel_size();
    ws.with_grad = with_grad;
    ws.appearance_ran = false;

    ws.e.fill(0.0);
    for (c, &ci) in ws.corners.iter().enumerate() {
        let emb = grid.embedding(ci);
        let w = ws.weights[c];
        for (acc, &v) in ws.e.iter_mut().zip(emb) {
            *acc += w * v as f64;
        }
    }
    encoding::encode_into(&ws.e, model.config.freq_e, &mut ws.pe);

    if with_grad {
        ws.weight_grads = trilinear::weight_gradients(u);
        for a in 0..3 {
            ws.edot[a].fill(0.0);
        }
        for (c, &ci) in ws.corners.iter().enumerate() {
            let emb = grid.embedding(ci);
            for a in 0..3 {
                let dw = ws.weight_grads[c][a] * ws.inv_size;
                for (acc, &v) in ws.edot[a].iter_mut().zip(emb) {
                    *acc += dw * v as f64;
                }
            }
        }
        for a in 0..3 {
            encoding::encode_tangent_into(&ws.e, &ws.edot[a], model.config.freq_e, &mut ws.pedot[a]);
        }
        let (pe, pedot, geo) = (&ws.pe, &ws.pedot, &mut ws.geo);
        model
            .geometry
            .forward_dual3(pe, [&pedot[0], &pedot[1], &pedot[2]], geo);
        let out = model.geometry.output_of(&ws.geo);
        let sigma = out[0];
        let t = model.geometry.output_tangents(&ws.geo);
        let grad = Vector3::new(t[0][0], t[1][0], t[2][0]);
        GeoSample {
            sigma,
            grad: Some(grad),
        }
    } else {
        let (pe, geo) = (&ws.pe, &mut ws.geo);
        let out = model.geometry.forward(pe, geo);
        GeoSample {
            sigma: out[0],
            grad: None,
        }
    }
}

/// Evaluates the appearance branch for the sample most recently passed to
/// [`geometry_forward`]. `d` is the unit view direction in the grid's frame.
pub fn appearance_forward(model: &FieldModel, d: &Vector3<f64>, ws: &mut FieldWorkspace) -> [f64; 3] {
    encoding::encode_into(&[d.x, d.y, d.z], model.config.freq_d, &mut ws.ped);
    let lf = model.config.feature_len;
    let pl = ws.ped.len();
    {
        let out = model.geometry.output_of(&ws.geo);
        ws.app_in[..lf].copy_from_slice(&out[1..]);
    }
    ws.app_in[lf..lf + pl].copy_from_slice(&ws.ped);
    ws.app_in[lf + pl..].copy_from_slice(&ws.pe);
    let (app_in, app) = (&ws.app_in, &mut ws.app);
    let out = model.appearance.forward(app_in, app);
    ws.appearance_ran = true;
    [out[0], out[1], out[2]]
}

/// Upstream loss gradients for one sample.
#[derive(Debug, Clone, Copy, Default)]
pub struct SampleUpstream {
    /// dL/d sigma.
    pub g_sigma: f64,
    /// dL/d color; requires a matching [`appearance_forward`].
    pub g_color: Option<[f64; 3]>,
    /// dL/d (grad sigma); requires `with_grad` on the forward pass.
    pub g_grad: Option<Vector3<f64>>,
}

/// Gradient accumulator covering every trainable tensor. The embedding
/// buffer is dense over the grid's vertex arena; untouched vertices stay
/// exactly zero.
#[derive(Debug, Clone)]
pub struct FieldGrads {
    pub geometry: MlpGrads,
    pub appearance: MlpGrads,
    pub log_s: f64,
    pub embeddings: Vec<f64>,
}

impl FieldGrads {
    pub fn zeros(model: &FieldModel, grid: &VoxelGrid) -> Self {
        FieldGrads {
            geometry: MlpGrads::zeros_like(&model.geometry),
            appearance: MlpGrads::zeros_like(&model.appearance),
            log_s: 0.0,
            embeddings: vec![0.0; grid.vertex_count() * grid.embedding_len()],
        }
    }

    pub fn clear(&mut self) {
        self.geometry.clear();
        self.appearance.clear();
        self.log_s = 0.0;
        self.embeddings.fill(0.0);
    }

    pub fn add_assign(&mut self, other: &FieldGrads) {
        self.geometry.add_assign(&other.geometry);
        self.appearance.add_assign(&other.appearance);
        self.log_s += other.log_s;
        for (a, b) in self.embeddings.iter_mut().zip(&other.embeddings) {
            *a += b;
        }
    }
}

/// Reverse pass for the sample whose forward state is still in `ws`.
/// Accumulates MLP, embedding (8 corner vertices only), and feature-path
/// gradients into `grads`. The `log_s` slot is not touched here; the
/// sharpness gradient enters through the alpha derivatives in the renderer.
pub fn sample_backward(
    model: &FieldModel,
    up: &SampleUpstream,
    ws: &mut FieldWorkspace,
    grads: &mut FieldGrads,
) {
    let le = model.config.embedding_len;
    let lf = model.config.feature_len;
    let freq_e = model.config.freq_e;

    ws.gout_geo.fill(0.0);
    ws.gout_geo[0] = up.g_sigma;
    ws.g_pe_app.fill(0.0);

    // Appearance branch first: it feeds the geometry feature gradient.
    if let Some(gc) = up.g_color {
        assert!(ws.appearance_ran, "appearance backward without forward");
        let (g_app_in, app) = (&mut ws.g_app_in, &mut ws.app);
        model.appearance.backward(app, &gc, &mut grads.appearance, g_app_in);
        for (o, &g) in ws.gout_geo[1..].iter_mut().zip(&ws.g_app_in[..lf]) {
            *o = g;
        }
        let pl = ws.ped.len();
        ws.g_pe_app.copy_from_slice(&ws.g_app_in[lf + pl..]);
        // The view-direction slice of g_app_in is dropped: d is an input.
    }

    // Geometry branch.
    if let Some(gg) = up.g_grad {
        debug_assert!(ws.with_grad, "g_grad requires a dual forward pass");
        for a in 0..3 {
            ws.goutdot[a].fill(0.0);
            ws.goutdot[a][0] = gg[a];
        }
        let (goutdot, geo, g_pe, g_pedot) = (&ws.goutdot, &mut ws.geo, &mut ws.g_pe, &mut ws.g_pedot);
        let [d0, d1, d2] = g_pedot;
        model.geometry.backward_dual3(
            geo,
            &ws.gout_geo,
            [&goutdot[0], &goutdot[1], &goutdot[2]],
            &mut grads.geometry,
            g_pe,
            [d0, d1, d2],
        );
        for (a, &b) in ws.g_pe.iter_mut().zip(&ws.g_pe_app) {
            *a += b;
        }
        ws.ge.fill(0.0);
        for a in 0..3 {
            ws.gedot[a].fill(0.0);
        }
        encoding::backward_into(&ws.e, freq_e, &ws.g_pe, &mut ws.ge);
        for a in 0..3 {
            encoding::backward_tangent_into(
                &ws.e,
                &ws.edot[a],
                freq_e,
                &ws.g_pedot[a],
                &mut ws.ge,
                &mut ws.gedot[a],
            );
        }
        for (c, &ci) in ws.corners.iter().enumerate() {
            let base = ci as usize * le;
            let dst = &mut grads.embeddings[base..base + le];
            let w = ws.weights[c];
            for i in 0..le {
                let mut g = w * ws.ge[i];
                for a in 0..3 {
                    g += ws.weight_grads[c][a] * ws.inv_size * ws.gedot[a][i];
                }
                dst[i] += g;
            }
        }
    } else {
        let (geo, g_pe) = (&mut ws.geo, &mut ws.g_pe);
        model.geometry.backward(geo, &ws.gout_geo, &mut grads.geometry, g_pe);
        for (a, &b) in ws.g_pe.iter_mut().zip(&ws.g_pe_app) {
            *a += b;
        }
        ws.ge.fill(0.0);
        encoding::backward_into(&ws.e, freq_e, &ws.g_pe, &mut ws.ge);
        for (c, &ci) in ws.corners.iter().enumerate() {
            let base = ci as usize * le;
            let dst = &mut grads.embeddings[base..base + le];
            let w = ws.weights[c];
            for (d, &g) in dst.iter_mut().zip(&ws.ge) {
                *d += w * g;
            }
        }
    }
}
