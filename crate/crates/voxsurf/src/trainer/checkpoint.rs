//! Checkpoint files: magic `VXSC`, then embedded grid (`VXSG`) and field
//! (`VXSF`) sections, optimizer moments, and the iteration counter. All
//! multi-byte values little-endian; parameters and moments are f32.
//!
//! Section layouts:
//!
//! ```text
//! VXSC: "VXSC" version:u32 iteration:u64 voxel_size:f32 origin:f32x3
//!       <VXSG> <VXSF> <moments>
//! VXSG: "VXSG" version:u32 level:u32 voxel_count:u64 vertex_count:u64 L_e:u32
//!       voxels: (i32 i32 i32) * voxel_count          (sorted)
//!       vertices: (i32 i32 i32, f32 * L_e) * vertex_count (sorted by key)
//! VXSF: "VXSF" version:u32 L_e:u32 L_f:u32 freq_e:u32 freq_d:u32
//!       geo_layers:u32 geo_dims:u32*(geo_layers+1)
//!       app_layers:u32 app_dims:u32*(app_layers+1)
//!       geometry params (per layer: weights row-major, bias)
//!       appearance params (same), log_s:f32
//! moments: for every tensor in VXSF order: m then v; then embedding arena
//!       m then v (vertex_count * L_e each)
//! ```
//!
//! Vertex and voxel records are written in sorted arena order, so
//! save -> load -> save is byte-identical.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::field::{FieldConfig, FieldModel, Mlp, OutputActivation};
use crate::voxgrid::{Ijk, VoxelGrid};

use super::{MomentStore, TrainState};
use crate::trainer::adam::Moments;

const VERSION: u32 = 1;

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(b"VXSC")?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u64::<LittleEndian>(state.iteration)?;
    w.write_f32::<LittleEndian>(state.grid.voxel_size() as f32)?;
    for a in 0..3 {
        w.write_f32::<LittleEndian>(state.grid.origin()[a] as f32)?;
    }
    write_grid(&mut w, &state.grid)?;
    write_field(&mut w, &state.model)?;
    write_moments(&mut w, &state.moments)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let mut r = BufReader::new(File::open(path)?);
    let ctx = |reason: &str| Error::format(path, reason);

    expect_magic(&mut r, b"VXSC").map_err(|_| ctx("bad magic (not a checkpoint)"))?;
    let version = r.read_u32::<LittleEndian>().map_err(|_| ctx("truncated header"))?;
    if version != VERSION {
        return Err(ctx(&format!("unsupported version {version}")));
    }
    let iteration = r.read_u64::<LittleEndian>().map_err(|_| ctx("truncated header"))?;
    let voxel_size = r.read_f32::<LittleEndian>().map_err(|_| ctx("truncated header"))? as f64;
    let mut origin = [0.0f64; 3];
    for o in &mut origin {
        *o = r.read_f32::<LittleEndian>().map_err(|_| ctx("truncated header"))? as f64;
    }
    let grid = read_grid(&mut r, voxel_size, Point3::new(origin[0], origin[1], origin[2]))
        .map_err(|e| rewrap(e, path, "grid section"))?;
    let model = read_field(&mut r).map_err(|e| rewrap(e, path, "field section"))?;
    let moments = read_moments(&mut r, &model, &grid).map_err(|e| rewrap(e, path, "moments"))?;
    Ok(TrainState {
        grid,
        model,
        moments,
        iteration,
    })
}

fn rewrap(e: Error, path: &Path, section: &str) -> Error {
    match e {
        Error::Format { reason, .. } => Error::format(path, format!("{section}: {reason}")),
        Error::Io(_) => Error::format(path, format!("{section}: truncated")),
        other => other,
    }
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    if &buf != magic {
        return Err(Error::format("<stream>", format!("magic {buf:?} != {magic:?}")));
    }
    Ok(())
}

fn write_grid(w: &mut impl Write, grid: &VoxelGrid) -> Result<()> {
    w.write_all(b"VXSG")?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(grid.level())?;
    w.write_u64::<LittleEndian>(grid.voxel_count() as u64)?;
    w.write_u64::<LittleEndian>(grid.vertex_count() as u64)?;
    w.write_u32::<LittleEndian>(grid.embedding_len() as u32)?;
    for v in grid.voxels() {
        w.write_i32::<LittleEndian>(v.i)?;
        w.write_i32::<LittleEndian>(v.j)?;
        w.write_i32::<LittleEndian>(v.k)?;
    }
    for (vi, key) in grid.vertex_keys().iter().enumerate() {
        w.write_i32::<LittleEndian>(key.i)?;
        w.write_i32::<LittleEndian>(key.j)?;
        w.write_i32::<LittleEndian>(key.k)?;
        for &e in grid.embedding(vi as u32) {
            w.write_f32::<LittleEndian>(e)?;
        }
    }
    Ok(())
}

fn read_grid(r: &mut impl Read, voxel_size: f64, origin: Point3<f64>) -> Result<VoxelGrid> {
    expect_magic(r, b"VXSG")?;
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::format("<stream>", format!("VXSG version {version}")));
    }
    let level = r.read_u32::<LittleEndian>()?;
    let voxel_count = r.read_u64::<LittleEndian>()? as usize;
    let vertex_count = r.read_u64::<LittleEndian>()? as usize;
    let le = r.read_u32::<LittleEndian>()? as usize;
    if le == 0 || le > 4096 || voxel_count == 0 {
        return Err(Error::format("<stream>", "implausible grid header"));
    }
    let mut voxels = Vec::with_capacity(voxel_count);
    for _ in 0..voxel_count {
        let (i, j, k) = (
            r.read_i32::<LittleEndian>()?,
            r.read_i32::<LittleEndian>()?,
            r.read_i32::<LittleEndian>()?,
        );
        voxels.push(Ijk::new(i, j, k));
    }
    let mut keys = Vec::with_capacity(vertex_count);
    let mut embeddings = Vec::with_capacity(vertex_count * le);
    for _ in 0..vertex_count {
        let (i, j, k) = (
            r.read_i32::<LittleEndian>()?,
            r.read_i32::<LittleEndian>()?,
            r.read_i32::<LittleEndian>()?,
        );
        keys.push(Ijk::new(i, j, k));
        for _ in 0..le {
            embeddings.push(r.read_f32::<LittleEndian>()?);
        }
    }
    VoxelGrid::from_parts(level, voxel_size, origin, le, voxels, keys, embeddings)
}

fn write_mlp_dims(w: &mut impl Write, mlp: &Mlp) -> Result<()> {
    w.write_u32::<LittleEndian>(mlp.layers.len() as u32)?;
    w.write_u32::<LittleEndian>(mlp.layers[0].in_dim as u32)?;
    for l in &mlp.layers {
        w.write_u32::<LittleEndian>(l.out_dim as u32)?;
    }
    Ok(())
}

fn write_field(w: &mut impl Write, model: &FieldModel) -> Result<()> {
    w.write_all(b"VXSF")?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(model.config.embedding_len as u32)?;
    w.write_u32::<LittleEndian>(model.config.feature_len as u32)?;
    w.write_u32::<LittleEndian>(model.config.freq_e as u32)?;
    w.write_u32::<LittleEndian>(model.config.freq_d as u32)?;
    write_mlp_dims(w, &model.geometry)?;
    write_mlp_dims(w, &model.appearance)?;
    let mut err = None;
    model.for_each_tensor(|t| {
        if err.is_none() {
            for &x in t {
                if let Err(e) = w.write_f32::<LittleEndian>(x) {
                    err = Some(e);
                    break;
                }
            }
        }
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn read_mlp_dims(r: &mut impl Read) -> Result<Vec<usize>> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    if n == 0 || n > 64 {
        return Err(Error::format("<stream>", "implausible layer count"));
    }
    let mut dims = Vec::with_capacity(n + 1);
    for _ in 0..=n {
        let d = r.read_u32::<LittleEndian>()? as usize;
        if d == 0 || d > 1 << 20 {
            return Err(Error::format("<stream>", "implausible layer width"));
        }
        dims.push(d);
    }
    Ok(dims)
}

fn read_field(r: &mut impl Read) -> Result<FieldModel> {
    expect_magic(r, b"VXSF")?;
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::format("<stream>", format!("VXSF version {version}")));
    }
    let embedding_len = r.read_u32::<LittleEndian>()? as usize;
    let feature_len = r.read_u32::<LittleEndian>()? as usize;
    let freq_e = r.read_u32::<LittleEndian>()? as usize;
    let freq_d = r.read_u32::<LittleEndian>()? as usize;
    let geo_dims = read_mlp_dims(r)?;
    let app_dims = read_mlp_dims(r)?;
    let config = FieldConfig {
        embedding_len,
        feature_len,
        hidden_dim: *geo_dims.get(1).unwrap_or(&1),
        geometry_layers: geo_dims.len() - 1,
        appearance_layers: app_dims.len() - 1,
        freq_e,
        freq_d,
    };
    let mut model = FieldModel {
        config,
        geometry: Mlp::new(&geo_dims, OutputActivation::Linear, 0, 0),
        appearance: Mlp::new(&app_dims, OutputActivation::Sigmoid, 0, 1),
        log_s: 0.0,
    };
    let mut io_err = None;
    model.for_each_tensor_mut(|t| {
        if io_err.is_none() {
            for x in t.iter_mut() {
                match r.read_f32::<LittleEndian>() {
                    Ok(v) => *x = v,
                    Err(e) => {
                        io_err = Some(e);
                        break;
                    }
                }
            }
        }
    });
    if let Some(e) = io_err {
        return Err(e.into());
    }
    Ok(model)
}

fn write_moments(w: &mut impl Write, m: &MomentStore) -> Result<()> {
    let mut dump = |mo: &Moments| -> Result<()> {
        for &x in &mo.m {
            w.write_f32::<LittleEndian>(x)?;
        }
        for &x in &mo.v {
            w.write_f32::<LittleEndian>(x)?;
        }
        Ok(())
    };
    for t in m.geometry.iter().chain(&m.appearance) {
        dump(t)?;
    }
    dump(&m.log_s)?;
    dump(&m.embeddings)?;
    Ok(())
}

fn read_moments(r: &mut impl Read, model: &FieldModel, grid: &VoxelGrid) -> Result<MomentStore> {
    let mut load = |len: usize| -> Result<Moments> {
        let mut mo = Moments::zeros(len);
        for x in mo.m.iter_mut().chain(mo.v.iter_mut()) {
            *x = r.read_f32::<LittleEndian>()?;
        }
        Ok(mo)
    };
    let mut geometry = Vec::new();
    for l in &model.geometry.layers {
        geometry.push(load(l.w.len())?);
        geometry.push(load(l.b.len())?);
    }
    let mut appearance = Vec::new();
    for l in &model.appearance.layers {
        appearance.push(load(l.w.len())?);
        appearance.push(load(l.b.len())?);
    }
    let log_s = load(1)?;
    let embeddings = load(grid.vertex_count() * grid.embedding_len())?;
    Ok(MomentStore {
        geometry,
        appearance,
        log_s,
        embeddings,
    })
}
