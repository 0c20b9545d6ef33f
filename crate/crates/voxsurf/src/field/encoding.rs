//! Sinusoidal positional encoding.
//!
//! Layout: the raw vector first, then per frequency k = 0..n-1 a sine block
//! and a cosine block at angular frequency 2^k * pi. Output length is
//! dim * (1 + 2 * n_freq).

use std::f64::consts::PI;

pub fn encoded_len(dim: usize, n_freq: usize) -> usize {
    dim * (1 + 2 * n_freq)
}

/// Writes the encoding of `v` into `out` (length `encoded_len`).
pub fn encode_into(v: &[f64], n_freq: usize, out: &mut [f64]) {
    let dim = v.len();
    debug_assert_eq!(out.len(), encoded_len(dim, n_freq));
    out[..dim].copy_from_slice(v);
    for k in 0..n_freq {
        let omega = PI * (1u64 << k) as f64;
        let base = dim * (1 + 2 * k);
        for (i, &x) in v.iter().enumerate() {
            let (s, c) = (omega * x).sin_cos();
            out[base + i] = s;
            out[base + dim + i] = c;
        }
    }
}

pub fn encode(v: &[f64], n_freq: usize) -> Vec<f64> {
    let mut out = vec![0.0; encoded_len(v.len(), n_freq)];
    encode_into(v, n_freq, &mut out);
    out
}

/// Tangent of the encoding: given v and a direction vdot, writes
/// d(encode)/dt where dv/dt = vdot.
pub fn encode_tangent_into(v: &[f64], vdot: &[f64], n_freq: usize, out: &mut [f64]) {
    let dim = v.len();
    debug_assert_eq!(out.len(), encoded_len(dim, n_freq));
    out[..dim].copy_from_slice(vdot);
    for k in 0..n_freq {
        let omega = PI * (1u64 << k) as f64;
        let base = dim * (1 + 2 * k);
        for i in 0..dim {
            let (s, c) = (omega * v[i]).sin_cos();
            out[base + i] = omega * c * vdot[i];
            out[base + dim + i] = -omega * s * vdot[i];
        }
    }
}

/// Reverse-mode: accumulates J^T * g_encoded into `gv`.
pub fn backward_into(v: &[f64], n_freq: usize, g_encoded: &[f64], gv: &mut [f64]) {
    let dim = v.len();
    for i in 0..dim {
        gv[i] += g_encoded[i];
    }
    for k in 0..n_freq {
        let omega = PI * (1u64 << k) as f64;
        let base = dim * (1 + 2 * k);
        for i in 0..dim {
            let (s, c) = (omega * v[i]).sin_cos();
            gv[i] += omega * (c * g_encoded[base + i] - s * g_encoded[base + dim + i]);
        }
    }
}

/// Reverse-mode through the tangent map: for y_dot = J(v) vdot, accumulates
/// d<g, y_dot>/dv into `gv` and d<g, y_dot>/dvdot into `gvdot`.
pub fn backward_tangent_into(
    v: &[f64],
    vdot: &[f64],
    n_freq: usize,
    g_tangent: &[f64],
    gv: &mut [f64],
    gvdot: &mut [f64],
) {
    let dim = v.len();
    for i in 0..dim {
        gvdot[i] += g_tangent[i];
    }
    for k in 0..n_freq {
        let omega = PI * (1u64 << k) as f64;
        let base = dim * (1 + 2 * k);
        for i in 0..dim {
            let (s, c) = (omega * v[i]).sin_cos();
            let gs = g_tangent[base + i];
            let gc = g_tangent[base + dim + i];
            // y_sin_dot = omega cos(omega v) vdot; y_cos_dot = -omega sin(omega v) vdot
            gvdot[i] += omega * (c * gs - s * gc);
            gv[i] += omega * omega * vdot[i] * (-s * gs - c * gc);
        }
    }
}
