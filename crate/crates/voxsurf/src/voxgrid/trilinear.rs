//! Trilinear weight kernels shared by embedding retrieval and its
//! derivatives.
//!
//! Corner order follows [`super::CORNER_OFFSETS`]: bit 0 selects the +i
//! factor, bit 1 the +j factor, bit 2 the +k factor.

/// Weights of the 8 corners at local coordinates `u` in [0, 1]³.
pub fn weights(u: [f64; 3]) -> [f64; 8] {
    let f = [[1.0 - u[0], u[0]], [1.0 - u[1], u[1]], [1.0 - u[2], u[2]]];
    let mut w = [0.0; 8];
    for (c, wc) in w.iter_mut().enumerate() {
        *wc = f[0][c & 1] * f[1][(c >> 1) & 1] * f[2][(c >> 2) & 1];
    }
    w
}

/// Partial derivatives dw_c/du_a for all corners and axes.
pub fn weight_gradients(u: [f64; 3]) -> [[f64; 3]; 8] {
    let f = [[1.0 - u[0], u[0]], [1.0 - u[1], u[1]], [1.0 - u[2], u[2]]];
    let s = [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]];
    let mut g = [[0.0; 3]; 8];
    for c in 0..8 {
        let b = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
        g[c][0] = s[0][b[0]] * f[1][b[1]] * f[2][b[2]];
        g[c][1] = f[0][b[0]] * s[1][b[1]] * f[2][b[2]];
        g[c][2] = f[0][b[0]] * f[1][b[1]] * s[2][b[2]];
    }
    g
}
