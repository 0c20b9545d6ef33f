//! Small dense MLPs with hand-rolled reverse-mode differentiation.
//!
//! Hidden activations are softplus with beta = 100 (twice differentiable,
//! which the forward-over-reverse pass through the geometry network needs);
//! the output is linear or sigmoid. Parameters are stored as f32 (the
//! checkpoint's wire precision) and all arithmetic runs in f64.
//!
//! The `dual3` variants carry three tangent directions through the forward
//! pass (a jacobian-vector product per spatial axis) and can run reverse
//! accumulation over both the primal output and the tangent outputs, which
//! yields exact parameter gradients of gradient-dependent losses.

use rand::Rng;

use crate::rng::{self, Domain};

pub const SOFTPLUS_BETA: f64 = 100.0;

/// softplus_beta(z) = ln(1 + exp(beta z)) / beta, overflow-safe.
pub fn softplus(z: f64) -> f64 {
    let bz = SOFTPLUS_BETA * z;
    if bz > 30.0 {
        z + (-bz).exp() / SOFTPLUS_BETA
    } else if bz < -30.0 {
        bz.exp() / SOFTPLUS_BETA
    } else {
        bz.exp().ln_1p() / SOFTPLUS_BETA
    }
}

/// d softplus / dz = sigmoid(beta z).
pub fn softplus_prime(z: f64) -> f64 {
    sigmoid(SOFTPLUS_BETA * z)
}

/// d² softplus / dz² = beta s (1 - s).
pub fn softplus_second(z: f64) -> f64 {
    let s = sigmoid(SOFTPLUS_BETA * z);
    SOFTPLUS_BETA * s * (1.0 - s)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    /// Row-major `out_dim x in_dim`.
    pub w: Vec<f32>,
    pub b: Vec<f32>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl DenseLayer {
    fn new(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        // Small uniform scaled by fan-in; biases zero.
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..bound) as f32)
            .collect();
        DenseLayer {
            w,
            b: vec![0.0; out_dim],
            in_dim,
            out_dim,
        }
    }

    #[inline]
    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = self.b[r] as f64;
            for (wv, xv) in row.iter().zip(x) {
                acc += *wv as f64 * *xv;
            }
            *o = acc;
        }
    }

    /// Tangent of the affine map (no bias).
    #[inline]
    fn affine_tangent(&self, xdot: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            let mut acc = 0.0;
            for (wv, xv) in row.iter().zip(xdot) {
                acc += *wv as f64 * *xv;
            }
            *o = acc;
        }
    }

    /// gx = W^T gz (overwrites gx).
    #[inline]
    fn backward_input(&self, gz: &[f64], gx: &mut [f64]) {
        gx.fill(0.0);
        for (r, &g) in gz.iter().enumerate() {
            let row = &self.w[r * self.in_dim..(r + 1) * self.in_dim];
            for (gxv, wv) in gx.iter_mut().zip(row) {
                *gxv += *wv as f64 * g;
            }
        }
    }
}

/// f64 gradient mirror of one MLP's parameters.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrads {
            w: mlp.layers.iter().map(|l| vec![0.0; l.w.len()]).collect(),
            b: mlp.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for v in self.w.iter_mut().chain(self.b.iter_mut()) {
            v.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.b.iter_mut().zip(&other.b) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Reusable forward caches (activations and pre-activations per layer, plus
/// tangent mirrors). One per worker thread; reused across samples.
#[derive(Debug, Default, Clone)]
pub struct MlpCache {
    pub xs: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    pub xdots: Vec<[Vec<f64>; 3]>,
    pub zdots: Vec<[Vec<f64>; 3]>,
    // Reverse-pass scratch.
    gz: Vec<f64>,
    gx: Vec<f64>,
    gzdot: [Vec<f64>; 3],
    gxdot: [Vec<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub output: OutputActivation,
}

impl Mlp {
    /// `dims` = [in, hidden..., out]; one weight matrix per adjacent pair.
    pub fn new(dims: &[usize], output: OutputActivation, seed: u64, tag: u64) -> Self {
        assert!(dims.len() >= 2);
        let mut rng = rng::stream(seed, Domain::ModelInit, tag);
        let layers = dims
            .windows(2)
            .map(|d| DenseLayer::new(d[0], d[1], &mut rng))
            .collect();
        Mlp { layers, output }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    fn ensure_cache(&self, cache: &mut MlpCache, dual: bool) {
        let n = self.layers.len();
        if cache.xs.len() != n + 1 || cache.xs[0].len() != self.in_dim() {
            cache.xs = (0..=n)
                .map(|l| vec![0.0; if l == 0 { self.in_dim() } else { self.layers[l - 1].out_dim }])
                .collect();
            cache.zs = (0..n).map(|l| vec![0.0; self.layers[l].out_dim]).collect();
            let widest = self.layers.iter().map(|l| l.in_dim.max(l.out_dim)).max().unwrap();
            cache.gz = vec![0.0; widest];
            cache.gx = vec![0.0; widest];
            cache.xdots = Default::default();
            cache.zdots = Default::default();
        }
        if dual && cache.xdots.len() != n + 1 {
            cache.xdots = (0..=n)
                .map(|l| {
                    let d = if l == 0 { self.in_dim() } else { self.layers[l - 1].out_dim };
                    [vec![0.0; d], vec![0.0; d], vec![0.0; d]]
                })
                .collect();
            cache.zdots = (0..self.layers.len())
                .map(|l| {
                    let d = self.layers[l].out_dim;
                    [vec![0.0; d], vec![0.0; d], vec![0.0; d]]
                })
                .collect();
            let widest = self.layers.iter().map(|l| l.in_dim.max(l.out_dim)).max().unwrap();
            cache.gzdot = [vec![0.0; widest], vec![0.0; widest], vec![0.0; widest]];
            cache.gxdot = [vec![0.0; widest], vec![0.0; widest], vec![0.0; widest]];
        }
    }

    /// Plain forward; the output lives in `cache.xs[last]`.
    pub fn forward<'c>(&self, x: &[f64], cache: &'c mut MlpCache) -> &'c [f64] {
        self.ensure_cache(cache, false);
        cache.xs[0].copy_from_slice(x);
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = cache.xs.split_at_mut(l + 1);
            layer.affine(&head[l], &mut cache.zs[l]);
            let last = l + 1 == n;
            for (x1, &z) in tail[0].iter_mut().zip(cache.zs[l].iter()) {
                *x1 = if last { self.out_value(z) } else { softplus(z) };
            }
        }
        &cache.xs[n]
    }

    fn out_value(&self, z: f64) -> f64 {
        match self.output {
            OutputActivation::Linear => z,
            OutputActivation::Sigmoid => sigmoid(z),
        }
    }

    /// Forward with three tangent directions. Outputs land in
    /// `cache.xs[last]` and `cache.xdots[last]`.
    pub fn forward_dual3(&self, x: &[f64], xdot: [&[f64]; 3], cache: &mut MlpCache) {
        self.ensure_cache(cache, true);
        cache.xs[0].copy_from_slice(x);
        for a in 0..3 {
            cache.xdots[0][a].copy_from_slice(xdot[a]);
        }
        let n = self.layers.len();
        for (l, layer) in self.layers.iter().enumerate() {
            let last = l + 1 == n;
            {
                let (head, tail) = cache.xs.split_at_mut(l + 1);
                layer.affine(&head[l], &mut cache.zs[l]);
                for (x1, &z) in tail[0].iter_mut().zip(cache.zs[l].iter()) {
                    *x1 = if last { self.out_value(z) } else { softplus(z) };
                }
            }
            for a in 0..3 {
                let (head, tail) = cache.xdots.split_at_mut(l + 1);
                layer.affine_tangent(&head[l][a], &mut cache.zdots[l][a]);
                for i in 0..layer.out_dim {
                    let z = cache.zs[l][i];
                    let d = if last {
                        match self.output {
                            OutputActivation::Linear => 1.0,
                            OutputActivation::Sigmoid => {
                                let s = sigmoid(z);
                                s * (1.0 - s)
                            }
                        }
                    } else {
                        softplus_prime(z)
                    };
                    tail[0][a][i] = d * cache.zdots[l][a][i];
                }
            }
        }
    }

    pub fn output_of<'c>(&self, cache: &'c MlpCache) -> &'c [f64] {
        &cache.xs[self.layers.len()]
    }

    pub fn output_tangents<'c>(&self, cache: &'c MlpCache) -> [&'c [f64]; 3] {
        let t = &cache.xdots[self.layers.len()];
        [&t[0], &t[1], &t[2]]
    }

    /// Reverse pass over a plain forward. Accumulates parameter gradients
    /// into `grads` and writes d(loss)/d(input) into `gin` (overwrites).
    pub fn backward(&self, cache: &mut MlpCache, gout: &[f64], grads: &mut MlpGrads, gin: &mut [f64]) {
        let n = self.layers.len();
        cache.gx[..gout.len()].copy_from_slice(gout);
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let last = l + 1 == n;
            // Through the activation: gz = gx_{l+1} * act'(z).
            for i in 0..layer.out_dim {
                let z = cache.zs[l][i];
                let d = if last {
                    match self.output {
                        OutputActivation::Linear => 1.0,
                        OutputActivation::Sigmoid => {
                            let s = sigmoid(z);
                            s * (1.0 - s)
                        }
                    }
                } else {
                    softplus_prime(z)
                };
                cache.gz[i] = cache.gx[i] * d;
            }
            // Parameter gradients.
            let x = &cache.xs[l];
            let gw = &mut grads.w[l];
            for r in 0..layer.out_dim {
                let g = cache.gz[r];
                grads.b[l][r] += g;
                let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (gwv, xv) in row.iter_mut().zip(x) {
                    *gwv += g * xv;
                }
            }
            // Input gradient.
            if l == 0 {
                layer.backward_input(&cache.gz[..layer.out_dim], gin);
            } else {
                let mut tmp = std::mem::take(&mut cache.gx);
                layer.backward_input(&cache.gz[..layer.out_dim], &mut tmp[..layer.in_dim]);
                cache.gx = tmp;
            }
        }
    }

    /// Reverse pass over a dual3 forward: accumulates gradients of
    /// `<gout, y> + sum_a <goutdot[a], ydot[a]>` with respect to parameters
    /// (into `grads`), the input (`gin`, overwritten), and the input tangents
    /// (`gindot`, overwritten).
    ///
    /// Only the linear-output form is supported (the geometry extractor).
    pub fn backward_dual3(
        &self,
        cache: &mut MlpCache,
        gout: &[f64],
        goutdot: [&[f64]; 3],
        grads: &mut MlpGrads,
        gin: &mut [f64],
        gindot: [&mut [f64]; 3],
    ) {
        assert_eq!(self.output, OutputActivation::Linear);
        let n = self.layers.len();
        cache.gx[..gout.len()].copy_from_slice(gout);
        for a in 0..3 {
            cache.gxdot[a][..gout.len()].copy_from_slice(goutdot[a]);
        }
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let last = l + 1 == n;
            for i in 0..layer.out_dim {
                if last {
                    // Linear output: x = z, xdot = zdot.
                    cache.gz[i] = cache.gx[i];
                    for a in 0..3 {
                        cache.gzdot[a][i] = cache.gxdot[a][i];
                    }
                } else {
                    let z = cache.zs[l][i];
                    let d1 = softplus_prime(z);
                    let d2 = softplus_second(z);
                    // x = act(z); xdot_a = act'(z) zdot_a
                    // gz = gx act'(z) + sum_a gxdot_a act''(z) zdot_a
                    let mut gz = cache.gx[i] * d1;
                    for a in 0..3 {
                        gz += cache.gxdot[a][i] * d2 * cache.zdots[l][a][i];
                        cache.gzdot[a][i] = cache.gxdot[a][i] * d1;
                    }
                    cache.gz[i] = gz;
                }
            }
            let x = &cache.xs[l];
            let gw = &mut grads.w[l];
            for r in 0..layer.out_dim {
                let g = cache.gz[r];
                grads.b[l][r] += g;
                let row = &mut gw[r * layer.in_dim..(r + 1) * layer.in_dim];
                for (c, (gwv, xv)) in row.iter_mut().zip(x).enumerate() {
                    let mut acc = g * xv;
                    for a in 0..3 {
                        acc += cache.gzdot[a][r] * cache.xdots[l][a][c];
                    }
                    *gwv += acc;
                }
            }
            if l == 0 {
                layer.backward_input(&cache.gz[..layer.out_dim], gin);
                for a in 0..3 {
                    layer.backward_input(&cache.gzdot[a][..layer.out_dim], gindot[a]);
                }
            } else {
                let mut tmp = std::mem::take(&mut cache.gx);
                layer.backward_input(&cache.gz[..layer.out_dim], &mut tmp[..layer.in_dim]);
                cache.gx = tmp;
                for a in 0..3 {
                    let mut tmp = std::mem::take(&mut cache.gxdot[a]);
                    layer.backward_input(&cache.gzdot[a][..layer.out_dim], &mut tmp[..layer.in_dim]);
                    cache.gxdot[a] = tmp;
                }
            }
        }
    }

    /// Applies `f` to every parameter tensor in serialization order
    /// (per layer: weights row-major, then biases).
    pub fn for_each_tensor(&self, mut f: impl FnMut(&[f32])) {
        for l in &self.layers {
            f(&l.w);
            f(&l.b);
        }
    }

    pub fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f32])) {
        for l in &mut self.layers {
            f(&mut l.w);
            f(&mut l.b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(output: OutputActivation) -> Mlp {
        Mlp::new(&[3, 5, 2], output, 11, 0)
    }

    fn loss_of(mlp: &Mlp, x: &[f64], gout: &[f64]) -> f64 {
        let mut cache = MlpCache::default();
        let y = mlp.forward(x, &mut cache);
        y.iter().zip(gout).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn deterministic_and_seeded() {
        let a = tiny(OutputActivation::Linear);
        let b = tiny(OutputActivation::Linear);
        assert_eq!(a.layers[0].w, b.layers[0].w);
        let mut c1 = MlpCache::default();
        let mut c2 = MlpCache::default();
        let x = [0.2, -0.4, 0.9];
        assert_eq!(a.forward(&x, &mut c1), b.forward(&x, &mut c2));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut mlp = tiny(OutputActivation::Sigmoid);
        let x = [0.31, -0.22, 0.05];
        let gout = [0.7, -1.3];

        let mut cache = MlpCache::default();
        mlp.forward(&x, &mut cache);
        let mut grads = MlpGrads::zeros_like(&mlp);
        let mut gin = vec![0.0; 3];
        mlp.backward(&mut cache, &gout, &mut grads, &mut gin);

        let h = 1e-4f64;
        // Input gradient.
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss_of(&mlp, &xp, &gout) - loss_of(&mlp, &xm, &gout)) / (2.0 * h);
            assert!((fd - gin[i]).abs() < 1e-6 * fd.abs().max(1.0), "{fd} vs {}", gin[i]);
        }
        // A few weight gradients (perturb stored f32 values).
        for (l, r, c) in [(0usize, 0usize, 1usize), (1, 1, 3)] {
            let idx = r * mlp.layers[l].in_dim + c;
            let orig = mlp.layers[l].w[idx];
            let hp = (orig as f64 + h) as f32;
            let hm = (orig as f64 - h) as f32;
            mlp.layers[l].w[idx] = hp;
            let fp = loss_of(&mlp, &x, &gout);
            mlp.layers[l].w[idx] = hm;
            let fm = loss_of(&mlp, &x, &gout);
            mlp.layers[l].w[idx] = orig;
            let fd = (fp - fm) / (hp as f64 - hm as f64);
            let an = grads.w[l][idx];
            assert!((fd - an).abs() < 1e-3 * fd.abs().max(1e-3), "{fd} vs {an}");
        }
    }

    #[test]
    fn dual_forward_matches_directional_differences() {
        let mlp = tiny(OutputActivation::Linear);
        let x = [0.1, 0.6, -0.3];
        let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, -0.2, 0.8]];
        let mut cache = MlpCache::default();
        mlp.forward_dual3(&x, [&dirs[0], &dirs[1], &dirs[2]], &mut cache);
        let outdots: Vec<Vec<f64>> = mlp.output_tangents(&cache).iter().map(|t| t.to_vec()).collect();

        let h = 1e-6;
        for (a, dir) in dirs.iter().enumerate() {
            let xp: Vec<f64> = x.iter().zip(dir).map(|(v, d)| v + h * d).collect();
            let xm: Vec<f64> = x.iter().zip(dir).map(|(v, d)| v - h * d).collect();
            let mut cp = MlpCache::default();
            let mut cm = MlpCache::default();
            let yp = mlp.forward(&xp, &mut cp).to_vec();
            let ym = mlp.forward(&xm, &mut cm).to_vec();
            for i in 0..yp.len() {
                let fd = (yp[i] - ym[i]) / (2.0 * h);
                assert!((fd - outdots[a][i]).abs() < 1e-5, "{fd} vs {}", outdots[a][i]);
            }
        }
    }

    #[test]
    fn dual_backward_matches_finite_differences() {
        // Scalar psi = <gout, y> + sum_a <goutdot_a, ydot_a>; check d psi / dW
        // against central differences, exercising the second-order path.
        let mut mlp = tiny(OutputActivation::Linear);
        let x = [0.12, -0.33, 0.27];
        let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let gout = [0.4, 0.9];
        let gdots = [[0.5, -0.2], [1.1, 0.3], [-0.7, 0.6]];

        let psi = |m: &Mlp| -> f64 {
            let mut c = MlpCache::default();
            m.forward_dual3(&x, [&dirs[0], &dirs[1], &dirs[2]], &mut c);
            let y = m.output_of(&c);
            let t = m.output_tangents(&c);
            let mut v: f64 = y.iter().zip(&gout).map(|(a, b)| a * b).sum();
            for a in 0..3 {
                v += t[a].iter().zip(&gdots[a]).map(|(p, q)| p * q).sum::<f64>();
            }
            v
        };

        let mut cache = MlpCache::default();
        mlp.forward_dual3(&x, [&dirs[0], &dirs[1], &dirs[2]], &mut cache);
        let mut grads = MlpGrads::zeros_like(&mlp);
        let mut gin = vec![0.0; 3];
        let mut gd0 = vec![0.0; 3];
        let mut gd1 = vec![0.0; 3];
        let mut gd2 = vec![0.0; 3];
        mlp.backward_dual3(
            &mut cache,
            &gout,
            [&gdots[0], &gdots[1], &gdots[2]],
            &mut grads,
            &mut gin,
            [&mut gd0, &mut gd1, &mut gd2],
        );

        let h = 1e-4;
        for (l, r, c) in [(0usize, 2usize, 0usize), (0, 4, 2), (1, 0, 4)] {
            let idx = r * mlp.layers[l].in_dim + c;
            let orig = mlp.layers[l].w[idx];
            let hp = (orig as f64 + h) as f32;
            let hm = (orig as f64 - h) as f32;
            mlp.layers[l].w[idx] = hp;
            let fp = psi(&mlp);
            mlp.layers[l].w[idx] = hm;
            let fm = psi(&mlp);
            mlp.layers[l].w[idx] = orig;
            let fd = (fp - fm) / (hp as f64 - hm as f64);
            let an = grads.w[l][idx];
            assert!(
                (fd - an).abs() < 1e-3 * fd.abs().max(1e-2),
                "layer {l} w[{r},{c}]: fd {fd} vs analytic {an}"
            );
        }
    }
}
