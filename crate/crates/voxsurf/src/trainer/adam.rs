//! Adam with f32 moment storage and f64 math, plus lazy per-vertex updates
//! for the embedding arena.

#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// One Adam step over the whole tensor. `t` is the 1-based step count
    /// used for bias correction.
    pub fn step(&mut self, params: &mut [f32], grads: &[f64], t: u64, p: &AdamParams, lr_mult: f64) {
        debug_assert_eq!(params.len(), grads.len());
        let c1 = 1.0 - p.beta1.powi(t as i32);
        let c2 = 1.0 - p.beta2.powi(t as i32);
        let lr = p.lr * lr_mult;
        for i in 0..params.len() {
            let g = grads[i];
            let m = p.beta1 * self.m[i] as f64 + (1.0 - p.beta1) * g;
            let v = p.beta2 * self.v[i] as f64 + (1.0 - p.beta2) * g * g;
            self.m[i] = m as f32;
            self.v[i] = v as f32;
            let update = lr * (m / c1) / ((v / c2).sqrt() + p.eps);
            params[i] = (params[i] as f64 - update) as f32;
        }
    }

    /// Lazy variant: only blocks of `block` consecutive parameters that have
    /// a nonzero gradient are touched (untouched moments do not decay).
    /// Bias correction uses the global step count.
    pub fn step_sparse(
        &mut self,
        params: &mut [f32],
        grads: &[f64],
        block: usize,
        t: u64,
        p: &AdamParams,
    ) {
        debug_assert_eq!(params.len(), grads.len());
        let c1 = 1.0 - p.beta1.powi(t as i32);
        let c2 = 1.0 - p.beta2.powi(t as i32);
        for start in (0..params.len()).step_by(block) {
            let end = (start + block).min(params.len());
            if grads[start..end].iter().all(|&g| g == 0.0) {
                continue;
            }
            for i in start..end {
                let g = grads[i];
                let m = p.beta1 * self.m[i] as f64 + (1.0 - p.beta1) * g;
                let v = p.beta2 * self.v[i] as f64 + (1.0 - p.beta2) * g * g;
                self.m[i] = m as f32;
                self.v[i] = v as f32;
                let update = p.lr * (m / c1) / ((v / c2).sqrt() + p.eps);
                params[i] = (params[i] as f64 - update) as f32;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_with_zero_moments_is_identity() {
        let mut m = Moments::zeros(4);
        let mut params = [0.5f32, -0.25, 0.0, 1.0];
        let orig = params;
        m.step(&mut params, &[0.0; 4], 1, &AdamParams::default(), 1.0);
        assert_eq!(params, orig);
    }

    #[test]
    fn step_moves_against_gradient_at_lr_scale() {
        let mut m = Moments::zeros(1);
        let mut params = [0.0f32];
        m.step(&mut params, &[2.0], 1, &AdamParams::default(), 1.0);
        // Bias-corrected first step magnitude is ~lr regardless of gradient scale.
        assert!((params[0] as f64 + 1e-3).abs() < 1e-5, "{}", params[0]);
    }

    #[test]
    fn sparse_step_skips_untouched_blocks() {
        let mut m = Moments::zeros(8);
        let mut params = [1.0f32; 8];
        let mut grads = [0.0f64; 8];
        grads[5] = 1.0;
        m.step_sparse(&mut params, &grads, 4, 1, &AdamParams::default());
        assert_eq!(&params[0..4], &[1.0; 4]);
        // The touched block moved (all 4 entries share the block but only
        // index 5 had gradient; others keep zero moments and zero update).
        assert_ne!(params[5], 1.0);
        assert_eq!(params[4], 1.0);
    }
}
