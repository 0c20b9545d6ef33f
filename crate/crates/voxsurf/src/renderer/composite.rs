//! Front-to-back alpha compositing.

use nalgebra::Vector3;

/// Per-ray compositing result. `sample_weights[i] = T_i * alpha_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: Vector3<f64>,
    pub depth: f64,
    pub weight_sum: f64,
    pub sample_weights: Vec<f64>,
}

impl RenderOutput {
    pub fn background(bg: Vector3<f64>) -> Self {
        RenderOutput {
            color: bg,
            depth: 0.0,
            weight_sum: 0.0,
            sample_weights: Vec::new(),
        }
    }
}

/// Composites samples sorted ascending in t. The background color fills the
/// residual transmittance: color = sum_i T_i alpha_i c_i + (1 - W) bg.
pub fn composite(samples: &[(f64, f64, Vector3<f64>)], bg: Vector3<f64>) -> RenderOutput {
    debug_assert!(samples.windows(2).all(|w| w[0].0 <= w[1].0), "samples must ascend in t");
    let mut transmittance = 1.0;
    let mut color = Vector3::zeros();
    let mut depth = 0.0;
    let mut weight_sum = 0.0;
    let mut sample_weights = Vec::with_capacity(samples.len());
    for &(t, alpha, c) in samples {
        let w = transmittance * alpha;
        color += w * c;
        depth += w * t;
        weight_sum += w;
        sample_weights.push(w);
        transmittance *= 1.0 - alpha;
    }
    color += transmittance * bg;
    RenderOutput {
        color,
        depth,
        weight_sum,
        sample_weights,
    }
}

/// Reverse pass of [`composite`] with respect to the alphas and colors,
/// given d(loss)/d(output color). Uses the suffix recursion
/// C_k = alpha_k c_k + (1 - alpha_k) C_{k+1} with C_{N+1} = bg, whose alpha
/// derivative is T_k (c_k - C_{k+1}); no divisions, stable at alpha -> 1.
pub fn composite_backward(
    samples: &[(f64, f64, Vector3<f64>)],
    bg: Vector3<f64>,
    g_color: Vector3<f64>,
) -> (Vec<f64>, Vec<Vector3<f64>>) {
    let n = samples.len();
    let mut suffix = vec![bg; n + 1];
    for k in (0..n).rev() {
        let (_, a, c) = samples[k];
        suffix[k] = a * c + (1.0 - a) * suffix[k + 1];
    }
    let mut g_alpha = vec![0.0; n];
    let mut g_c = vec![Vector3::zeros(); n];
    let mut transmittance = 1.0;
    for k in 0..n {
        let (_, a, c) = samples[k];
        g_alpha[k] = g_color.dot(&(transmittance * (c - suffix[k + 1])));
        g_c[k] = g_color * (transmittance * a);
        transmittance *= 1.0 - a;
    }
    (g_alpha, g_c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;

    #[test]
    fn two_sample_arithmetic() {
        let red = Vector3::new(1.0, 0.0, 0.0);
        let blue = Vector3::new(0.0, 0.0, 1.0);
        let out = composite(&[(1.0, 0.5, red), (2.0, 0.5, blue)], Vector3::zeros());
        assert_eq!(out.sample_weights, vec![0.5, 0.25]);
        assert!((out.color - (0.5 * red + 0.25 * blue)).norm() < 1e-15);
        assert!((out.weight_sum - 0.75).abs() < 1e-15);
        assert!((out.depth - (0.5 * 1.0 + 0.25 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn all_zero_alpha_is_background() {
        let c = Vector3::new(0.2, 0.3, 0.4);
        let out = composite(&[(1.0, 0.0, c), (2.0, 0.0, c)], Vector3::zeros());
        assert_eq!(out.color, Vector3::zeros());
        assert_eq!(out.weight_sum, 0.0);
    }

    #[test]
    fn opaque_sample_blocks_the_rest() {
        let a = Vector3::new(0.9, 0.1, 0.2);
        let b = Vector3::new(0.0, 1.0, 0.0);
        let out = composite(&[(1.0, 1.0, a), (2.0, 0.7, b)], Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(out.sample_weights[1], 0.0);
        assert!((out.color - a).norm() < 1e-15);
        assert!((out.weight_sum - 1.0).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rng::stream(8, Domain::PointSampling, 0);
        let bg = Vector3::new(0.1, 0.05, 0.2);
        let g_color = Vector3::new(0.7, -0.4, 1.2);
        let n = 6;
        let mut samples: Vec<(f64, f64, Vector3<f64>)> = (0..n)
            .map(|i| {
                (
                    i as f64,
                    rng.gen_range(0.0..1.0),
                    Vector3::new(rng.gen(), rng.gen(), rng.gen()),
                )
            })
            .collect();
        let (ga, gc) = composite_backward(&samples, bg, g_color);
        let loss = |s: &[(f64, f64, Vector3<f64>)]| composite(s, bg).color.dot(&g_color);
        let h = 1e-7;
        for k in 0..n {
            let orig = samples[k].1;
            samples[k].1 = orig + h;
            let fp = loss(&samples);
            samples[k].1 = orig - h;
            let fm = loss(&samples);
            samples[k].1 = orig;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - ga[k]).abs() < 1e-6, "alpha {k}: {fd} vs {}", ga[k]);
            for ch in 0..3 {
                let orig = samples[k].2[ch];
                samples[k].2[ch] = orig + h;
                let fp = loss(&samples);
                samples[k].2[ch] = orig - h;
                let fm = loss(&samples);
                samples[k].2[ch] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - gc[k][ch]).abs() < 1e-6);
            }
        }
    }
}
