//! Inverse-CDF stratified point sampling along voxel hit lists.
//!
//! The per-ray distribution is piecewise constant: each hit interval gets
//! probability mass proportional to its in-voxel length (times a boost for
//! flagged voxels). CDF space is cut into equal strata, one sample each:
//! the sample position is a jittered draw inside the stratum and the sample
//! interval [t_l, t_r] is the stratum pre-image. Clamping then intersects
//! intervals with their voxel hit and recenters each sample, so alpha pairs
//! never straddle a voxel boundary.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::voxgrid::VoxelHit;

/// One point sample on a ray. `hit` indexes the hit list the sample was
/// drawn from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub t_l: f64,
    pub t_r: f64,
    pub hit: u32,
}

/// Which crossings flag important voxels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossingMode {
    /// Every positive-to-negative crossing.
    Full,
    /// Only the first crossing along the ray.
    First,
}

/// Ray sampling strategy of the current training phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Uniform,
    SurfaceFull,
    SurfaceFirst,
}

struct SpanCdf {
    /// Cumulative unnormalized mass up to the start of each span, plus the
    /// total as the last entry.
    cum: Vec<f64>,
    total: f64,
}

impl SpanCdf {
    fn new(hits: &[VoxelHit], weight_of: impl Fn(usize) -> f64) -> Self {
        let mut cum = Vec::with_capacity(hits.len() + 1);
        let mut acc = 0.0;
        for (i, h) in hits.iter().enumerate() {
            cum.push(acc);
            acc += h.span() * weight_of(i);
        }
        cum.push(acc);
        SpanCdf { cum, total: acc }
    }

    /// Maps u in [0, 1] to (t, span index).
    fn inverse(&self, hits: &[VoxelHit], u: f64) -> (f64, u32) {
        let target = u * self.total;
        // First span whose cumulative end exceeds the target.
        let mut idx = self.cum[1..].partition_point(|&c| c <= target);
        if idx >= hits.len() {
            idx = hits.len() - 1;
        }
        let w = self.cum[idx + 1] - self.cum[idx];
        let frac = if w > 0.0 {
            ((target - self.cum[idx]) / w).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let h = &hits[idx];
        (h.t_enter + frac * h.span(), idx as u32)
    }
}

fn stratified_samples(hits: &[VoxelHit], cdf: &SpanCdf, n: usize, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let inv_n = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut lo = cdf.inverse(hits, 0.0).0;
    for i in 0..n {
        let jitter: f64 = rng.gen();
        let (t, hit) = cdf.inverse(hits, (i as f64 + jitter) * inv_n);
        let hi = cdf.inverse(hits, (i as f64 + 1.0) * inv_n).0;
        out.push(Sample {
            t,
            t_l: lo,
            t_r: hi,
            hit,
        });
        lo = hi;
    }
    out
}

/// Stratified inverse-CDF sampling with per-voxel probability proportional
/// to in-voxel length. `n_override` replaces the step-size-derived count
/// N_p = ceil(total span / step_size).
pub fn uniform_voxel_sampling(
    hits: &[VoxelHit],
    step_size: f64,
    n_override: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Vec<Sample> {
    debug_assert!(!hits.is_empty());
    let cdf = SpanCdf::new(hits, |_| 1.0);
    let n = n_override.unwrap_or_else(|| (cdf.total / step_size).ceil().max(1.0) as usize);
    stratified_samples(hits, &cdf, n, rng)
}

/// Flags hits containing either endpoint of a positive-to-negative SDF
/// crossing. `sigmas` are the per-sample SDF values in `t` order. Returns
/// one flag per hit.
pub fn mark_important_voxels(
    samples: &[Sample],
    sigmas: &[f64],
    mode: CrossingMode,
    n_hits: usize,
) -> Vec<bool> {
    debug_assert_eq!(samples.len(), sigmas.len());
    let mut flags = vec![false; n_hits];
    for i in 0..samples.len().saturating_sub(1) {
        if sigmas[i] > 0.0 && sigmas[i + 1] <= 0.0 {
            flags[samples[i].hit as usize] = true;
            flags[samples[i + 1].hit as usize] = true;
            if mode == CrossingMode::First {
                break;
            }
        }
    }
    flags
}

/// Redraws the ray's samples with flagged voxels upweighted by `boost`
/// (same sample count; probabilities renormalized along the ray). With no
/// flags set (or boost 1) the distribution equals the uniform one.
pub fn surface_aware_resample(
    hits: &[VoxelHit],
    flags: &[bool],
    boost: f64,
    n_p: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Sample> {
    debug_assert!(boost >= 1.0);
    debug_assert_eq!(flags.len(), hits.len());
    let cdf = SpanCdf::new(hits, |i| if flags[i] { boost } else { 1.0 });
    stratified_samples(hits, &cdf, n_p, rng)
}

/// Cuts every sample interval to its voxel hit, recenters the sample at the
/// clamped interval midpoint, and drops empty results.
pub fn clamp_intervals(samples: &[Sample], hits: &[VoxelHit]) -> Vec<Sample> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let h = &hits[s.hit as usize];
        let t_l = s.t_l.max(h.t_enter);
        let t_r = s.t_r.min(h.t_exit);
        if t_r <= t_l {
            continue;
        }
        out.push(Sample {
            t: 0.5 * (t_l + t_r),
            t_l,
            t_r,
            hit: s.hit,
        });
    }
    out
}

/// Full per-ray pipeline: uniform sampling, optional surface-aware
/// reweighting driven by `sigma_at`, then boundary clamping. The two RNGs
/// keep the uniform pass and the resampling pass on independent streams so
/// phase switches do not shift unrelated draws.
pub fn sample_ray(
    hits: &[VoxelHit],
    step_size: f64,
    n_override: Option<usize>,
    mode: SamplingMode,
    boost: f64,
    mut sigma_at: impl FnMut(&Sample) -> f64,
    rng_uniform: &mut ChaCha8Rng,
    rng_resample: &mut ChaCha8Rng,
) -> Vec<Sample> {
    if hits.is_empty() {
        return Vec::new();
    }
    let presamples = uniform_voxel_sampling(hits, step_size, n_override, rng_uniform);
    let samples = match mode {
        SamplingMode::Uniform => presamples,
        SamplingMode::SurfaceFull | SamplingMode::SurfaceFirst => {
            let sigmas: Vec<f64> = presamples.iter().map(&mut sigma_at).collect();
            let cmode = if mode == SamplingMode::SurfaceFull {
                CrossingMode::Full
            } else {
                CrossingMode::First
            };
            let flags = mark_important_voxels(&presamples, &sigmas, cmode, hits.len());
            if flags.iter().any(|&f| f) {
                surface_aware_resample(hits, &flags, boost, presamples.len(), rng_resample)
            } else {
                presamples
            }
        }
    };
    clamp_intervals(&samples, hits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};

    fn hit(voxel_i: i32, t_enter: f64, t_exit: f64) -> VoxelHit {
        VoxelHit {
            voxel: crate::voxgrid::Ijk::new(voxel_i, 0, 0),
            t_enter,
            t_exit,
        }
    }

    #[test]
    fn single_voxel_count_and_containment() {
        let hits = [hit(0, 1.0, 1.9)];
        let mut rng = rng::stream(1, Domain::RaySampling, 0);
        let s = uniform_voxel_sampling(&hits, 0.03, None, &mut rng);
        assert_eq!(s.len(), 30);
        for x in &s {
            assert!(x.t >= 1.0 && x.t <= 1.9);
            assert_eq!(x.hit, 0);
        }
        // Strictly increasing positions.
        for w in s.windows(2) {
            assert!(w[0].t < w[1].t);
        }
    }

    #[test]
    fn two_voxel_selection_probabilities() {
        // Lengths 2 and 1: expect 2/3 and 1/3 of samples.
        let hits = [hit(0, 0.0, 2.0), hit(1, 2.5, 3.5)];
        let mut counts = [0usize; 2];
        let n_total = 10_000 * 3;
        for r in 0..10_000u64 {
            let mut rng = rng::stream(2, Domain::RaySampling, r);
            for s in uniform_voxel_sampling(&hits, 1.0, Some(3), &mut rng) {
                counts[s.hit as usize] += 1;
            }
        }
        let expect = [n_total as f64 * 2.0 / 3.0, n_total as f64 / 3.0];
        for i in 0..2 {
            // 3 sigma binomial bound.
            let sd = (expect[i] * (1.0 - expect[i] / n_total as f64)).sqrt();
            assert!(
                (counts[i] as f64 - expect[i]).abs() < 3.0 * sd.max(1.0),
                "voxel {i}: {} vs {}",
                counts[i],
                expect[i]
            );
        }
    }

    #[test]
    fn mark_flags_basic_cases() {
        let samples: Vec<Sample> = [(0u32, 0.1), (0, 0.2), (1, 0.3), (1, 0.4)]
            .iter()
            .map(|&(h, t)| Sample { t, t_l: t, t_r: t, hit: h })
            .collect();
        // (+, +, -, -) in voxels (A, A, B, B) -> {A, B}, both modes.
        let f = mark_important_voxels(&samples, &[1.0, 0.5, -0.5, -1.0], CrossingMode::Full, 2);
        assert_eq!(f, vec![true, true]);
        let f = mark_important_voxels(&samples, &[1.0, 0.5, -0.5, -1.0], CrossingMode::First, 2);
        assert_eq!(f, vec![true, true]);
        // All positive: nothing.
        let f = mark_important_voxels(&samples, &[1.0, 0.5, 0.5, 1.0], CrossingMode::Full, 2);
        assert_eq!(f, vec![false, false]);
        // (+, -, +, -) across voxels (A, B, C, D).
        let samples: Vec<Sample> = (0..4)
            .map(|i| Sample { t: i as f64, t_l: 0.0, t_r: 0.0, hit: i as u32 })
            .collect();
        let f = mark_important_voxels(&samples, &[1.0, -1.0, 1.0, -1.0], CrossingMode::Full, 4);
        assert_eq!(f, vec![true, true, true, true]);
        let f = mark_important_voxels(&samples, &[1.0, -1.0, 1.0, -1.0], CrossingMode::First, 4);
        assert_eq!(f, vec![true, true, false, false]);
    }

    #[test]
    fn resample_boost_probabilities_and_count() {
        // Two equal-length voxels, first flagged, boost 4 -> (0.8, 0.2).
        let hits = [hit(0, 0.0, 1.0), hit(1, 1.0, 2.0)];
        let flags = [true, false];
        let mut counts = [0usize; 2];
        let n_per = 5;
        for r in 0..20_000u64 {
            let mut rng = rng::stream(3, Domain::Resampling, r);
            let s = surface_aware_resample(&hits, &flags, 4.0, n_per, &mut rng);
            assert_eq!(s.len(), n_per, "sample count must be preserved");
            for x in &s {
                counts[x.hit as usize] += 1;
            }
        }
        let total = (20_000 * n_per) as f64;
        assert!((counts[0] as f64 / total - 0.8).abs() < 0.01);
        assert!((counts[1] as f64 / total - 0.2).abs() < 0.01);
    }

    #[test]
    fn resample_without_flags_equals_uniform() {
        let hits = [hit(0, 0.0, 1.0), hit(1, 1.5, 2.25), hit(2, 3.0, 3.5)];
        let mut r1 = rng::stream(4, Domain::RaySampling, 9);
        let mut r2 = rng::stream(4, Domain::RaySampling, 9);
        let a = uniform_voxel_sampling(&hits, 0.1, Some(12), &mut r1);
        let b = surface_aware_resample(&hits, &[false; 3], 8.0, 12, &mut r2);
        assert_eq!(a, b);
        // Boost 1 with flags set is also identical.
        let mut r3 = rng::stream(4, Domain::RaySampling, 9);
        let c = surface_aware_resample(&hits, &[true, false, true], 1.0, 12, &mut r3);
        assert_eq!(a, c);
    }

    #[test]
    fn clamp_cuts_straddling_intervals() {
        let hits = [hit(0, 0.0, 1.0), hit(1, 1.0, 2.0)];
        // Interval fully inside: unchanged.
        let inside = Sample { t: 0.45, t_l: 0.4, t_r: 0.5, hit: 0 };
        let out = clamp_intervals(&[inside], &hits);
        assert_eq!(out[0].t_l, 0.4);
        assert_eq!(out[0].t_r, 0.5);
        assert!((out[0].t - 0.45).abs() < 1e-15);
        // Straddling the exit: clamped, midpoint recomputed.
        let straddle = Sample { t: 0.95, t_l: 0.9, t_r: 1.1, hit: 0 };
        let out = clamp_intervals(&[straddle], &hits);
        assert_eq!(out[0].t_r, 1.0);
        assert!((out[0].t - 0.95).abs() < 1e-15);
        // Post-clamp, every interval sits inside its hit.
        let mut rng = rng::stream(5, Domain::RaySampling, 0);
        let s = uniform_voxel_sampling(&hits, 0.21, None, &mut rng);
        for x in clamp_intervals(&s, &hits) {
            let h = &hits[x.hit as usize];
            assert!(x.t_l >= h.t_enter - 1e-12 && x.t_r <= h.t_exit + 1e-12);
            assert!((x.t - 0.5 * (x.t_l + x.t_r)).abs() < 1e-12);
        }
    }

    #[test]
    fn gap_between_voxels_is_never_sampled() {
        let hits = [hit(0, 0.0, 0.5), hit(1, 4.0, 4.5)];
        let mut rng = rng::stream(6, Domain::RaySampling, 0);
        let s = uniform_voxel_sampling(&hits, 0.01, None, &mut rng);
        for x in clamp_intervals(&s, &hits) {
            assert!(x.t <= 0.5 || x.t >= 4.0, "sample in gap at {}", x.t);
        }
    }
}
