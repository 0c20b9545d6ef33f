//! Geometry and image metrics: chamfer distance, F-score, PSNR.

use nalgebra::{Point3, Vector3};

/// Median-split k-d tree over 3D points; nearest-neighbor queries back the
/// metrics so their brute-force oracles stay an independent route.
pub struct KdTree {
    points: Vec<Point3<f64>>,
    nodes: Vec<KdNode>,
}

struct KdNode {
    point: u32,
    axis: u8,
    left: i32,
    right: i32,
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> KdTree {
        assert!(!points.is_empty());
        let mut tree = KdTree {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
        };
        let mut idx: Vec<u32> = (0..points.len() as u32).collect();
        tree.build_node(&mut idx, 0);
        tree
    }

    fn build_node(&mut self, idx: &mut [u32], depth: usize) -> i32 {
        if idx.is_empty() {
            return -1;
        }
        let axis = depth % 3;
        idx.sort_by(|&a, &b| {
            self.points[a as usize][axis].total_cmp(&self.points[b as usize][axis])
        });
        let mid = idx.len() / 2;
        let node_idx = self.nodes.len() as i32;
        self.nodes.push(KdNode {
            point: idx[mid],
            axis: axis as u8,
            left: -1,
            right: -1,
        });
        let (lo, rest) = idx.split_at_mut(mid);
        let (_, hi) = rest.split_at_mut(1);
        let left = self.build_node(lo, depth + 1);
        let right = self.build_node(hi, depth + 1);
        self.nodes[node_idx as usize].left = left;
        self.nodes[node_idx as usize].right = right;
        node_idx
    }

    /// Distance to the nearest stored point.
    pub fn nearest_dist(&self, q: &Point3<f64>) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        best.sqrt()
    }

    fn search(&self, node: i32, q: &Point3<f64>, best_sq: &mut f64) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.point as usize];
        let d = (q - p).norm_squared();
        if d < *best_sq {
            *best_sq = d;
        }
        let delta = q[n.axis as usize] - p[n.axis as usize];
        let (near, far) = if delta < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.search(near, q, best_sq);
        if delta * delta < *best_sq {
            self.search(far, q, best_sq);
        }
    }
}

/// Symmetric un-squared chamfer distance: the mean of the two directed
/// mean-nearest-neighbor distances.
pub fn chamfer(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let d_ab: f64 = a.iter().map(|p| tb.nearest_dist(p)).sum::<f64>() / a.len() as f64;
    let d_ba: f64 = b.iter().map(|p| ta.nearest_dist(p)).sum::<f64>() / b.len() as f64;
    0.5 * (d_ab + d_ba)
}

/// Squared-distance variant (some benchmarks report it).
pub fn chamfer_squared(a: &[Point3<f64>], b: &[Point3<f64>]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty());
    let ta = KdTree::build(a);
    let tb = KdTree::build(b);
    let d_ab: f64 = a.iter().map(|p| tb.nearest_dist(p).powi(2)).sum::<f64>() / a.len() as f64;
    let d_ba: f64 = b.iter().map(|p| ta.nearest_dist(p).powi(2)).sum::<f64>() / b.len() as f64;
    0.5 * (d_ab + d_ba)
}

/// Harmonic mean of precision (points within `threshold` of the reference)
/// and recall (the converse).
pub fn f_score(points: &[Point3<f64>], gt: &[Point3<f64>], threshold: f64) -> f64 {
    assert!(!points.is_empty() && !gt.is_empty());
    let tp = KdTree::build(points);
    let tg = KdTree::build(gt);
    let precision = points.iter().filter(|p| tg.nearest_dist(p) < threshold).count() as f64
        / points.len() as f64;
    let recall =
        gt.iter().filter(|p| tp.nearest_dist(p) < threshold).count() as f64 / gt.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// PSNR in decibels over all channels; values in [0, 1]. Identical inputs
/// return +infinity.
pub fn psnr(image: &[Vector3<f64>], gt: &[Vector3<f64>]) -> f64 {
    assert_eq!(image.len(), gt.len(), "image shape mismatch");
    assert!(!image.is_empty());
    let mut sum = 0.0;
    for (a, b) in image.iter().zip(gt) {
        let d = a - b;
        sum += d.x * d.x + d.y * d.y + d.z * d.z;
    }
    let mse = sum / (3 * image.len()) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{self, Domain};
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<Point3<f64>> {
        let mut rng = rng::stream(seed, Domain::PointSampling, 100);
        (0..n)
            .map(|_| Point3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn chamfer_identity_and_symmetry() {
        let a = random_points(100, 1);
        assert_eq!(chamfer(&a, &a), 0.0);
        let b = random_points(80, 2);
        assert!((chamfer(&a, &b) - chamfer(&b, &a)).abs() < 1e-12);
    }

    #[test]
    fn chamfer_matches_brute_force() {
        let a = random_points(100, 3);
        let b = random_points(120, 4);
        let brute = |x: &[Point3<f64>], y: &[Point3<f64>]| -> f64 {
            let d_xy: f64 = x
                .iter()
                .map(|p| y.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / x.len() as f64;
            let d_yx: f64 = y
                .iter()
                .map(|q| x.iter().map(|p| (p - q).norm()).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / y.len() as f64;
            0.5 * (d_xy + d_yx)
        };
        assert!((chamfer(&a, &b) - brute(&a, &b)).abs() < 1e-9);
    }

    #[test]
    fn f_score_cases() {
        let a = random_points(60, 5);
        assert_eq!(f_score(&a, &a, 0.05), 1.0);
        let far: Vec<Point3<f64>> = a.iter().map(|p| p + Vector3::new(100.0, 0.0, 0.0)).collect();
        assert_eq!(f_score(&a, &far, 0.05), 0.0);
        // Constructed half overlap: brute-force comparison.
        let b: Vec<Point3<f64>> = a
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i % 2 == 0 {
                    *p
                } else {
                    p + Vector3::new(10.0, 0.0, 0.0)
                }
            })
            .collect();
        let brute = {
            let thr = 0.05;
            let prec = b
                .iter()
                .filter(|p| a.iter().any(|q| (*p - q).norm() < thr))
                .count() as f64
                / b.len() as f64;
            let rec = a
                .iter()
                .filter(|p| b.iter().any(|q| (*p - q).norm() < thr))
                .count() as f64
                / a.len() as f64;
            2.0 * prec * rec / (prec + rec)
        };
        assert!((f_score(&b, &a, 0.05) - brute).abs() < 1e-9);
    }

    #[test]
    fn f_score_monotone_in_threshold() {
        let a = random_points(80, 6);
        let b = random_points(80, 7);
        let mut prev = 0.0;
        for thr in [0.01, 0.05, 0.1, 0.3, 0.8, 2.0] {
            let f = f_score(&a, &b, thr);
            assert!(f >= prev - 1e-12, "f-score decreased at {thr}");
            prev = f;
        }
    }

    #[test]
    fn psnr_cases() {
        let a = vec![Vector3::new(0.5, 0.5, 0.5); 64];
        assert_eq!(psnr(&a, &a), f64::INFINITY);
        // Uniform squared error 0.01 -> 20 dB.
        let b: Vec<Vector3<f64>> = a.iter().map(|v| v + Vector3::repeat(0.1)).collect();
        assert!((psnr(&b, &a) - 20.0).abs() < 1e-9);
        // Random pair matches a reference accumulation loop.
        let mut rng = rng::stream(8, Domain::PointSampling, 101);
        let x: Vec<Vector3<f64>> = (0..50).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let y: Vec<Vector3<f64>> = (0..50).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        let mut acc = 0.0;
        let mut n = 0;
        for (p, q) in x.iter().zip(&y) {
            for c in 0..3 {
                acc += (p[c] - q[c]).powi(2);
                n += 1;
            }
        }
        let reference = 10.0 * (n as f64 / acc).log10();
        assert!((psnr(&x, &y) - reference).abs() < 1e-9);
    }
}
