//! SDF-to-opacity conversion.
//!
//! The S-density phi_s(sigma) = s e^{-s sigma} / (1 + e^{-s sigma})^2 is the
//! derivative of the logistic Phi_s(sigma) = sigmoid(s sigma). Per-segment
//! opacity is the clamped ratio alpha = max(0, 1 - Phi(next)/Phi(curr)),
//! evaluated in log space so large |s sigma| neither overflows nor loses the
//! ratio.

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(sigmoid(x)), stable for any x.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Bell-shaped density of a signed distance; even in sigma, peak s/4 at 0.
pub fn s_density(sigma: f64, s: f64) -> f64 {
    debug_assert!(s > 0.0);
    // Computed from -|x| so both tails underflow identically.
    let x = -(s * sigma).abs();
    let sig = sigmoid(x);
    s * sig * (1.0 - sig)
}

/// Per-segment opacity from the SDF at the segment start and end. Both
/// values must come from the same voxel (intervals are boundary-clamped
/// upstream).
pub fn alpha(sigma_curr: f64, sigma_next: f64, s: f64) -> f64 {
    debug_assert!(s > 0.0);
    let delta = log_sigmoid(s * sigma_next) - log_sigmoid(s * sigma_curr);
    (-delta.exp_m1()).max(0.0)
}

/// Alpha plus its partial derivatives (d/d sigma_curr, d/d sigma_next,
/// d/d s). Clamped segments return zero derivatives.
pub fn alpha_with_grads(sigma_curr: f64, sigma_next: f64, s: f64) -> (f64, f64, f64, f64) {
    let delta = log_sigmoid(s * sigma_next) - log_sigmoid(s * sigma_curr);
    let a = -delta.exp_m1();
    if a <= 0.0 {
        return (0.0, 0.0, 0.0, 0.0);
    }
    // d alpha / d delta = -e^delta; d logsig(x)/dx = sigmoid(-x).
    let e = delta.exp();
    let sc = sigmoid(-s * sigma_curr);
    let sn = sigmoid(-s * sigma_next);
    let d_curr = e * s * sc;
    let d_next = -e * s * sn;
    let d_s = -e * (sigma_next * sn - sigma_curr * sc);
    (a, d_curr, d_next, d_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s_density_values() {
        // phi_1(0) = 1/4.
        assert!((s_density(0.0, 1.0) - 0.25).abs() < 1e-15);
        // phi_2(1) = 2 e^-2 / (1 + e^-2)^2.
        let expect = 2.0 * (-2.0f64).exp() / (1.0 + (-2.0f64).exp()).powi(2);
        assert!((s_density(1.0, 2.0) - expect).abs() < 1e-12);
        assert!((expect - 0.20998).abs() < 1e-5);
        // Even function, including extreme arguments.
        for &(sig, s) in &[(0.3, 1.0), (2.0, 7.0), (40.0, 3.0), (500.0, 10.0)] {
            assert_eq!(s_density(sig, s), s_density(-sig, s));
        }
    }

    #[test]
    fn alpha_values_and_clamping() {
        // Equal endpoints: zero opacity.
        assert_eq!(alpha(0.4, 0.4, 3.0), 0.0);
        // Entering the surface at s = 1.
        let a = alpha(1.0, -1.0, 1.0);
        let expect = (0.731058578 - 0.268941421) / 0.731058578;
        assert!((a - expect).abs() < 1e-8, "{a}");
        // Exiting the surface: clamped to zero.
        assert_eq!(alpha(-1.0, 1.0, 1.0), 0.0);
        // Always within [0, 1], even at extreme sharpness.
        for &(c, n, s) in &[(5.0, -5.0, 1000.0), (0.01, -0.01, 1e4), (3.0, 2.9, 800.0)] {
            let a = alpha(c, n, s);
            assert!((0.0..=1.0).contains(&a), "alpha {a}");
        }
    }

    #[test]
    fn alpha_grads_match_finite_differences() {
        let cases = [
            (0.8, -0.3, 2.0),
            (0.05, 0.01, 30.0),
            (-0.2, -0.6, 5.0),
            (1.5, 1.2, 0.7),
        ];
        let h = 1e-6;
        for &(c, n, s) in &cases {
            let (_, dc, dn, ds) = alpha_with_grads(c, n, s);
            let fd_c = (alpha(c + h, n, s) - alpha(c - h, n, s)) / (2.0 * h);
            let fd_n = (alpha(c, n + h, s) - alpha(c, n - h, s)) / (2.0 * h);
            let fd_s = (alpha(c, n, s + h) - alpha(c, n, s - h)) / (2.0 * h);
            assert!((fd_c - dc).abs() < 1e-6, "dc {fd_c} vs {dc}");
            assert!((fd_n - dn).abs() < 1e-6, "dn {fd_n} vs {dn}");
            assert!((fd_s - ds).abs() < 1e-6, "ds {fd_s} vs {ds}");
        }
    }
}
