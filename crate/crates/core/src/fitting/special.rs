use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Scaled complementary error function `erfcx(z) = exp(z²) erfc(z)`,
/// finite for every `z ≥ 0` and large negative arguments up to overflow of
/// `2 exp(z²)`.
pub fn erfcx(z: f64) -> f64 {
    if z < 0.0 {
        return 2.0 * (z * z).exp() - erfcx(-z);
    }
    if z < 10.0 {
        return (z * z).exp() * libm::erfc(z);
    }
    // Continued fraction, evaluated backwards:
    // erfcx(z) = 1/√π · 1/(z + ½/(z + 1/(z + (3/2)/(z + …))))
    let mut t = z;
    for k in (1..=60).rev() {
        t = z + 0.5 * k as f64 / t;
    }
    1.0 / (PI.sqrt() * t)
}

/// Unit-area exponentially modified Gaussian: a one-sided exponential of
/// decay time `tau` convolved with a normalized Gaussian of standard
/// deviation `sigma`, evaluated at `u = t − t0`.
///
/// Written with `erfcx` on the branch where the plain form would overflow,
/// so it stays finite for `sigma/tau` in the thousands.
pub fn emg_unit(u: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return if u > 0.0 {
            (-u / tau).exp() / tau
        } else if u == 0.0 {
            0.5 / tau
        } else {
            0.0
        };
    }
    let z = (sigma / tau - u / sigma) * FRAC_1_SQRT_2;
    if z >= 0.0 {
        0.5 / tau * (-0.5 * (u / sigma).powi(2)).exp() * erfcx(z)
    } else {
        0.5 / tau * (0.5 * (sigma / tau).powi(2) - u / tau).exp() * libm::erfc(z)
    }
}

/// `exp(−|t|/tau)` convolved with a normalized Gaussian of width `sigma`.
pub fn two_sided_exp_conv(t: f64, tau: f64, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return (-t.abs() / tau).exp();
    }
    tau * (emg_unit(t, tau, sigma) + emg_unit(-t, tau, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erfcx_known_values() {
        // Reference values from scipy.special.erfcx.
        let cases = [
            (0.0, 1.0),
            (0.5, 0.615_690_344_192_925_9),
            (1.0, 0.427_583_576_155_807),
            (5.0, 0.110_704_637_733_068_61),
            (10.0, 0.056_140_992_743_822_59),
            (100.0, 0.005_641_613_782_989_433),
        ];
        for (z, want) in cases {
            let got = erfcx(z);
            assert!(((got - want) / want).abs() < 1e-12, "erfcx({z}) = {got}, want {want}");
        }
    }

    #[test]
    fn erfcx_continuous_at_branch_switch() {
        let below = (10.0f64 - 1e-12).powi(2).exp() * libm::erfc(10.0 - 1e-12);
        assert!(((erfcx(10.0) - below) / below).abs() < 1e-11);
    }

    #[test]
    fn erfcx_negative_argument() {
        let z: f64 = -1.3;
        let direct = (z * z).exp() * libm::erfc(z);
        assert!(((erfcx(z) - direct) / direct).abs() < 1e-14);
    }

    #[test]
    fn emg_limits() {
        // Narrow IRF recovers the bare exponential away from t0.
        for u in [0.5, 1.0, 3.0] {
            let a = emg_unit(u, 1.12, 1e-6);
            let b = (-u / 1.12f64).exp() / 1.12;
            assert!(((a - b) / b).abs() < 1e-6);
        }
        assert_eq!(emg_unit(-1.0, 1.0, 0.0), 0.0);
    }

    #[test]
    fn emg_unit_area() {
        for (tau, sigma) in [(1.12f64, 0.234f64), (5.89, 0.234), (0.1, 1.0), (1.0, 0.0)] {
            let lo = if sigma == 0.0 { 1e-12 } else { -12.0 * sigma };
            let hi = 60.0 * tau + 12.0 * sigma;
            let n = 400_000;
            let h = (hi - lo) / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let c = if i == 0 || i == n { 0.5 } else { 1.0 };
                s += c * emg_unit(lo + i as f64 * h, tau, sigma);
            }
            assert!((s * h - 1.0).abs() < 1e-6, "tau={tau} sigma={sigma}: {}", s * h);
        }
    }

    #[test]
    fn emg_finite_for_wide_irf() {
        for ratio in [1.0, 10.0, 100.0, 1000.0] {
            let tau = 0.01;
            let sigma = ratio * tau;
            for u in [-5.0 * sigma, -sigma, 0.0, sigma, 5.0 * sigma, 50.0 * sigma] {
                let v = emg_unit(u, tau, sigma);
                assert!(v.is_finite() && v >= 0.0, "ratio={ratio} u={u}: {v}");
            }
        }
    }

    #[test]
    fn emg_for_large_ratio_approaches_gaussian() {
        // With sigma >> tau the EMG is the Gaussian shifted by tau.
        let tau = 1e-3;
        let sigma = 1.0;
        for u in [-2.0, 0.0, 1.5] {
            let v = emg_unit(u, tau, sigma);
            let g = (-(u - tau) * (u - tau) / 2.0).exp() / (2.0 * PI).sqrt();
            assert!((v - g).abs() < 1e-5, "{u}: {v} vs {g}");
        }
    }

    #[test]
    fn two_sided_kernel() {
        assert_eq!(two_sided_exp_conv(0.7, 2.0, 0.0), (-0.35f64).exp());
        // Convolution with a narrow Gaussian barely changes the cusp-free tails.
        let a = two_sided_exp_conv(5.0, 2.74, 1e-4);
        assert!((a - (-5.0 / 2.74f64).exp()).abs() < 1e-8);
        // Symmetric
        assert!((two_sided_exp_conv(1.3, 2.74, 0.3) - two_sided_exp_conv(-1.3, 2.74, 0.3)).abs() < 1e-15);
        // Smoothing lifts the minimum of 1 - K at zero.
        assert!(two_sided_exp_conv(0.0, 2.74, 0.3) < 1.0);
    }
}
