//! Gauss-Legendre rules and the truncated-Lorentzian average used for
//! spectral-diffusion sampling.

use std::f64::consts::PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        // Tricomi initial guess for the i-th largest root.
        let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (pn, pn1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * pn - pn1) / (x * x - 1.0);
    (pn, d)
}

/// Samples `(offset, weight)` of a Lorentzian of FWHM `fwhm` truncated at
/// `±truncation × fwhm` and renormalized to unit mass.
///
/// The rule is Gauss-Legendre in the angle `θ` with `offset = (fwhm/2)·tan θ`,
/// under which the Lorentzian density is uniform; the integrand only sees
/// the smooth part of the average. A zero width collapses to a single node
/// at the origin.
pub fn truncated_lorentzian(fwhm: f64, truncation: f64, n: usize) -> Vec<(f64, f64)> {
    if fwhm <= 0.0 {
        return vec![(0.0, 1.0)];
    }
    let hw = 0.5 * fwhm;
    let theta_max = (truncation * fwhm / hw).atan();
    let (t, w) = gauss_legendre(n);
    let total: f64 = w.iter().sum();
    t.iter()
        .zip(&w)
        .map(|(&ti, &wi)| (hw * (ti * theta_max).tan(), wi / total))
        .collect()
}
