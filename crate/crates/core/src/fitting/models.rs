//! Measurement lineshapes and their parameter layouts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::special::{emg_unit, two_sided_exp_conv};
use crate::{Error, Result};

/// The four spectroscopy models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ModelKind {
    /// Cavity resonance: η-weighted mix of a Fano profile and a Lorentzian.
    FanoLorentz,
    /// Sum of `peaks` Lorentzians on a common baseline.
    LorentzianMulti { peaks: usize },
    /// Exponential decay convolved with a Gaussian instrument response.
    LifetimeEmg,
    /// Antibunching dip, optionally smeared by Gaussian detector jitter.
    G2Dip,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::FanoLorentz => "fano_lorentz",
            ModelKind::LorentzianMulti { .. } => "lorentzian_multi",
            ModelKind::LifetimeEmg => "lifetime_emg",
            ModelKind::G2Dip => "g2_dip",
        }
    }

    /// Parses a stable model name; `lorentzian_multi` takes its peak count
    /// from `peaks`.
    pub fn from_name(name: &str, peaks: usize) -> Result<Self> {
        match name {
            "fano_lorentz" => Ok(ModelKind::FanoLorentz),
            "lorentzian_multi" => {
                if peaks == 0 {
                    return Err(Error::Invalid("lorentzian_multi needs at least one peak".into()));
                }
                Ok(ModelKind::LorentzianMulti { peaks })
            }
            "lifetime_emg" => Ok(ModelKind::LifetimeEmg),
            "g2_dip" => Ok(ModelKind::G2Dip),
            other => Err(Error::Invalid(format!("unknown model '{other}'"))),
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        let fixed: &[&str] = match self {
            ModelKind::FanoLorentz => &["y0", "amplitude", "eta", "q", "center", "width"],
            ModelKind::LifetimeEmg => &["t0", "amplitude", "tau", "sigma", "y0"],
            ModelKind::G2Dip => &["g0", "tau0", "sigma_jitter"],
            ModelKind::LorentzianMulti { peaks } => {
                let mut v = vec!["y0".to_string()];
                for k in 0..*peaks {
                    v.push(format!("amplitude_{k}"));
                    v.push(format!("center_{k}"));
                    v.push(format!("fwhm_{k}"));
                }
                return v;
            }
        };
        fixed.iter().map(|s| s.to_string()).collect()
    }

    pub fn n_params(&self) -> usize {
        match self {
            ModelKind::FanoLorentz => 6,
            ModelKind::LifetimeEmg => 5,
            ModelKind::G2Dip => 3,
            ModelKind::LorentzianMulti { peaks } => 1 + 3 * peaks,
        }
    }

    /// Domain limits every fit must respect, in parameter order.
    pub fn default_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let inf = f64::INFINITY;
        let tiny = f64::MIN_POSITIVE;
        match self {
            ModelKind::FanoLorentz => (
                vec![-inf, -inf, 0.0, -inf, -inf, tiny],
                vec![inf, inf, 1.0, inf, inf, inf],
            ),
            ModelKind::LifetimeEmg => (vec![-inf, -inf, tiny, 0.0, -inf], vec![inf; 5]),
            ModelKind::G2Dip => (vec![0.0, tiny, 0.0], vec![1.0, inf, inf]),
            ModelKind::LorentzianMulti { peaks } => {
                let mut lo = vec![-inf];
                let mut hi = vec![inf];
                for _ in 0..*peaks {
                    lo.extend([-inf, -inf, tiny]);
                    hi.extend([inf, inf, inf]);
                }
                (lo, hi)
            }
        }
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        matches!(self, ModelKind::FanoLorentz | ModelKind::LorentzianMulti { .. })
    }

    /// Evaluates the model at `x`.
    pub fn eval(&self, x: f64, p: &[f64]) -> f64 {
        match self {
            ModelKind::FanoLorentz => fano_lorentz(x, p[0], p[1], p[2], p[3], p[4], p[5]),
            ModelKind::LorentzianMulti { peaks } => {
                let mut y = p[0];
                for k in 0..*peaks {
                    y += lorentzian(x, p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                }
                y
            }
            ModelKind::LifetimeEmg => lifetime_emg(x, p[0], p[1], p[2], p[3], p[4]),
            ModelKind::G2Dip => g2_dip(x, p[0], p[1], p[2]),
        }
    }

    /// Writes `∂f(x)/∂p` into `grad`. Only for models with an analytic
    /// Jacobian; returns `false` otherwise.
    pub fn gradient(&self, x: f64, p: &[f64], grad: &mut [f64]) -> bool {
        match self {
            ModelKind::FanoLorentz => {
                let (amp, eta, q, c, w) = (p[1], p[2], p[3], p[4], p[5]);
                let om = 2.0 * (x - c) / w;
                let l = 1.0 / (1.0 + om * om);
                let q2 = 1.0 + q * q;
                let fano = (q + om) * (q + om) * l / q2;
                let dfano_dq = 2.0 * l * (q + om) * (1.0 - q * om) / (q2 * q2);
                let dfano_dom = 2.0 * (q + om) * (1.0 - q * om) * l * l / q2;
                let dl_dom = -2.0 * om * l * l;
                let dshape_dom = eta * dfano_dom + (1.0 - eta) * dl_dom;
                grad[0] = 1.0;
                grad[1] = eta * fano + (1.0 - eta) * l;
                grad[2] = amp * (fano - l);
                grad[3] = amp * eta * dfano_dq;
                grad[4] = amp * dshape_dom * (-2.0 / w);
                grad[5] = amp * dshape_dom * (-om / w);
                true
            }
            ModelKind::LorentzianMulti { peaks } => {
                grad[0] = 1.0;
                for k in 0..*peaks {
                    let (a, c, w) = (p[1 + 3 * k], p[2 + 3 * k], p[3 + 3 * k]);
                    let om = 2.0 * (x - c) / w;
                    let l = 1.0 / (1.0 + om * om);
                    grad[1 + 3 * k] = l;
                    grad[2 + 3 * k] = 4.0 * a * om * l * l / w;
                    grad[3 + 3 * k] = 2.0 * a * om * om * l * l / w;
                }
                true
            }
            _ => false,
        }
    }

    /// Named quantities computed from the parameters.
    pub fn derived(&self, p: &[f64]) -> Vec<(String, f64)> {
        match self {
            ModelKind::FanoLorentz => vec![
                ("center".into(), p[4]),
                ("fwhm".into(), p[5]),
                ("q_factor".into(), p[4] / p[5]),
            ],
            ModelKind::LorentzianMulti { peaks } => {
                let mut v = Vec::with_capacity(2 * peaks);
                for k in 0..*peaks {
                    v.push((format!("center_{k}"), p[2 + 3 * k]));
                    v.push((format!("fwhm_{k}"), p[3 + 3 * k]));
                }
                v
            }
            ModelKind::LifetimeEmg => vec![("tau".into(), p[2]), ("irf_fwhm".into(), p[3] * FWHM_PER_SIGMA)],
            ModelKind::G2Dip => vec![
                ("g2_0".into(), p[0]),
                ("g2_0_observed".into(), g2_dip(0.0, p[0], p[1], p[2])),
                ("tau0".into(), p[1]),
            ],
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::from_name(s, 1)
    }
}

/// `2√(2 ln 2)`: Gaussian FWHM over standard deviation.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Timing jitter of the reference single-photon detectors, FWHM in ns.
pub const DEFAULT_JITTER_FWHM_NS: f64 = 0.55;

pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

/// Unit-height Lorentzian times `amplitude`.
pub fn lorentzian(x: f64, amplitude: f64, center: f64, fwhm: f64) -> f64 {
    let om = 2.0 * (x - center) / fwhm;
    let l = 1.0 / (1.0 + om * om);
    amplitude * l
}

/// `y0 + A·[η·(q+Ω)²/((1+q²)(1+Ω²)) + (1−η)/(1+Ω²)]` with `Ω = 2(x−center)/width`.
///
/// The shape is spanned by `1`, `1/(1+Ω²)` and `Ω/(1+Ω²)`, so the four
/// parameters `y0, A, η, q` carry only three independent combinations.
/// Fits must hold one of them (normally `η`) fixed.
pub fn fano_lorentz(x: f64, y0: f64, amplitude: f64, eta: f64, q: f64, center: f64, width: f64) -> f64 {
    let om = 2.0 * (x - center) / width;
    let l = 1.0 / (1.0 + om * om);
    let s = (q + om) / q.hypot(1.0);
    y0 + amplitude * (eta * s * s * l + (1.0 - eta) * l)
}

/// Area-`amplitude` decay with lifetime `tau` after `t0`, smeared by a
/// Gaussian IRF of standard deviation `sigma`, on a flat background.
pub fn lifetime_emg(t: f64, t0: f64, amplitude: f64, tau: f64, sigma: f64, y0: f64) -> f64 {
    amplitude * emg_unit(t - t0, tau, sigma) + y0
}

/// `1 − (1−g0)·exp(−|τ|/τ0)`, with the exponential convolved with a
/// Gaussian of standard deviation `sigma_jitter`.
pub fn g2_dip(delay: f64, g0: f64, tau0: f64, sigma_jitter: f64) -> f64 {
    1.0 - (1.0 - g0) * two_sided_exp_conv(delay, tau0, sigma_jitter)
}
