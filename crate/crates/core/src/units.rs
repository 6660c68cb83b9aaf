//! Unit conventions.
//!
//! Internal rate arithmetic is carried out in angular units (rad/s). User
//! facing quantities are ordinary frequencies (Hz), wavelengths (nm) and
//! lifetimes (ns). Every conversion between the two worlds goes through this
//! module.
//!
//! Two relations are used throughout:
//!
//! - an inverse lifetime `1/τ` is an angular rate;
//! - a FWHM linewidth `Δν` is an ordinary frequency, with `Δν = (1/τ) / 2π`
//!   for a transform-limited line.

use std::f64::consts::PI;
use std::fmt;

use crate::{Error, Result};

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const NM: f64 = 1e-9;
const NS: f64 = 1e-9;

/// Ordinary frequency in Hz.
///
/// Used both for optical carriers (positive) and for signed offsets such as
/// a spectral-diffusion sample or a Zeeman splitting.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Frequency(pub f64);

/// Angular rate in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct AngularRate(pub f64);

/// Full width at half maximum, in ordinary Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct LinewidthFWHM(pub f64);

impl Frequency {
    pub fn hz(value: f64) -> Self {
        Frequency(value)
    }
    pub fn from_mhz(value: f64) -> Self {
        Frequency(value * 1e6)
    }
    pub fn from_ghz(value: f64) -> Self {
        Frequency(value * 1e9)
    }
    pub fn from_thz(value: f64) -> Self {
        Frequency(value * 1e12)
    }
    pub fn value(self) -> f64 {
        self.0
    }
    pub fn mhz(self) -> f64 {
        self.0 * 1e-6
    }
    pub fn ghz(self) -> f64 {
        self.0 * 1e-9
    }
    pub fn thz(self) -> f64 {
        self.0 * 1e-12
    }
    /// `ω = 2πν`.
    pub fn angular(self) -> AngularRate {
        AngularRate(2.0 * PI * self.0)
    }
}

impl AngularRate {
    /// Angular rate equal to `2π × ordinary`.
    pub fn from_ordinary(ordinary: Frequency) -> Self {
        ordinary.angular()
    }
    pub fn value(self) -> f64 {
        self.0
    }
    /// The ordinary frequency `ω / 2π`.
    pub fn over_two_pi(self) -> Frequency {
        Frequency(self.0 / (2.0 * PI))
    }
}

impl LinewidthFWHM {
    pub fn hz(value: f64) -> Self {
        LinewidthFWHM(value)
    }
    pub fn from_mhz(value: f64) -> Self {
        LinewidthFWHM(value * 1e6)
    }
    pub fn value(self) -> f64 {
        self.0
    }
    pub fn mhz(self) -> f64 {
        self.0 * 1e-6
    }
    /// Energy decay rate of a Lorentzian line with this FWHM, `2πΔν`.
    pub fn decay_rate(self) -> AngularRate {
        AngularRate(2.0 * PI * self.0)
    }
    /// Coherence (amplitude) decay rate, half the energy decay rate: `πΔν`.
    pub fn coherence_rate(self) -> AngularRate {
        AngularRate(PI * self.0)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz", self.0)
    }
}

impl fmt::Display for AngularRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "2π × {} Hz", self.0 / (2.0 * PI))
    }
}

impl fmt::Display for LinewidthFWHM {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} Hz FWHM", self.0)
    }
}

fn positive(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::domain(what, value))
    }
}

/// Vacuum wavelength (nm) to ordinary frequency, `ν = c/λ`.
pub fn wl_to_freq(wavelength_nm: f64) -> Result<Frequency> {
    let wl = positive("wavelength must be positive", wavelength_nm)?;
    Ok(Frequency(SPEED_OF_LIGHT / (wl * NM)))
}

/// Ordinary frequency to vacuum wavelength in nm.
pub fn freq_to_wl(freq: Frequency) -> Result<f64> {
    let nu = positive("frequency must be positive", freq.0)?;
    Ok(SPEED_OF_LIGHT / nu / NM)
}

/// Total cavity energy decay rate `κ = 2πν_c / Q`.
pub fn q_to_kappa(quality_factor: f64, resonance: Frequency) -> Result<AngularRate> {
    let q = positive("quality factor must be positive", quality_factor)?;
    let nu = positive("resonance frequency must be positive", resonance.0)?;
    Ok(AngularRate(2.0 * PI * nu / q))
}

/// Transform-limited FWHM for a lifetime in ns, `Δν = 1/(2πτ)`.
pub fn lifetime_to_transform_limit(lifetime_ns: f64) -> Result<LinewidthFWHM> {
    let tau = positive("lifetime must be positive", lifetime_ns)?;
    Ok(LinewidthFWHM(1.0 / (2.0 * PI * tau * NS)))
}

/// Inverse of [`lifetime_to_transform_limit`]; returns ns.
pub fn transform_limit_to_lifetime(linewidth: LinewidthFWHM) -> Result<f64> {
    let dv = positive("linewidth must be positive", linewidth.0)?;
    Ok(1.0 / (2.0 * PI * dv) / NS)
}

/// Inverse lifetime `1/τ` as an angular rate.
pub fn inverse_lifetime(lifetime_ns: f64) -> Result<AngularRate> {
    let tau = positive("lifetime must be positive", lifetime_ns)?;
    Ok(AngularRate(1.0 / (tau * NS)))
}
