//! Emitter-cavity physics: decay-rate bookkeeping, Purcell calculus,
//! coupling-strength extraction and the input-output reflection coefficient
//! of a single-sided cavity with one coupled emitter.
//!
//! The cavity loses energy at a total rate `κ = κ_wg + κ_s (+ κ_t)`, where
//! `κ_wg` feeds the collection waveguide and `κ_s` is scattering. The
//! transmission port is taken as `κ_t = 0` everywhere.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::units::{self, AngularRate, Frequency, LinewidthFWHM};
use crate::{Error, Result};

/// Projection of a [111]-oriented dipole onto the [100] cavity field
/// polarization, expressed as the reduction of the maximum Purcell factor
/// (216.2 → 124.9). The geometry behind this value is not derived here; it
/// is carried as a number.
pub const PROJECTION_111_100: f64 = 124.9 / 216.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub resonance: Frequency,
    pub quality_factor: f64,
    /// `κ_wg / κ`
    pub coupling_ratio: f64,
    /// `κ_s / κ`
    pub scatter_ratio: f64,
    /// Mode volume in units of `(λ/n)³`.
    pub mode_volume: f64,
}

impl CavityParams {
    pub fn new(
        resonance: Frequency,
        quality_factor: f64,
        coupling_ratio: f64,
        scatter_ratio: f64,
        mode_volume: f64,
    ) -> Result<Self> {
        let c = CavityParams {
            resonance,
            quality_factor,
            coupling_ratio,
            scatter_ratio,
            mode_volume,
        };
        c.validate()?;
        Ok(c)
    }

    /// Cavity whose losses are split between waveguide and scattering only.
    pub fn lossless_port(
        resonance: Frequency,
        quality_factor: f64,
        coupling_ratio: f64,
        mode_volume: f64,
    ) -> Result<Self> {
        Self::new(
            resonance,
            quality_factor,
            coupling_ratio,
            1.0 - coupling_ratio,
            mode_volume,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.resonance.0 > 0.0) {
            return Err(Error::domain("cavity resonance must be positive", self.resonance.0));
        }
        if !(self.quality_factor > 0.0 && self.quality_factor.is_finite()) {
            return Err(Error::domain("quality factor must be positive", self.quality_factor));
        }
        if !(0.0..=1.0).contains(&self.coupling_ratio) {
            return Err(Error::domain("coupling ratio must lie in [0, 1]", self.coupling_ratio));
        }
        if !(0.0..=1.0).contains(&self.scatter_ratio) {
            return Err(Error::domain("scatter ratio must lie in [0, 1]", self.scatter_ratio));
        }
        if self.coupling_ratio + self.scatter_ratio > 1.0 + 1e-12 {
            return Err(Error::domain(
                "coupling + scatter ratios exceed 1",
                self.coupling_ratio + self.scatter_ratio,
            ));
        }
        if !(self.mode_volume > 0.0) {
            return Err(Error::domain("mode volume must be positive", self.mode_volume));
        }
        Ok(())
    }

    pub fn kappa(&self) -> AngularRate {
        AngularRate(2.0 * PI * self.resonance.0 / self.quality_factor)
    }

    pub fn kappa_wg(&self) -> AngularRate {
        AngularRate(self.coupling_ratio * self.kappa().0)
    }

    pub fn kappa_s(&self) -> AngularRate {
        AngularRate(self.scatter_ratio * self.kappa().0)
    }

    /// Always zero; the transmission port is not modeled.
    pub fn kappa_t(&self) -> AngularRate {
        AngularRate(0.0)
    }

    /// Copy with a new waveguide coupling ratio, scattering taking the rest.
    pub fn with_coupling_ratio(&self, ratio: f64) -> Result<Self> {
        Self::new(
            self.resonance,
            self.quality_factor,
            ratio,
            1.0 - ratio,
            self.mode_volume,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmitterParams {
    /// Zero-phonon line (C transition, spin-down branch).
    pub zpl: Frequency,
    pub tau_on_ns: f64,
    pub tau_off_ns: f64,
    pub tau_bulk_ns: f64,
    pub quantum_efficiency: f64,
    pub debye_waller: f64,
    /// Pure dephasing expressed as a FWHM broadening.
    pub gamma_star: LinewidthFWHM,
    /// Offset of the spin-up optical transition from the spin-down one.
    pub zeeman_split: Frequency,
}

impl EmitterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.zpl.0 > 0.0) {
            return Err(Error::domain("ZPL frequency must be positive", self.zpl.0));
        }
        for (what, v) in [
            ("tau_on must be positive", self.tau_on_ns),
            ("tau_off must be positive", self.tau_off_ns),
            ("tau_bulk must be positive", self.tau_bulk_ns),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(what, v));
            }
        }
        if self.tau_on_ns > self.tau_off_ns {
            return Err(Error::domain("tau_on must not exceed tau_off", self.tau_on_ns));
        }
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::domain(
                "quantum efficiency must lie in [0, 1]",
                self.quantum_efficiency,
            ));
        }
        if !(0.0..=1.0).contains(&self.debye_waller) {
            return Err(Error::domain(
                "Debye-Waller factor must lie in [0, 1]",
                self.debye_waller,
            ));
        }
        if !(self.xi() > 0.0) {
            return Err(Error::domain("QE x DW must be positive", self.xi()));
        }
        if !(self.gamma_star.0 >= 0.0) {
            return Err(Error::domain("pure dephasing must be non-negative", self.gamma_star.0));
        }
        Ok(())
    }

    /// `ξ = QE · DW`
    pub fn xi(&self) -> f64 {
        self.quantum_efficiency * self.debye_waller
    }

    pub fn purcell_factor(&self) -> Result<f64> {
        purcell_from_lifetimes(self.tau_bulk_ns, self.xi(), self.tau_on_ns, self.tau_off_ns)
    }

    /// Transform-limited linewidth set by the off-resonance lifetime.
    pub fn radiative_linewidth(&self) -> LinewidthFWHM {
        LinewidthFWHM(1.0 / (2.0 * PI * self.tau_off_ns * 1e-9))
    }

    /// Cavity-enhanced decay rate `1/τ_on`.
    pub fn enhanced_rate(&self) -> AngularRate {
        AngularRate(1.0 / (self.tau_on_ns * 1e-9))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Down,
    Up,
}

/// How the spin-up branch interacts with the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SpinUpModel {
    /// Spin-up sees the bare cavity.
    #[default]
    Uncoupled,
    /// Spin-up couples with the same `g`, at a transition shifted by the
    /// Zeeman splitting.
    ZeemanDetuned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinCavitySystem {
    pub cavity: CavityParams,
    pub emitter: EmitterParams,
    pub g: AngularRate,
    pub spin_up_model: SpinUpModel,
}

impl SpinCavitySystem {
    pub fn new(
        cavity: CavityParams,
        emitter: EmitterParams,
        g: AngularRate,
        spin_up_model: SpinUpModel,
    ) -> Result<Self> {
        cavity.validate()?;
        emitter.validate()?;
        if !(g.0 >= 0.0 && g.0.is_finite()) {
            return Err(Error::domain("coupling g must be non-negative", g.0));
        }
        Ok(SpinCavitySystem {
            cavity,
            emitter,
            g,
            spin_up_model,
        })
    }

    /// Builds the system with `g = √(κ/τ_on)/2`.
    pub fn with_enhanced_coupling(
        cavity: CavityParams,
        emitter: EmitterParams,
        spin_up_model: SpinUpModel,
    ) -> Result<Self> {
        cavity.validate()?;
        emitter.validate()?;
        let g = coupling_g_from_enhanced_rate(emitter.enhanced_rate(), cavity.kappa())?;
        Self::new(cavity, emitter, g, spin_up_model)
    }

    /// Copy with a different coupling ratio and pure dephasing; `g` is kept.
    pub fn with_ratio_and_dephasing(&self, coupling_ratio: f64, gamma_star: LinewidthFWHM) -> Result<Self> {
        let mut emitter = self.emitter;
        emitter.gamma_star = gamma_star;
        Self::new(
            self.cavity.with_coupling_ratio(coupling_ratio)?,
            emitter,
            self.g,
            self.spin_up_model,
        )
    }

    /// `C = 4g²/(κγ)` with `γ` the radiative decay rate `1/τ_off`.
    pub fn cooperativity(&self) -> Result<f64> {
        cooperativity(
            self.g,
            self.cavity.kappa(),
            self.emitter.radiative_linewidth().decay_rate(),
        )
    }
}

fn purcell_formula(tau_bulk: f64, xi: f64, tau_on: f64, tau_off: f64) -> f64 {
    tau_bulk / xi * (1.0 / tau_on - 1.0 / tau_off)
}

/// `F_P = (τ_bulk/ξ)(1/τ_on − 1/τ_off)`, lifetimes in ns.
pub fn purcell_from_lifetimes(tau_bulk_ns: f64, xi: f64, tau_on_ns: f64, tau_off_ns: f64) -> Result<f64> {
    for (what, v) in [
        ("tau_bulk must be positive", tau_bulk_ns),
        ("tau_on must be positive", tau_on_ns),
        ("tau_off must be positive", tau_off_ns),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(what, v));
        }
    }
    if !(xi > 0.0 && xi <= 1.0) {
        return Err(Error::domain("xi must lie in (0, 1]", xi));
    }
    if tau_on_ns > tau_off_ns {
        return Err(Error::domain("tau_on exceeds tau_off (anti-enhancement)", tau_on_ns));
    }
    Ok(purcell_formula(tau_bulk_ns, xi, tau_on_ns, tau_off_ns))
}

/// Emission fraction into the cavity mode, `β = F_P/(F_P + 1)`.
pub fn beta_factor(purcell: f64) -> Result<f64> {
    if !(purcell >= 0.0) {
        return Err(Error::domain("Purcell factor must be non-negative", purcell));
    }
    if purcell.is_infinite() {
        return Ok(1.0);
    }
    Ok(purcell / (purcell + 1.0))
}

/// `F_P,max = (3/4π²) Q / V` with `V` in `(λ/n)³`.
pub fn purcell_max(quality_factor: f64, mode_volume: f64) -> Result<f64> {
    if !(quality_factor > 0.0) {
        return Err(Error::domain("quality factor must be positive", quality_factor));
    }
    if !(mode_volume > 0.0) {
        return Err(Error::domain("mode volume must be positive", mode_volume));
    }
    Ok(3.0 / (4.0 * PI * PI) * quality_factor / mode_volume)
}

/// Scales a Purcell factor by a caller-supplied dipole projection factor.
pub fn dipole_projection(purcell: f64, projection_factor: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&projection_factor) {
        return Err(Error::domain("projection factor must lie in [0, 1]", projection_factor));
    }
    Ok(projection_factor * purcell)
}

/// Undoes the Lorentzian falloff of a Purcell factor measured at detuning:
/// `F(0) = F_meas · [1 + 4Q²(λ_e/λ_c − 1)²]`.
pub fn detuning_correction(measured: f64, quality_factor: f64, emitter_nm: f64, cavity_nm: f64) -> Result<f64> {
    if !(quality_factor > 0.0) {
        return Err(Error::domain("quality factor must be positive", quality_factor));
    }
    if !(emitter_nm > 0.0) {
        return Err(Error::domain("emitter wavelength must be positive", emitter_nm));
    }
    if !(cavity_nm > 0.0) {
        return Err(Error::domain("cavity wavelength must be positive", cavity_nm));
    }
    let x = emitter_nm / cavity_nm - 1.0;
    Ok(measured * (1.0 + 4.0 * quality_factor * quality_factor * x * x))
}

/// `g = √(Γκ)/2` with `Γ` the cavity-enhanced decay rate.
pub fn coupling_g_from_enhanced_rate(enhanced_rate: AngularRate, kappa: AngularRate) -> Result<AngularRate> {
    if !(enhanced_rate.0 >= 0.0) {
        return Err(Error::domain("enhanced rate must be non-negative", enhanced_rate.0));
    }
    if !(kappa.0 > 0.0) {
        return Err(Error::domain("kappa must be positive", kappa.0));
    }
    Ok(AngularRate((enhanced_rate.0 * kappa.0).sqrt() / 2.0))
}

/// `C = 4g²/(κ γ_tot)`.
pub fn cooperativity(g: AngularRate, kappa: AngularRate, gamma_total: AngularRate) -> Result<f64> {
    if !(kappa.0 > 0.0) {
        return Err(Error::domain("kappa must be positive", kappa.0));
    }
    if !(gamma_total.0 > 0.0) {
        return Err(Error::domain("emitter decay rate must be positive", gamma_total.0));
    }
    Ok(4.0 * g.0 * g.0 / (kappa.0 * gamma_total.0))
}

/// Reflection coefficient seen by a probe at `probe` for the given spin,
/// with the emitter displaced by `offset` (a spectral-diffusion sample).
///
/// The emitter coherence decays at `γ_⊥ = π Δν_rad`, with `Δν_rad` the
/// transform limit of `τ_off`.
pub fn reflection(probe: Frequency, system: &SpinCavitySystem, spin: Spin, offset: Frequency) -> Complex64 {
    reflection_with_linewidth(probe, system, spin, offset, system.emitter.radiative_linewidth())
}

/// [`reflection`] with an explicit homogeneous emitter linewidth, so that
/// `γ_⊥ = π × linewidth`.
pub fn reflection_with_linewidth(
    probe: Frequency,
    system: &SpinCavitySystem,
    spin: Spin,
    offset: Frequency,
    linewidth: LinewidthFWHM,
) -> Complex64 {
    let cavity = &system.cavity;
    let kappa = cavity.kappa().0;
    let kappa_wg = cavity.kappa_wg().0;
    // Detunings are formed in ordinary Hz before scaling, to avoid
    // cancellation between two ~3e15 rad/s numbers.
    let cavity_detuning = units::AngularRate::from_ordinary(Frequency(cavity.resonance.0 - probe.0)).0;
    let mut denom = Complex64::new(kappa / 2.0, cavity_detuning);

    let emitter_shift = match (spin, system.spin_up_model) {
        (Spin::Down, _) => Some(0.0),
        (Spin::Up, SpinUpModel::Uncoupled) => None,
        (Spin::Up, SpinUpModel::ZeemanDetuned) => Some(system.emitter.zeeman_split.0),
    };
    if let Some(shift) = emitter_shift {
        let g = system.g.0;
        if g > 0.0 {
            let emitter_detuning = 2.0 * PI * (system.emitter.zpl.0 + shift + offset.0 - probe.0);
            let gamma_perp = linewidth.coherence_rate().0;
            denom += g * g / Complex64::new(gamma_perp, emitter_detuning);
        }
    }
    Complex64::new(1.0, 0.0) - kappa_wg / denom
}
