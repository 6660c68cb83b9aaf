//! Reflection-based photon-to-spin state transfer.
//!
//! A polarization qubit `α|H⟩ + β|V⟩` reflects off the spin-cavity system
//! with the spin prepared in `(|↓⟩ + |↑⟩)/√2`. The `H` mode couples to the
//! cavity and picks up the spin-dependent coefficient `r_↓` or `r_↑`; the `V`
//! mode bounces off with `r_V`. Detecting the photon in `(|H⟩ ± |V⟩)/√2`
//! heralds the spin in `α|−⟩ + β|+⟩` (up to a Pauli correction on the minus
//! outcome), where `|±⟩ = (|↓⟩ ± |↑⟩)/√2`.
//!
//! Spin vectors are stored in the `[↓, ↑]` basis.

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cavity::{reflection_with_linewidth, Spin, SpinCavitySystem};
use crate::quadrature::truncated_lorentzian;
use crate::units::{Frequency, LinewidthFWHM};
use crate::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputStatePolicy {
    /// Only `(|H⟩ + |V⟩)/√2`.
    FixedEqualSuperposition,
    /// Mean over the six cardinal states `±Z, ±X, ±Y`.
    #[default]
    CardinalSixAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeraldPolicy {
    PlusOnly,
    /// Both outcomes herald; the minus branch gets a spin flip
    /// (a Z in the rotated `|±⟩` basis).
    #[default]
    BothWithFeedForward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DephasingModel {
    /// The emitter frequency wanders slowly with a Lorentzian distribution
    /// of FWHM `γ*`; results are averaged over it.
    #[default]
    SlowDiffusion,
    /// Pure dephasing broadens the homogeneous line: `γ_⊥ = π(Δν_rad + γ*)`.
    FastLinewidth,
}

/// Which part of the reflection coefficients enters the state algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeModel {
    /// Unit-magnitude coefficients `r/|r|`: fidelity follows the phase
    /// contrast between the spin branches. Losses are carried by the success
    /// probability alone.
    #[default]
    PhaseContrast,
    /// Coefficients enter with their magnitudes, so amplitude imbalance
    /// between branches also costs fidelity.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionQuadrature {
    pub n_points: usize,
    /// Half-width of the integration window in units of `γ*`.
    pub truncation: f64,
}

impl Default for DiffusionQuadrature {
    fn default() -> Self {
        DiffusionQuadrature {
            n_points: 129,
            truncation: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolConfig {
    /// Probe frequency; `None` probes at the cavity resonance.
    pub probe: Option<Frequency>,
    pub input_states: InputStatePolicy,
    pub r_v: Complex64,
    pub herald: HeraldPolicy,
    pub dephasing: DephasingModel,
    pub quadrature: DiffusionQuadrature,
    pub amplitude: AmplitudeModel,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            probe: None,
            input_states: InputStatePolicy::default(),
            r_v: Complex64::new(1.0, 0.0),
            herald: HeraldPolicy::default(),
            dephasing: DephasingModel::default(),
            quadrature: DiffusionQuadrature::default(),
            amplitude: AmplitudeModel::default(),
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_v.norm() <= 1.0 + 1e-12) {
            return Err(Error::domain("|r_V| must not exceed 1", self.r_v.norm()));
        }
        if self.quadrature.n_points < 3 {
            return Err(Error::domain(
                "quadrature needs at least 3 points",
                self.quadrature.n_points as f64,
            ));
        }
        if !(self.quadrature.truncation > 0.0) {
            return Err(Error::domain(
                "quadrature truncation must be positive",
                self.quadrature.truncation,
            ));
        }
        if let Some(p) = self.probe {
            if !(p.0 > 0.0) {
                return Err(Error::domain("probe frequency must be positive", p.0));
            }
        }
        Ok(())
    }

    fn probe_for(&self, system: &SpinCavitySystem) -> Frequency {
        self.probe.unwrap_or(system.cavity.resonance)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyPair {
    pub eta_det: f64,
    pub eta_exc: f64,
}

impl EfficiencyPair {
    pub fn new(eta_det: f64, eta_exc: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta_det) {
            return Err(Error::domain("eta_det must lie in [0, 1]", eta_det));
        }
        if !(0.0..=1.0).contains(&eta_exc) {
            return Err(Error::domain("eta_exc must lie in [0, 1]", eta_exc));
        }
        Ok(EfficiencyPair { eta_det, eta_exc })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Herald {
    Plus,
    Minus,
}

/// Unnormalized spin state left behind by one herald outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeraldedSpin {
    pub herald: Herald,
    pub state: Vector2<Complex64>,
    /// Squared norm of `state`: the probability of this outcome.
    pub weight: f64,
}

impl HeraldedSpin {
    pub fn density(&self) -> Matrix2<Complex64> {
        self.state * self.state.adjoint()
    }
}

/// Photon qubit `(α, β)` in the `(H, V)` basis.
pub type PhotonState = (Complex64, Complex64);

/// The spin state the protocol aims to produce, `α|−⟩ + β|+⟩`.
pub fn target_state(photon: PhotonState) -> Vector2<Complex64> {
    let (a, b) = photon;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Vector2::new((a + b) * s, (b - a) * s)
}

/// Photon states averaged over by a policy.
pub fn input_states(policy: InputStatePolicy) -> Vec<PhotonState> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| Complex64::new(re, im);
    match policy {
        InputStatePolicy::FixedEqualSuperposition => vec![(c(s, 0.0), c(s, 0.0))],
        InputStatePolicy::CardinalSixAverage => vec![
            (c(1.0, 0.0), ZERO),
            (ZERO, c(1.0, 0.0)),
            (c(s, 0.0), c(s, 0.0)),
            (c(s, 0.0), c(-s, 0.0)),
            (c(s, 0.0), c(0.0, s)),
            (c(s, 0.0), c(0.0, -s)),
        ],
    }
}

fn check_photon(photon: PhotonState) -> Result<()> {
    let norm = photon.0.norm_sqr() + photon.1.norm_sqr();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::domain("photon state must be normalized", norm));
    }
    Ok(())
}

fn unit_phase(r: Complex64) -> Complex64 {
    let n = r.norm();
    if n > 1e-300 {
        r / n
    } else {
        ZERO
    }
}

/// Herald branches for given reflection coefficients.
pub fn heralded_from_reflections(
    r_down: Complex64,
    r_up: Complex64,
    r_v: Complex64,
    photon: PhotonState,
    herald: HeraldPolicy,
    amplitude: AmplitudeModel,
) -> Result<Vec<HeraldedSpin>> {
    check_photon(photon)?;
    let (r_down, r_up, r_v) = match amplitude {
        AmplitudeModel::Raw => (r_down, r_up, r_v),
        AmplitudeModel::PhaseContrast => (unit_phase(r_down), unit_phase(r_up), unit_phase(r_v)),
    };
    let (a, b) = photon;
    let half = Complex64::new(0.5, 0.0);

    let plus = Vector2::new((a * r_down + b * r_v) * half, (a * r_up + b * r_v) * half);
    let mut out = vec![HeraldedSpin {
        herald: Herald::Plus,
        state: plus,
        weight: plus.norm_squared(),
    }];
    if herald == HeraldPolicy::BothWithFeedForward {
        let minus = Vector2::new((a * r_down - b * r_v) * half, (a * r_up - b * r_v) * half);
        // Spin flip |↓⟩ ↔ |↑⟩.
        let corrected = Vector2::new(minus[1], minus[0]);
        out.push(HeraldedSpin {
            herald: Herald::Minus,
            state: corrected,
            weight: corrected.norm_squared(),
        });
    }
    Ok(out)
}

fn emitter_linewidth(system: &SpinCavitySystem, model: DephasingModel) -> LinewidthFWHM {
    let rad = system.emitter.radiative_linewidth();
    match model {
        DephasingModel::SlowDiffusion => rad,
        DephasingModel::FastLinewidth => LinewidthFWHM(rad.0 + system.emitter.gamma_star.0),
    }
}

fn branch_reflections(system: &SpinCavitySystem, config: &ProtocolConfig, offset: Frequency) -> (Complex64, Complex64) {
    let probe = config.probe_for(system);
    let lw = emitter_linewidth(system, config.dephasing);
    (
        reflection_with_linewidth(probe, system, Spin::Down, offset, lw),
        reflection_with_linewidth(probe, system, Spin::Up, offset, lw),
    )
}

/// Spectral-diffusion samples `(offset Hz, weight)` for the configuration.
fn diffusion_rule(system: &SpinCavitySystem, config: &ProtocolConfig) -> Vec<(f64, f64)> {
    match config.dephasing {
        DephasingModel::SlowDiffusion => truncated_lorentzian(
            system.emitter.gamma_star.0,
            config.quadrature.truncation,
            config.quadrature.n_points,
        ),
        DephasingModel::FastLinewidth => vec![(0.0, 1.0)],
    }
}

/// Heralded spin contributions for one photon state and one emitter offset.
pub fn heralded_spin_state(
    system: &SpinCavitySystem,
    config: &ProtocolConfig,
    photon: PhotonState,
    offset: Frequency,
) -> Result<Vec<HeraldedSpin>> {
    config.validate()?;
    let (r_down, r_up) = branch_reflections(system, config, offset);
    heralded_from_reflections(r_down, r_up, config.r_v, photon, config.herald, config.amplitude)
}

/// Unnormalized spin density summed over heralds and averaged over the
/// spectral-diffusion distribution.
pub fn transfer_density(
    system: &SpinCavitySystem,
    config: &ProtocolConfig,
    photon: PhotonState,
) -> Result<Matrix2<Complex64>> {
    config.validate()?;
    let rule = diffusion_rule(system, config);
    let mut rho = Matrix2::zeros();
    for (offset, w) in rule {
        let (r_down, r_up) = branch_reflections(system, config, Frequency(offset));
        for h in heralded_from_reflections(r_down, r_up, config.r_v, photon, config.herald, config.amplitude)? {
            rho += h.density() * Complex64::new(w, 0.0);
        }
    }
    Ok(rho)
}

/// `⟨t|ρ|t⟩ / tr ρ`, after checking that `ρ` is a valid (unnormalized)
/// density matrix.
pub fn state_fidelity(rho: &Matrix2<Complex64>, target: &Vector2<Complex64>) -> Result<f64> {
    let tr = (rho[(0, 0)] + rho[(1, 1)]).re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::Numerical(format!("heralded density has trace {tr}")));
    }
    let herm = (rho[(0, 1)] - rho[(1, 0)].conj()).norm();
    if herm > 1e-12 * tr {
        return Err(Error::Numerical("heralded density is not Hermitian".into()));
    }
    let (a, d) = (rho[(0, 0)].re, rho[(1, 1)].re);
    let min_eig = 0.5 * (a + d - ((a - d).powi(2) + 4.0 * rho[(0, 1)].norm_sqr()).sqrt());
    if min_eig < -1e-12 * tr {
        return Err(Error::Numerical(format!(
            "heralded density not positive (eigenvalue {min_eig})"
        )));
    }
    let t = target.normalize();
    let overlap = (t.adjoint() * rho * t)[(0, 0)].re / tr;
    if !overlap.is_finite() {
        return Err(Error::Numerical("fidelity is not finite".into()));
    }
    Ok(overlap.clamp(0.0, 1.0))
}

/// Fidelity of the heralded spin with the transferred photon state,
/// averaged over the configured input states.
pub fn transfer_fidelity(system: &SpinCavitySystem, config: &ProtocolConfig) -> Result<f64> {
    config.validate()?;
    let rule = diffusion_rule(system, config);
    let branches: Vec<(f64, Complex64, Complex64)> = rule
        .iter()
        .map(|&(offset, w)| {
            let (d, u) = branch_reflections(system, config, Frequency(offset));
            (w, d, u)
        })
        .collect();

    let states = input_states(config.input_states);
    let mut total = 0.0;
    for &photon in &states {
        let mut rho = Matrix2::zeros();
        for &(w, r_down, r_up) in &branches {
            for h in heralded_from_reflections(r_down, r_up, config.r_v, photon, config.herald, config.amplitude)? {
                rho += h.density() * Complex64::new(w, 0.0);
            }
        }
        total += state_fidelity(&rho, &target_state(photon))?;
    }
    Ok(total / states.len() as f64)
}

/// Reflectance of the cavity-coupled polarization, averaged over the two
/// spin branches and over spectral diffusion.
pub fn mean_reflectance(system: &SpinCavitySystem, config: &ProtocolConfig) -> Result<f64> {
    config.validate()?;
    let rule = diffusion_rule(system, config);
    let mut acc = 0.0;
    for (offset, w) in rule {
        let (d, u) = branch_reflections(system, config, Frequency(offset));
        acc += w * 0.5 * (d.norm_sqr() + u.norm_sqr());
    }
    if !acc.is_finite() {
        return Err(Error::Numerical("reflectance is not finite".into()));
    }
    Ok(acc)
}

/// `p_succ = η_det η_exc |r̄|²`.
pub fn success_probability(system: &SpinCavitySystem, config: &ProtocolConfig, eff: EfficiencyPair) -> Result<f64> {
    let refl = mean_reflectance(system, config)?;
    Ok((eff.eta_det * eff.eta_exc * refl).clamp(0.0, 1.0))
}

/// `n` log-spaced samples from `min` to `max` inclusive.
pub fn log_axis(min: f64, max: f64, n: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max > min) {
        return Err(Error::Invalid(format!(
            "log axis needs 0 < min < max (got {min}, {max})"
        )));
    }
    match n {
        0 => Err(Error::Invalid("axis must not be empty".into())),
        1 => Ok(vec![min]),
        _ => {
            let (lo, hi) = (min.ln(), max.ln());
            Ok((0..n)
                .map(|i| {
                    if i == n - 1 {
                        max
                    } else {
                        (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocusPoint {
    pub gamma_star_mhz: f64,
    pub coupling_ratio: f64,
    pub ratio_index: usize,
    pub fidelity: f64,
}

/// Fidelity and success probability over `(κ_wg/κ, γ*)`.
///
/// Matrices are indexed `[γ* row][κ_wg/κ column]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub coupling_ratios: Vec<f64>,
    pub gamma_star_mhz: Vec<f64>,
    pub fidelity: Vec<Vec<f64>>,
    pub success_prob: Vec<Vec<f64>>,
    pub optimal_locus: Vec<LocusPoint>,
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::Invalid(format!("{name} axis is empty")));
    }
    if axis.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Invalid(format!("{name} axis is not strictly increasing")));
    }
    Ok(())
}

/// Evaluates the protocol over every `(γ*, κ_wg/κ)` pair. Cells are
/// computed in parallel; the output does not depend on scheduling.
pub fn sweep_map(
    template: &SpinCavitySystem,
    config: &ProtocolConfig,
    eff: EfficiencyPair,
    coupling_ratios: &[f64],
    gamma_star_mhz: &[f64],
) -> Result<SweepGrid> {
    config.validate()?;
    check_axis("coupling ratio", coupling_ratios)?;
    check_axis("gamma*", gamma_star_mhz)?;
    if coupling_ratios[0] < 0.0 || coupling_ratios[coupling_ratios.len() - 1] > 1.0 {
        return Err(Error::Invalid("coupling ratios must lie in [0, 1]".into()));
    }
    if gamma_star_mhz[0] < 0.0 {
        return Err(Error::Invalid("gamma* must be non-negative".into()));
    }

    let ncol = coupling_ratios.len();
    let cells: Vec<Result<(f64, f64)>> = (0..gamma_star_mhz.len() * ncol)
        .into_par_iter()
        .map(|k| {
            let (row, col) = (k / ncol, k % ncol);
            let cell = || -> Result<(f64, f64)> {
                let sys = template
                    .with_ratio_and_dephasing(coupling_ratios[col], LinewidthFWHM::from_mhz(gamma_star_mhz[row]))?;
                let f = transfer_fidelity(&sys, config)?;
                let p = success_probability(&sys, config, eff)?;
                Ok((f, p))
            };
            cell().map_err(|e| Error::Cell {
                row,
                col,
                source: Box::new(e),
            })
        })
        .collect();

    let mut fidelity = vec![vec![0.0; ncol]; gamma_star_mhz.len()];
    let mut success_prob = fidelity.clone();
    for (k, cell) in cells.into_iter().enumerate() {
        let (f, p) = cell?;
        fidelity[k / ncol][k % ncol] = f;
        success_prob[k / ncol][k % ncol] = p;
    }

    let optimal_locus = gamma_star_mhz
        .iter()
        .zip(&fidelity)
        .map(|(&g, row)| {
            let mut best = 0;
            for (i, &f) in row.iter().enumerate() {
                if f > row[best] {
                    best = i;
                }
            }
            LocusPoint {
                gamma_star_mhz: g,
                coupling_ratio: coupling_ratios[best],
                ratio_index: best,
                fidelity: row[best],
            }
        })
        .collect();

    Ok(SweepGrid {
        coupling_ratios: coupling_ratios.to_vec(),
        gamma_star_mhz: gamma_star_mhz.to_vec(),
        fidelity,
        success_prob,
        optimal_locus,
    })
}
