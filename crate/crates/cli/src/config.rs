//! Device configuration files.
//!
//! A configuration is a TOML document with optional `[cavity]`,
//! `[emitter]`, `[protocol]`, `[efficiency]`, `[sweep]` and `[table1]`
//! tables plus `[[chain]]` and `[[markers]]` arrays. Field names carry their
//! unit; unsuffixed numbers are dimensionless. Presets are shipped as files
//! under `presets/` and compiled into the binary.

use cavspin_core::budget::{EfficiencyChain, EfficiencyStage};
use cavspin_core::cavity::{self, CavityParams, EmitterParams, SpinCavitySystem, SpinUpModel};
use cavspin_core::protocol::{
    AmplitudeModel, DephasingModel, DiffusionQuadrature, EfficiencyPair, HeraldPolicy, InputStatePolicy, ProtocolConfig,
};
use cavspin_core::units::{self, AngularRate, Frequency, LinewidthFWHM};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::CliError;

/// Named presets and their source text.
pub const PRESETS: &[(&str, &str)] = &[
    ("paper-blue-star", include_str!("../presets/paper-blue-star.toml")),
    ("paper-red-star", include_str!("../presets/paper-red-star.toml")),
    ("paper-fig5", include_str!("../presets/paper-fig5.toml")),
    ("table1-ch2", include_str!("../presets/table1-ch2.toml")),
    ("table1-ch4", include_str!("../presets/table1-ch4.toml")),
    ("table1-ch5", include_str!("../presets/table1-ch5.toml")),
    ("table1-ch6", include_str!("../presets/table1-ch6.toml")),
];

pub const TABLE1_PRESETS: &[&str] = &["table1-ch2", "table1-ch4", "table1-ch5", "table1-ch6"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity: Option<CavitySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter: Option<EmitterSection>,
    #[serde(default)]
    pub protocol: ProtocolSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<EfficiencySection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub chain: Vec<StageSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub markers: Vec<Marker>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table1: Option<Table1Section>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySection {
    #[serde(rename = "resonance_THz", default, skip_serializing_if = "Option::is_none")]
    pub resonance_thz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance_nm: Option<f64>,
    pub quality_factor: f64,
    /// `κ_wg/κ`
    pub coupling_ratio: f64,
    /// `κ_s/κ`; defaults to `1 − κ_wg/κ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatter_ratio: Option<f64>,
    /// In units of `(λ/n)³`.
    pub mode_volume: f64,
    /// Dipole projection applied to the maximum Purcell factor.
    #[serde(default = "default_projection")]
    pub projection_factor: f64,
}

fn default_projection() -> f64 {
    cavity::PROJECTION_111_100
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinUpChoice {
    #[default]
    Uncoupled,
    ZeemanDetuned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSection {
    /// Defaults to the cavity resonance.
    #[serde(rename = "zpl_THz", default, skip_serializing_if = "Option::is_none")]
    pub zpl_thz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zpl_nm: Option<f64>,
    pub tau_on_ns: f64,
    pub tau_off_ns: f64,
    pub tau_bulk_ns: f64,
    pub quantum_efficiency: f64,
    pub debye_waller: f64,
    #[serde(rename = "gamma_star_MHz", default)]
    pub gamma_star_mhz: f64,
    #[serde(rename = "zeeman_split_GHz", default)]
    pub zeeman_split_ghz: f64,
    /// `g/2π`; derived from `τ_on` and `κ` when absent.
    #[serde(rename = "coupling_g_GHz", default, skip_serializing_if = "Option::is_none")]
    pub coupling_g_ghz: Option<f64>,
    #[serde(default)]
    pub spin_up_model: SpinUpChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputStatesChoice {
    EqualSuperposition,
    #[default]
    CardinalSix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldChoice {
    PlusOnly,
    #[default]
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DephasingChoice {
    #[default]
    SlowDiffusion,
    FastLinewidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeChoice {
    #[default]
    PhaseContrast,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    /// Probe frequency; the cavity resonance when absent.
    #[serde(rename = "probe_THz", default, skip_serializing_if = "Option::is_none")]
    pub probe_thz: Option<f64>,
    #[serde(default)]
    pub input_states: InputStatesChoice,
    #[serde(default)]
    pub herald: HeraldChoice,
    #[serde(default)]
    pub dephasing: DephasingChoice,
    #[serde(default)]
    pub amplitude: AmplitudeChoice,
    #[serde(default = "default_points")]
    pub quadrature_points: usize,
    /// Half-width of the spectral-diffusion window, in units of `γ*`.
    #[serde(default = "default_truncation")]
    pub quadrature_truncation: f64,
    #[serde(default = "one")]
    pub r_v_re: f64,
    #[serde(default)]
    pub r_v_im: f64,
}

fn default_points() -> usize {
    DiffusionQuadrature::default().n_points
}

fn default_truncation() -> f64 {
    DiffusionQuadrature::default().truncation
}

fn one() -> f64 {
    1.0
}

impl Default for ProtocolSection {
    fn default() -> Self {
        ProtocolSection {
            probe_thz: None,
            input_states: InputStatesChoice::default(),
            herald: HeraldChoice::default(),
            dephasing: DephasingChoice::default(),
            amplitude: AmplitudeChoice::default(),
            quadrature_points: default_points(),
            quadrature_truncation: default_truncation(),
            r_v_re: 1.0,
            r_v_im: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EfficiencySection {
    pub eta_det: f64,
    pub eta_exc: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(rename = "loss_dB", default, skip_serializing_if = "Option::is_none")]
    pub loss_db: Option<f64>,
    #[serde(default = "one_u32")]
    pub count: u32,
    #[serde(default)]
    pub group: String,
    #[serde(default)]
    pub device_coupling: bool,
}

fn one_u32() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "ratio_min")]
    pub ratio_min: f64,
    #[serde(default = "one")]
    pub ratio_max: f64,
    #[serde(default = "sixty")]
    pub ratio_points: usize,
    #[serde(rename = "gamma_min_MHz", default = "gamma_min")]
    pub gamma_min_mhz: f64,
    #[serde(rename = "gamma_max_MHz", default = "gamma_max")]
    pub gamma_max_mhz: f64,
    #[serde(default = "sixty")]
    pub gamma_points: usize,
}

fn ratio_min() -> f64 {
    1e-3
}
fn gamma_min() -> f64 {
    1e-2
}
fn gamma_max() -> f64 {
    1e3
}
fn sixty() -> usize {
    60
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ratio_min: ratio_min(),
            ratio_max: 1.0,
            ratio_points: 60,
            gamma_min_mhz: gamma_min(),
            gamma_max_mhz: gamma_max(),
            gamma_points: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marker {
    pub name: String,
    pub coupling_ratio: f64,
    #[serde(rename = "gamma_star_MHz")]
    pub gamma_star_mhz: f64,
}

/// Values reported for a measured channel, kept for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Section {
    pub channel: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_initial_nm: Option<f64>,
    pub purcell_reported: f64,
    #[serde(default)]
    pub purcell_reported_err: f64,
    pub beta_reported: f64,
    #[serde(default)]
    pub beta_reported_err: f64,
    pub lifetime_ratio_reported: f64,
    #[serde(default)]
    pub lifetime_ratio_reported_err: f64,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn one_of(what: &str, thz: Option<f64>, nm: Option<f64>) -> Result<Option<Frequency>, CliError> {
    match (thz, nm) {
        (Some(_), Some(_)) => Err(invalid(format!("give {what} either in THz or in nm, not both"))),
        (Some(f), None) => {
            if !(f > 0.0) {
                return Err(invalid(format!("{what} must be positive (got {f} THz)")));
            }
            Ok(Some(Frequency::from_thz(f)))
        }
        (None, Some(l)) => Ok(Some(units::wl_to_freq(l)?)),
        (None, None) => Ok(None),
    }
}

impl DeviceConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: DeviceConfig = toml::from_str(text).map_err(|e| invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn preset(name: &str) -> Result<Self, CliError> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| {
                let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
                invalid(format!("unknown preset '{name}' (known: {})", names.join(", ")))
            })?;
        Self::from_toml(text)
    }

    /// Builds every embedded physical type that the present sections allow,
    /// so that invariant violations surface at load time.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.cavity.is_some() {
            self.cavity_params()?;
        }
        if self.emitter.is_some() {
            self.emitter_params()?;
        }
        if self.cavity.is_some() && self.emitter.is_some() {
            self.system()?;
        }
        self.protocol_config()?;
        if self.efficiency.is_some() {
            self.efficiency_pair()?;
            self.detector()?;
        }
        self.chain()?;
        if let Some(s) = &self.sweep {
            if s.ratio_points < 1 || s.gamma_points < 1 {
                return Err(invalid("sweep axes need at least one point"));
            }
            if !(s.ratio_min > 0.0 && s.ratio_min < s.ratio_max && s.ratio_max <= 1.0) {
                return Err(invalid("sweep ratio range must satisfy 0 < ratio_min < ratio_max <= 1"));
            }
            if !(s.gamma_min_mhz > 0.0 && s.gamma_min_mhz < s.gamma_max_mhz && s.gamma_max_mhz.is_finite()) {
                return Err(invalid("sweep gamma* range must satisfy 0 < gamma_min < gamma_max"));
            }
        }
        for m in &self.markers {
            if !(0.0..=1.0).contains(&m.coupling_ratio) || !(m.gamma_star_mhz >= 0.0) {
                return Err(invalid(format!("marker '{}' lies outside the sweep domain", m.name)));
            }
        }
        Ok(())
    }

    fn section<'a, T>(&self, s: &'a Option<T>, what: &str) -> Result<&'a T, CliError> {
        s.as_ref().ok_or_else(|| {
            invalid(format!(
                "configuration '{}' has no [{what}] table",
                self.name.as_deref().unwrap_or("<unnamed>")
            ))
        })
    }

    pub fn cavity_params(&self) -> Result<CavityParams, CliError> {
        let c = self.section(&self.cavity, "cavity")?;
        let resonance = one_of("cavity resonance", c.resonance_thz, c.resonance_nm)?
            .ok_or_else(|| invalid("cavity needs resonance_THz or resonance_nm"))?;
        let scatter = c.scatter_ratio.unwrap_or(1.0 - c.coupling_ratio);
        if !(0.0..=1.0).contains(&c.projection_factor) {
            return Err(invalid(format!(
                "projection_factor must lie in [0, 1] (got {})",
                c.projection_factor
            )));
        }
        Ok(CavityParams::new(
            resonance,
            c.quality_factor,
            c.coupling_ratio,
            scatter,
            c.mode_volume,
        )?)
    }

    pub fn emitter_params(&self) -> Result<EmitterParams, CliError> {
        let e = self.section(&self.emitter, "emitter")?;
        let zpl = match one_of("ZPL", e.zpl_thz, e.zpl_nm)? {
            Some(f) => f,
            None => match &self.cavity {
                Some(_) => self.cavity_params()?.resonance,
                None => return Err(invalid("emitter needs zpl_THz or zpl_nm when there is no cavity")),
            },
        };
        let p = EmitterParams {
            zpl,
            tau_on_ns: e.tau_on_ns,
            tau_off_ns: e.tau_off_ns,
            tau_bulk_ns: e.tau_bulk_ns,
            quantum_efficiency: e.quantum_efficiency,
            debye_waller: e.debye_waller,
            gamma_star: LinewidthFWHM::from_mhz(e.gamma_star_mhz),
            zeeman_split: Frequency::from_ghz(e.zeeman_split_ghz),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn system(&self) -> Result<SpinCavitySystem, CliError> {
        let cavity = self.cavity_params()?;
        let emitter = self.emitter_params()?;
        let e = self.section(&self.emitter, "emitter")?;
        let model = match e.spin_up_model {
            SpinUpChoice::Uncoupled => SpinUpModel::Uncoupled,
            SpinUpChoice::ZeemanDetuned => SpinUpModel::ZeemanDetuned,
        };
        Ok(match e.coupling_g_ghz {
            Some(g) => SpinCavitySystem::new(
                cavity,
                emitter,
                AngularRate::from_ordinary(Frequency::from_ghz(g)),
                model,
            )?,
            None => SpinCavitySystem::with_enhanced_coupling(cavity, emitter, model)?,
        })
    }

    pub fn protocol_config(&self) -> Result<ProtocolConfig, CliError> {
        let p = &self.protocol;
        let cfg = ProtocolConfig {
            probe: p.probe_thz.map(Frequency::from_thz),
            input_states: match p.input_states {
                InputStatesChoice::EqualSuperposition => InputStatePolicy::FixedEqualSuperposition,
                InputStatesChoice::CardinalSix => InputStatePolicy::CardinalSixAverage,
            },
            r_v: Complex64::new(p.r_v_re, p.r_v_im),
            herald: match p.herald {
                HeraldChoice::PlusOnly => HeraldPolicy::PlusOnly,
                HeraldChoice::Both => HeraldPolicy::BothWithFeedForward,
            },
            dephasing: match p.dephasing {
                DephasingChoice::SlowDiffusion => DephasingModel::SlowDiffusion,
                DephasingChoice::FastLinewidth => DephasingModel::FastLinewidth,
            },
            quadrature: DiffusionQuadrature {
                n_points: p.quadrature_points,
                truncation: p.quadrature_truncation,
            },
            amplitude: match p.amplitude {
                AmplitudeChoice::PhaseContrast => AmplitudeModel::PhaseContrast,
                AmplitudeChoice::Raw => AmplitudeModel::Raw,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn efficiency_pair(&self) -> Result<EfficiencyPair, CliError> {
        let e = self.section(&self.efficiency, "efficiency")?;
        Ok(EfficiencyPair::new(e.eta_det, e.eta_exc)?)
    }

    pub fn detector(&self) -> Result<Option<f64>, CliError> {
        match self.efficiency.as_ref().and_then(|e| e.detector) {
            Some(d) if !(0.0..=1.0).contains(&d) => {
                Err(invalid(format!("detector efficiency must lie in [0, 1] (got {d})")))
            }
            other => Ok(other),
        }
    }

    pub fn chain(&self) -> Result<EfficiencyChain, CliError> {
        let mut stages = Vec::with_capacity(self.chain.len());
        for s in &self.chain {
            let stage = match (s.value, s.loss_db) {
                (Some(v), None) => EfficiencyStage::new(s.name.clone(), v, s.group.clone()),
                (None, Some(db)) => EfficiencyStage::from_db(s.name.clone(), db, s.group.clone()),
                _ => {
                    return Err(invalid(format!(
                        "stage '{}' needs exactly one of value or loss_dB",
                        s.name
                    )))
                }
            }
            .map_err(|e| invalid(format!("stage '{}': {e}", s.name)))?;
            let stage = stage.times(s.count);
            stages.push(if s.device_coupling {
                stage.device_coupling()
            } else {
                stage
            });
        }
        Ok(EfficiencyChain::new(stages)?)
    }

    pub fn sweep_section(&self) -> SweepSection {
        self.sweep.clone().unwrap_or_default()
    }
}
