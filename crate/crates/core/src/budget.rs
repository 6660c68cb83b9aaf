//! Multiplicative optical loss chains.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyStage {
    pub name: String,
    /// Transmission of one pass through the stage.
    pub value: f64,
    /// How many times the stage appears (e.g. two identical connectors).
    pub count: u32,
    /// Subsystem label; stages with the same label form one subtotal.
    pub group: String,
    /// Marks the emitter-cavity to waveguide coupling stage, which some
    /// consumers account for separately.
    #[serde(default)]
    pub device_coupling: bool,
}

impl EfficiencyStage {
    pub fn new(name: impl Into<String>, value: f64, group: impl Into<String>) -> Result<Self> {
        let s = EfficiencyStage {
            name: name.into(),
            value,
            count: 1,
            group: group.into(),
            device_coupling: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_db(name: impl Into<String>, loss_db: f64, group: impl Into<String>) -> Result<Self> {
        Self::new(name, db_to_efficiency(loss_db)?, group)
    }

    pub fn times(mut self, count: u32) -> Self {
        self.count = count;
        self
    }

    pub fn device_coupling(mut self) -> Self {
        self.device_coupling = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.value) {
            return Err(Error::domain("stage efficiency must lie in [0, 1]", self.value));
        }
        Ok(())
    }

    /// `value^count`
    pub fn efficiency(&self) -> f64 {
        self.value.powi(self.count as i32)
    }

    /// Loss of the whole stage in dB (positive). Infinite for a zero stage.
    pub fn loss_db(&self) -> f64 {
        -10.0 * self.efficiency().log10()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EfficiencyChain {
    pub stages: Vec<EfficiencyStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subtotal {
    pub group: String,
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    /// One entry per group, in order of first appearance.
    pub subtotals: Vec<Subtotal>,
    pub total: f64,
    /// Total with device-coupling stages left out.
    pub total_excluding_device_coupling: f64,
}

impl ChainSummary {
    pub fn subtotal(&self, group: &str) -> Option<f64> {
        self.subtotals.iter().find(|s| s.group == group).map(|s| s.efficiency)
    }
}

impl EfficiencyChain {
    pub fn new(stages: Vec<EfficiencyStage>) -> Result<Self> {
        for s in &stages {
            s.validate()?;
        }
        Ok(EfficiencyChain { stages })
    }

    pub fn push(&mut self, stage: EfficiencyStage) -> Result<()> {
        stage.validate()?;
        self.stages.push(stage);
        Ok(())
    }

    /// Copy without the device-coupling stages.
    pub fn without_device_coupling(&self) -> Self {
        EfficiencyChain {
            stages: self.stages.iter().filter(|s| !s.device_coupling).cloned().collect(),
        }
    }
}

/// Per-group products and the overall product of a chain.
pub fn chain_efficiency(chain: &EfficiencyChain) -> Result<ChainSummary> {
    let mut subtotals: Vec<Subtotal> = Vec::new();
    let mut total = 1.0;
    let mut total_ex = 1.0;
    for stage in &chain.stages {
        stage.validate()?;
        let e = stage.efficiency();
        total *= e;
        if !stage.device_coupling {
            total_ex *= e;
        }
        match subtotals.iter_mut().find(|s| s.group == stage.group) {
            Some(s) => s.efficiency *= e,
            None => subtotals.push(Subtotal {
                group: stage.group.clone(),
                efficiency: e,
            }),
        }
    }
    Ok(ChainSummary {
        subtotals,
        total,
        total_excluding_device_coupling: total_ex,
    })
}

/// Chain total times detector efficiency.
pub fn overall_detection(chain: &EfficiencyChain, detector_eff: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&detector_eff) {
        return Err(Error::domain("detector efficiency must lie in [0, 1]", detector_eff));
    }
    Ok(chain_efficiency(chain)?.total * detector_eff)
}

/// `η = 10^(−loss/10)`.
pub fn db_to_efficiency(loss_db: f64) -> Result<f64> {
    if !(loss_db >= 0.0) {
        return Err(Error::domain("loss in dB must be non-negative", loss_db));
    }
    Ok(10f64.powf(-loss_db / 10.0))
}
