//! Experiment configuration file (JSON).
//!
//! Every field has a default, so a partial file only overrides what it names.
//! The defaults reproduce the four-scenario experiment with the full
//! decision-variable grid.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{standard_scenarios, DecisionVars, Scenario};
use crate::metrics::ConvergenceConfig;
use crate::nodemodel::{McuProfile, NodeParams};
use crate::protocol::{RadioConfig, Strategy};
use crate::region::RegionConfig;
use crate::topology::PlacementKind;

/// Field-generation parameters shared by all scenarios; the side length and
/// seed come from the scenario and the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegionSettings {
    pub cell_size_m: f64,
    pub temp_min_c: i32,
    pub temp_max_c: i32,
    pub max_adjacent_delta_c: i32,
    pub anchor_spacing_m: f64,
}

impl Default for RegionSettings {
    fn default() -> Self {
        let d = RegionConfig::default();
        Self {
            cell_size_m: d.cell_size_m,
            temp_min_c: d.temp_min_c,
            temp_max_c: d.temp_max_c,
            max_adjacent_delta_c: d.max_adjacent_delta_c,
            anchor_spacing_m: d.anchor_spacing_m,
        }
    }
}

impl RegionSettings {
    pub fn region_config(&self, side_m: f64, seed: u64) -> RegionConfig {
        RegionConfig {
            side_m,
            cell_size_m: self.cell_size_m,
            temp_min_c: self.temp_min_c,
            temp_max_c: self.temp_max_c,
            max_adjacent_delta_c: self.max_adjacent_delta_c,
            anchor_spacing_m: self.anchor_spacing_m,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub sharing_frequency: Vec<u32>,
    pub resend_threshold: Vec<u32>,
    pub strategy: Vec<Strategy>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            sharing_frequency: (1..=5).collect(),
            resend_threshold: (0..=50).step_by(5).collect(),
            strategy: vec![Strategy::Random, Strategy::LeastInteracted],
        }
    }
}

impl GridConfig {
    /// Cartesian product ordered by frequency, then threshold, then strategy.
    pub fn expand(&self) -> Vec<DecisionVars> {
        let mut out = Vec::new();
        for &sharing_frequency in &self.sharing_frequency {
            for &resend_threshold in &self.resend_threshold {
                for &strategy in &self.strategy {
                    out.push(DecisionVars {
                        sharing_frequency,
                        resend_threshold,
                        strategy,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    pub scenario: Scenario,
    pub vars: DecisionVars,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario {
                name: "trial-300m-100-random".into(),
                side_m: 300.0,
                n_nodes: 100,
                placement: PlacementKind::Random,
            },
            vars: DecisionVars {
                sharing_frequency: 3,
                resend_threshold: 5,
                strategy: Strategy::LeastInteracted,
            },
        }
    }
}

pub fn default_profiles() -> Vec<McuProfile> {
    let p = |name: &str, tx: f64, rx: f64| McuProfile {
        name: name.into(),
        voltage_v: 3.3,
        tx_current_a: tx,
        rx_current_a: rx,
    };
    vec![
        p("CC1310-like", 0.0134, 0.0054),
        p("CC1352R-like", 0.0143, 0.0058),
        p("CC2652R-like", 0.0096, 0.0069),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub repetitions: u32,
    pub scenarios: Vec<Scenario>,
    pub grid: GridConfig,
    pub region: RegionSettings,
    pub node: NodeParams,
    pub profiles: Vec<McuProfile>,
    pub radio: RadioConfig,
    pub convergence: ConvergenceConfig,
    /// Floor on the mean battery fraction.
    pub phi: f64,
    /// Accuracy tolerance in degrees Celsius.
    pub epsilon_c: f64,
    pub max_placement_attempts: u32,
    /// Write measured wall time into result rows; `false` writes 0 so result
    /// files are byte-reproducible.
    pub record_wall_time: bool,
    pub trial: TrialConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            base_seed: 2025,
            repetitions: 3,
            scenarios: standard_scenarios(),
            grid: GridConfig::default(),
            region: RegionSettings::default(),
            node: NodeParams::default(),
            profiles: default_profiles(),
            radio: RadioConfig::default(),
            convergence: ConvergenceConfig::default(),
            phi: 0.70,
            epsilon_c: 1.0,
            max_placement_attempts: 100,
            record_wall_time: true,
            trial: TrialConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(inner) => Error::InvalidConfig(format!("{}: {inner}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig(
                "repetitions must be at least 1".into(),
            ));
        }
        if self.profiles.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one MCU profile is required".into(),
            ));
        }
        for p in &self.profiles {
            p.validate()?;
        }
        self.node.validate()?;
        self.radio.validate()?;
        self.convergence.validate()?;
        if !(self.phi >= 0.0 && self.phi < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "phi must lie in [0, 1), got {}",
                self.phi
            )));
        }
        if !(self.epsilon_c >= 0.0) {
            return Err(Error::InvalidConfig(
                "epsilon_c must be non-negative".into(),
            ));
        }
        let mut names = std::collections::HashSet::new();
        for s in self.scenarios.iter().chain([&self.trial.scenario]) {
            s.validate()?;
            self.region.region_config(s.side_m, 0).validate()?;
        }
        for s in &self.scenarios {
            if !names.insert(s.name.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate scenario name {:?}",
                    s.name
                )));
            }
        }
        for v in self.grid.expand().iter().chain([&self.trial.vars]) {
            v.validate()?;
        }
        Ok(())
    }
}
