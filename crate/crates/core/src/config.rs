//! Scenario configuration as flat TOML.
//!
//! ```toml
//! R = 7.0000000000000000e2
//! gamma = 3.2000000000000002e0
//! d_ref_multiplier = 2.0000000000000000e0
//! sigma_dB = 0.0000000000000000e0
//! reuse = "FR1"
//! seed = 42
//! ```
//!
//! Floats are written with 17 significant digits so a load of an emitted
//! file reproduces the configuration exactly.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{build_layout, ReusePattern};
use crate::propagation::{
    PropagationParams, Scenario, DEFAULT_CELL_RADIUS_M, DEFAULT_DREF_MULTIPLIER, DEFAULT_GAMMA,
};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Cell radius R (m).
    #[serde(rename = "R")]
    pub cell_radius: f64,
    pub gamma: f64,
    /// d_ref / R.
    pub d_ref_multiplier: f64,
    #[serde(rename = "sigma_dB")]
    pub sigma_db: f64,
    pub reuse: ReusePattern,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cell_radius: DEFAULT_CELL_RADIUS_M,
            gamma: DEFAULT_GAMMA,
            d_ref_multiplier: DEFAULT_DREF_MULTIPLIER,
            sigma_db: 0.0,
            reuse: ReusePattern::FR1,
            seed: DEFAULT_SEED,
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Canonical text form.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for (key, value) in [
            ("R", self.cell_radius),
            ("gamma", self.gamma),
            ("d_ref_multiplier", self.d_ref_multiplier),
            ("sigma_dB", self.sigma_db),
        ] {
            writeln!(out, "{key} = {value:.16e}").expect("writing to a String");
        }
        writeln!(out, "reuse = \"{}\"", self.reuse).expect("writing to a String");
        writeln!(out, "seed = {}", self.seed).expect("writing to a String");
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.emit())?;
        Ok(())
    }

    pub fn params(&self) -> Result<PropagationParams> {
        PropagationParams::new(
            self.gamma,
            self.d_ref_multiplier * self.cell_radius,
            self.sigma_db,
        )
    }

    /// Builds the scenario, computing every λₙ.
    pub fn scenario(&self) -> Result<Scenario> {
        Scenario::new(build_layout(self.cell_radius)?, self.reuse, self.params()?)
    }
}

/// Reads a configuration file and builds its scenario.
pub fn load_scenario(path: &Path) -> Result<(ScenarioConfig, Scenario)> {
    let config = ScenarioConfig::load(path)?;
    let scenario = config.scenario()?;
    Ok((config, scenario))
}
