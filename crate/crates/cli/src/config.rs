//! JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use fes_core::scenarios::building::BuildingScenario;
use fes_core::scenarios::lti::LtiScenario;
use fes_core::scenarios::robots::RobotScenario;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Building,
    Robots,
    Custom,
}

/// A diagonal LTI plant with an optional sinusoidal disturbance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomScenario {
    pub plant: LtiScenario,
    /// Amplitude of `w(t) = w_mid + a sin(ω t)`, clipped to the disturbance box.
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_omega")]
    pub omega: Vec<f64>,
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
    #[serde(default)]
    pub initial_input: Option<Vec<f64>>,
}

fn default_omega() -> Vec<f64> {
    vec![1.0]
}

/// `points` values from `from` to `to`, geometric when `log` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points == 0 || !self.from.is_finite() || !self.to.is_finite() || self.from > self.to {
            bail!("grid needs points ≥ 1 and finite from ≤ to, got {self:?}");
        }
        if self.log && !(self.from > 0.0) {
            bail!("logarithmic grid needs a positive start");
        }
        if self.points == 1 {
            return Ok(vec![self.from]);
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let s = i as f64 / n;
                if self.log {
                    self.from * (self.to / self.from).powf(s)
                } else {
                    self.from + (self.to - self.from) * s
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub tau: Grid,
    pub eps: Grid,
    /// Simulate every grid point and mark empirical divergence.
    #[serde(default)]
    pub simulate: bool,
    /// Samples per simulated grid point.
    #[serde(default = "default_sweep_horizon")]
    pub horizon: usize,
}

fn default_sweep_horizon() -> usize {
    400
}

/// Contents of a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: u32,
    pub scenario: ScenarioKind,
    #[serde(default)]
    pub building: Option<BuildingScenario>,
    #[serde(default)]
    pub robots: Option<RobotScenario>,
    #[serde(default)]
    pub custom: Option<CustomScenario>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    /// Number of controller updates.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub substeps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub plot: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write every n-th sample to the trajectory CSV.
    #[serde(default)]
    pub record_every: Option<usize>,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl FileConfig {
    #[cfg(test)]
    pub fn shipped(scenario: ScenarioKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scenario,
            building: None,
            robots: None,
            custom: None,
            tau: None,
            eps: None,
            horizon: None,
            substeps: None,
            seed: None,
            plot: false,
            output_dir: None,
            record_every: None,
            sweep: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            bail!("unsupported schema_version {} (expected {SCHEMA_VERSION})", cfg.schema_version);
        }
        Ok(cfg)
    }
}

/// Command-line overrides layered on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub scenario: Option<ScenarioKind>,
    pub tau: Option<f64>,
    pub eps: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub plot: bool,
    pub out: Option<PathBuf>,
}

/// The resolved run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub file: FileConfig,
    pub tau: Option<f64>,
    pub eps: Option<f64>,
    pub horizon: Option<usize>,
    pub seed: Option<u64>,
    pub plot: bool,
    pub output_dir: PathBuf,
}

impl RunConfig {
    pub fn resolve(mut file: FileConfig, o: Overrides) -> Result<Self> {
        if let Some(s) = o.scenario {
            file.scenario = s;
        }
        if file.scenario == ScenarioKind::Custom && file.custom.is_none() {
            bail!("scenario \"custom\" needs a \"custom\" section");
        }
        let tau = o.tau.or(file.tau);
        let eps = o.eps.or(file.eps);
        if let Some(t) = tau {
            if !(t > 0.0 && t.is_finite()) {
                bail!("tau must be positive, got {t}");
            }
        }
        if let Some(e) = eps {
            if !(e > 0.0 && e <= 1.0) {
                bail!("eps must lie in (0, 1], got {e}");
            }
        }
        if file.substeps == Some(0) {
            bail!("substeps must be positive");
        }
        if file.record_every == Some(0) {
            bail!("record_every must be positive");
        }
        Ok(Self {
            tau,
            eps,
            horizon: o.horizon.or(file.horizon),
            seed: o.seed.or(file.seed),
            plot: o.plot || file.plot,
            output_dir: o.out.or_else(|| file.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out")),
            file,
        })
    }
}
