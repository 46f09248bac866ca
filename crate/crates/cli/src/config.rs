//! TOML run configuration.
//!
//! ```toml
//! seed = 1
//!
//! [fov]
//! range = 60.0
//! halfAngle = 0.5235987755982988
//!
//! [model]
//! pD = 1.0
//! clutterRate = 1.0
//! aoi = { xmin = -70.0, xmax = 270.0, ymin = -70.0, ymax = 170.0 }
//!
//! [prior]
//! S0 = [[5.0, 0.0], [0.0, 5.0]]
//! nu0 = 5.0
//! alpha0 = 0.1
//! beta0 = 0.2
//! lambda0u = 1.0
//! ```
//!
//! The `scenario`, `sampler` and `estimation` tables are optional.

use std::path::Path;

use anyhow::{bail, Context};
use nalgebra::Matrix2;
use pmbm_map::estimation::EstimationConfig;
use pmbm_map::model::{Aoi, FovParams, ModelConfig, PriorParams};
use pmbm_map::sampler::{SamplerConfig, SweepOrder, DEFAULT_GATE_DISTANCE};
use pmbm_map::scenario::ScenarioOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    pub fov: FovSection,
    pub model: ModelSection,
    pub prior: PriorSection,
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub estimation: EstimationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct FovSection {
    pub range: f64,
    pub half_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ModelSection {
    #[serde(rename = "pD")]
    pub p_detect: f64,
    pub clutter_rate: f64,
    pub aoi: AoiSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AoiSection {
    pub xmin: f64,
    pub xmax: f64,
    pub ymin: f64,
    pub ymax: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSection {
    #[serde(rename = "S0")]
    pub s0: [[f64; 2]; 2],
    pub nu0: f64,
    pub alpha0: f64,
    pub beta0: f64,
    #[serde(default = "default_lambda0u")]
    pub lambda0u: f64,
}

fn default_lambda0u() -> f64 {
    1.0
}

/// Layout of the simulated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct ScenarioSection {
    pub layout_seed: u64,
    pub extent_scale: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        let d = ScenarioOptions::default();
        Self {
            layout_seed: d.layout_seed,
            extent_scale: d.extent_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sweep {
    #[default]
    Random,
    Systematic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SamplerSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    /// Meters; `inf` disables gating.
    pub gate_distance: f64,
    pub sweep: Sweep,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        Self {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thinning: d.thinning,
            gate_distance: DEFAULT_GATE_DISTANCE,
            sweep: Sweep::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct EstimationSection {
    pub existence_threshold: f64,
    pub assoc_radius: f64,
    pub spurious_fraction: f64,
    pub grid_resolution: f64,
}

impl Default for EstimationSection {
    fn default() -> Self {
        let d = EstimationConfig::default();
        Self {
            existence_threshold: d.existence_threshold,
            assoc_radius: d.assoc_radius,
            spurious_fraction: d.spurious_fraction,
            grid_resolution: 1.0,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Checks every section by building the library types from it.
    pub fn validate(&self) -> anyhow::Result<()> {
        self.model_config()?;
        self.prior()?;
        self.sampler_config().validate()?;
        self.estimation_config().validate()?;
        if !(self.estimation.grid_resolution > 0.0 && self.estimation.grid_resolution.is_finite()) {
            bail!("gridResolution must be positive");
        }
        if !(self.scenario.extent_scale > 0.0 && self.scenario.extent_scale.is_finite()) {
            bail!("extentScale must be positive");
        }
        Ok(())
    }

    pub fn model_config(&self) -> anyhow::Result<ModelConfig> {
        let a = self.model.aoi;
        Ok(ModelConfig::new(
            FovParams::new(self.fov.range, self.fov.half_angle)?,
            self.model.p_detect,
            self.model.clutter_rate,
            Aoi::new(a.xmin, a.xmax, a.ymin, a.ymax)?,
        )?)
    }

    pub fn prior(&self) -> anyhow::Result<PriorParams> {
        let s = self.prior.s0;
        if s[0][1] != s[1][0] {
            bail!("S0 must be symmetric");
        }
        Ok(PriorParams::new(
            Matrix2::new(s[0][0], s[0][1], s[1][0], s[1][1]),
            self.prior.nu0,
            self.prior.alpha0,
            self.prior.beta0,
            self.prior.lambda0u,
        )?)
    }

    pub fn scenario_options(&self) -> ScenarioOptions {
        ScenarioOptions {
            layout_seed: self.scenario.layout_seed,
            extent_scale: self.scenario.extent_scale,
            p_detect: self.model.p_detect,
            clutter_rate: self.model.clutter_rate,
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            iterations: self.sampler.iterations,
            burn_in: self.sampler.burn_in,
            thinning: self.sampler.thinning,
            seed: self.seed,
            gate_distance: self.sampler.gate_distance,
            existence_threshold: self.estimation.existence_threshold,
            sweep: match self.sampler.sweep {
                Sweep::Random => SweepOrder::Random,
                Sweep::Systematic => SweepOrder::Systematic,
            },
        }
    }

    pub fn estimation_config(&self) -> EstimationConfig {
        EstimationConfig {
            existence_threshold: self.estimation.existence_threshold,
            assoc_radius: self.estimation.assoc_radius,
            spurious_fraction: self.estimation.spurious_fraction,
        }
    }

    /// SHA-256 of the canonical TOML form of the effective configuration,
    /// command-line overrides included.
    pub fn digest(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [fov]
        range = 60.0
        halfAngle = 0.5235987755982988
        [model]
        pD = 1.0
        clutterRate = 1.0
        aoi = { xmin = -70.0, xmax = 270.0, ymin = -70.0, ymax = 170.0 }
        [prior]
        S0 = [[5.0, 0.0], [0.0, 5.0]]
        nu0 = 5.0
        alpha0 = 0.1
        beta0 = 0.2
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg: Config = toml::from_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.prior().unwrap(), PriorParams::default());
        assert_eq!(cfg.sampler_config(), SamplerConfig::default());
        assert_eq!(cfg.estimation_config(), EstimationConfig::default());
        assert_eq!(cfg.model_config().unwrap(), pmbm_map::scenario::default_scenario().model);
    }

    #[test]
    fn infinite_gate_round_trips() {
        let mut cfg: Config = toml::from_str(MINIMAL).unwrap();
        cfg.sampler.gate_distance = f64::INFINITY;
        let back: Config = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn digest_tracks_content() {
        let a: Config = toml::from_str(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        b.seed = 9;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(toml::from_str::<Config>(&format!("{MINIMAL}\n[extra]\nx = 1\n")).is_err());
        let mut cfg: Config = toml::from_str(MINIMAL).unwrap();
        cfg.model.p_detect = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg: Config = toml::from_str(MINIMAL).unwrap();
        cfg.prior.s0 = [[5.0, 1.0], [0.0, 5.0]];
        assert!(cfg.validate().is_err());
    }
}
