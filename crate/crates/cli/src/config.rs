//! The single JSON configuration document. Every section is optional and
//! falls back to its defaults; unknown keys are rejected. Command-line flags
//! are applied on top of the parsed document.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sps_core::analysis::{G2Config, HomAnalysisConfig};
use sps_core::budget::{reference_collection_stages, EfficiencyStage};
use sps_core::fitting::{DecayModel, Weighting};
use sps_core::mc::{single_channel_sigma_ps, DetectorParams, HomConfig, PulseTrainConfig};
use sps_core::model::{CavityMode, CouplingGeometry, EmitterParams};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub seed: u64,
    pub emitter: EmitterParams,
    pub detector: DetectorParams,
    pub hbt: HbtSection,
    pub hom: HomSection,
    pub cavity: CavityMode,
    pub geometry: CouplingGeometry,
    pub g2: G2Config,
    pub hom_analysis: HomAnalysisConfig,
    pub sweep: SweepSection,
    pub lifetime: LifetimeSection,
    pub saturation: SaturationSection,
    pub spatial: SpatialSection,
    pub budget: BudgetSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            emitter: EmitterParams::default(),
            detector: DetectorParams::default(),
            hbt: HbtSection::default(),
            hom: HomSection::default(),
            cavity: CavityMode::default(),
            geometry: CouplingGeometry::default(),
            g2: G2Config::default(),
            hom_analysis: HomAnalysisConfig::default(),
            sweep: SweepSection::default(),
            lifetime: LifetimeSection::default(),
            saturation: SaturationSection::default(),
            spatial: SpatialSection::default(),
            budget: BudgetSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HbtSection {
    pub pulse_train: PulseTrainConfig,
    /// When set, the extra-photon probability is calibrated to give this
    /// g²(0) and `emitter.p_multi` is ignored.
    pub target_g2: Option<f64>,
}

impl Default for HbtSection {
    fn default() -> Self {
        Self { pulse_train: PulseTrainConfig::default(), target_g2: Some(0.085) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HomSection {
    pub pulse_train: PulseTrainConfig,
    pub interferometer: HomConfig,
}

impl Default for HomSection {
    fn default() -> Self {
        Self { pulse_train: PulseTrainConfig::hom_default(), interferometer: HomConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub windows_ps: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { windows_ps: (1..=20).map(|k| 100.0 * k as f64).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifetimeSection {
    pub rep_period_ps: f64,
    pub bin_width_ps: i64,
    pub model: DecayModel,
    pub irf_sigma_ps: f64,
}

impl Default for LifetimeSection {
    fn default() -> Self {
        Self {
            rep_period_ps: 25_000.0,
            bin_width_ps: 16,
            model: DecayModel::Single,
            irf_sigma_ps: single_channel_sigma_ps(&DetectorParams::default(), &PulseTrainConfig::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaturationSection {
    pub weighting: Weighting,
}

impl Default for SaturationSection {
    fn default() -> Self {
        Self { weighting: Weighting::Uniform }
    }
}

/// Mode-profile calibration and evaluation grid for Purcell maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpatialSection {
    pub drop_x_nm: f64,
    pub drop_y_nm: f64,
    pub drop_factor: f64,
    pub half_extent_nm: f64,
    pub step_nm: f64,
}

impl Default for SpatialSection {
    fn default() -> Self {
        Self { drop_x_nm: 150.0, drop_y_nm: 85.0, drop_factor: 10.0, half_extent_nm: 300.0, step_nm: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetSection {
    pub stages: Vec<EfficiencyStage>,
    pub include_detector: bool,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self { stages: reference_collection_stages(), include_detector: false }
    }
}

fn in_section(section: &str, r: sps_core::Result<()>) -> CliResult<()> {
    r.map_err(|e| match e {
        sps_core::Error::InvalidParameter { name, reason } => CliError::Config(format!("{section}.{name}: {reason}")),
        other => CliError::Config(format!("{section}: {other}")),
    })
}

fn check(path: &str, ok: bool, reason: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(format!("{path}: {reason}")))
    }
}

impl Config {
    /// Checks every section's invariants and reports the first violation
    /// with its field path.
    pub fn validate(&self) -> CliResult<()> {
        in_section("emitter", self.emitter.validate())?;
        in_section("detector", self.detector.validate())?;
        in_section("hbt.pulse_train", self.hbt.pulse_train.validate())?;
        if let Some(g) = self.hbt.target_g2 {
            check("hbt.target_g2", g.is_finite() && (0.0..=0.5).contains(&g), "must lie in [0, 0.5]")?;
        }
        in_section("hom.pulse_train", self.hom.pulse_train.validate())?;
        in_section("hom.interferometer", self.hom.interferometer.validate())?;
        in_section("cavity", self.cavity.validate())?;
        in_section("geometry", self.geometry.validate())?;

        let g2 = &self.g2;
        check("g2.bin_width_ps", g2.bin_width_ps > 0, "must be > 0")?;
        check("g2.rep_period_ps", g2.rep_period_ps.is_finite() && g2.rep_period_ps > 0.0, "must be finite and > 0")?;
        check("g2.n_side_peaks", g2.n_side_peaks >= 1, "must be >= 1")?;
        check("g2.irf_sigma_ps", g2.irf_sigma_ps.is_finite() && g2.irf_sigma_ps >= 0.0, "must be finite and >= 0")?;
        check("g2.dark_rate_hz", g2.dark_rate_hz.is_finite() && g2.dark_rate_hz >= 0.0, "must be finite and >= 0")?;

        let h = &self.hom_analysis;
        check("hom_analysis.bin_width_ps", h.bin_width_ps > 0, "must be > 0")?;
        for (name, v) in [
            ("spacing_ps", h.spacing_ps),
            ("rep_period_ps", h.rep_period_ps),
            ("tau1_ps", h.tau1_ps),
            ("half_range_ps", h.half_range_ps),
        ] {
            check(&format!("hom_analysis.{name}"), v.is_finite() && v > 0.0, "must be finite and > 0")?;
        }
        for (name, v) in [("irf_sigma_ps", h.irf_sigma_ps), ("dark_rate_hz", h.dark_rate_hz)] {
            check(&format!("hom_analysis.{name}"), v.is_finite() && v >= 0.0, "must be finite and >= 0")?;
        }

        let w = &self.sweep.windows_ps;
        check("sweep.windows_ps", !w.is_empty(), "at least one window is required")?;
        check("sweep.windows_ps", w.iter().all(|x| x.is_finite() && *x > 0.0), "windows must be finite and > 0")?;
        check("sweep.windows_ps", w.windows(2).all(|p| p[0] < p[1]), "windows must be strictly ascending")?;

        let l = &self.lifetime;
        check("lifetime.rep_period_ps", l.rep_period_ps.is_finite() && l.rep_period_ps > 0.0, "must be finite and > 0")?;
        check("lifetime.bin_width_ps", l.bin_width_ps > 0, "must be > 0")?;
        check("lifetime.irf_sigma_ps", l.irf_sigma_ps.is_finite() && l.irf_sigma_ps >= 0.0, "must be finite and >= 0")?;

        let s = &self.spatial;
        for (name, v) in [
            ("drop_x_nm", s.drop_x_nm),
            ("drop_y_nm", s.drop_y_nm),
            ("half_extent_nm", s.half_extent_nm),
            ("step_nm", s.step_nm),
        ] {
            check(&format!("spatial.{name}"), v.is_finite() && v > 0.0, "must be finite and > 0")?;
        }
        check("spatial.drop_factor", s.drop_factor.is_finite() && s.drop_factor > 1.0, "must be > 1")?;

        check("budget.stages", !self.budget.stages.is_empty(), "at least one stage is required")?;
        for (i, st) in self.budget.stages.iter().enumerate() {
            in_section(&format!("budget.stages[{i}]"), st.validate())?;
        }
        Ok(())
    }
}

/// Parses and validates a configuration document. Type errors carry the
/// path of the offending field.
pub fn parse_config(text: &str) -> CliResult<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{path}: {}", e.into_inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: Option<&Path>) -> CliResult<Config> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            parse_config(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}
