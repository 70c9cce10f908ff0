//! On-disk experiment description (TOML) and its validation.
//!
//! Units are part of every key name so a window can never be mistaken for a
//! rate. Unknown keys are rejected.

use std::path::Path;

use serde::Deserialize;

use heraldg2::detstate::DEFAULT_TRUNCATION_EPSILON;
use heraldg2::{DetectorSpec, ExperimentConfig};

use crate::CliError;

pub const DEFAULT_PLATEAU_DELTA: f64 = 0.1;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    coincidence_window_s: f64,
    #[serde(default = "default_truncation_epsilon")]
    truncation_epsilon: f64,
    #[serde(default = "default_plateau_delta")]
    plateau_delta: f64,
    source: SourceSection,
    detectors: DetectorsSection,
}

fn default_truncation_epsilon() -> f64 {
    DEFAULT_TRUNCATION_EPSILON
}

fn default_plateau_delta() -> f64 {
    DEFAULT_PLATEAU_DELTA
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceSection {
    #[serde(rename = "type")]
    kind: String,
    pair_rate_hz: f64,
    cascade_efficiency: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorsSection {
    herald_stage2: DetectorSection,
    herald_stage1: Option<DetectorSection>,
    g2_a: DetectorSection,
    g2_b: DetectorSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectorSection {
    eta: f64,
    dark_hz: f64,
}

/// A validated experiment plus the numeric knobs that ride along with it.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub experiment: ExperimentConfig,
    pub truncation_epsilon: f64,
    pub plateau_delta: f64,
}

fn detector(section: &DetectorSection, key: &str) -> Result<DetectorSpec, CliError> {
    DetectorSpec::new(section.eta, section.dark_hz)
        .map_err(|e| CliError::usage(format!("detectors.{key}: {e}")))
}

pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;

    if !(file.truncation_epsilon > 0.0 && file.truncation_epsilon < 1.0) {
        return Err(CliError::usage(format!(
            "truncation_epsilon must lie in (0, 1), got {}",
            file.truncation_epsilon
        )));
    }
    if !(file.plateau_delta >= 0.0 && file.plateau_delta.is_finite()) {
        return Err(CliError::usage(format!(
            "plateau_delta must be finite and >= 0, got {}",
            file.plateau_delta
        )));
    }

    let herald_stage2 = detector(&file.detectors.herald_stage2, "herald_stage2")?;
    let g2_a = detector(&file.detectors.g2_a, "g2_a")?;
    let g2_b = detector(&file.detectors.g2_b, "g2_b")?;

    let experiment = match file.source.kind.as_str() {
        "spdc" => {
            if file.source.cascade_efficiency.is_some() {
                return Err(CliError::usage(
                    "source.cascade_efficiency is only valid for source.type = \"cspdc\"".into(),
                ));
            }
            if file.detectors.herald_stage1.is_some() {
                return Err(CliError::usage(
                    "detectors.herald_stage1 is only valid for source.type = \"cspdc\"".into(),
                ));
            }
            ExperimentConfig::spdc(
                file.coincidence_window_s,
                file.source.pair_rate_hz,
                herald_stage2,
                g2_a,
                g2_b,
            )
            .map_err(|e| CliError::usage(e.to_string()))?
        }
        "cspdc" => {
            let p = file.source.cascade_efficiency.ok_or_else(|| {
                CliError::usage(
                    "source.cascade_efficiency is required for source.type = \"cspdc\"".into(),
                )
            })?;
            let stage1 = file.detectors.herald_stage1.as_ref().ok_or_else(|| {
                CliError::usage(
                    "detectors.herald_stage1 is required for source.type = \"cspdc\"".into(),
                )
            })?;
            let herald_stage1 = detector(stage1, "herald_stage1")?;
            ExperimentConfig::cspdc(
                file.coincidence_window_s,
                file.source.pair_rate_hz,
                p,
                herald_stage2,
                herald_stage1,
                g2_a,
                g2_b,
            )
            .map_err(|e| CliError::usage(e.to_string()))?
        }
        other => {
            return Err(CliError::usage(format!(
                "source.type must be \"spdc\" or \"cspdc\", got \"{other}\""
            )));
        }
    };

    Ok(LoadedConfig {
        experiment,
        truncation_epsilon: file.truncation_epsilon,
        plateau_delta: file.plateau_delta,
    })
}
