//! Scenario documents: JSON files describing a link configuration, frame
//! budget, optional sweep and debug source, and output locations.
//!
//! The schema is strict: unknown keys are rejected, and all physical
//! quantities carry their unit in the key name.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use replink_core::analysis::{EstimatorMode, SweepSpec};
use replink_core::linksim::LinkConfig;
use replink_core::qstate::BellKind;

use crate::CliError;

/// Exact Bell-diagonal state injected in place of the simulated link for
/// estimator shakedowns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DebugSource {
    pub werner_p: f64,
    pub kind: BellKind,
}

/// Output file names, relative to the output directory. Unset entries fall
/// back to standard names.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub events: Option<String>,
    #[serde(default)]
    pub heralds: Option<String>,
    #[serde(default)]
    pub deliveries: Option<String>,
    #[serde(default)]
    pub report: Option<String>,
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub manifest: Option<String>,
}

impl OutputPaths {
    pub fn events_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(self.events.as_deref().unwrap_or("events.tsv"))
    }
    pub fn heralds_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(self.heralds.as_deref().unwrap_or("heralds.tsv"))
    }
    pub fn deliveries_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(self.deliveries.as_deref().unwrap_or("deliveries.tsv"))
    }
    pub fn report_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(self.report.as_deref().unwrap_or("report.json"))
    }
    pub fn grid_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(self.grid.as_deref().unwrap_or("grid.csv"))
    }
    pub fn manifest_path(&self, out_dir: &Path) -> PathBuf {
        out_dir.join(self.manifest.as_deref().unwrap_or("manifest.json"))
    }
}

fn default_frames() -> u64 {
    100_000
}

fn default_samples() -> u64 {
    10_000
}

fn default_compare_offsets() -> Vec<f64> {
    vec![0.0, 0.3, 0.7, 1.2, 1.9]
}

/// A full scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub link: LinkConfig,
    #[serde(default = "default_frames")]
    pub frames: u64,
    #[serde(default)]
    pub estimator: EstimatorMode,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub debug_source: Option<DebugSource>,
    /// Samples per measurement setting for campaigns driven by a debug
    /// source.
    #[serde(default = "default_samples")]
    pub samples_per_setting: u64,
    /// Applied phase offsets probed by the heralding-scheme comparison.
    #[serde(default = "default_compare_offsets")]
    pub compare_offsets_rad: Vec<f64>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

/// A parsed scenario together with its canonical form and hash.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: ScenarioFile,
    /// Canonical JSON (sorted keys) of the effective document, after
    /// command-line overrides.
    pub canonical: String,
    /// SHA-256 of the canonical form, hex-encoded; stable across platforms.
    pub config_hash: String,
}

/// One `key=value` override with a dotted path into the scenario document.
#[derive(Debug, Clone)]
pub struct Override {
    pub path: String,
    pub value: String,
}

impl Override {
    pub fn parse(raw: &str) -> Result<Self, CliError> {
        let (path, value) = raw
            .split_once('=')
            .ok_or_else(|| CliError::BadOverride(raw.to_string()))?;
        if path.is_empty() {
            return Err(CliError::BadOverride(raw.to_string()));
        }
        Ok(Self { path: path.to_string(), value: value.to_string() })
    }
}

/// Loads, overrides, validates and hashes a scenario document.
pub fn load_scenario(
    path: &Path,
    seed: Option<u64>,
    frames: Option<u64>,
    overrides: &[Override],
) -> Result<LoadedScenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Unreadable(path.to_path_buf(), e.to_string()))?;

    // Parse straight into the schema first so syntax and schema errors carry
    // line/column anchors from the original text.
    let _probe: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Schema(path.to_path_buf(), e.to_string()))?;

    let mut doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Schema(path.to_path_buf(), e.to_string()))?;
    if let Some(seed) = seed {
        set_path(&mut doc, "link.seed", Value::from(seed))?;
    }
    if let Some(frames) = frames {
        set_path(&mut doc, "frames", Value::from(frames))?;
    }
    for ov in overrides {
        let value = parse_scalar(&ov.value);
        set_path(&mut doc, &ov.path, value)?;
    }

    let scenario: ScenarioFile = serde_json::from_value(doc.clone())
        .map_err(|e| CliError::Schema(path.to_path_buf(), e.to_string()))?;
    scenario.link.validate().map_err(CliError::Physics)?;
    if let Some(sweep) = &scenario.sweep {
        sweep.validate().map_err(|e| CliError::Schema(path.to_path_buf(), e.to_string()))?;
    }
    if let Some(dbg) = &scenario.debug_source {
        if !(0.0..=1.0).contains(&dbg.werner_p) {
            return Err(CliError::Schema(
                path.to_path_buf(),
                format!("debug_source.werner_p = {} outside [0, 1]", dbg.werner_p),
            ));
        }
    }

    // serde_json maps are sorted, so this serialization is canonical.
    let canonical = serde_json::to_string(&doc).expect("canonical serialization");
    let config_hash = hex_digest(&canonical);
    Ok(LoadedScenario { scenario, canonical, config_hash })
}

pub fn hex_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn set_path(doc: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cursor = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        match cursor {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                cursor = map
                    .get_mut(*part)
                    .ok_or_else(|| CliError::BadOverride(format!("unknown path {path}")))?;
            }
            Value::Array(items) => {
                let idx: usize = part
                    .parse()
                    .map_err(|_| CliError::BadOverride(format!("bad index in {path}")))?;
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| CliError::BadOverride(format!("index out of range in {path}")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                cursor = slot;
            }
            _ => return Err(CliError::BadOverride(format!("path {path} crosses a scalar"))),
        }
    }
    Err(CliError::BadOverride(format!("empty path {path}")))
}
