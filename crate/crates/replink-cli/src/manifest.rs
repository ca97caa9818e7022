//! Run manifests: provenance records tying outputs to the exact
//! configuration and seed that produced them.

use serde::{Deserialize, Serialize};

/// Manifest written next to every run's outputs.
///
/// Timestamps are on the simulated clock (start of frame 0 and end of the
/// last frame): identical runs must produce identical manifests, so
/// wall-clock times have no place here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub frames: u64,
    pub sim_started_us: f64,
    pub sim_finished_us: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(
        config_hash: &str,
        seed: u64,
        frames: u64,
        frame_duration_us: f64,
        outputs: Vec<String>,
    ) -> Self {
        Self {
            config_hash_sha256: config_hash.to_string(),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            frames,
            sim_started_us: 0.0,
            sim_finished_us: frames as f64 * frame_duration_us,
            outputs,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serialization");
        text.push('\n');
        text
    }
}
