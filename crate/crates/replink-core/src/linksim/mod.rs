//! Frame-based simulator of the three-node elementary link: multiplexed
//! emission and storage, detection at the measurement node, herald pairing
//! and classification, feed-forward with communication latency, and
//! delivered-state assignment.
//!
//! A single run is strictly event-ordered within each frame. Frames are
//! independent and carry dedicated RNG streams (see [`crate::rng`]), so they
//! may execute concurrently; all aggregation is commutative.

pub mod export;
mod frame;
mod pairing;
pub mod presets;
mod run;

pub use frame::{run_frame, run_frame_with_emissions, sample_emissions, FrameOutcome};
pub use pairing::{classify_herald, filter_retain, pair_consecutive, pair_detections};
pub use run::{DeliveredRecord, LinkAccumulator, LinkSummary, run_link};

use serde::{Deserialize, Serialize};

use crate::photonics::{
    propagation_delay_us, ChannelConfig, ConfigError, DetectorConfig, SourceConfig, TemporalGrid,
};
use crate::qstate::{BellKind, DensityMatrix};
use crate::rng::SimRng;
use rand::Rng;

/// Success probability of passive time-to-polarization conversion when no
/// feed-forward signal drives the switch.
pub const TPC_PASSIVE_SUCCESS: f64 = 0.25;

/// Which node's source emitted a photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    A,
    B,
}

/// Detector identity at the measurement node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectorId {
    D1,
    D2,
}

impl std::fmt::Display for DetectorId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DetectorId::D1 => write!(f, "D1"),
            DetectorId::D2 => write!(f, "D2"),
        }
    }
}

/// Origin tags of a click; at least one tag is always set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub from_a: bool,
    pub from_b: bool,
    pub dark: bool,
}

impl Provenance {
    pub fn is_empty(&self) -> bool {
        !(self.from_a || self.from_b || self.dark)
    }

    /// Tag list in canonical order, e.g. "fromA|dark".
    pub fn tags(&self) -> String {
        let mut parts = Vec::new();
        if self.from_a {
            parts.push("fromA");
        }
        if self.from_b {
            parts.push("fromB");
        }
        if self.dark {
            parts.push("dark");
        }
        parts.join("|")
    }
}

/// Timestamped click at the measurement node.
///
/// Times are in the node-local frame clock, within [0, frame duration); the
/// time-synchronization system aligns the two sources' temporal grids at the
/// beamsplitter, so fiber delays enter only the classical feed-forward
/// latency, not click timestamps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub time_ns: f64,
    pub mode_index: u32,
    pub detector: DetectorId,
    pub provenance: Provenance,
}

/// Noise-budget classification of a herald.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldCategory {
    /// One click from each source, exactly one pair emitted per contributing
    /// source in the relevant modes.
    GenuineCrossSource,
    /// Both clicks trace back to a single source.
    SameSource,
    /// At least one click carries a dark tag.
    DarkAssisted,
    /// Cross-source clicks with extra pairs in the relevant modes, or clicks
    /// of ambiguous origin.
    Multipair,
}

impl std::fmt::Display for HeraldCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            HeraldCategory::GenuineCrossSource => "genuine_cross_source",
            HeraldCategory::SameSource => "same_source",
            HeraldCategory::DarkAssisted => "dark_assisted",
            HeraldCategory::Multipair => "multipair",
        };
        write!(f, "{s}")
    }
}

/// A paired detection: the basic heralding record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeraldRecord {
    pub t1_ns: f64,
    pub t2_ns: f64,
    /// Same detector ⇒ ψ⁺, different detectors ⇒ ψ⁻; determined solely by
    /// detector identities.
    pub parity: BellKind,
    pub category: HeraldCategory,
    pub mode_indices: (u32, u32),
}

impl HeraldRecord {
    pub fn delta_t_ns(&self) -> f64 {
        self.t2_ns - self.t1_ns
    }
}

/// Per-side probabilities with which the verification stage fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationProbs {
    /// Probability of a real retrieved-photon detection per side.
    pub real: [f64; 2],
    /// Probability of an accidental background detection inside the
    /// coincidence window per side.
    pub background: [f64; 2],
}

impl VerificationProbs {
    /// Probability that both sides fire (real or background).
    pub fn fourfold_probability(&self) -> f64 {
        self.side_fire(0) * self.side_fire(1)
    }

    /// Conditional probability that both firings were real detections, given
    /// a fourfold coincidence. Background-involved coincidences carry no
    /// correlation and are scored as white noise.
    pub fn real_fraction(&self) -> f64 {
        let fire = self.fourfold_probability();
        if fire <= 0.0 {
            return 0.0;
        }
        (self.real[0] * self.real[1]) / fire
    }

    fn side_fire(&self, i: usize) -> f64 {
        let r = self.real[i];
        let b = self.background[i];
        r + b - r * b
    }
}

/// A heralded pair routed to delivery, with its assigned conditional state.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveredPair {
    pub herald: HeraldRecord,
    /// Conditional two-qubit state of the memory pair on the real-photon
    /// path, after any feed-forward correction.
    pub state: DensityMatrix,
    /// ψ⁺ whenever feed-forward is active; the heralded parity otherwise.
    pub delivered_kind: BellKind,
    /// Herald time plus the classical latency back to the farthest node.
    pub delivered_at_ns: f64,
    pub retrieval_success: [bool; 2],
    pub verification: VerificationProbs,
}

/// Quantum memory parameters for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    /// Recall efficiency at the configured storage time.
    pub storage_efficiency: f64,
    pub storage_time_us: f64,
    pub bandwidth_mhz: f64,
    /// Number of temporal modes held in parallel; 0 derives it from the grid.
    #[serde(default)]
    pub mode_capacity: u32,
    /// Transmission of the readout and verification chain behind the memory
    /// (conversion optics and analysis detection); a fitted calibration knob.
    #[serde(default = "one")]
    pub readout_efficiency: f64,
    /// Multiplicative gain on the interference visibility applied at
    /// retrieval; models the spectral/temporal filtering of the storage
    /// process. Default 1 (off).
    #[serde(default = "one")]
    pub retrieval_visibility_boost: f64,
}

fn one() -> f64 {
    1.0
}

impl MemoryConfig {
    pub fn validate(&self, grid: &TemporalGrid) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.storage_efficiency) {
            return Err(ConfigError::ProbabilityOutOfRange {
                field: "storage_efficiency",
                value: self.storage_efficiency,
            });
        }
        if self.storage_time_us.is_nan() || self.storage_time_us <= 0.0 {
            return Err(ConfigError::NonPositive {
                field: "storage_time_us",
                value: self.storage_time_us,
            });
        }
        if self.bandwidth_mhz.is_nan() || self.bandwidth_mhz <= 0.0 {
            return Err(ConfigError::NonPositive {
                field: "bandwidth_mhz",
                value: self.bandwidth_mhz,
            });
        }
        if !(0.0..=1.0).contains(&self.readout_efficiency) {
            return Err(ConfigError::ProbabilityOutOfRange {
                field: "readout_efficiency",
                value: self.readout_efficiency,
            });
        }
        if self.retrieval_visibility_boost.is_nan() || self.retrieval_visibility_boost < 0.0 {
            return Err(ConfigError::Negative {
                field: "retrieval_visibility_boost",
                value: self.retrieval_visibility_boost,
            });
        }
        if self.mode_capacity != 0 && self.mode_capacity != grid.mode_count() {
            return Err(ConfigError::CapacityMismatch {
                capacity: self.mode_capacity,
                grid_modes: grid.mode_count(),
            });
        }
        Ok(())
    }
}

/// Heralding scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeraldingMode {
    /// Two-photon interference: two paired clicks herald a time-bin Bell
    /// state; phase-robust.
    Tpi,
    /// Single-photon interference: each click heralds phase-sensitive
    /// number-state entanglement.
    Spi,
}

/// Protocol-level options of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolOptions {
    pub mode: HeraldingMode,
    pub coincidence_window_ns: f64,
    /// Pair-spacing selector: when set, only heralds whose click separation
    /// lies within half a coincidence window of this value are analyzed.
    /// Models the fixed analyzer-interferometer imbalance.
    #[serde(default)]
    pub fixed_delay_filter_ns: Option<f64>,
    /// Disable storage and feed-forward and verify the swapped photons
    /// directly (delayed-choice configuration).
    #[serde(default)]
    pub memory_bypass: bool,
    /// Static phase offsets of the two fiber links (A–C, B–C). Consumed only
    /// by the single-photon-interference bookkeeping.
    #[serde(default)]
    pub channel_phase_offsets_rad: [f64; 2],
    #[serde(default)]
    pub feed_forward: bool,
    /// Interference visibility of the analysis chain downstream of the
    /// heralding detectors; a fitted calibration knob. Default 1.
    #[serde(default = "one")]
    pub analyzer_visibility: f64,
    /// Uncorrelated verification-background rate per node per milliwatt of
    /// pump power; drives the accidental-coincidence fraction inside the
    /// coincidence window. A fitted calibration knob. Default 0.
    #[serde(default)]
    pub background_rate_hz_per_mw: f64,
    /// Setting-independent white-noise admixture at verification. Default 0.
    #[serde(default)]
    pub noise_floor: f64,
    /// Fraction of wall time spent emitting (the rest is storage
    /// preparation); rescales absolute rates only.
    #[serde(default = "one")]
    pub duty_cycle: f64,
    /// Classical processing delay added to the feed-forward return latency.
    #[serde(default)]
    pub feed_forward_processing_us: f64,
}

impl ProtocolOptions {
    pub fn validate(&self, grid: &TemporalGrid) -> Result<(), ConfigError> {
        if self.coincidence_window_ns.is_nan() || self.coincidence_window_ns <= 0.0 {
            return Err(ConfigError::NonPositive {
                field: "coincidence_window_ns",
                value: self.coincidence_window_ns,
            });
        }
        if let Some(filter) = self.fixed_delay_filter_ns {
            let ratio = filter / grid.mode_duration_ns;
            let aligned = filter > 0.0 && (ratio - ratio.round()).abs() <= 1e-9 && ratio.round() >= 1.0;
            if !aligned {
                return Err(ConfigError::FilterNotModeAligned {
                    filter_ns: filter,
                    mode_ns: grid.mode_duration_ns,
                });
            }
        }
        if !(0.0..=1.0).contains(&self.analyzer_visibility) {
            return Err(ConfigError::ProbabilityOutOfRange {
                field: "analyzer_visibility",
                value: self.analyzer_visibility,
            });
        }
        if self.background_rate_hz_per_mw.is_nan() || self.background_rate_hz_per_mw < 0.0 {
            return Err(ConfigError::Negative {
                field: "background_rate_hz_per_mw",
                value: self.background_rate_hz_per_mw,
            });
        }
        if !(0.0..=1.0).contains(&self.noise_floor) {
            return Err(ConfigError::ProbabilityOutOfRange {
                field: "noise_floor",
                value: self.noise_floor,
            });
        }
        if self.duty_cycle.is_nan() || self.duty_cycle <= 0.0 || self.duty_cycle > 1.0 {
            return Err(ConfigError::ProbabilityOutOfRange {
                field: "duty_cycle",
                value: self.duty_cycle,
            });
        }
        if self.feed_forward_processing_us.is_nan() || self.feed_forward_processing_us < 0.0 {
            return Err(ConfigError::Negative {
                field: "feed_forward_processing_us",
                value: self.feed_forward_processing_us,
            });
        }
        Ok(())
    }
}

/// Full scenario parameterization of one link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub source_a: SourceConfig,
    pub source_b: SourceConfig,
    pub channel_ac: ChannelConfig,
    pub channel_bc: ChannelConfig,
    pub detector_d1: DetectorConfig,
    pub detector_d2: DetectorConfig,
    pub memory_a: MemoryConfig,
    pub memory_b: MemoryConfig,
    pub grid: TemporalGrid,
    pub protocol: ProtocolOptions,
    pub seed: u64,
}

impl LinkConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.source_a.validate()?;
        self.source_b.validate()?;
        self.channel_ac.validate()?;
        self.channel_bc.validate()?;
        self.detector_d1.validate()?;
        self.detector_d2.validate()?;
        self.grid.validate()?;
        self.memory_a.validate(&self.grid)?;
        self.memory_b.validate(&self.grid)?;
        self.protocol.validate(&self.grid)?;
        if self.protocol.feed_forward && !self.protocol.memory_bypass {
            let round_trip = self.round_trip_us();
            let storage = self.memory_a.storage_time_us.min(self.memory_b.storage_time_us);
            if storage < round_trip {
                return Err(ConfigError::StorageTooShort {
                    storage_us: storage,
                    round_trip_us: round_trip,
                });
            }
        }
        Ok(())
    }

    /// One-way classical latency from the measurement node to the farther
    /// repeater node.
    pub fn return_latency_us(&self) -> f64 {
        propagation_delay_us(&self.channel_ac).max(propagation_delay_us(&self.channel_bc))
            + self.protocol.feed_forward_processing_us
    }

    /// Worst-case round trip between the measurement node and either
    /// repeater node.
    pub fn round_trip_us(&self) -> f64 {
        2.0 * propagation_delay_us(&self.channel_ac).max(propagation_delay_us(&self.channel_bc))
            + self.protocol.feed_forward_processing_us
    }

    /// Mutual squared overlap of the two sources' photons as seen at the
    /// beamsplitter.
    pub fn mutual_indistinguishability(&self) -> f64 {
        (self.source_a.indistinguishability * self.source_b.indistinguishability).sqrt()
    }

    /// Effective interference visibility of the delivered (or bypassed)
    /// state: source overlap times the analysis-chain visibility, boosted by
    /// the storage filtering when the memories are in the path.
    pub fn effective_visibility(&self) -> f64 {
        let base = self.mutual_indistinguishability() * self.protocol.analyzer_visibility;
        if self.protocol.memory_bypass {
            base.clamp(0.0, 1.0)
        } else {
            let boost = (self.memory_a.retrieval_visibility_boost
                * self.memory_b.retrieval_visibility_boost)
                .sqrt();
            (base * boost).clamp(0.0, 1.0)
        }
    }

    /// Pairing window: clicks further apart than this cannot herald a stored
    /// pair.
    pub fn storage_window_ns(&self) -> f64 {
        (self.memory_a.storage_time_us.min(self.memory_b.storage_time_us) * 1e3)
            .min(self.grid.frame_duration_ns())
    }
}

/// Conditional state assigned to a herald of the given category and parity.
///
/// Genuine cross-source heralds carry the Bell state of the heralded parity
/// with visibility `v_eff`, the remainder being the phase-randomized mixture
/// of the |01⟩ and |10⟩ populations. Multipair heralds keep one excitation
/// per side through the fourfold post-selection but lose the phase
/// coherence, so they are assigned the maximally mixed state on the
/// post-selected {|01⟩, |10⟩} subspace. Same-source and dark-assisted
/// heralds get the worst-case full-rank mixed state.
pub fn conditional_state(category: HeraldCategory, parity: BellKind, v_eff: f64) -> DensityMatrix {
    match category {
        HeraldCategory::GenuineCrossSource => {
            let v = v_eff.clamp(0.0, 1.0);
            DensityMatrix::mix(&[
                (v, DensityMatrix::bell(parity)),
                (1.0 - v, DensityMatrix::dephased_psi()),
            ])
        }
        HeraldCategory::Multipair => DensityMatrix::dephased_psi(),
        HeraldCategory::SameSource | HeraldCategory::DarkAssisted => {
            DensityMatrix::maximally_mixed()
        }
    }
}

/// Applies the feed-forward correction: ψ⁻ heralds get a π phase shift on
/// node A, so the delivered state is consistently ψ⁺. Returns `None` when the
/// memories expire before the classical signal arrives (the pair is dropped
/// and counted in the loss budget by the caller).
pub fn apply_feedforward(pair: DeliveredPair, cfg: &LinkConfig) -> Option<DeliveredPair> {
    debug_assert!(cfg.protocol.feed_forward);
    let storage_ns = cfg.memory_a.storage_time_us.min(cfg.memory_b.storage_time_us) * 1e3;
    let return_ns = cfg.return_latency_us() * 1e3;
    if pair.herald.t2_ns + return_ns > storage_ns {
        return None;
    }
    let mut pair = pair;
    if pair.herald.parity == BellKind::PsiMinus {
        pair.state = pair.state.phase_flip_a();
    }
    pair.delivered_kind = BellKind::PsiPlus;
    pair.delivered_at_ns = pair.herald.t2_ns + return_ns;
    Some(pair)
}

/// Independent recall attempts on the two memories; success probability is
/// the storage efficiency of each side. The readout chain behind the memory
/// is sampled separately by the frame pipeline.
pub fn retrieve(
    pair: &mut DeliveredPair,
    mem_a: &MemoryConfig,
    mem_b: &MemoryConfig,
    rng: &mut SimRng,
) {
    let roll_a = rng.random::<f64>() < mem_a.storage_efficiency;
    let roll_b = rng.random::<f64>() < mem_b.storage_efficiency;
    pair.retrieval_success[0] &= roll_a;
    pair.retrieval_success[1] &= roll_b;
}

/// A single-detection herald in the single-photon-interference scheme,
/// carrying the accumulated number-state phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiHerald {
    pub time_ns: f64,
    pub detector: DetectorId,
    pub delta_phi_rad: f64,
}

/// Accumulated number-state phase: the sum of the configured laser phases
/// and the per-link channel phase offsets.
pub fn spi_delta_phi(cfg: &LinkConfig) -> f64 {
    cfg.source_a.laser_phase_rad
        + cfg.source_b.laser_phase_rad
        + cfg.protocol.channel_phase_offsets_rad[0]
        + cfg.protocol.channel_phase_offsets_rad[1]
}

/// Reinterprets a frame's detections as single-photon-interference heralds:
/// every click heralds number-state entanglement with the configured phase.
pub fn spi_heralds_from_events(events: &[DetectionEvent], cfg: &LinkConfig) -> Vec<SpiHerald> {
    let phi = spi_delta_phi(cfg);
    events
        .iter()
        .map(|e| SpiHerald { time_ns: e.time_ns, detector: e.detector, delta_phi_rad: phi })
        .collect()
}

/// Runs one frame in the single-photon-interference mode and reports all
/// heralding clicks with their number-state phase record.
pub fn spi_heralding(
    cfg: &LinkConfig,
    rng: &mut SimRng,
) -> Result<(Vec<DetectionEvent>, Vec<SpiHerald>), ConfigError> {
    cfg.validate()?;
    let emissions = sample_emissions(cfg, rng);
    let events = frame::detect_frame(cfg, &emissions, rng);
    let heralds = spi_heralds_from_events(&events, cfg);
    Ok((events, heralds))
}
