//! One frame of the multiplexed protocol: emission, storage, detection,
//! heralding and delivery.

use crate::photonics::{
    mean_pairs_per_mode, sample_dark_counts, sample_pair_count, survival_probability, thin,
    ConfigError,
};
use crate::rng::SimRng;
use rand::Rng;

use super::pairing::{build_herald, filter_retain, pair_consecutive};
use super::{
    apply_feedforward, conditional_state, DeliveredPair, DetectionEvent, DetectorId,
    HeraldRecord, LinkConfig, Provenance, Source, VerificationProbs, TPC_PASSIVE_SUCCESS,
};

/// Emission and storage record for one mode of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModeEmission {
    pub mode: u32,
    pub a_pairs: u32,
    pub a_stored: u32,
    pub b_pairs: u32,
    pub b_stored: u32,
}

/// Sparse per-frame emission record, sorted by mode index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameEmissions {
    modes: Vec<ModeEmission>,
}

impl FrameEmissions {
    /// Builds a record from (mode, a_pairs, a_stored, b_pairs, b_stored)
    /// rows; rows need not be sorted.
    pub fn from_rows(rows: &[(u32, u32, u32, u32, u32)]) -> Self {
        let mut modes: Vec<ModeEmission> = rows
            .iter()
            .map(|&(mode, a_pairs, a_stored, b_pairs, b_stored)| ModeEmission {
                mode,
                a_pairs,
                a_stored,
                b_pairs,
                b_stored,
            })
            .collect();
        modes.sort_by_key(|m| m.mode);
        Self { modes }
    }

    fn find(&self, mode: u32) -> Option<&ModeEmission> {
        self.modes
            .binary_search_by_key(&mode, |m| m.mode)
            .ok()
            .map(|i| &self.modes[i])
    }

    pub fn pairs(&self, source: Source, mode: u32) -> u32 {
        self.find(mode)
            .map(|m| match source {
                Source::A => m.a_pairs,
                Source::B => m.b_pairs,
            })
            .unwrap_or(0)
    }

    pub fn stored(&self, source: Source, mode: u32) -> u32 {
        self.find(mode)
            .map(|m| match source {
                Source::A => m.a_stored,
                Source::B => m.b_stored,
            })
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ModeEmission> {
        self.modes.iter()
    }

    /// True when at least one stored excitation exists on `source`'s side in
    /// any of the given modes.
    pub fn stored_in_any(&self, source: Source, modes: (u32, u32)) -> bool {
        self.stored(source, modes.0) > 0
            || (modes.1 != modes.0 && self.stored(source, modes.1) > 0)
    }
}

/// Samples per-mode pair emission and local storage for one frame.
pub fn sample_emissions(cfg: &LinkConfig, rng: &mut SimRng) -> FrameEmissions {
    let mu_a = mean_pairs_per_mode(&cfg.source_a, &cfg.grid);
    let mu_b = mean_pairs_per_mode(&cfg.source_b, &cfg.grid);
    let mode_count = cfg.grid.mode_count();
    let mut modes = Vec::new();
    for mode in 0..mode_count {
        let a_pairs = sample_pair_count(mu_a, cfg.source_a.statistics, rng);
        let b_pairs = sample_pair_count(mu_b, cfg.source_b.statistics, rng);
        if a_pairs == 0 && b_pairs == 0 {
            continue;
        }
        let a_stored = thin(a_pairs, cfg.source_a.heralding_efficiency, rng);
        let b_stored = thin(b_pairs, cfg.source_b.heralding_efficiency, rng);
        modes.push(ModeEmission { mode, a_pairs, a_stored, b_pairs, b_stored });
    }
    FrameEmissions { modes }
}

/// Propagates idlers to the measurement node, interferes them, folds in
/// detector efficiency and dark counts, and returns the time-sorted clicks.
pub(super) fn detect_frame(
    cfg: &LinkConfig,
    emissions: &FrameEmissions,
    rng: &mut SimRng,
) -> Vec<DetectionEvent> {
    let survival_a = survival_probability(&cfg.channel_ac);
    let survival_b = survival_probability(&cfg.channel_bc);
    let v_bsm = cfg.mutual_indistinguishability();
    let mode_ns = cfg.grid.mode_duration_ns;

    // (mode, detector) → provenance + click time.
    let mut clicks: Vec<(u32, DetectorId, Provenance, f64)> = Vec::new();

    for em in emissions.iter() {
        let arrive_a = thin(em.a_pairs, survival_a, rng);
        let arrive_b = thin(em.b_pairs, survival_b, rng);
        if arrive_a + arrive_b == 0 {
            continue;
        }
        let routed = crate::photonics::bsm_interfere(arrive_a, arrive_b, v_bsm, rng);
        let detections = [
            (
                DetectorId::D1,
                thin(routed.d1_from_a, cfg.detector_d1.efficiency, rng),
                thin(routed.d1_from_b, cfg.detector_d1.efficiency, rng),
            ),
            (
                DetectorId::D2,
                thin(routed.d2_from_a, cfg.detector_d2.efficiency, rng),
                thin(routed.d2_from_b, cfg.detector_d2.efficiency, rng),
            ),
        ];
        for (det, from_a, from_b) in detections {
            if from_a + from_b == 0 {
                continue;
            }
            let time = (em.mode as f64 + rng.random::<f64>()) * mode_ns;
            clicks.push((
                em.mode,
                det,
                Provenance { from_a: from_a > 0, from_b: from_b > 0, dark: false },
                time,
            ));
        }
    }

    // Dark counts: Poisson over the full frame per detector, uniform times.
    let frame_ns = cfg.grid.frame_duration_ns();
    for (det, det_cfg) in [(DetectorId::D1, &cfg.detector_d1), (DetectorId::D2, &cfg.detector_d2)] {
        let n_dark = sample_dark_counts(det_cfg, frame_ns, rng);
        for _ in 0..n_dark {
            let time = rng.random::<f64>() * frame_ns;
            let mode = ((time / mode_ns) as u32).min(cfg.grid.mode_count() - 1);
            // A dark electron inside a mode that already clicked merges into
            // that click (threshold detector).
            if let Some(existing) =
                clicks.iter_mut().find(|(m, d, _, _)| *m == mode && *d == det)
            {
                existing.2.dark = true;
            } else {
                clicks.push((
                    mode,
                    det,
                    Provenance { from_a: false, from_b: false, dark: true },
                    time,
                ));
            }
        }
    }

    clicks.sort_by(|a, b| a.3.partial_cmp(&b.3).unwrap());
    clicks
        .into_iter()
        .map(|(mode, detector, provenance, time_ns)| DetectionEvent {
            time_ns,
            mode_index: mode,
            detector,
            provenance,
        })
        .collect()
}

/// Everything one frame produces.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub events: Vec<DetectionEvent>,
    /// All paired detections within the storage window, before the
    /// fixed-delay acceptance.
    pub heralds: Vec<HeraldRecord>,
    /// Pairs routed through delivery (fixed-delay accepted, surviving
    /// feed-forward deadlines or passive conversion).
    pub delivered: Vec<DeliveredPair>,
    /// Fixed-delay accepted heralds, including ones later dropped.
    pub analyzed: u64,
    /// Heralds whose feed-forward signal arrived after storage expired.
    pub dropped_deadline: u64,
    /// Bypass-mode heralds lost to passive time-to-polarization conversion.
    pub dropped_tpc: u64,
}

/// Runs one frame end to end. Deterministic given `(cfg, rng state)`.
pub fn run_frame(cfg: &LinkConfig, rng: &mut SimRng) -> Result<FrameOutcome, ConfigError> {
    cfg.validate()?;
    let emissions = sample_emissions(cfg, rng);
    Ok(run_frame_with_emissions(cfg, &emissions, rng))
}

/// Same as [`run_frame`] but with the emission record supplied by the
/// caller; the seam used by tests to inject deterministic emissions.
/// The configuration is assumed valid.
pub fn run_frame_with_emissions(
    cfg: &LinkConfig,
    emissions: &FrameEmissions,
    rng: &mut SimRng,
) -> FrameOutcome {
    let events = detect_frame(cfg, emissions, rng);
    let storage_window = cfg.storage_window_ns();
    let heralds: Vec<HeraldRecord> = pair_consecutive(&events, storage_window)
        .into_iter()
        .map(|(i, j)| build_herald(&events[i], &events[j], emissions))
        .collect();

    let accepted = filter_retain(heralds.clone(), &cfg.protocol);
    let analyzed = accepted.len() as u64;

    let mut delivered = Vec::with_capacity(accepted.len());
    let mut dropped_deadline = 0;
    let mut dropped_tpc = 0;
    let v_eff = cfg.effective_visibility();

    for herald in accepted {
        let pair = assemble_pair(cfg, emissions, herald, v_eff, rng);
        if cfg.protocol.memory_bypass {
            // Delayed-choice photonic verification: no storage or
            // feed-forward; passive conversion keeps a quarter of the pairs,
            // both parities retained.
            if rng.random::<f64>() < TPC_PASSIVE_SUCCESS {
                delivered.push(pair);
            } else {
                dropped_tpc += 1;
            }
        } else if cfg.protocol.feed_forward {
            match apply_feedforward(pair, cfg) {
                Some(p) => delivered.push(p),
                None => dropped_deadline += 1,
            }
        } else {
            delivered.push(pair);
        }
    }

    FrameOutcome { events, heralds, delivered, analyzed, dropped_deadline, dropped_tpc }
}

fn assemble_pair(
    cfg: &LinkConfig,
    emissions: &FrameEmissions,
    herald: HeraldRecord,
    v_eff: f64,
    rng: &mut SimRng,
) -> DeliveredPair {
    let state = conditional_state(herald.category, herald.parity, v_eff);
    let delivered_kind = herald.parity;
    let delivered_at_ns = herald.t2_ns + cfg.return_latency_us() * 1e3;

    // Emitted pair counts in the herald's modes, per side.
    let modes = herald.mode_indices;
    let sources = [Source::A, Source::B];
    let mut emitted = [0u32; 2];
    for (i, src) in sources.iter().enumerate() {
        emitted[i] = emissions.pairs(*src, modes.0)
            + if modes.1 != modes.0 { emissions.pairs(*src, modes.1) } else { 0 };
    }
    // Sampled presence flags drive the counted estimators and exports; the
    // verification weights marginalize over signal storage instead
    // (presence probability 1 − (1 − η_h)ⁿ), which has the same expectation
    // with far lower variance.
    let present = [
        emissions.stored_in_any(Source::A, modes),
        emissions.stored_in_any(Source::B, modes),
    ];
    let heralding = [cfg.source_a.heralding_efficiency, cfg.source_b.heralding_efficiency];
    let bypass = cfg.protocol.memory_bypass;
    let mems = [&cfg.memory_a, &cfg.memory_b];
    let pumps = [cfg.source_a.pump_power_mw, cfg.source_b.pump_power_mw];
    let window_s = cfg.protocol.coincidence_window_ns * 1e-9;

    let mut real = [0.0; 2];
    let mut background = [0.0; 2];
    let mut success = [false; 2];
    for i in 0..2 {
        let presence_prob = 1.0 - (1.0 - heralding[i]).powi(emitted[i] as i32);
        let storage = if bypass { 1.0 } else { mems[i].storage_efficiency };
        real[i] = presence_prob * storage * mems[i].readout_efficiency;
        background[i] = cfg.protocol.background_rate_hz_per_mw * pumps[i] * window_s;
        let storage_ok = bypass || rng.random::<f64>() < mems[i].storage_efficiency;
        let readout_ok = rng.random::<f64>() < mems[i].readout_efficiency;
        success[i] = present[i] && storage_ok && readout_ok;
    }

    DeliveredPair {
        herald,
        state,
        delivered_kind,
        delivered_at_ns,
        retrieval_success: success,
        verification: VerificationProbs { real, background },
    }
}
