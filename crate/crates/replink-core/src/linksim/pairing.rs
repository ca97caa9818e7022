//! Detection pairing and herald classification.
//!
//! Pairing is greedy over consecutive detections in time order, mirroring
//! what heralding hardware can decide online: walk the sorted click stream,
//! pair each click with its immediate successor when the separation fits the
//! storage window, otherwise drop the earlier click and move on. Each click
//! is used at most once.

use crate::qstate::BellKind;

use super::frame::FrameEmissions;
use super::{DetectionEvent, HeraldCategory, HeraldRecord, ProtocolOptions, Source};

/// Greedy left-to-right pairing of consecutive detections with separation at
/// most `storage_window_ns`. Returns index pairs into `events`, which must be
/// time-sorted.
pub fn pair_consecutive(events: &[DetectionEvent], storage_window_ns: f64) -> Vec<(usize, usize)> {
    debug_assert!(events.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
    let mut pairs = Vec::new();
    let mut i = 0;
    while i + 1 < events.len() {
        let dt = events[i + 1].time_ns - events[i].time_ns;
        if dt <= storage_window_ns {
            pairs.push((i, i + 1));
            i += 2;
        } else {
            i += 1;
        }
    }
    pairs
}

/// Applies the fixed-delay acceptance: when a filter is configured, only
/// heralds with |t₂ − t₁ − filter| ≤ window/2 are retained.
pub fn filter_retain(heralds: Vec<HeraldRecord>, opts: &ProtocolOptions) -> Vec<HeraldRecord> {
    match opts.fixed_delay_filter_ns {
        None => heralds,
        Some(filter) => heralds
            .into_iter()
            .filter(|h| (h.delta_t_ns() - filter).abs() <= opts.coincidence_window_ns / 2.0)
            .collect(),
    }
}

/// Classifies a herald from its two clicks' provenance and the frame's
/// emission record.
pub fn classify_herald(
    first: &DetectionEvent,
    second: &DetectionEvent,
    emissions: &FrameEmissions,
) -> HeraldCategory {
    if first.provenance.dark || second.provenance.dark {
        return HeraldCategory::DarkAssisted;
    }
    let a_only = |e: &DetectionEvent| e.provenance.from_a && !e.provenance.from_b;
    let b_only = |e: &DetectionEvent| e.provenance.from_b && !e.provenance.from_a;
    let cross = (a_only(first) && b_only(second)) || (b_only(first) && a_only(second));
    if cross {
        let mut modes = vec![first.mode_index];
        if second.mode_index != first.mode_index {
            modes.push(second.mode_index);
        }
        let a_emitted: u32 = modes.iter().map(|&m| emissions.pairs(Source::A, m)).sum();
        let b_emitted: u32 = modes.iter().map(|&m| emissions.pairs(Source::B, m)).sum();
        if a_emitted == 1 && b_emitted == 1 {
            HeraldCategory::GenuineCrossSource
        } else {
            HeraldCategory::Multipair
        }
    } else if (a_only(first) && a_only(second)) || (b_only(first) && b_only(second)) {
        HeraldCategory::SameSource
    } else {
        // At least one click of mixed origin.
        HeraldCategory::Multipair
    }
}

/// Pairs a time-sorted click stream into heralds, classifies them against
/// the frame's emission record, and applies the fixed-delay acceptance.
pub fn pair_detections(
    events: &[DetectionEvent],
    emissions: &FrameEmissions,
    opts: &ProtocolOptions,
    storage_window_ns: f64,
) -> Vec<HeraldRecord> {
    let heralds = pair_consecutive(events, storage_window_ns)
        .into_iter()
        .map(|(i, j)| build_herald(&events[i], &events[j], emissions))
        .collect();
    filter_retain(heralds, opts)
}

pub(super) fn build_herald(
    first: &DetectionEvent,
    second: &DetectionEvent,
    emissions: &FrameEmissions,
) -> HeraldRecord {
    let parity = if first.detector == second.detector {
        BellKind::PsiPlus
    } else {
        BellKind::PsiMinus
    };
    HeraldRecord {
        t1_ns: first.time_ns,
        t2_ns: second.time_ns,
        parity,
        category: classify_herald(first, second, emissions),
        mode_indices: (first.mode_index, second.mode_index),
    }
}
