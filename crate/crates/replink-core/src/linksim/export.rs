//! Stable text export formats for event, herald and delivery logs.
//!
//! All formats are versioned, tab-separated, UTF-8, with a `#` version line
//! followed by a header row. Byte-identical output for identical runs is
//! part of the reproducibility contract, so every float is printed with a
//! fixed precision.

use super::{DeliveredPair, DetectionEvent, FrameOutcome, HeraldRecord};

pub const EVENTS_VERSION: &str = "# replink events v1";
pub const EVENTS_HEADER: &str = "frame\ttime_ns\tnode\tdetector\ttags";
pub const HERALDS_VERSION: &str = "# replink heralds v1";
pub const HERALDS_HEADER: &str =
    "frame\tt1_ns\tt2_ns\tparity\tcategory\tmode_1\tmode_2";
pub const DELIVERIES_VERSION: &str = "# replink deliveries v1";
pub const DELIVERIES_HEADER: &str =
    "frame\tt2_ns\tdelivered_kind\tdelivered_at_ns\tretrieved_a\tretrieved_b";

pub fn event_line(frame: u64, e: &DetectionEvent) -> String {
    format!(
        "{frame}\t{:.3}\tC\t{}\t{}",
        e.time_ns,
        e.detector,
        e.provenance.tags()
    )
}

pub fn herald_line(frame: u64, h: &HeraldRecord) -> String {
    format!(
        "{frame}\t{:.3}\t{:.3}\t{}\t{}\t{}\t{}",
        h.t1_ns, h.t2_ns, h.parity, h.category, h.mode_indices.0, h.mode_indices.1
    )
}

pub fn delivery_line(frame: u64, d: &DeliveredPair) -> String {
    format!(
        "{frame}\t{:.3}\t{}\t{:.3}\t{}\t{}",
        d.herald.t2_ns,
        d.delivered_kind,
        d.delivered_at_ns,
        d.retrieval_success[0],
        d.retrieval_success[1]
    )
}

/// Renders a whole frame into the three export streams.
pub fn append_frame(
    frame: u64,
    outcome: &FrameOutcome,
    events: &mut String,
    heralds: &mut String,
    deliveries: &mut String,
) {
    for e in &outcome.events {
        events.push_str(&event_line(frame, e));
        events.push('\n');
    }
    for h in &outcome.heralds {
        heralds.push_str(&herald_line(frame, h));
        heralds.push('\n');
    }
    for d in &outcome.delivered {
        deliveries.push_str(&delivery_line(frame, d));
        deliveries.push('\n');
    }
}

pub fn events_preamble() -> String {
    format!("{EVENTS_VERSION}\n{EVENTS_HEADER}\n")
}

pub fn heralds_preamble() -> String {
    format!("{HERALDS_VERSION}\n{HERALDS_HEADER}\n")
}

pub fn deliveries_preamble() -> String {
    format!("{DELIVERIES_VERSION}\n{DELIVERIES_HEADER}\n")
}
