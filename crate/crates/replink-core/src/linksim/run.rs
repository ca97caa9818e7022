//! Multi-frame execution and aggregation.

use rayon::prelude::*;

use crate::photonics::ConfigError;
use crate::qstate::BellKind;
use crate::rng::frame_rng;

use super::{DeliveredPair, FrameOutcome, HeraldCategory, LinkConfig};

/// Compact record of one delivered pair, sufficient to rebuild its
/// conditional state and verification weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveredRecord {
    pub frame: u64,
    pub parity: BellKind,
    pub delivered_kind: BellKind,
    pub category: HeraldCategory,
    pub t2_ns: f64,
    pub delta_t_ns: f64,
    /// P(fourfold verification fires), real or background.
    pub fourfold_probability: f64,
    /// P(both firings real | fourfold).
    pub real_fraction: f64,
    /// Per-side real-detection probabilities; verification weights for other
    /// coincidence windows can be rebuilt from these.
    pub real_probs: [f64; 2],
    /// Sampled both-side retrieval flag.
    pub retrieved: bool,
}

impl DeliveredRecord {
    fn from_pair(frame: u64, pair: &DeliveredPair) -> Self {
        Self {
            frame,
            parity: pair.herald.parity,
            delivered_kind: pair.delivered_kind,
            category: pair.herald.category,
            t2_ns: pair.herald.t2_ns,
            delta_t_ns: pair.herald.delta_t_ns(),
            fourfold_probability: pair.verification.fourfold_probability(),
            real_fraction: pair.verification.real_fraction(),
            real_probs: pair.verification.real,
            retrieved: pair.retrieval_success == [true, true],
        }
    }
}

/// Order-independent aggregation of frame outcomes.
#[derive(Debug, Clone, Default)]
pub struct LinkAccumulator {
    pub frames: u64,
    pub clicks: u64,
    pub heralds: u64,
    pub analyzed: u64,
    pub dropped_deadline: u64,
    pub dropped_tpc: u64,
    pub verified_count: u64,
    pub delivered: Vec<DeliveredRecord>,
}

impl LinkAccumulator {
    pub fn absorb(&mut self, frame: u64, outcome: &FrameOutcome) {
        self.frames += 1;
        self.clicks += outcome.events.len() as u64;
        self.heralds += outcome.heralds.len() as u64;
        self.analyzed += outcome.analyzed;
        self.dropped_deadline += outcome.dropped_deadline;
        self.dropped_tpc += outcome.dropped_tpc;
        for pair in &outcome.delivered {
            let rec = DeliveredRecord::from_pair(frame, pair);
            if rec.retrieved {
                self.verified_count += 1;
            }
            self.delivered.push(rec);
        }
    }

    pub fn merge(&mut self, mut other: LinkAccumulator) {
        self.frames += other.frames;
        self.clicks += other.clicks;
        self.heralds += other.heralds;
        self.analyzed += other.analyzed;
        self.dropped_deadline += other.dropped_deadline;
        self.dropped_tpc += other.dropped_tpc;
        self.verified_count += other.verified_count;
        self.delivered.append(&mut other.delivered);
    }

    pub fn finish(self, cfg: &LinkConfig) -> LinkSummary {
        let emit_time_s = self.frames as f64 * cfg.grid.frame_duration_us * 1e-6;
        LinkSummary {
            frames: self.frames,
            sim_time_s: emit_time_s / cfg.protocol.duty_cycle,
            clicks: self.clicks,
            heralds: self.heralds,
            analyzed: self.analyzed,
            dropped_deadline: self.dropped_deadline,
            dropped_tpc: self.dropped_tpc,
            verified_count: self.verified_count,
            delivered: self.delivered,
        }
    }
}

/// Aggregated result of a multi-frame run.
#[derive(Debug, Clone)]
pub struct LinkSummary {
    pub frames: u64,
    /// Simulated wall time, including the storage-preparation dead time
    /// implied by the duty cycle.
    pub sim_time_s: f64,
    pub clicks: u64,
    pub heralds: u64,
    pub analyzed: u64,
    pub dropped_deadline: u64,
    pub dropped_tpc: u64,
    pub verified_count: u64,
    pub delivered: Vec<DeliveredRecord>,
}

impl LinkSummary {
    pub fn click_rate_hz(&self) -> f64 {
        self.clicks as f64 / self.sim_time_s
    }

    pub fn herald_rate_hz(&self) -> f64 {
        self.heralds as f64 / self.sim_time_s
    }

    pub fn analyzed_rate_hz(&self) -> f64 {
        self.analyzed as f64 / self.sim_time_s
    }
}

/// Runs `frames` frames of the link, frame `i` on RNG stream `(cfg.seed, i)`.
/// Frames execute in parallel chunks; the aggregate is identical for any
/// thread count.
pub fn run_link(cfg: &LinkConfig, frames: u64) -> Result<LinkSummary, ConfigError> {
    cfg.validate()?;
    const CHUNK: u64 = 2048;
    let chunk_count = frames.div_ceil(CHUNK);
    let chunks: Vec<LinkAccumulator> = (0..chunk_count)
        .into_par_iter()
        .map(|c| {
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(frames);
            let mut acc = LinkAccumulator::default();
            for frame in lo..hi {
                let mut rng = frame_rng(cfg.seed, frame);
                let emissions = super::sample_emissions(cfg, &mut rng);
                let outcome = super::run_frame_with_emissions(cfg, &emissions, &mut rng);
                acc.absorb(frame, &outcome);
            }
            acc
        })
        .collect();
    let mut total = LinkAccumulator::default();
    for chunk in chunks {
        total.merge(chunk);
    }
    Ok(total.finish(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linksim::presets;

    #[test]
    fn run_link_is_deterministic_and_thread_count_independent() {
        let cfg = presets::calibrated_3mw();
        let a = run_link(&cfg, 300).unwrap();
        let b = run_link(&cfg, 300).unwrap();
        assert_eq!(a.clicks, b.clicks);
        assert_eq!(a.heralds, b.heralds);
        assert_eq!(a.delivered, b.delivered);

        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_link(&cfg, 300).unwrap());
        assert_eq!(a.clicks, single.clicks);
        assert_eq!(a.delivered, single.delivered);
    }

    #[test]
    fn rejects_storage_shorter_than_round_trip() {
        let mut cfg = presets::calibrated_3mw();
        cfg.memory_a.storage_time_us = 50.0;
        let err = run_link(&cfg, 1).unwrap_err();
        assert!(matches!(err, ConfigError::StorageTooShort { .. }), "{err:?}");
    }

    #[test]
    fn deadline_invariant_holds_for_all_delivered_pairs() {
        let cfg = presets::calibrated_3mw();
        let summary = run_link(&cfg, 2000).unwrap();
        let storage_ns = cfg.memory_a.storage_time_us.min(cfg.memory_b.storage_time_us) * 1e3;
        let return_ns = cfg.return_latency_us() * 1e3;
        assert!(summary.delivered.iter().all(|d| d.t2_ns + return_ns <= storage_ns));
        assert!(summary.analyzed <= summary.heralds);
        assert!(
            summary.delivered.len() as u64 + summary.dropped_deadline + summary.dropped_tpc
                == summary.analyzed
        );
    }
}
