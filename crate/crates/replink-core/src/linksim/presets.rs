//! Named link configurations.
//!
//! The calibrated presets fix the geometry and the independently measured
//! device parameters, then freeze the fitted loss and visibility knobs
//! produced by the calibration procedure described in the repository README
//! (`extra_loss_db`, detector efficiency, `readout_efficiency`,
//! `analyzer_visibility`, `background_rate_hz_per_mw`). Fitted values are
//! marked below.

use crate::photonics::{
    ChannelConfig, DetectorConfig, PairStatistics, SourceConfig, TemporalGrid,
};

use super::{HeraldingMode, LinkConfig, MemoryConfig, ProtocolOptions};

/// Analyzer-interferometer imbalance, expressed on the temporal grid
/// (6 modes of 83 ns).
pub const FIXED_DELAY_NS: f64 = 498.0;

fn source(pump_power_mw: f64, indistinguishability: f64) -> SourceConfig {
    SourceConfig {
        pair_rate_per_mw: 60e3,
        pump_power_mw,
        heralding_efficiency: 0.35,
        indistinguishability,
        statistics: PairStatistics::Thermal,
        coherence_time_ns: 100.0,
        laser_phase_rad: 0.0,
    }
}

fn grid() -> TemporalGrid {
    TemporalGrid { mode_duration_ns: 83.0, frame_duration_us: 100.0 }
}

fn memory(storage_efficiency: f64, readout_efficiency: f64, boost: f64) -> MemoryConfig {
    MemoryConfig {
        storage_efficiency,
        storage_time_us: 100.0,
        bandwidth_mhz: 20.0,
        mode_capacity: 0,
        readout_efficiency,
        retrieval_visibility_boost: boost,
    }
}

/// Ideal link: deployed geometry but lossless optics, unit efficiencies,
/// perfect indistinguishability and no backgrounds. Useful as an exact-state
/// reference and for protocol-logic tests.
pub fn noiseless() -> LinkConfig {
    LinkConfig {
        source_a: source(3.0, 1.0),
        source_b: source(3.0, 1.0),
        channel_ac: ChannelConfig {
            length_km: 7.9,
            attenuation_db_per_km: 0.0,
            extra_loss_db: 0.0,
            delay_us_per_km: 5.0,
        },
        channel_bc: ChannelConfig {
            length_km: 9.9,
            attenuation_db_per_km: 0.0,
            extra_loss_db: 0.0,
            delay_us_per_km: 5.0,
        },
        detector_d1: DetectorConfig { efficiency: 1.0, dark_rate_hz: 0.0 },
        detector_d2: DetectorConfig { efficiency: 1.0, dark_rate_hz: 0.0 },
        memory_a: memory(1.0, 1.0, 1.0),
        memory_b: memory(1.0, 1.0, 1.0),
        grid: grid(),
        protocol: ProtocolOptions {
            mode: HeraldingMode::Tpi,
            coincidence_window_ns: 20.0,
            fixed_delay_filter_ns: Some(FIXED_DELAY_NS),
            memory_bypass: false,
            channel_phase_offsets_rad: [0.0, 0.0],
            feed_forward: true,
            analyzer_visibility: 1.0,
            background_rate_hz_per_mw: 0.0,
            noise_floor: 0.0,
            duty_cycle: 1.0,
            feed_forward_processing_us: 0.0,
        },
        seed: 20250809,
    }
}

/// Calibrated deployment at 3 mW pump and a 20 ns coincidence window.
pub fn calibrated_3mw() -> LinkConfig {
    LinkConfig {
        source_a: source(3.0, CAL_INDISTINGUISHABILITY),
        source_b: source(3.0, CAL_INDISTINGUISHABILITY),
        channel_ac: ChannelConfig {
            length_km: 7.9,
            attenuation_db_per_km: 0.2,
            extra_loss_db: CAL_EXTRA_LOSS_AC_DB,
            delay_us_per_km: 5.0,
        },
        channel_bc: ChannelConfig {
            length_km: 9.9,
            attenuation_db_per_km: 0.2,
            extra_loss_db: CAL_EXTRA_LOSS_BC_DB,
            delay_us_per_km: 5.0,
        },
        detector_d1: DetectorConfig { efficiency: CAL_DETECTOR_EFFICIENCY, dark_rate_hz: 100.0 },
        detector_d2: DetectorConfig { efficiency: CAL_DETECTOR_EFFICIENCY, dark_rate_hz: 100.0 },
        memory_a: memory(0.166, CAL_READOUT_EFFICIENCY, CAL_RETRIEVAL_BOOST),
        memory_b: memory(0.157, CAL_READOUT_EFFICIENCY, CAL_RETRIEVAL_BOOST),
        grid: grid(),
        protocol: ProtocolOptions {
            mode: HeraldingMode::Tpi,
            coincidence_window_ns: 20.0,
            fixed_delay_filter_ns: Some(FIXED_DELAY_NS),
            memory_bypass: false,
            channel_phase_offsets_rad: [0.0, 0.0],
            feed_forward: true,
            analyzer_visibility: CAL_ANALYZER_VISIBILITY,
            background_rate_hz_per_mw: CAL_BACKGROUND_RATE_HZ_PER_MW,
            noise_floor: CAL_NOISE_FLOOR,
            duty_cycle: 1.0,
            feed_forward_processing_us: 0.0,
        },
        seed: 20250809,
    }
}

/// Calibrated deployment at 18 mW pump and a 40 ns coincidence window.
pub fn calibrated_18mw() -> LinkConfig {
    let mut cfg = calibrated_3mw();
    cfg.source_a.pump_power_mw = 18.0;
    cfg.source_b.pump_power_mw = 18.0;
    cfg.protocol.coincidence_window_ns = 40.0;
    cfg
}

// Fitted calibration values, frozen after the fitting run (seeds and
// procedure in the README). Source indistinguishability is fitted to the
// interference-dip visibility; the loss knobs to the heralding rate; the
// readout efficiency to the distribution rate; analyzer visibility,
// background rate and noise floor to the delivered witness fidelity and
// CHSH value.
pub const CAL_INDISTINGUISHABILITY: f64 = 0.988;
pub const CAL_EXTRA_LOSS_AC_DB: f64 = 6.3;
pub const CAL_EXTRA_LOSS_BC_DB: f64 = 5.9;
pub const CAL_DETECTOR_EFFICIENCY: f64 = 0.85;
pub const CAL_READOUT_EFFICIENCY: f64 = 0.427;
pub const CAL_RETRIEVAL_BOOST: f64 = 1.283;
pub const CAL_ANALYZER_VISIBILITY: f64 = 0.749;
pub const CAL_BACKGROUND_RATE_HZ_PER_MW: f64 = 13.5e3;
pub const CAL_NOISE_FLOOR: f64 = 0.01;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        noiseless().validate().unwrap();
        calibrated_3mw().validate().unwrap();
        calibrated_18mw().validate().unwrap();
    }

    #[test]
    fn latency_and_capacity_reference_values() {
        let cfg = calibrated_3mw();
        assert!((cfg.round_trip_us() - 99.0).abs() < 1e-12);
        let modes = cfg.grid.mode_count();
        assert!(modes == 1204 || modes == 1205, "mode count {modes}");
    }
}
