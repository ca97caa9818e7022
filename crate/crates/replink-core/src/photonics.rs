//! Stochastic models for the photonic layer: pair sources, fiber channels,
//! detectors, and two-photon interference at the measurement beamsplitter.
//!
//! All sampling functions are pure given an explicit RNG handle; callers own
//! their RNG streams.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SimRng;
use rand::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{field} = {value} outside [0, 1]")]
    ProbabilityOutOfRange { field: &'static str, value: f64 },
    #[error("{field} = {value} must be non-negative")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} = {value} must be positive")]
    NonPositive { field: &'static str, value: f64 },
    #[error("temporal grid holds no complete mode (frame {frame_us} µs / mode {mode_ns} ns)")]
    EmptyGrid { frame_us: f64, mode_ns: f64 },
    #[error("storage time {storage_us} µs shorter than round-trip latency {round_trip_us} µs with feed-forward enabled")]
    StorageTooShort { storage_us: f64, round_trip_us: f64 },
    #[error("fixed delay filter {filter_ns} ns is not a positive multiple of the mode duration {mode_ns} ns")]
    FilterNotModeAligned { filter_ns: f64, mode_ns: f64 },
    #[error("memory mode capacity {capacity} disagrees with grid mode count {grid_modes}")]
    CapacityMismatch { capacity: u32, grid_modes: u32 },
}

fn check_prob(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(ConfigError::ProbabilityOutOfRange { field, value });
    }
    Ok(())
}

fn check_nonneg(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_nan() || value < 0.0 {
        return Err(ConfigError::Negative { field, value });
    }
    Ok(())
}

fn check_positive(field: &'static str, value: f64) -> Result<(), ConfigError> {
    if value.is_nan() || value <= 0.0 {
        return Err(ConfigError::NonPositive { field, value });
    }
    Ok(())
}

/// Photon-number statistics of a single filtered SPDC mode.
///
/// Thermal is the physical default for a source filtered to one spectral and
/// spatial mode; Poisson is kept as a selectable alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    #[default]
    Thermal,
    Poisson,
}

/// Photon-pair source parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Single-mode pair generation rate per milliwatt of pump power.
    pub pair_rate_per_mw: f64,
    pub pump_power_mw: f64,
    /// Probability that the partner (signal) photon is present and coupled
    /// when an idler is sent toward the measurement node.
    pub heralding_efficiency: f64,
    /// Squared wavepacket overlap against the other node's idler photons.
    pub indistinguishability: f64,
    #[serde(default)]
    pub statistics: PairStatistics,
    /// Photon coherence time; sets the interference dip width in delay scans.
    #[serde(default = "default_coherence_time_ns")]
    pub coherence_time_ns: f64,
    /// Static pump-laser phase carried into number-state heralds.
    #[serde(default)]
    pub laser_phase_rad: f64,
}

fn default_coherence_time_ns() -> f64 {
    100.0
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_nonneg("pair_rate_per_mw", self.pair_rate_per_mw)?;
        check_nonneg("pump_power_mw", self.pump_power_mw)?;
        check_prob("heralding_efficiency", self.heralding_efficiency)?;
        check_prob("indistinguishability", self.indistinguishability)?;
        check_positive("coherence_time_ns", self.coherence_time_ns)?;
        Ok(())
    }
}

/// Fiber channel with Beer–Lambert attenuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    /// Calibration knob for splices, connectors and anything else the
    /// deployed link adds beyond nominal fiber loss.
    #[serde(default)]
    pub extra_loss_db: f64,
    #[serde(default = "default_delay_us_per_km")]
    pub delay_us_per_km: f64,
}

fn default_delay_us_per_km() -> f64 {
    5.0
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_nonneg("length_km", self.length_km)?;
        check_nonneg("attenuation_db_per_km", self.attenuation_db_per_km)?;
        check_nonneg("extra_loss_db", self.extra_loss_db)?;
        check_positive("delay_us_per_km", self.delay_us_per_km)?;
        Ok(())
    }
}

/// Threshold single-photon detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_prob("efficiency", self.efficiency)?;
        check_nonneg("dark_rate_hz", self.dark_rate_hz)?;
        Ok(())
    }
}

/// Temporal mode structure of one storage frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalGrid {
    pub mode_duration_ns: f64,
    pub frame_duration_us: f64,
}

impl TemporalGrid {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_positive("mode_duration_ns", self.mode_duration_ns)?;
        check_positive("frame_duration_us", self.frame_duration_us)?;
        if self.mode_count() < 1 {
            return Err(ConfigError::EmptyGrid {
                frame_us: self.frame_duration_us,
                mode_ns: self.mode_duration_ns,
            });
        }
        Ok(())
    }

    /// Number of complete temporal modes per frame, floor(frame / mode).
    pub fn mode_count(&self) -> u32 {
        (self.frame_duration_us * 1e3 / self.mode_duration_ns).floor() as u32
    }

    pub fn frame_duration_ns(&self) -> f64 {
        self.frame_duration_us * 1e3
    }
}

/// Mean pair number per temporal mode, µ = rate · pump · mode duration.
pub fn mean_pairs_per_mode(src: &SourceConfig, grid: &TemporalGrid) -> f64 {
    src.pair_rate_per_mw * src.pump_power_mw * grid.mode_duration_ns * 1e-9
}

/// Samples a per-mode pair count.
pub fn sample_pair_count(mu: f64, statistics: PairStatistics, rng: &mut SimRng) -> u32 {
    match statistics {
        PairStatistics::Thermal => sample_thermal(mu, rng),
        PairStatistics::Poisson => sample_poisson(mu, rng),
    }
}

/// Thermal (single-mode Bose–Einstein) photon statistics,
/// P(n) = µⁿ/(1+µ)ⁿ⁺¹.
pub fn sample_thermal(mu: f64, rng: &mut SimRng) -> u32 {
    debug_assert!(mu >= 0.0);
    if mu == 0.0 {
        return 0;
    }
    let s = mu / (1.0 + mu);
    let v: f64 = 1.0 - rng.random::<f64>(); // v ∈ (0, 1]
    if v > s {
        0
    } else {
        // v ∈ (s^{k+1}, s^k] ⇒ n = k.
        (v.ln() / s.ln()).floor() as u32
    }
}

/// Poisson photon statistics with mean µ.
pub fn sample_poisson(mu: f64, rng: &mut SimRng) -> u32 {
    debug_assert!(mu >= 0.0);
    if mu == 0.0 {
        return 0;
    }
    let dist = rand_distr::Poisson::new(mu).expect("positive mean");
    rand::Rng::sample(rng, dist) as u32
}

/// Transmission probability through the channel, 10^(−loss/10).
pub fn survival_probability(ch: &ChannelConfig) -> f64 {
    let total_db = ch.length_km * ch.attenuation_db_per_km + ch.extra_loss_db;
    10f64.powf(-total_db / 10.0)
}

/// One-way propagation delay in microseconds.
pub fn propagation_delay_us(ch: &ChannelConfig) -> f64 {
    ch.length_km * ch.delay_us_per_km
}

/// Bernoulli thinning: the number of survivors out of `n` trials at
/// probability `p`.
pub fn thin(n: u32, p: f64, rng: &mut SimRng) -> u32 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p >= 1.0 {
        return n;
    }
    if p <= 0.0 {
        return 0;
    }
    let mut kept = 0;
    for _ in 0..n {
        if rng.random::<f64>() < p {
            kept += 1;
        }
    }
    kept
}

/// Poisson dark counts over a gate window.
pub fn sample_dark_counts(det: &DetectorConfig, window_ns: f64, rng: &mut SimRng) -> u32 {
    debug_assert!(window_ns >= 0.0);
    let mean = det.dark_rate_hz * window_ns * 1e-9;
    if mean <= 0.0 {
        return 0;
    }
    sample_poisson(mean, rng)
}

/// Photon counts behind the balanced beamsplitter, split by output detector
/// and input origin.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BsmClicks {
    pub d1_from_a: u32,
    pub d1_from_b: u32,
    pub d2_from_a: u32,
    pub d2_from_b: u32,
}

impl BsmClicks {
    pub fn d1(&self) -> u32 {
        self.d1_from_a + self.d1_from_b
    }

    pub fn d2(&self) -> u32 {
        self.d2_from_a + self.d2_from_b
    }

    pub fn total(&self) -> u32 {
        self.d1() + self.d2()
    }
}

/// Routes photons from the two inputs of a balanced beamsplitter onto the two
/// output detectors.
///
/// Exactly one photon per input interferes with squared overlap V: with
/// probability V the pair bunches onto one output (chosen 50/50), otherwise
/// the photons route independently. Unpaired photons route independently
/// 50/50. For higher occupancies, min(nA, nB) photons are treated as
/// interfering pairs and the excess routes independently, a pairwise
/// approximation that is exact for total occupancy ≤ 2.
pub fn bsm_interfere(
    photons_from_a: u32,
    photons_from_b: u32,
    indistinguishability: f64,
    rng: &mut SimRng,
) -> BsmClicks {
    debug_assert!((0.0..=1.0).contains(&indistinguishability));
    let mut out = BsmClicks::default();
    let pairs = photons_from_a.min(photons_from_b);
    for _ in 0..pairs {
        if rng.random::<f64>() < indistinguishability {
            // Bunching: both photons exit the same port.
            if rng.random::<f64>() < 0.5 {
                out.d1_from_a += 1;
                out.d1_from_b += 1;
            } else {
                out.d2_from_a += 1;
                out.d2_from_b += 1;
            }
        } else {
            route_single(true, &mut out, rng);
            route_single(false, &mut out, rng);
        }
    }
    for _ in pairs..photons_from_a {
        route_single(true, &mut out, rng);
    }
    for _ in pairs..photons_from_b {
        route_single(false, &mut out, rng);
    }
    debug_assert_eq!(out.total(), photons_from_a + photons_from_b);
    out
}

fn route_single(from_a: bool, out: &mut BsmClicks, rng: &mut SimRng) {
    let to_d1 = rng.random::<f64>() < 0.5;
    match (from_a, to_d1) {
        (true, true) => out.d1_from_a += 1,
        (true, false) => out.d2_from_a += 1,
        (false, true) => out.d1_from_b += 1,
        (false, false) => out.d2_from_b += 1,
    }
}

/// One point of a delay-scan interference experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomPoint {
    pub delay_ns: f64,
    pub visibility: f64,
}

/// Simulates the coincidence dip of two-photon interference versus relative
/// delay and reports the visibility estimate per delay.
///
/// Trials are conditioned on at least one pair from each source; the
/// conditioning probability is delay-independent, so it cancels in the
/// visibility ratio. The mutual overlap of the two sources is the geometric
/// mean of their indistinguishabilities, damped by a Gaussian envelope in the
/// relative delay with the sources' mean coherence time as its scale. The
/// far-delay reference rate is estimated from the same model with the
/// interference switched off.
pub fn hom_dip_experiment(
    src_a: &SourceConfig,
    src_b: &SourceConfig,
    det: &DetectorConfig,
    grid: &TemporalGrid,
    delays_ns: &[f64],
    trials: u32,
    rng: &mut SimRng,
) -> Vec<HomPoint> {
    let mu_a = mean_pairs_per_mode(src_a, grid);
    let mu_b = mean_pairs_per_mode(src_b, grid);
    let v_mutual = (src_a.indistinguishability * src_b.indistinguishability).sqrt();
    let tau_c = 0.5 * (src_a.coherence_time_ns + src_b.coherence_time_ns);

    let r_far = coincidence_rate(mu_a, mu_b, 0.0, det, src_a.statistics, trials, rng);
    delays_ns
        .iter()
        .map(|&delay| {
            let envelope = (-(delay / tau_c).powi(2)).exp();
            let v_eff = v_mutual * envelope;
            let r = coincidence_rate(mu_a, mu_b, v_eff, det, src_a.statistics, trials, rng);
            let visibility = if r_far > 0.0 { (r_far - r) / r_far } else { 0.0 };
            HomPoint { delay_ns: delay, visibility }
        })
        .collect()
}

fn coincidence_rate(
    mu_a: f64,
    mu_b: f64,
    v_eff: f64,
    det: &DetectorConfig,
    statistics: PairStatistics,
    trials: u32,
    rng: &mut SimRng,
) -> f64 {
    let mut coincidences = 0u64;
    for _ in 0..trials {
        // Conditioned occupancy: thermal n | n ≥ 1 is 1 + thermal(µ);
        // the Poisson branch uses rejection for the same conditioning.
        let n_a = 1 + sample_pair_count(mu_a, statistics, rng);
        let n_b = 1 + sample_pair_count(mu_b, statistics, rng);
        let clicks = bsm_interfere(n_a, n_b, v_eff, rng);
        let d1 = thin(clicks.d1(), det.efficiency, rng);
        let d2 = thin(clicks.d2(), det.efficiency, rng);
        if d1 >= 1 && d2 >= 1 {
            coincidences += 1;
        }
    }
    coincidences as f64 / trials as f64
}
