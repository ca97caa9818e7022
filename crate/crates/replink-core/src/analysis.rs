//! Statistical estimators and experiment harnesses: witness fidelity,
//! tomography pipelines, CHSH with standard errors, rate accounting,
//! parameter sweeps, heralding-scheme comparison and multiplexing
//! projections.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linksim::{
    conditional_state, spi_delta_phi, DeliveredPair, DeliveredRecord, HeraldCategory, LinkConfig,
    LinkSummary,
};
use crate::photonics::ConfigError;
use crate::qstate::{
    self, chsh_value, tomography_reconstruct, BellKind, ChshSettings, DensityMatrix,
    MeasurementSetting, Observable, QstateError, TOMOGRAPHY_BASES,
};
use crate::rng::{splitmix64, tagged_rng, SimRng};
use crate::tally::TallyTable;
use rand::Rng;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Qstate(#[from] QstateError),
    #[error("sweep specification is empty on the {0} axis")]
    EmptySweepAxis(&'static str),
    #[error("frames_per_point must be at least 1")]
    NoFrames,
    #[error("no delivered pairs to analyze")]
    NoDeliveredPairs,
}

/// Canonical labels of the witness bases.
pub const WITNESS_LABELS: [&str; 3] = ["XX", "YY", "ZZ"];

fn witness_settings() -> [(&'static str, MeasurementSetting); 3] {
    [
        ("XX", MeasurementSetting { a: Observable::x(), b: Observable::x() }),
        ("YY", MeasurementSetting { a: Observable::y(), b: Observable::y() }),
        ("ZZ", MeasurementSetting { a: Observable::z(), b: Observable::z() }),
    ]
}

/// Samples one Born-rule outcome per input state under the given setting and
/// tallies them under `label`.
pub fn simulate_measurement<'a>(
    states: impl IntoIterator<Item = &'a DensityMatrix>,
    setting: &MeasurementSetting,
    label: &str,
    rng: &mut SimRng,
) -> TallyTable {
    let mut tallies = TallyTable::new();
    for state in states {
        let probs = state.outcome_probabilities(setting);
        let (a, b) = sample_outcome(&probs, rng);
        tallies.record(label, a, b);
    }
    tallies
}

fn sample_outcome(probs: &[f64; 4], rng: &mut SimRng) -> (i8, i8) {
    let u: f64 = rng.random();
    let outcomes = [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)];
    let mut acc = 0.0;
    for (k, &(a, b)) in outcomes.iter().enumerate() {
        acc += probs[k];
        if u < acc || k == 3 {
            return (a, b);
        }
    }
    unreachable!()
}

/// Deterministic tallies with counts proportional to the exact outcome
/// probabilities; the infinite-statistics limit used by oracle tests.
pub fn exact_tallies(
    rho: &DensityMatrix,
    settings: &[(&str, MeasurementSetting)],
    per_setting: u64,
) -> TallyTable {
    let mut tallies = TallyTable::new();
    for (label, setting) in settings {
        let probs = rho.outcome_probabilities(setting);
        let mut counts = crate::tally::OutcomeCounts::default();
        for (slot, p) in probs.iter().enumerate() {
            counts.add(slot, (p * per_setting as f64).round() as u64);
        }
        tallies.add_counts(label, counts);
    }
    tallies
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WitnessEstimate {
    pub fidelity: f64,
    pub stderr: f64,
}

/// Witness fidelity from XX/YY/ZZ tallies with binomially propagated
/// standard error (bases treated as uncorrelated).
pub fn estimate_witness(
    tallies: &TallyTable,
    kind: BellKind,
) -> Result<WitnessEstimate, QstateError> {
    let mut corr = [0.0; 3];
    let mut var = 0.0;
    for (i, label) in WITNESS_LABELS.iter().enumerate() {
        let counts = tallies
            .get(label)
            .ok_or_else(|| QstateError::MissingSetting(label.to_string()))?;
        if counts.total() == 0 {
            return Err(QstateError::EmptySetting(label.to_string()));
        }
        corr[i] = counts.correlator();
        var += counts.correlator_stderr().powi(2) / 16.0;
    }
    let fidelity = qstate::witness_fidelity(corr[0], corr[1], corr[2], kind)?;
    Ok(WitnessEstimate { fidelity, stderr: var.sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub s: f64,
    pub stderr: f64,
    /// Violation significance (S − 2)/stderr.
    pub significance: f64,
}

/// CHSH estimate from the four setting tallies with propagated binomial
/// standard error.
pub fn estimate_chsh(tallies: &TallyTable) -> Result<ChshEstimate, QstateError> {
    let signs = [1.0, 1.0, 1.0, -1.0];
    let mut s = 0.0;
    let mut var = 0.0;
    for (label, sign) in ChshSettings::LABELS.iter().zip(signs) {
        let counts = tallies
            .get(label)
            .ok_or_else(|| QstateError::MissingSetting(label.to_string()))?;
        if counts.total() == 0 {
            return Err(QstateError::EmptySetting(label.to_string()));
        }
        s += sign * counts.correlator();
        var += counts.correlator_stderr().powi(2);
    }
    let stderr = var.sqrt();
    let significance = if stderr > 0.0 { (s - 2.0) / stderr } else { f64::INFINITY };
    Ok(ChshEstimate { s, stderr, significance })
}

#[derive(Debug, Clone)]
pub struct TomographyReport {
    pub rho: DensityMatrix,
    pub fidelity_plus: f64,
    pub fidelity_minus: f64,
}

/// Simulates tomography over the nine Pauli product bases on a stream of
/// states (cycled when shorter than the sample budget) and reconstructs the
/// state by linear inversion with physical projection.
pub fn run_tomography(
    states: &[DensityMatrix],
    samples_per_setting: u64,
    rng: &mut SimRng,
) -> Result<TomographyReport, AnalysisError> {
    if states.is_empty() {
        return Err(AnalysisError::NoDeliveredPairs);
    }
    let mut tallies = TallyTable::new();
    for basis in TOMOGRAPHY_BASES {
        let setting = MeasurementSetting {
            a: Observable::from_pauli(basis.0).expect("tomography bases exclude I"),
            b: Observable::from_pauli(basis.1).expect("tomography bases exclude I"),
        };
        let label = basis.to_string();
        let mut probs_cache: Vec<Option<[f64; 4]>> = vec![None; states.len()];
        for k in 0..samples_per_setting {
            let idx = (k % states.len() as u64) as usize;
            let probs =
                probs_cache[idx].get_or_insert_with(|| states[idx].outcome_probabilities(&setting));
            let (a, b) = sample_outcome(probs, rng);
            tallies.record(&label, a, b);
        }
    }
    let rho = tomography_reconstruct(&tallies)?;
    Ok(TomographyReport {
        fidelity_plus: rho.fidelity_to_bell(BellKind::PsiPlus),
        fidelity_minus: rho.fidelity_to_bell(BellKind::PsiMinus),
        rho,
    })
}

/// Count-based distribution rate: delivered pairs passing both-side
/// retrieval per second of simulated time.
pub fn compute_edr(pairs: &[DeliveredPair], sim_time_s: f64) -> f64 {
    assert!(sim_time_s > 0.0, "simulated time must be positive");
    let verified = pairs.iter().filter(|p| p.retrieval_success == [true, true]).count();
    verified as f64 / sim_time_s
}

/// Expected-value estimator of the same rate: each delivered pair
/// contributes its exact fourfold-verification probability. Unbiased for the
/// counted rate with far lower variance; preferred at low verified counts.
pub fn compute_edr_expected(records: &[DeliveredRecord], sim_time_s: f64) -> f64 {
    assert!(sim_time_s > 0.0, "simulated time must be positive");
    records.iter().map(|r| r.fourfold_probability).sum::<f64>() / sim_time_s
}

/// How point estimates are produced from the delivered ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    /// Exact ensemble expectations weighted by verification probability;
    /// statistical error reflects herald-composition fluctuations only.
    #[default]
    Exact,
    /// Born-rule sampling of one outcome per verification-accepted pair,
    /// with binomially propagated errors (matches laboratory statistics).
    Sampled,
}

/// One evaluated operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub pump_power_mw: f64,
    pub window_ns: f64,
    pub herald_hz: f64,
    pub analyzed_hz: f64,
    pub edr_hz: f64,
    /// Count-based rate from the sampled retrieval flags.
    pub edr_counted_hz: f64,
    pub fidelity: f64,
    pub fidelity_err: f64,
    pub chsh: f64,
    pub chsh_err: f64,
    pub sig_sigma: f64,
}

/// The fourfold-conditional mixing weight of a record: the probability that
/// a fourfold was fully real, deflated by the configured noise floor.
fn record_lambda(rec: &DeliveredRecord, noise_floor: f64) -> f64 {
    rec.real_fraction * (1.0 - noise_floor)
}

/// Real-path state of a record (category table, feed-forward already folded
/// into `delivered_kind`).
fn record_real_state(rec: &DeliveredRecord, v_eff: f64) -> DensityMatrix {
    conditional_state(rec.category, rec.delivered_kind, v_eff)
}

/// The state a verification fourfold on this record samples from: the
/// real-path conditional state mixed with white noise for the background and
/// noise-floor fractions.
pub fn record_conditional_state(cfg: &LinkConfig, rec: &DeliveredRecord) -> DensityMatrix {
    let lambda = record_lambda(rec, cfg.protocol.noise_floor);
    DensityMatrix::mix(&[
        (lambda, record_real_state(rec, cfg.effective_visibility())),
        (1.0 - lambda, DensityMatrix::maximally_mixed()),
    ])
}

/// The state an observed verification fourfold samples from, over a whole
/// delivered ensemble: the fourfold-probability-weighted mixture of the
/// per-record conditional states. `None` when no record can fire.
pub fn ensemble_state(cfg: &LinkConfig, records: &[DeliveredRecord]) -> Option<DensityMatrix> {
    let total: f64 = records.iter().map(|r| r.fourfold_probability).sum();
    if total <= 0.0 {
        return None;
    }
    let parts: Vec<(f64, DensityMatrix)> = records
        .iter()
        .filter(|r| r.fourfold_probability > 0.0)
        .map(|r| (r.fourfold_probability / total, record_conditional_state(cfg, r)))
        .collect();
    Some(DensityMatrix::mix(&parts))
}

/// Tallies produced by one sampled verification campaign over the delivered
/// ensemble.
#[derive(Debug, Clone, Default)]
pub struct CampaignTallies {
    /// Witness tallies per delivered Bell kind.
    pub witness: std::collections::BTreeMap<BellKind, TallyTable>,
    /// CHSH tallies in the ψ⁺-optimal settings (ψ⁻ pairs measured in the
    /// phase-flipped frame).
    pub chsh: TallyTable,
}

/// Samples one verification outcome per accepted delivered pair, alternating
/// between the witness and CHSH campaigns; acceptance is Bernoulli in the
/// pair's fourfold probability (normalized to the ensemble maximum), which
/// reproduces laboratory statistics.
pub fn sample_campaign_tallies(
    cfg: &LinkConfig,
    summary: &LinkSummary,
    rng: &mut SimRng,
) -> CampaignTallies {
    let mut out = CampaignTallies::default();
    let w_max = summary
        .delivered
        .iter()
        .map(|r| r.fourfold_probability)
        .fold(0.0f64, f64::max);
    if w_max <= 0.0 {
        return out;
    }
    let v_eff = cfg.effective_visibility();
    let n0 = cfg.protocol.noise_floor;
    let witness = witness_settings();
    let settings = ChshSettings::psi_plus_optimal();
    let chsh_pairs = settings.pairs();
    let mut campaign_toggle = false;
    let mut witness_idx = 0usize;
    let mut chsh_idx = 0usize;
    for rec in &summary.delivered {
        if rng.random::<f64>() >= rec.fourfold_probability / w_max {
            continue;
        }
        let lambda = record_lambda(rec, n0);
        let rho_real = record_real_state(rec, v_eff);
        campaign_toggle = !campaign_toggle;
        if campaign_toggle {
            let (label, setting) = witness[witness_idx % 3];
            witness_idx += 1;
            let probs = mix_probs(&rho_real, &setting, lambda);
            let (a, b) = sample_outcome(&probs, rng);
            out.witness.entry(rec.delivered_kind).or_default().record(label, a, b);
        } else {
            let k = chsh_idx % 4;
            chsh_idx += 1;
            let rho_meas = match rec.delivered_kind {
                BellKind::PsiPlus => rho_real.clone(),
                BellKind::PsiMinus => rho_real.phase_flip_a(),
            };
            let probs = mix_probs(&rho_meas, &chsh_pairs[k], lambda);
            let (a, b) = sample_outcome(&probs, rng);
            out.chsh.record(ChshSettings::LABELS[k], a, b);
        }
    }
    out
}

/// Evaluates witness fidelity, CHSH and rates for a finished run.
pub fn evaluate_summary(
    cfg: &LinkConfig,
    summary: &LinkSummary,
    mode: EstimatorMode,
    rng: &mut SimRng,
) -> Result<RatePoint, AnalysisError> {
    let v_eff = cfg.effective_visibility();
    let n0 = cfg.protocol.noise_floor;
    let settings = ChshSettings::psi_plus_optimal();
    let time = summary.sim_time_s;

    let mut point = RatePoint {
        pump_power_mw: 0.5 * (cfg.source_a.pump_power_mw + cfg.source_b.pump_power_mw),
        window_ns: cfg.protocol.coincidence_window_ns,
        herald_hz: summary.herald_rate_hz(),
        analyzed_hz: summary.analyzed_rate_hz(),
        edr_hz: compute_edr_expected(&summary.delivered, time),
        edr_counted_hz: summary.verified_count as f64 / time,
        fidelity: f64::NAN,
        fidelity_err: f64::NAN,
        chsh: f64::NAN,
        chsh_err: f64::NAN,
        sig_sigma: f64::NAN,
    };
    if summary.delivered.is_empty() {
        return Ok(point);
    }

    // Cached per-(category, kind) real-path scalars: fidelity to the
    // delivered kind and CHSH against settings optimal for that kind.
    let mut cache: std::collections::BTreeMap<(HeraldCategory, BellKind), (f64, f64)> =
        Default::default();
    let mut scalars = |rec: &DeliveredRecord| -> (f64, f64) {
        let key = (rec.category, rec.delivered_kind);
        *cache.entry(key).or_insert_with(|| {
            let rho = record_real_state(rec, v_eff);
            let f = rho.fidelity_to_bell(rec.delivered_kind);
            let s = match rec.delivered_kind {
                BellKind::PsiPlus => chsh_value(&rho, &settings),
                // ψ⁻ differs from ψ⁺ by a phase flip on A; measure it with
                // the correspondingly flipped settings.
                BellKind::PsiMinus => chsh_value(&rho.phase_flip_a(), &settings),
            };
            (f, s)
        })
    };

    match mode {
        EstimatorMode::Exact => {
            let mut w_sum = 0.0;
            let mut f_sum = 0.0;
            let mut s_sum = 0.0;
            let mut samples = Vec::with_capacity(summary.delivered.len());
            for rec in &summary.delivered {
                let w = rec.fourfold_probability;
                if w <= 0.0 {
                    continue;
                }
                let lambda = record_lambda(rec, n0);
                let (f_real, s_real) = scalars(rec);
                let f = lambda * f_real + (1.0 - lambda) * 0.25;
                let s = lambda * s_real; // CHSH of I/4 vanishes
                w_sum += w;
                f_sum += w * f;
                s_sum += w * s;
                samples.push((w, f, s));
            }
            if w_sum <= 0.0 {
                return Ok(point);
            }
            let f_bar = f_sum / w_sum;
            let s_bar = s_sum / w_sum;
            let mut f_var = 0.0;
            let mut s_var = 0.0;
            for (w, f, s) in samples {
                f_var += (w * (f - f_bar)).powi(2);
                s_var += (w * (s - s_bar)).powi(2);
            }
            point.fidelity = f_bar;
            point.fidelity_err = f_var.sqrt() / w_sum;
            point.chsh = s_bar;
            point.chsh_err = s_var.sqrt() / w_sum;
            point.sig_sigma = if point.chsh_err > 0.0 {
                (s_bar - 2.0) / point.chsh_err
            } else {
                f64::INFINITY
            };
        }
        EstimatorMode::Sampled => {
            let campaign = sample_campaign_tallies(cfg, summary, rng);
            let mut f_total = 0.0;
            let mut var_total = 0.0;
            let mut n_total = 0u64;
            for (kind, tallies) in &campaign.witness {
                // A campaign too short to populate every basis contributes
                // nothing; the estimate stays absent.
                let Ok(est) = estimate_witness(tallies, *kind) else {
                    continue;
                };
                let n = tallies.total();
                f_total += est.fidelity * n as f64;
                var_total += (est.stderr * n as f64).powi(2);
                n_total += n;
            }
            if n_total > 0 {
                point.fidelity = f_total / n_total as f64;
                point.fidelity_err = var_total.sqrt() / n_total as f64;
            }
            if let Ok(est) = estimate_chsh(&campaign.chsh) {
                point.chsh = est.s;
                point.chsh_err = est.stderr;
                point.sig_sigma = est.significance;
            }
        }
    }
    Ok(point)
}

fn mix_probs(rho_real: &DensityMatrix, setting: &MeasurementSetting, lambda: f64) -> [f64; 4] {
    let p = rho_real.outcome_probabilities(setting);
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = lambda * p[k] + (1.0 - lambda) * 0.25;
    }
    out
}

/// Runs the link at one operating point and evaluates it.
pub fn evaluate_point(
    cfg: &LinkConfig,
    frames: u64,
    mode: EstimatorMode,
) -> Result<RatePoint, AnalysisError> {
    let summary = crate::linksim::run_link(cfg, frames)?;
    let mut rng = tagged_rng(cfg.seed, 0xE57);
    evaluate_summary(cfg, &summary, mode, &mut rng)
}

/// Axes of a sweep campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub pump_powers_mw: Vec<f64>,
    pub windows_ns: Vec<f64>,
    pub frames_per_point: u64,
    /// Optional protocol override applied to every point (e.g. bypass mode).
    #[serde(default)]
    pub protocol: Option<crate::linksim::ProtocolOptions>,
    #[serde(default)]
    pub estimator: EstimatorMode,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.pump_powers_mw.is_empty() {
            return Err(AnalysisError::EmptySweepAxis("pump_powers_mw"));
        }
        if self.windows_ns.is_empty() {
            return Err(AnalysisError::EmptySweepAxis("windows_ns"));
        }
        if self.frames_per_point == 0 {
            return Err(AnalysisError::NoFrames);
        }
        Ok(())
    }
}

/// Configuration of one sweep point: both pumps set to the grid power, the
/// coincidence window replaced, and a dedicated seed derived from the base
/// seed and the point's axis indices.
pub fn point_config(base: &LinkConfig, spec: &SweepSpec, pi: usize, wi: usize) -> LinkConfig {
    let mut cfg = base.clone();
    if let Some(protocol) = &spec.protocol {
        cfg.protocol = protocol.clone();
    }
    cfg.source_a.pump_power_mw = spec.pump_powers_mw[pi];
    cfg.source_b.pump_power_mw = spec.pump_powers_mw[pi];
    cfg.protocol.coincidence_window_ns = spec.windows_ns[wi];
    cfg.seed = splitmix64(base.seed ^ splitmix64(((pi as u64) << 32) | wi as u64));
    cfg
}

/// Runs the full grid; one [`RatePoint`] per (power, window), in row-major
/// order with windows varying fastest.
pub fn sweep(spec: &SweepSpec, base: &LinkConfig) -> Result<Vec<RatePoint>, AnalysisError> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.pump_powers_mw.len() * spec.windows_ns.len());
    for pi in 0..spec.pump_powers_mw.len() {
        for wi in 0..spec.windows_ns.len() {
            let cfg = point_config(base, spec, pi, wi);
            cfg.validate()?;
            out.push(evaluate_point(&cfg, spec.frames_per_point, spec.estimator)?);
        }
    }
    Ok(out)
}

/// Evaluates a family of coincidence windows from a single run at the
/// widest window.
///
/// The fixed-delay acceptance is nested (a narrower window keeps a subset of
/// the wider window's heralds) and the per-record verification weights are
/// deterministic in the window, so trend comparisons across windows share
/// their herald sample instead of compounding independent Monte Carlo noise.
pub fn windowed_points(
    cfg: &LinkConfig,
    frames: u64,
    windows_ns: &[f64],
    mode: EstimatorMode,
) -> Result<Vec<RatePoint>, AnalysisError> {
    let w_max = windows_ns.iter().cloned().fold(0.0f64, f64::max);
    let mut cfg_max = cfg.clone();
    cfg_max.protocol.coincidence_window_ns = w_max;
    let summary = crate::linksim::run_link(&cfg_max, frames)?;
    let filter = cfg.protocol.fixed_delay_filter_ns;
    let pumps = [cfg.source_a.pump_power_mw, cfg.source_b.pump_power_mw];

    let mut out = Vec::with_capacity(windows_ns.len());
    for &w in windows_ns {
        let mut cfg_w = cfg.clone();
        cfg_w.protocol.coincidence_window_ns = w;
        let delivered: Vec<DeliveredRecord> = summary
            .delivered
            .iter()
            .filter(|d| match filter {
                Some(f) => (d.delta_t_ns - f).abs() <= w / 2.0,
                None => true,
            })
            .map(|d| {
                let mut rec = d.clone();
                let probs = crate::linksim::VerificationProbs {
                    real: rec.real_probs,
                    background: [
                        cfg.protocol.background_rate_hz_per_mw * pumps[0] * w * 1e-9,
                        cfg.protocol.background_rate_hz_per_mw * pumps[1] * w * 1e-9,
                    ],
                };
                rec.fourfold_probability = probs.fourfold_probability();
                rec.real_fraction = probs.real_fraction();
                rec
            })
            .collect();
        let analyzed = delivered.len() as u64;
        let verified_count = delivered.iter().filter(|d| d.retrieved).count() as u64;
        let windowed = LinkSummary {
            frames: summary.frames,
            sim_time_s: summary.sim_time_s,
            clicks: summary.clicks,
            heralds: summary.heralds,
            analyzed,
            dropped_deadline: summary.dropped_deadline,
            dropped_tpc: summary.dropped_tpc,
            verified_count,
            delivered,
        };
        let mut rng = tagged_rng(cfg_w.seed, 0xE57 ^ w.to_bits());
        out.push(evaluate_summary(&cfg_w, &windowed, mode, &mut rng)?);
    }
    Ok(out)
}

/// One row of the phase-sensitivity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub offset_rad: f64,
    pub tpi_fidelity: f64,
    pub spi_delta_phi_rad: f64,
    pub spi_fidelity: f64,
}

/// Side-by-side comparison of the two heralding schemes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub spi_click_hz: f64,
    pub tpi_herald_hz: f64,
    /// TPI heralds per SPI click; pairing consumes two clicks, stragglers
    /// account for the rest.
    pub ratio: f64,
    pub rows: Vec<PhaseRow>,
}

/// Runs both heralding interpretations on identical photon streams (the SPI
/// click record is the TPI detection record) and probes phase sensitivity by
/// re-running the identical seeded stream under each applied offset.
pub fn spi_tpi_compare(
    cfg: &LinkConfig,
    frames: u64,
    offsets_rad: &[f64],
) -> Result<CompareReport, AnalysisError> {
    let summary = crate::linksim::run_link(cfg, frames)?;
    let mut rows = Vec::with_capacity(offsets_rad.len());
    for &offset in offsets_rad {
        let mut cfg_off = cfg.clone();
        cfg_off.protocol.channel_phase_offsets_rad = [offset, 0.0];
        let off_summary = crate::linksim::run_link(&cfg_off, frames)?;
        let mut rng = tagged_rng(cfg_off.seed, 0xC0);
        let point = evaluate_summary(&cfg_off, &off_summary, EstimatorMode::Exact, &mut rng)?;
        let delta_phi = spi_delta_phi(&cfg_off);
        let spi_state = DensityMatrix::bell(BellKind::PsiPlus).dephase_relative(delta_phi);
        rows.push(PhaseRow {
            offset_rad: offset,
            tpi_fidelity: point.fidelity,
            spi_delta_phi_rad: delta_phi,
            spi_fidelity: spi_state.fidelity_to_bell(BellKind::PsiPlus),
        });
    }
    let spi_click_hz = summary.click_rate_hz();
    let tpi_herald_hz = summary.herald_rate_hz();
    Ok(CompareReport {
        spi_click_hz,
        tpi_herald_hz,
        ratio: if spi_click_hz > 0.0 { tpi_herald_hz / spi_click_hz } else { 0.0 },
        rows,
    })
}

/// Projected rate at a given usable-mode multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRate {
    pub usable_modes: u32,
    pub edr_hz: f64,
    pub capped: bool,
}

/// Linear multiplexing projection: the base point analyzes a single temporal
/// delay, so the rate scales with the number of usable modes until it
/// saturates at the heralding rate times the joint verification efficiency.
pub fn multiplexing_projection(
    base: &RatePoint,
    joint_verification_efficiency: f64,
    usable_modes: &[u32],
) -> Vec<ProjectedRate> {
    let cap = base.herald_hz * joint_verification_efficiency;
    usable_modes
        .iter()
        .map(|&m| {
            let linear = base.edr_hz * m as f64;
            ProjectedRate {
                usable_modes: m,
                edr_hz: linear.min(cap),
                capped: linear > cap,
            }
        })
        .collect()
}

/// Joint probability that an analyzed herald converts into a verified pair:
/// product over both sides of heralding, storage and readout efficiencies.
pub fn joint_verification_efficiency(cfg: &LinkConfig) -> f64 {
    let side_a = cfg.source_a.heralding_efficiency
        * cfg.memory_a.storage_efficiency
        * cfg.memory_a.readout_efficiency;
    let side_b = cfg.source_b.heralding_efficiency
        * cfg.memory_b.storage_efficiency
        * cfg.memory_b.readout_efficiency;
    side_a * side_b
}
