//! Command implementations shared by the binary and the integration tests.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use replink_core::analysis::{
    self, estimate_chsh, point_config, sample_campaign_tallies,
    simulate_measurement, spi_tpi_compare, EstimatorMode, RatePoint,
};
use replink_core::linksim::{self, export, LinkAccumulator, LinkConfig};
use replink_core::qstate::{BellKind, ChshSettings, DensityMatrix};
use replink_core::rng::{frame_rng, tagged_rng};
use replink_core::tally::TallyTable;

use crate::manifest::RunManifest;
use crate::scenario::LoadedScenario;
use crate::CliError;

const GRID_HEADER: &str =
    "power_mw,window_ns,herald_hz,edr_hz,fidelity,fidelity_err,chsh,chsh_err,sig_sigma";

/// Writes a file atomically: content lands under a temporary name and is
/// renamed into place once complete.
fn write_atomic(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Io(parent.to_path_buf(), e.to_string()))?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)
            .map_err(|e| CliError::Io(tmp.clone(), e.to_string()))?;
        f.write_all(content.as_bytes())
            .map_err(|e| CliError::Io(tmp.clone(), e.to_string()))?;
    }
    fs::rename(&tmp, path).map_err(|e| CliError::Io(path.to_path_buf(), e.to_string()))?;
    Ok(())
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn rate_point_json(p: &RatePoint) -> Value {
    json!({
        "power_mw": p.pump_power_mw,
        "window_ns": p.window_ns,
        "herald_hz": p.herald_hz,
        "analyzed_hz": p.analyzed_hz,
        "edr_hz": p.edr_hz,
        "edr_counted_hz": p.edr_counted_hz,
        "fidelity": finite_or_null(p.fidelity),
        "fidelity_err": finite_or_null(p.fidelity_err),
        "chsh": finite_or_null(p.chsh),
        "chsh_err": finite_or_null(p.chsh_err),
        "sig_sigma": finite_or_null(p.sig_sigma),
    })
}

fn grid_row(p: &RatePoint) -> String {
    format!(
        "{:.3},{:.3},{:.6},{:.9},{:.6},{:.6},{:.6},{:.6},{:.3}",
        p.pump_power_mw,
        p.window_ns,
        p.herald_hz,
        p.edr_hz,
        p.fidelity,
        p.fidelity_err,
        p.chsh,
        p.chsh_err,
        p.sig_sigma
    )
}

fn tally_json(t: &TallyTable) -> Value {
    let mut obj = serde_json::Map::new();
    for label in t.labels() {
        let c = t.get(label).unwrap().as_array();
        obj.insert(label.to_string(), json!({"pp": c[0], "pm": c[1], "mp": c[2], "mm": c[3]}));
    }
    Value::Object(obj)
}

/// Runs the link frame by frame, streaming the event/herald/delivery
/// exports, and writes the report and manifest.
pub fn cmd_simulate(loaded: &LoadedScenario, out_dir: &Path) -> Result<Value, CliError> {
    let scenario = &loaded.scenario;
    let cfg = &scenario.link;
    let frames = scenario.frames;

    let mut events = export::events_preamble();
    let mut heralds = export::heralds_preamble();
    let mut deliveries = export::deliveries_preamble();
    let mut acc = LinkAccumulator::default();
    for frame in 0..frames {
        let mut rng = frame_rng(cfg.seed, frame);
        let emissions = linksim::sample_emissions(cfg, &mut rng);
        let outcome = linksim::run_frame_with_emissions(cfg, &emissions, &mut rng);
        export::append_frame(frame, &outcome, &mut events, &mut heralds, &mut deliveries);
        acc.absorb(frame, &outcome);
    }
    let summary = acc.finish(cfg);
    let mut rng = tagged_rng(cfg.seed, 0xE57);
    let point = analysis::evaluate_summary(cfg, &summary, scenario.estimator, &mut rng)
        .map_err(CliError::Analysis)?;

    let outputs = &scenario.outputs;
    let events_path = outputs.events_path(out_dir);
    let heralds_path = outputs.heralds_path(out_dir);
    let deliveries_path = outputs.deliveries_path(out_dir);
    let report_path = outputs.report_path(out_dir);
    let manifest_path = outputs.manifest_path(out_dir);

    write_atomic(&events_path, &events)?;
    write_atomic(&heralds_path, &heralds)?;
    write_atomic(&deliveries_path, &deliveries)?;

    let report = json!({
        "config_hash_sha256": loaded.config_hash,
        "seed": cfg.seed,
        "frames": frames,
        "sim_time_s": summary.sim_time_s,
        "clicks": summary.clicks,
        "heralds": summary.heralds,
        "analyzed": summary.analyzed,
        "delivered": summary.delivered.len(),
        "dropped_deadline": summary.dropped_deadline,
        "dropped_tpc": summary.dropped_tpc,
        "verified_count": summary.verified_count,
        "point": rate_point_json(&point),
    });
    let mut report_text = serde_json::to_string_pretty(&report).expect("report serialization");
    report_text.push('\n');
    write_atomic(&report_path, &report_text)?;

    let manifest = RunManifest::new(
        &loaded.config_hash,
        cfg.seed,
        frames,
        cfg.grid.frame_duration_us,
        vec![
            path_name(&events_path),
            path_name(&heralds_path),
            path_name(&deliveries_path),
            path_name(&report_path),
        ],
    );
    write_atomic(&manifest_path, &manifest.to_json())?;
    Ok(report)
}

fn path_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SweepProgress {
    config_hash: String,
    completed: Vec<(usize, usize, String)>,
}

/// Runs the sweep grid, resumable per point: completed points are carried in
/// a sidecar progress file keyed by the configuration hash.
pub fn cmd_sweep(loaded: &LoadedScenario, out_dir: &Path) -> Result<PathBuf, CliError> {
    let scenario = &loaded.scenario;
    let spec = scenario.sweep.as_ref().ok_or(CliError::NoSweepSpec)?;
    let grid_path = scenario.outputs.grid_path(out_dir);
    let progress_path = grid_path.with_extension("progress.json");

    let mut completed: Vec<(usize, usize, String)> = Vec::new();
    if progress_path.exists() {
        let text = fs::read_to_string(&progress_path)
            .map_err(|e| CliError::Io(progress_path.clone(), e.to_string()))?;
        let progress: SweepProgress = serde_json::from_str(&text)
            .map_err(|e| CliError::Io(progress_path.clone(), e.to_string()))?;
        if progress.config_hash != loaded.config_hash {
            return Err(CliError::ResumeMismatch {
                expected: loaded.config_hash.clone(),
                found: progress.config_hash,
            });
        }
        completed = progress.completed;
    }

    let done: BTreeSet<(usize, usize)> =
        completed.iter().map(|(p, w, _)| (*p, *w)).collect();
    for pi in 0..spec.pump_powers_mw.len() {
        for wi in 0..spec.windows_ns.len() {
            if done.contains(&(pi, wi)) {
                continue;
            }
            let cfg = point_config(&scenario.link, spec, pi, wi);
            cfg.validate().map_err(CliError::Physics)?;
            let point = analysis::evaluate_point(&cfg, spec.frames_per_point, spec.estimator)
                .map_err(CliError::Analysis)?;
            completed.push((pi, wi, grid_row(&point)));
            let progress = SweepProgress {
                config_hash: loaded.config_hash.clone(),
                completed: completed.clone(),
            };
            write_atomic(
                &progress_path,
                &serde_json::to_string_pretty(&progress).expect("progress serialization"),
            )?;
        }
    }

    completed.sort_by_key(|(p, w, _)| (*p, *w));
    let mut grid = format!("# config_hash={}\n{GRID_HEADER}\n", loaded.config_hash);
    for (_, _, row) in &completed {
        grid.push_str(row);
        grid.push('\n');
    }
    write_atomic(&grid_path, &grid)?;
    fs::remove_file(&progress_path).ok();
    Ok(grid_path)
}

/// CHSH campaign on delivered pairs (or on an injected exact state).
pub fn cmd_belltest(loaded: &LoadedScenario, out_dir: &Path) -> Result<Value, CliError> {
    let scenario = &loaded.scenario;
    let cfg = &scenario.link;
    let settings = ChshSettings::psi_plus_optimal();

    let (tallies, source) = match &scenario.debug_source {
        Some(dbg) => {
            let rho = DensityMatrix::werner(dbg.werner_p, dbg.kind)
                .map_err(|e| CliError::Io(out_dir.to_path_buf(), e.to_string()))?;
            let mut rng = tagged_rng(cfg.seed, 0xBE11);
            let mut tallies = TallyTable::new();
            for (label, setting) in ChshSettings::LABELS.iter().zip(settings.pairs()) {
                let states: Vec<&DensityMatrix> =
                    std::iter::repeat_n(&rho, scenario.samples_per_setting as usize).collect();
                tallies.merge(&simulate_measurement(states, &setting, label, &mut rng));
            }
            (tallies, format!("debug werner({}, {})", dbg.werner_p, dbg.kind))
        }
        None => {
            let summary =
                linksim::run_link(cfg, scenario.frames).map_err(CliError::Physics)?;
            if summary.delivered.is_empty() {
                return Err(CliError::NoDeliveredPairs {
                    frames: scenario.frames,
                    heralds: summary.heralds,
                    analyzed: summary.analyzed,
                });
            }
            let mut rng = tagged_rng(cfg.seed, 0xBE11);
            let campaign = sample_campaign_tallies(cfg, &summary, &mut rng);
            (campaign.chsh, "simulated link".to_string())
        }
    };
    let est = estimate_chsh(&tallies).map_err(|e| CliError::Analysis(e.into()))?;

    let report = json!({
        "config_hash_sha256": loaded.config_hash,
        "seed": cfg.seed,
        "source": source,
        "s": est.s,
        "stderr": est.stderr,
        "significance": est.significance,
        "tallies": tally_json(&tallies),
    });
    let mut text = serde_json::to_string_pretty(&report).expect("belltest serialization");
    text.push('\n');
    write_atomic(&out_dir.join("belltest.json"), &text)?;
    Ok(report)
}

/// Tomography of the delivered ensemble (per delivered kind) or of an
/// injected exact state.
pub fn cmd_tomography(loaded: &LoadedScenario, out_dir: &Path) -> Result<Value, CliError> {
    let scenario = &loaded.scenario;
    let cfg = &scenario.link;
    let mut rng = tagged_rng(cfg.seed, 0x7080);

    let mut sections = serde_json::Map::new();
    match &scenario.debug_source {
        Some(dbg) => {
            let rho = DensityMatrix::werner(dbg.werner_p, dbg.kind)
                .map_err(|e| CliError::Io(out_dir.to_path_buf(), e.to_string()))?;
            let report = analysis::run_tomography(
                std::slice::from_ref(&rho),
                scenario.samples_per_setting,
                &mut rng,
            )
            .map_err(CliError::Analysis)?;
            sections.insert(
                format!("{}", dbg.kind),
                tomography_section(&report),
            );
        }
        None => {
            let summary =
                linksim::run_link(cfg, scenario.frames).map_err(CliError::Physics)?;
            if summary.delivered.is_empty() {
                return Err(CliError::NoDeliveredPairs {
                    frames: scenario.frames,
                    heralds: summary.heralds,
                    analyzed: summary.analyzed,
                });
            }
            for kind in [BellKind::PsiPlus, BellKind::PsiMinus] {
                let records: Vec<_> = summary
                    .delivered
                    .iter()
                    .filter(|d| d.delivered_kind == kind)
                    .cloned()
                    .collect();
                // The measured ensemble is the verification-weighted mixture
                // of the delivered states.
                let Some(rho) = analysis::ensemble_state(cfg, &records) else {
                    continue;
                };
                let report = analysis::run_tomography(
                    std::slice::from_ref(&rho),
                    scenario.samples_per_setting,
                    &mut rng,
                )
                .map_err(CliError::Analysis)?;
                sections.insert(format!("{kind}"), tomography_section(&report));
            }
            if sections.is_empty() {
                return Err(CliError::NoDeliveredPairs {
                    frames: scenario.frames,
                    heralds: summary.heralds,
                    analyzed: summary.analyzed,
                });
            }
        }
    }

    let report = json!({
        "config_hash_sha256": loaded.config_hash,
        "seed": cfg.seed,
        "samples_per_setting": scenario.samples_per_setting,
        "reconstructions": Value::Object(sections),
    });
    let mut text = serde_json::to_string_pretty(&report).expect("tomography serialization");
    text.push('\n');
    write_atomic(&out_dir.join("tomography.json"), &text)?;
    Ok(report)
}

fn tomography_section(report: &analysis::TomographyReport) -> Value {
    json!({
        "state_record": report.rho.to_record(),
        "fidelity_psi_plus": report.fidelity_plus,
        "fidelity_psi_minus": report.fidelity_minus,
    })
}

/// Heralding-scheme comparison: rates, pairing ratio and phase sensitivity.
pub fn cmd_compare(loaded: &LoadedScenario, out_dir: &Path) -> Result<Value, CliError> {
    let scenario = &loaded.scenario;
    let report = spi_tpi_compare(
        &scenario.link,
        scenario.frames,
        &scenario.compare_offsets_rad,
    )
    .map_err(CliError::Analysis)?;

    let rows: Vec<Value> = report
        .rows
        .iter()
        .map(|r| {
            json!({
                "offset_rad": r.offset_rad,
                "tpi_fidelity": finite_or_null(r.tpi_fidelity),
                "spi_delta_phi_rad": r.spi_delta_phi_rad,
                "spi_fidelity": r.spi_fidelity,
            })
        })
        .collect();
    let out = json!({
        "config_hash_sha256": loaded.config_hash,
        "seed": scenario.link.seed,
        "spi_click_hz": report.spi_click_hz,
        "tpi_herald_hz": report.tpi_herald_hz,
        "ratio": report.ratio,
        "phase_rows": rows,
    });
    let mut text = serde_json::to_string_pretty(&out).expect("compare serialization");
    text.push('\n');
    write_atomic(&out_dir.join("compare.json"), &text)?;
    Ok(out)
}

/// Builds a scenario document for one of the named presets; used to generate
/// the shipped scenario files and to keep them in lockstep with the code.
pub fn preset_scenario(name: &str) -> Option<crate::scenario::ScenarioFile> {
    let link: LinkConfig = match name {
        "noiseless" => replink_core::linksim::presets::noiseless(),
        "calibrated_3mw" => replink_core::linksim::presets::calibrated_3mw(),
        "calibrated_18mw" => replink_core::linksim::presets::calibrated_18mw(),
        _ => return None,
    };
    Some(crate::scenario::ScenarioFile {
        link,
        frames: 100_000,
        estimator: EstimatorMode::Sampled,
        sweep: Some(replink_core::analysis::SweepSpec {
            pump_powers_mw: vec![3.0, 18.0],
            windows_ns: vec![10.0, 20.0, 40.0, 80.0],
            frames_per_point: 100_000,
            protocol: None,
            estimator: EstimatorMode::Exact,
        }),
        debug_source: None,
        samples_per_setting: 10_000,
        compare_offsets_rad: vec![0.0, 0.3, 0.7, 1.2, 1.9],
        outputs: crate::scenario::OutputPaths::default(),
    })
}
