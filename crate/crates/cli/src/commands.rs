use std::fs;
use std::path::{Path, PathBuf};

use psm_core::analysis::{
    bar_contrast, diffuser_correlation, gauge_register, localize_minima, phase_line_trace, refocus,
};
use psm_core::io::{
    read_dataset, read_localizations, read_metrics, read_result, sha256_hex, write_dataset, write_localizations,
    write_metrics, write_result, write_stack, write_stack_manifest, DatasetExtras, MetricRecord, RESULT_FILE,
    STACK_FILE,
};
use psm_core::simulator::{
    bar_layout, forward_measure_with_margin, make_diffuser, make_scan, synthesize_exit_wave, DiffuserFrame,
    TargetSpec,
};
use psm_core::solver::solve;
use psm_core::{ComplexField, Error as CoreError};
use serde_json::{json, Map, Value};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::lock::DirLock;
use crate::png::{write_convergence, write_panel, write_view, View};

pub const CONFIG_ECHO_FILE: &str = "config.toml";
pub const VIEWS_FILE: &str = "views.json";
pub const METRICS_FILE: &str = "metrics.json";
pub const DIVERGED_FILE: &str = "diverged.json";
pub const LOCALIZATIONS_FILE: &str = "localizations.csv";
pub const PHASE_TRACE_FILE: &str = "phase_trace.json";
pub const REPORT_FILE: &str = "report.json";
pub const PANEL_FILE: &str = "panel.png";

/// Renders ground truth, simulates the measurement stack and writes the
/// dataset. Returns the output directory and the manifest SHA-256.
pub fn simulate(config_path: &Path, out: Option<PathBuf>) -> Result<(PathBuf, String)> {
    let cfg = ExperimentConfig::load(config_path)?;
    let dir = out.unwrap_or_else(|| cfg.output_path(config_path));
    let _lock = DirLock::acquire(&dir)?;
    let optical = cfg.optical;
    let w = synthesize_exit_wave(&cfg.target, &optical)?;
    let scan = make_scan(cfg.scan.count, (cfg.scan.step_min, cfg.scan.step_max), cfg.scan.seed)?;
    let frame = DiffuserFrame::for_scan(optical.dim(), &scan, cfg.scan.margin);
    let d = make_diffuser(&cfg.diffuser, &frame.config(&optical))?;
    let set = forward_measure_with_margin(&w, &d, &optical, &scan, &cfg.noise, cfg.scan.margin)?;
    let mut seeds = Map::new();
    seeds.insert("diffuser".into(), json!(cfg.diffuser.seed));
    seeds.insert("scan".into(), json!(cfg.scan.seed));
    seeds.insert("noise".into(), json!(cfg.noise.seed));
    let extras = DatasetExtras {
        noise: Some(cfg.noise.clone()),
        seeds,
        truth: Some((w, d)),
        source: serde_json::to_value(&cfg)?,
    };
    let sha = write_dataset(&dir, &set, &extras)?;
    fs::write(dir.join(CONFIG_ECHO_FILE), cfg.to_toml()?)?;
    log::info!("wrote {} measurements to {}", set.len(), dir.display());
    Ok((dir, sha))
}

#[derive(Clone, Debug, Default)]
pub struct ReconstructOptions {
    pub first_k: Option<usize>,
    pub iterations: Option<usize>,
    pub no_momentum: bool,
    pub out: Option<PathBuf>,
}

fn source_config(source: &Value) -> Option<ExperimentConfig> {
    serde_json::from_value(source.clone()).ok()
}

/// Runs the solver on a dataset directory and writes the result directory.
pub fn reconstruct(dataset: &Path, opts: &ReconstructOptions) -> Result<PathBuf> {
    let loaded = read_dataset(dataset)?;
    let source = source_config(&loaded.manifest.source);
    let mut params = source.as_ref().map(|c| c.solver.clone()).unwrap_or_default();
    if let Some(n) = opts.iterations {
        params.iterations = n;
    }
    if opts.no_momentum {
        params.momentum_enabled = false;
    }
    let set = match opts.first_k {
        Some(k) => loaded.set.first(k)?,
        None => loaded.set.clone(),
    };
    let dir = opts.out.clone().unwrap_or_else(|| dataset.join("reconstruction"));
    let _lock = DirLock::acquire(&dir)?;
    let result = match solve(&set, &params) {
        Ok(r) => r,
        Err(e) => {
            if let CoreError::Diverged {
                sweep,
                error,
                initial,
                trace,
            } = &e
            {
                let dump = json!({
                    "message": e.to_string(),
                    "sweep": sweep,
                    "data_error": error,
                    "initial_error": initial,
                    "trace": trace,
                });
                fs::write(dir.join(DIVERGED_FILE), serde_json::to_vec_pretty(&dump)?)?;
            }
            return Err(e.into());
        }
    };
    write_result(&dir, &result, &loaded.manifest_sha256, set.len())?;

    let mut errors = vec![result.initial_error];
    errors.extend(&result.trace.data_error);
    let views = vec![
        write_convergence(&dir, "convergence.png", &errors)?,
        write_view(&dir, "wavefront_amplitude.png", "wavefront amplitude", &result.wavefront.amplitude())?,
        write_view(&dir, "wavefront_phase.png", "wavefront phase (rad)", &result.wavefront.phase())?,
        write_view(&dir, "diffuser_phase.png", "diffuser phase (rad)", &result.diffuser.phase())?,
    ];
    fs::write(dir.join(VIEWS_FILE), serde_json::to_vec_pretty(&views)?)?;

    let mut records = Vec::new();
    let mut scored = result.wavefront.clone();
    if let Some((truth_w, truth_d)) = loaded.truth(dataset)? {
        if truth_w.dim() == result.wavefront.dim() {
            let reg = gauge_register(&result.wavefront, &truth_w)?;
            records.push(MetricRecord {
                metric: "wavefront_correlation".into(),
                geometry: json!({ "shift": [reg.shift.0, reg.shift.1], "phase": reg.phase }),
                value: reg.correlation,
            });
            scored = reg.field;
        }
        let d_corr = diffuser_correlation(&result.diffuser, &result.frame, &truth_d, &loaded.set.frame(), &set.scan)?;
        records.push(MetricRecord {
            metric: "diffuser_correlation".into(),
            geometry: json!({ "pixels": "covered" }),
            value: d_corr,
        });
    }
    if let Some(cfg) = &source {
        if let TargetSpec::UsafBars {
            linewidths,
            region,
            orientation,
        } = &cfg.target
        {
            records.extend(bar_records(&scored, linewidths, *region, *orientation, &result.config)?);
        }
        if let Some(trace_cfg) = &cfg.analysis.phase_trace {
            let points = phase_line_trace(&scored, &trace_cfg.path, trace_cfg.background)?;
            fs::write(dir.join(PHASE_TRACE_FILE), serde_json::to_vec_pretty(&points)?)?;
        }
    }
    if !records.is_empty() {
        write_metrics(dir.join(METRICS_FILE), &records)?;
    }
    log::info!(
        "reconstructed {} measurements, final data error {:.3e}",
        set.len(),
        result.trace.last().unwrap_or(result.initial_error)
    );
    Ok(dir)
}

fn bar_records(
    field: &ComplexField,
    linewidths: &[f64],
    region: Option<[f64; 4]>,
    orientation: psm_core::simulator::Orientation,
    config: &psm_core::OpticalConfig,
) -> Result<Vec<MetricRecord>> {
    bar_layout(linewidths, region, orientation, config)?
        .iter()
        .map(|g| {
            Ok(MetricRecord {
                metric: "bar_contrast".into(),
                geometry: json!({
                    "linewidth": g.linewidth,
                    "linewidth_px": g.linewidth_px,
                    "row": g.row,
                    "col": g.col,
                }),
                value: bar_contrast(field, g)?,
            })
        })
        .collect()
}

/// Parses a comma-separated list of distances in meters.
pub fn parse_z_list(text: &str) -> Result<Vec<f64>> {
    let items: Vec<&str> = text.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(CoreError::Empty("refocus needs at least one z".into()).into());
    }
    items
        .iter()
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Input(format!("cannot parse z value {s:?}"))))
        .collect()
}

/// Unset fields fall back to the `[analysis]` section of the config that
/// produced the dataset, when it can be found.
#[derive(Clone, Debug, Default)]
pub struct PropagateOptions {
    pub z_list: Option<Vec<f64>>,
    pub localize: bool,
    pub min_separation: Option<f64>,
    pub threshold: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Refocuses a recovered wavefront to every `z` and writes the stack with
/// per-plane amplitude PNGs.
pub fn propagate(result_dir: &Path, opts: &PropagateOptions) -> Result<PathBuf> {
    let saved = read_result(result_dir)?;
    let config = saved.manifest.config;
    let analysis = ancestor_config(result_dir, &saved.manifest.input_manifest_sha256)
        .map(|c| c.analysis)
        .unwrap_or_default();
    let z_list = match &opts.z_list {
        Some(z) => z.clone(),
        None if !analysis.z_list.is_empty() => analysis.z_list.clone(),
        None => {
            return Err(CliError::Input(
                "no --z given and the dataset config has no analysis.z_list".into(),
            ))
        }
    };
    let stack = refocus(&saved.wavefront, &config, &z_list)?;
    let dir = opts.out.clone().unwrap_or_else(|| result_dir.join("stack"));
    let _lock = DirLock::acquire(&dir)?;
    let mut manifest = write_stack(&dir, &stack)?;
    let mut views: Vec<View> = Vec::with_capacity(stack.len());
    for (k, (_, field)) in stack.planes.iter().enumerate() {
        views.push(write_view(&dir, &format!("plane_{k:03}.png"), "amplitude", &field.amplitude())?);
    }
    manifest.views = views.iter().map(serde_json::to_value).collect::<serde_json::Result<_>>()?;
    manifest.source = json!({
        "result_sha256": sha256_hex(&fs::read(result_dir.join(RESULT_FILE))?),
        "wavefront_sha256": saved.manifest.wavefront_sha256,
        "input_manifest_sha256": saved.manifest.input_manifest_sha256,
    });
    write_stack_manifest(&dir, &manifest)?;
    if opts.localize || analysis.localization.is_some() {
        let defaults = analysis.localization.as_ref();
        let sep = opts
            .min_separation
            .or(defaults.map(|l| l.min_separation))
            .unwrap_or(5.0 * config.pixel_pitch);
        let threshold = opts.threshold.or(defaults.map(|l| l.threshold)).unwrap_or(0.5);
        let loc = localize_minima(&stack, sep, threshold)?;
        write_localizations(dir.join(LOCALIZATIONS_FILE), &loc)?;
        log::info!("localized {} particles", loc.len());
    }
    Ok(dir)
}

/// Finest bar linewidth with contrast at or above the resolved threshold.
fn finest_resolved(records: &[MetricRecord]) -> Option<f64> {
    records
        .iter()
        .filter(|r| r.metric == "bar_contrast" && r.value >= psm_core::analysis::RESOLVED_CONTRAST)
        .filter_map(|r| r.geometry.get("linewidth").and_then(Value::as_f64))
        .reduce(f64::min)
}

fn reconstruction_row(dir: &Path) -> Result<(Value, ndarray::Array2<f64>)> {
    let saved = read_result(dir)?;
    let m = &saved.manifest;
    let mut row = json!({
        "dir": dir.display().to_string(),
        "kind": "reconstruction",
        "measurements_used": m.measurements_used,
        "sweeps": m.data_error.len(),
        "initial_error": m.initial_error,
        "final_error": m.data_error.last().copied().unwrap_or(m.initial_error),
        "input_manifest_sha256": m.input_manifest_sha256,
    });
    let metrics_path = dir.join(METRICS_FILE);
    if metrics_path.exists() {
        let records = read_metrics(&metrics_path)?;
        for name in ["wavefront_correlation", "diffuser_correlation"] {
            if let Some(r) = records.iter().find(|r| r.metric == name) {
                row[name] = json!(r.value);
            }
        }
        let bars: Vec<Value> = records
            .iter()
            .filter(|r| r.metric == "bar_contrast")
            .map(|r| json!({ "linewidth": r.geometry["linewidth"], "contrast": r.value }))
            .collect();
        if !bars.is_empty() {
            row["bar_contrast"] = Value::Array(bars);
            row["finest_resolved_linewidth"] = json!(finest_resolved(&records));
            row["diffraction_limit"] = json!(m.config.diffraction_limit());
        }
    }
    Ok((row, saved.wavefront.amplitude()))
}

/// Config of the dataset with manifest hash `manifest_sha`, looked up among
/// the ancestors of `dir`.
fn ancestor_config(dir: &Path, manifest_sha: &str) -> Option<ExperimentConfig> {
    for dir in dir.ancestors().skip(1).take(3) {
        let Ok(bytes) = fs::read(dir.join(psm_core::io::MANIFEST_FILE)) else { continue };
        if sha256_hex(&bytes) != manifest_sha {
            continue;
        }
        let manifest: Value = serde_json::from_slice(&bytes).ok()?;
        return source_config(&manifest["source"]);
    }
    None
}

/// Ground-truth sphere positions `(x, y, z)` for the dataset that produced
/// a stack.
fn sphere_truth(stack_dir: &Path, manifest_sha: &str) -> Option<Vec<[f64; 3]>> {
    match ancestor_config(stack_dir, manifest_sha)?.target {
        TargetSpec::SphereVolume { spheres, .. } => Some(spheres.iter().map(|s| [s.x, s.y, -s.depth]).collect()),
        _ => None,
    }
}

fn stack_row(dir: &Path) -> Result<(Value, Option<ndarray::Array2<f64>>)> {
    let path = dir.join(STACK_FILE);
    let manifest: psm_core::io::StackManifest =
        serde_json::from_slice(&fs::read(&path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let z: Vec<f64> = manifest.planes.iter().map(|p| p.z).collect();
    let mut row = json!({
        "dir": dir.display().to_string(),
        "kind": "stack",
        "planes": z,
    });
    let loc_path = dir.join(LOCALIZATIONS_FILE);
    if loc_path.exists() {
        let loc = read_localizations(&loc_path)?;
        row["localizations"] = json!(loc.len());
        let sha = manifest.source["input_manifest_sha256"].as_str().unwrap_or_default();
        if let Some(truth) = sphere_truth(dir, sha) {
            let pitch = manifest.config.pixel_pitch;
            let step = z.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max);
            let found = truth
                .iter()
                .filter(|t| {
                    loc.positions.iter().any(|p| {
                        (p.x - t[0]).hypot(p.y - t[1]) <= pitch && (p.z - t[2]).abs() <= step
                    })
                })
                .count();
            row["truth_particles"] = json!(truth.len());
            row["recall"] = json!(found as f64 / truth.len().max(1) as f64);
        }
    }
    let middle = manifest.planes.get(manifest.planes.len() / 2);
    let image = match middle {
        Some(p) => Some(psm_core::io::read_field(dir.join(&p.file))?.amplitude()),
        None => None,
    };
    Ok((row, image))
}

/// Aggregates completed reconstruction and stack directories into one JSON
/// table plus a panel of their amplitude images.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<PathBuf> {
    if dirs.is_empty() {
        return Err(CliError::Input("report needs at least one run directory".into()));
    }
    let mut rows = Vec::with_capacity(dirs.len());
    let mut images = Vec::new();
    for dir in dirs {
        if dir.join(RESULT_FILE).is_file() {
            let (row, img) = reconstruction_row(dir)?;
            rows.push(row);
            images.push(img);
        } else if dir.join(STACK_FILE).is_file() {
            let (row, img) = stack_row(dir)?;
            rows.push(row);
            images.extend(img);
        } else {
            return Err(CliError::Input(format!(
                "{} is not a completed reconstruction or stack directory",
                dir.display()
            )));
        }
    }
    let _lock = DirLock::acquire(out)?;
    let scales = write_panel(&out.join(PANEL_FILE), &images, 128)?;
    let report = json!({
        "rows": rows,
        "panel": {
            "file": PANEL_FILE,
            "quantity": "amplitude",
            "scales": scales.iter().map(|(lo, hi)| json!({ "min": lo, "max": hi })).collect::<Vec<_>>(),
        },
    });
    fs::write(out.join(REPORT_FILE), serde_json::to_vec_pretty(&report)?)?;
    Ok(out.to_path_buf())
}
