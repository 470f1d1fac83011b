//! Result emission: CSV tables, JSON mirrors, and run metadata.
//!
//! CSV is the primary interchange format. All floating-point fields are
//! written with 17 significant digits so they reparse to the exact bit
//! pattern. Every run directory gets a `run_meta.json` recording the
//! canonical spec, seed, code version, and wall-clock duration.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::analysis::{LearningCurve, ModeTable, StabilityReport, SteadyStateEstimate};

use super::runner::{ComparisonBundle, ResultBundle};
use super::spec::ExperimentDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: serialization failed: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Decimal form that reparses to the exact same f64.
fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_text(path: PathBuf, content: &str, manifest: &mut Vec<PathBuf>) -> Result<(), EmitError> {
    fs::write(&path, content).map_err(|source| EmitError::Io { path: path.clone(), source })?;
    manifest.push(path);
    Ok(())
}

fn write_json<T: Serialize>(
    path: PathBuf,
    value: &T,
    manifest: &mut Vec<PathBuf>,
) -> Result<(), EmitError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| EmitError::Json { path: path.clone(), source })?;
    text.push('\n');
    write_text(path, &text, manifest)
}

fn curve_csv(curve: &LearningCurve) -> String {
    let mut out = String::from("iteration,node,msd\n");
    for t in 0..curve.iterations() {
        for node in 0..curve.nodes() {
            let _ = writeln!(out, "{},{},{}", t + 1, node + 1, float(curve.value(t, node)));
        }
    }
    out
}

#[derive(Serialize)]
struct CurveJson<'a> {
    iterations: usize,
    nodes: usize,
    trials: usize,
    /// One row per iteration, one entry per node.
    msd: Vec<&'a [f64]>,
}

impl<'a> CurveJson<'a> {
    fn new(curve: &'a LearningCurve) -> Self {
        Self {
            iterations: curve.iterations(),
            nodes: curve.nodes(),
            trials: curve.trials(),
            msd: (0..curve.iterations()).map(|t| curve.row(t)).collect(),
        }
    }
}

fn steady_csv(steady: &SteadyStateEstimate) -> String {
    let mut out = String::from("node,msd_mean,msd_stderr,window_start,window_end\n");
    for node in 0..steady.nodes() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            node + 1,
            float(steady.msd_per_node()[node]),
            float(steady.standard_error_per_node()[node]),
            steady.window_start(),
            steady.window_end()
        );
    }
    out
}

#[derive(Serialize)]
struct SteadyJson<'a> {
    msd_per_node: &'a [f64],
    standard_error_per_node: &'a [f64],
    window_start: usize,
    window_end: usize,
}

impl<'a> SteadyJson<'a> {
    fn new(steady: &'a SteadyStateEstimate) -> Self {
        Self {
            msd_per_node: steady.msd_per_node(),
            standard_error_per_node: steady.standard_error_per_node(),
            window_start: steady.window_start(),
            window_end: steady.window_end(),
        }
    }
}

const MODES_HEADER: &str = "m,mu_lambda,n_nodes,magnitude\n";

fn modes_rows(modes: &ModeTable, out: &mut String) {
    for entry in modes.entries() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            entry.index,
            float(entry.mu_lambda),
            modes.n_nodes(),
            float(entry.magnitude)
        );
    }
}

#[derive(Serialize)]
struct ModeEntryJson {
    m: usize,
    mu_lambda: f64,
    n_nodes: usize,
    magnitude: f64,
}

fn modes_json(modes: &ModeTable) -> Vec<ModeEntryJson> {
    modes
        .entries()
        .iter()
        .map(|e| ModeEntryJson {
            m: e.index,
            mu_lambda: e.mu_lambda,
            n_nodes: modes.n_nodes(),
            magnitude: e.magnitude,
        })
        .collect()
}

fn stability_csv(report: &StabilityReport) -> String {
    format!(
        "spectral_radius,stable\n{},{}\n",
        float(report.spectral_radius),
        report.stable
    )
}

#[derive(Serialize)]
struct StabilityJson {
    spectral_radius: f64,
    stable: bool,
}

fn recursion_csv(sequence: &[nalgebra::DVector<f64>]) -> String {
    let mut out = String::from("iteration,component,value\n");
    for (idx, v) in sequence.iter().enumerate() {
        for (component, value) in v.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", idx + 1, component + 1, float(*value));
        }
    }
    out
}

#[derive(Serialize)]
struct RecursionJson {
    iterations: usize,
    dimension: usize,
    /// One row per iteration.
    values: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    version: &'static str,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    preset: Option<&'a str>,
    duration_seconds: f64,
    spec: &'a ExperimentDoc,
    s0_resolved: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_final_estimate: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_bias: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    runs: Vec<RunMetaSized>,
}

#[derive(Serialize)]
struct RunMetaSized {
    size: usize,
    step_size: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_final_estimate: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    empirical_bias: Option<f64>,
}

const VERSION: &str = env!("CARGO_PKG_VERSION");

fn ensure_dir(out_dir: &Path) -> Result<(), EmitError> {
    fs::create_dir_all(out_dir)
        .map_err(|source| EmitError::Io { path: out_dir.to_path_buf(), source })
}

/// Write one experiment's requested tables under `out_dir` and return the
/// manifest of written files. `run_meta.json` is always written.
pub fn emit_results(
    bundle: &ResultBundle,
    out_dir: &Path,
    formats: &BTreeSet<Format>,
    preset: Option<&str>,
) -> Result<Vec<PathBuf>, EmitError> {
    ensure_dir(out_dir)?;
    let mut manifest = Vec::new();
    let csv = formats.contains(&Format::Csv);
    let json = formats.contains(&Format::Json);

    if let Some(curve) = &bundle.curve {
        if csv {
            write_text(out_dir.join("learning_curve.csv"), &curve_csv(curve), &mut manifest)?;
        }
        if json {
            write_json(out_dir.join("learning_curve.json"), &CurveJson::new(curve), &mut manifest)?;
        }
    }
    if let Some(steady) = &bundle.steady {
        if csv {
            write_text(out_dir.join("steady_state.csv"), &steady_csv(steady), &mut manifest)?;
        }
        if json {
            write_json(out_dir.join("steady_state.json"), &SteadyJson::new(steady), &mut manifest)?;
        }
    }
    if let Some(modes) = &bundle.modes {
        if csv {
            let mut out = String::from(MODES_HEADER);
            modes_rows(modes, &mut out);
            write_text(out_dir.join("modes.csv"), &out, &mut manifest)?;
        }
        if json {
            write_json(out_dir.join("modes.json"), &modes_json(modes), &mut manifest)?;
        }
    }
    if let Some(report) = &bundle.stability {
        if csv {
            write_text(out_dir.join("stability.csv"), &stability_csv(report), &mut manifest)?;
        }
        if json {
            let value = StabilityJson { spectral_radius: report.spectral_radius, stable: report.stable };
            write_json(out_dir.join("stability.json"), &value, &mut manifest)?;
        }
    }
    if let Some(sequence) = &bundle.mean_recursion {
        if csv {
            write_text(out_dir.join("mean_recursion.csv"), &recursion_csv(sequence), &mut manifest)?;
        }
        if json {
            let value = RecursionJson {
                iterations: sequence.len(),
                dimension: bundle.spec.config().dimension(),
                values: sequence.iter().map(|v| v.iter().copied().collect()).collect(),
            };
            write_json(out_dir.join("mean_recursion.json"), &value, &mut manifest)?;
        }
    }

    let doc = bundle.spec.to_doc();
    let meta = RunMeta {
        version: VERSION,
        seed: bundle.spec.config().seed(),
        preset,
        duration_seconds: bundle.duration.as_secs_f64(),
        spec: &doc,
        s0_resolved: bundle.s0.values().iter().copied().collect(),
        mean_final_estimate: bundle.mean_final_estimate.as_ref().map(|v| v.iter().copied().collect()),
        empirical_bias: bundle.empirical_bias,
        runs: Vec::new(),
    };
    write_json(out_dir.join("run_meta.json"), &meta, &mut manifest)?;
    Ok(manifest)
}

/// Write a comparison's tables: per-size files using the single-run schemas
/// (suffixed `_n{size}`), combined tables keyed by size, and `run_meta.json`.
pub fn emit_comparison(
    bundle: &ComparisonBundle,
    out_dir: &Path,
    formats: &BTreeSet<Format>,
    preset: Option<&str>,
) -> Result<Vec<PathBuf>, EmitError> {
    ensure_dir(out_dir)?;
    let mut manifest = Vec::new();
    let csv = formats.contains(&Format::Csv);
    let json = formats.contains(&Format::Json);

    for run in &bundle.runs {
        let suffix = format!("_n{}", run.size);
        if let Some(curve) = &run.bundle.curve {
            if csv {
                write_text(out_dir.join(format!("learning_curve{suffix}.csv")), &curve_csv(curve), &mut manifest)?;
            }
            if json {
                write_json(
                    out_dir.join(format!("learning_curve{suffix}.json")),
                    &CurveJson::new(curve),
                    &mut manifest,
                )?;
            }
        }
        if let Some(steady) = &run.bundle.steady {
            if csv {
                write_text(out_dir.join(format!("steady_state{suffix}.csv")), &steady_csv(steady), &mut manifest)?;
            }
            if json {
                write_json(
                    out_dir.join(format!("steady_state{suffix}.json")),
                    &SteadyJson::new(steady),
                    &mut manifest,
                )?;
            }
        }
        if let Some(sequence) = &run.bundle.mean_recursion {
            if csv {
                write_text(
                    out_dir.join(format!("mean_recursion{suffix}.csv")),
                    &recursion_csv(sequence),
                    &mut manifest,
                )?;
            }
            if json {
                let value = RecursionJson {
                    iterations: sequence.len(),
                    dimension: run.bundle.spec.config().dimension(),
                    values: sequence.iter().map(|v| v.iter().copied().collect()).collect(),
                };
                write_json(out_dir.join(format!("mean_recursion{suffix}.json")), &value, &mut manifest)?;
            }
        }
    }

    // Terminal-node curves aligned across sizes, for side-by-side plotting.
    let aligned: Vec<_> = bundle
        .runs
        .iter()
        .filter_map(|run| run.bundle.curve.as_ref().map(|curve| (run.size, curve)))
        .collect();
    if !aligned.is_empty() {
        if csv {
            let mut out = String::from("iteration,size,msd\n");
            for (size, curve) in &aligned {
                let terminal = curve.terminal_node();
                for t in 0..curve.iterations() {
                    let _ = writeln!(out, "{},{},{}", t + 1, size, float(curve.value(t, terminal)));
                }
            }
            write_text(out_dir.join("comparison_curves.csv"), &out, &mut manifest)?;
        }
        if json {
            #[derive(Serialize)]
            struct AlignedJson {
                size: usize,
                terminal_node: usize,
                msd: Vec<f64>,
            }
            let value: Vec<_> = aligned
                .iter()
                .map(|(size, curve)| AlignedJson {
                    size: *size,
                    terminal_node: curve.terminal_node() + 1,
                    msd: curve.node_series(curve.terminal_node()).collect(),
                })
                .collect();
            write_json(out_dir.join("comparison_curves.json"), &value, &mut manifest)?;
        }
    }

    // Combined steady-state table keyed by size.
    let steadies: Vec<_> = bundle
        .runs
        .iter()
        .filter_map(|run| run.bundle.steady.as_ref().map(|s| (run.size, s)))
        .collect();
    if !steadies.is_empty() {
        if csv {
            let mut out = String::from("size,node,msd_mean,msd_stderr,window_start,window_end\n");
            for (size, steady) in &steadies {
                for node in 0..steady.nodes() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{}",
                        size,
                        node + 1,
                        float(steady.msd_per_node()[node]),
                        float(steady.standard_error_per_node()[node]),
                        steady.window_start(),
                        steady.window_end()
                    );
                }
            }
            write_text(out_dir.join("comparison_steady_state.csv"), &out, &mut manifest)?;
        }
        if json {
            #[derive(Serialize)]
            struct SizedSteadyJson<'a> {
                size: usize,
                #[serde(flatten)]
                steady: SteadyJson<'a>,
            }
            let value: Vec<_> = steadies
                .iter()
                .map(|(size, steady)| SizedSteadyJson { size: *size, steady: SteadyJson::new(steady) })
                .collect();
            write_json(out_dir.join("comparison_steady_state.json"), &value, &mut manifest)?;
        }
    }

    // Mode tables merge into one file; the n_nodes column tells sizes apart.
    let mode_tables: Vec<_> =
        bundle.runs.iter().filter_map(|run| run.bundle.modes.as_ref()).collect();
    if !mode_tables.is_empty() {
        if csv {
            let mut out = String::from(MODES_HEADER);
            for modes in &mode_tables {
                modes_rows(modes, &mut out);
            }
            write_text(out_dir.join("modes.csv"), &out, &mut manifest)?;
        }
        if json {
            let value: Vec<_> = mode_tables.iter().flat_map(|m| modes_json(m)).collect();
            write_json(out_dir.join("modes.json"), &value, &mut manifest)?;
        }
    }

    // Stability reports combine into one size-keyed table.
    let reports: Vec<_> = bundle
        .runs
        .iter()
        .filter_map(|run| run.bundle.stability.as_ref().map(|r| (run.size, r)))
        .collect();
    if !reports.is_empty() {
        if csv {
            let mut out = String::from("size,spectral_radius,stable\n");
            for (size, report) in &reports {
                let _ = writeln!(out, "{},{},{}", size, float(report.spectral_radius), report.stable);
            }
            write_text(out_dir.join("comparison_stability.csv"), &out, &mut manifest)?;
        }
        if json {
            #[derive(Serialize)]
            struct SizedStabilityJson {
                size: usize,
                spectral_radius: f64,
                stable: bool,
            }
            let value: Vec<_> = reports
                .iter()
                .map(|(size, r)| SizedStabilityJson {
                    size: *size,
                    spectral_radius: r.spectral_radius,
                    stable: r.stable,
                })
                .collect();
            write_json(out_dir.join("comparison_stability.json"), &value, &mut manifest)?;
        }
    }

    let doc = bundle.spec.to_doc();
    let meta = RunMeta {
        version: VERSION,
        seed: bundle.spec.base().config().seed(),
        preset,
        duration_seconds: bundle.duration.as_secs_f64(),
        spec: &doc,
        s0_resolved: bundle
            .runs
            .first()
            .map(|run| run.bundle.s0.values().iter().copied().collect())
            .unwrap_or_default(),
        mean_final_estimate: None,
        empirical_bias: None,
        runs: bundle
            .runs
            .iter()
            .map(|run| RunMetaSized {
                size: run.size,
                step_size: run.step_size,
                mean_final_estimate: run
                    .bundle
                    .mean_final_estimate
                    .as_ref()
                    .map(|v| v.iter().copied().collect()),
                empirical_bias: run.bundle.empirical_bias,
            })
            .collect(),
    };
    write_json(out_dir.join("run_meta.json"), &meta, &mut manifest)?;
    Ok(manifest)
}
