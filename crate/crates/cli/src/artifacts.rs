//! On-disk layout: `<root>/<config-hash>/<run-id>/{trace.csv, features.csv,
//! snapshots/, manifest.json}`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splab_core::snapshot::{self, SnapshotMeta};
use splab_core::trainer::{RunRecord, TracePoint};

use crate::config::RunSpec;
use crate::error::{CliError, CliResult};

/// Environment variable that overrides the configured output root.
pub const OUTPUT_ROOT_ENV: &str = "SPLAB_OUTPUT_ROOT";

const DEFAULT_ROOT: &str = "splab-runs";

/// `--out` flag, then the environment, then the config, then `splab-runs`.
pub fn output_root(flag: Option<&Path>, configured: Option<&str>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(env) = std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(env);
    }
    PathBuf::from(configured.unwrap_or(DEFAULT_ROOT))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub spec: RunSpec,
    pub status: RunStatus,
    pub error: Option<String>,
    pub record_hash: Option<String>,
    pub wall_time_secs: f64,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub artifacts: Vec<String>,
    pub code_version: String,
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_trace(path: &Path, trace: &[TracePoint]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["step", "eta_t", "loss"])?;
    for p in trace {
        w.write_record([p.step.to_string(), fmt_f64(p.eta_t), fmt_f64(p.loss)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub eta_t: f64,
    pub loss: f64,
}

pub fn read_trace(path: &Path) -> CliResult<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    let rows = r
        .deserialize()
        .collect::<Result<Vec<TraceRow>, _>>()
        .map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        return Err(CliError::Artifact(format!(
            "{}: empty trace",
            path.display()
        )));
    }
    Ok(rows)
}

pub fn as_pairs(rows: &[TraceRow]) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.eta_t, r.loss)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
struct FeatureRow {
    step: u64,
    feature: usize,
    loss_i: f64,
}

/// Per-feature losses as `(steps, rows of length N)`; features are 1-based
/// in the file.
pub fn read_features(path: &Path) -> CliResult<(Vec<u64>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let mut steps: Vec<u64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in r.deserialize() {
        let row: FeatureRow =
            rec.map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
        if steps.last() != Some(&row.step) {
            steps.push(row.step);
            rows.push(Vec::new());
        }
        let cur = rows.last_mut().expect("pushed above");
        if row.feature != cur.len() + 1 {
            return Err(CliError::Artifact(format!(
                "{}: feature {} out of order",
                path.display(),
                row.feature
            )));
        }
        cur.push(row.loss_i);
    }
    Ok((steps, rows))
}

/// Write every artifact of a finished run into `dir` and return the file
/// names relative to it.
pub fn write_run(dir: &Path, record: &RunRecord) -> CliResult<Vec<String>> {
    let mut files = vec!["trace.csv".to_string()];
    write_trace(&dir.join("trace.csv"), &record.loss_trace)?;
    if let Some(ft) = &record.feature_traces {
        let mut w = csv::Writer::from_path(dir.join("features.csv"))?;
        w.write_record(["step", "feature", "loss_i"])?;
        for (r, &step) in ft.steps.iter().enumerate() {
            for (i, v) in ft.losses.row(r).iter().enumerate() {
                w.write_record([step.to_string(), (i + 1).to_string(), fmt_f64(*v)])?;
            }
        }
        w.flush()?;
        files.push("features.csv".into());
    }
    if !record.snapshots.is_empty() {
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir)?;
        let run_id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        for s in &record.snapshots {
            let stem = format!("B_step{}", s.step);
            let (rows, cols) = s.b.dim();
            fs::write(snap_dir.join(format!("{stem}.bin")), snapshot::encode(&s.b))?;
            let meta = SnapshotMeta {
                rows,
                cols,
                step: s.step,
                eta_t: s.eta_t,
                run_id: run_id.clone(),
            };
            fs::write(
                snap_dir.join(format!("{stem}.json")),
                serde_json::to_string_pretty(&meta)?,
            )?;
            fs::write(
                snap_dir.join(format!("bias_step{}.bin", s.step)),
                snapshot::encode_values(s.bias.iter()),
            )?;
            files.push(format!("snapshots/{stem}.bin"));
        }
    }
    Ok(files)
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> CliResult<()> {
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(manifest)?,
    )?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> CliResult<RunManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Artifact(format!("{}: {e}", path.display())))
}

/// A completed run loaded back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub trace: Vec<TraceRow>,
}

/// Every successful run below `root` (a run directory, an experiment
/// directory or an output root), sorted by path.
pub fn load_runs(root: &Path) -> CliResult<Vec<LoadedRun>> {
    if !root.exists() {
        return Err(CliError::Artifact(format!(
            "{} does not exist",
            root.display()
        )));
    }
    let mut dirs = Vec::new();
    collect_run_dirs(root, 0, &mut dirs)?;
    dirs.sort();
    let mut out = Vec::new();
    for dir in dirs {
        let manifest = read_manifest(&dir)?;
        if manifest.status != RunStatus::Ok {
            continue;
        }
        let trace = read_trace(&dir.join("trace.csv"))?;
        out.push(LoadedRun {
            dir,
            manifest,
            trace,
        });
    }
    if out.is_empty() {
        return Err(CliError::Artifact(format!(
            "no runs found in {}",
            root.display()
        )));
    }
    Ok(out)
}

fn collect_run_dirs(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> CliResult<()> {
    if dir.join("manifest.json").is_file() {
        out.push(dir.to_path_buf());
        return Ok(());
    }
    if depth >= 3 {
        return Ok(());
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let hidden = path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().starts_with('.'));
        if path.is_dir() && !hidden {
            collect_run_dirs(&path, depth + 1, out)?;
        }
    }
    Ok(())
}
