//! Sweep execution over a bounded worker pool.
//!
//! Each run trains single-threaded and publishes its directory with one
//! rename, so a crash never leaves a half-written run behind and a rerun of
//! the same config skips everything already on disk.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use splab_core::features::FrequencyVector;
use splab_core::model::{init_model, Teacher};
use splab_core::trainer::train;

use crate::artifacts::{self, RunManifest, RunStatus};
use crate::config::{ExperimentConfig, RunSpec};
use crate::error::CliResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub outcome: Outcome,
}

pub fn experiment_dir(root: &Path, cfg: &ExperimentConfig) -> PathBuf {
    root.join(cfg.short_hash())
}

/// Run every cell of `cfg` below `root`, skipping runs already completed.
pub fn simulate(cfg: &ExperimentConfig, root: &Path, workers: usize) -> CliResult<Vec<RunReport>> {
    cfg.validate()?;
    let exp_dir = experiment_dir(root, cfg);
    fs::create_dir_all(&exp_dir)?;
    let hash = cfg.hash();
    let stamp = exp_dir.join("config.json");
    if !stamp.exists() {
        let tmp = exp_dir.join(format!(".config.json.{}", std::process::id()));
        fs::write(
            &tmp,
            serde_json::to_string_pretty(&serde_json::json!({
                "name": cfg.name,
                "config_hash": hash,
                "config": cfg,
            }))?,
        )?;
        fs::rename(&tmp, &stamp)?;
    }

    let runs = cfg.runs();
    let workers = workers.clamp(1, runs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunReport>>> = Mutex::new(vec![None; runs.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = runs.get(i) else { break };
                let outcome = execute(cfg, &hash, &exp_dir, spec)
                    .unwrap_or_else(|e| Outcome::Failed(e.to_string()));
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(RunReport {
                    run_id: spec.run_id.clone(),
                    outcome,
                });
            });
        }
    });
    Ok(results
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|r| r.expect("every run reported"))
        .collect())
}

fn is_complete(dir: &Path, hash: &str) -> bool {
    artifacts::read_manifest(dir)
        .map(|m| m.status == RunStatus::Ok && m.config_hash == hash)
        .unwrap_or(false)
}

fn execute(
    cfg: &ExperimentConfig,
    hash: &str,
    exp_dir: &Path,
    spec: &RunSpec,
) -> CliResult<Outcome> {
    let final_dir = exp_dir.join(&spec.run_id);
    if is_complete(&final_dir, hash) {
        return Ok(Outcome::Skipped);
    }
    let tmp = exp_dir.join(format!(".tmp-{}-{}", spec.run_id, std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir_all(&tmp)?;

    let started = artifacts::unix_now();
    let result = (|| {
        let freq = FrequencyVector::build(spec.law.clone(), spec.n, spec.normalize)?;
        let teacher = Teacher::new(spec.n, spec.teacher_b)?;
        let mut model = init_model(spec.n, spec.k, spec.mode, spec.train.seed, spec.init_scale)?;
        train(&freq, &teacher, &mut model, &spec.train)
    })();
    let mut manifest = RunManifest {
        experiment: cfg.name.clone(),
        config_hash: hash.to_string(),
        spec: spec.clone(),
        status: RunStatus::Ok,
        error: None,
        record_hash: None,
        wall_time_secs: 0.0,
        started_unix: started,
        finished_unix: 0,
        artifacts: Vec::new(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
    };
    let outcome = match result {
        Ok(record) => {
            manifest.artifacts = artifacts::write_run(&tmp, &record)?;
            manifest.record_hash = Some(record.manifest_hash.clone());
            manifest.wall_time_secs = record.wall_time_secs;
            Outcome::Completed
        }
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
            Outcome::Failed(e.to_string())
        }
    };
    manifest.finished_unix = artifacts::unix_now();
    artifacts::write_manifest(&tmp, &manifest)?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir)?;
    }
    fs::rename(&tmp, &final_dir)?;
    Ok(outcome)
}
