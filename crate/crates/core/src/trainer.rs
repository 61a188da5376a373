//! Online SGD with log-spaced instrumentation.
//!
//! Every step draws a fresh batch from the run's data stream; nothing is
//! reused. Losses are measured on one held-out batch drawn once from the
//! evaluation stream, so successive log points share their sampling noise and
//! the trace is smooth in time.

use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, LabError, Result};
use crate::features::{sample_batch, FrequencyVector, InputBatch};
use crate::model::{exact_linear_loss, per_feature_loss, sgd_step, EmbeddingMode, Model, Teacher};
use crate::rng::{self, LabRng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Held-out sample of `eval_batch_size` inputs.
    #[default]
    MonteCarlo,
    /// Population loss from the exact input moments (linear student only).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: u64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub seed: u64,
    pub n_log_points: usize,
    pub snapshot_times: Vec<u64>,
    pub learnable_embedding: bool,
    pub eval_mode: EvalMode,
    pub record_features: bool,
    pub divergence_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.1,
            steps: 1_000_000,
            batch_size: 256,
            eval_batch_size: 4096,
            seed: 0,
            n_log_points: 200,
            snapshot_times: Vec::new(),
            learnable_embedding: false,
            eval_mode: EvalMode::MonteCarlo,
            record_features: false,
            divergence_factor: 1e3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if self.eval_mode == EvalMode::MonteCarlo && self.eval_batch_size < self.batch_size {
            return Err(invalid("eval_batch_size must be >= batch_size"));
        }
        if self.n_log_points == 0 {
            return Err(invalid("n_log_points must be positive"));
        }
        if let Some(&t) = self.snapshot_times.iter().find(|&&t| t > self.steps) {
            return Err(invalid(format!(
                "snapshot at step {t} beyond {} steps",
                self.steps
            )));
        }
        if !(self.divergence_factor > 1.0) {
            return Err(invalid("divergence_factor must exceed 1"));
        }
        Ok(())
    }

    /// Step closest to `eta_t`, clamped to the run length.
    pub fn step_at(&self, eta_t: f64) -> u64 {
        ((eta_t / self.lr).round() as u64).min(self.steps)
    }
}

/// Step 0 followed by `n` log-spaced steps over `[1, steps]`, deduplicated.
pub fn log_steps(steps: u64, n: usize) -> Vec<u64> {
    let mut out = vec![0];
    if steps == 0 {
        return out;
    }
    let top = (steps as f64).ln();
    for k in 0..n {
        let frac = if n == 1 {
            1.0
        } else {
            k as f64 / (n - 1) as f64
        };
        let s = ((top * frac).exp().round() as u64).clamp(1, steps);
        if *out.last().expect("non-empty") < s {
            out.push(s);
        }
    }
    if *out.last().expect("non-empty") != steps {
        out.push(steps);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: u64,
    pub eta_t: f64,
    pub loss: f64,
    pub stderr: f64,
}

/// Per-feature losses at the logged steps (`steps.len() × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTraces {
    pub steps: Vec<u64>,
    pub eta_t: Vec<f64>,
    pub losses: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub eta_t: f64,
    pub b: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: TrainConfig,
    pub n: usize,
    pub k: usize,
    pub superposition: bool,
    pub loss_trace: Vec<TracePoint>,
    pub feature_traces: Option<FeatureTraces>,
    pub snapshots: Vec<Snapshot>,
    pub wall_time_secs: f64,
    pub manifest_hash: String,
}

impl RunRecord {
    /// `(eta_t, loss)` pairs for the analysis routines.
    pub fn trace(&self) -> Vec<(f64, f64)> {
        self.loss_trace.iter().map(|p| (p.eta_t, p.loss)).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.last().map_or(f64::NAN, |p| p.loss)
    }
}

/// SHA-256 of the canonical JSON form of `value` (object keys sorted).
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    // `serde_json::Value` keeps object keys in a sorted map, which makes the
    // rendering independent of field declaration order.
    let v = serde_json::to_value(value).expect("serializable");
    let text = serde_json::to_string(&v).expect("serializable");
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize)]
struct ManifestKey<'a> {
    config: &'a TrainConfig,
    n: usize,
    k: usize,
    mode: EmbeddingMode,
    embedding_seed: u64,
    teacher_b: f64,
    p: &'a [f64],
}

/// Monte Carlo loss and per-feature losses on `eval_batch_size` fresh inputs.
pub fn evaluate(
    model: &Model,
    freq: &FrequencyVector,
    teacher: &Teacher,
    eval_batch_size: usize,
    eval_rng: &mut LabRng,
) -> Result<(f64, Array1<f64>)> {
    let batch = sample_batch(freq, eval_batch_size, eval_rng);
    evaluate_on(model, teacher, &batch)
}

fn evaluate_on(model: &Model, teacher: &Teacher, batch: &InputBatch) -> Result<(f64, Array1<f64>)> {
    let per = per_feature_loss(&model.student, &model.embedding, teacher, batch)?;
    Ok((per.sum(), per))
}

enum Evaluator {
    Sample(InputBatch),
    Exact,
}

impl Evaluator {
    fn measure(
        &self,
        model: &Model,
        freq: &FrequencyVector,
        teacher: &Teacher,
    ) -> Result<(f64, f64, Array1<f64>)> {
        match self {
            Evaluator::Sample(batch) => {
                let (loss, per) = evaluate_on(model, teacher, batch)?;
                Ok((loss, loss / (batch.rows() as f64).sqrt(), per))
            }
            Evaluator::Exact => {
                let (loss, per) =
                    exact_linear_loss(&model.student, &model.embedding, teacher, freq)?;
                Ok((loss, 0.0, per))
            }
        }
    }
}

/// Train `model` in place for `cfg.steps` SGD steps.
pub fn train(
    freq: &FrequencyVector,
    teacher: &Teacher,
    model: &mut Model,
    cfg: &TrainConfig,
) -> Result<RunRecord> {
    cfg.validate()?;
    model.validate()?;
    let n = model.n();
    if freq.len() != n || teacher.n() != n {
        return Err(LabError::DimensionMismatch(format!(
            "frequencies ({}), teacher ({}) and model ({n}) disagree on N",
            freq.len(),
            teacher.n()
        )));
    }
    let learnable = model.embedding.mode() == EmbeddingMode::Learnable;
    if learnable != cfg.learnable_embedding {
        return Err(LabError::Configuration(format!(
            "learnable_embedding = {} but the embedding mode is {:?}",
            cfg.learnable_embedding,
            model.embedding.mode()
        )));
    }
    let evaluator = match cfg.eval_mode {
        EvalMode::Exact => {
            if model.is_superposition() {
                return Err(LabError::Configuration(
                    "exact evaluation needs the linear student".into(),
                ));
            }
            Evaluator::Exact
        }
        EvalMode::MonteCarlo => {
            let mut eval_rng = rng::stream(cfg.seed, Stream::Eval);
            Evaluator::Sample(sample_batch(freq, cfg.eval_batch_size, &mut eval_rng))
        }
    };
    let manifest_hash = canonical_hash(&ManifestKey {
        config: cfg,
        n,
        k: model.k(),
        mode: model.embedding.mode(),
        embedding_seed: model.embedding.seed(),
        teacher_b: teacher.decay(),
        p: freq.probs(),
    });

    let started = Instant::now();
    let log_at = log_steps(cfg.steps, cfg.n_log_points);
    let mut snapshot_at = cfg.snapshot_times.clone();
    snapshot_at.sort_unstable();
    snapshot_at.dedup();

    let mut trace = Vec::with_capacity(log_at.len());
    let mut feature_rows: Vec<Array1<f64>> = Vec::new();
    let mut snapshots = Vec::with_capacity(snapshot_at.len());
    let mut data_rng = rng::stream(cfg.seed, Stream::Data);
    let mut last_word = data_rng.get_word_pos();
    let mut initial = f64::NAN;
    let (mut next_log, mut next_snap) = (0usize, 0usize);

    let mut step = 0u64;
    loop {
        if next_log < log_at.len() && log_at[next_log] == step {
            let (loss, stderr, per) = evaluator.measure(model, freq, teacher)?;
            if step == 0 {
                initial = loss;
            }
            if !loss.is_finite() || (initial > 0.0 && loss > cfg.divergence_factor * initial) {
                return Err(LabError::Diverged {
                    step,
                    loss,
                    initial,
                });
            }
            trace.push(TracePoint {
                step,
                eta_t: cfg.lr * step as f64,
                loss,
                stderr,
            });
            if cfg.record_features {
                feature_rows.push(per);
            }
            next_log += 1;
        }
        if next_snap < snapshot_at.len() && snapshot_at[next_snap] == step {
            snapshots.push(Snapshot {
                step,
                eta_t: cfg.lr * step as f64,
                b: model.student.b.as_standard_layout().into_owned(),
                bias: model.student.bias.clone(),
            });
            next_snap += 1;
        }
        if step == cfg.steps {
            break;
        }
        let batch = sample_batch(freq, cfg.batch_size, &mut data_rng);
        let word = data_rng.get_word_pos();
        assert!(word > last_word, "data stream must never rewind");
        last_word = word;
        sgd_step(model, teacher, &batch, cfg.lr)?;
        step += 1;
    }

    let feature_traces = cfg.record_features.then(|| {
        let mut losses = Array2::zeros((feature_rows.len(), n));
        for (r, row) in feature_rows.iter().enumerate() {
            losses.row_mut(r).assign(row);
        }
        FeatureTraces {
            steps: trace.iter().map(|p| p.step).collect(),
            eta_t: trace.iter().map(|p| p.eta_t).collect(),
            losses,
        }
    });
    Ok(RunRecord {
        config: cfg.clone(),
        n,
        k: model.k(),
        superposition: model.is_superposition(),
        loss_trace: trace,
        feature_traces,
        snapshots,
        wall_time_secs: started.elapsed().as_secs_f64(),
        manifest_hash,
    })
}
