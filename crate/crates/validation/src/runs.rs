//! Training runs at `N = 1024`, memoized by their full run settings.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use splab_core::features::{DecayLaw, FrequencyVector};
use splab_core::model::{init_model, EmbeddingMode, Teacher, DEFAULT_INIT_SCALE};
use splab_core::trainer::{train, EvalMode, RunRecord, TrainConfig};

pub const N: usize = 1024;
pub const SEED: u64 = 11;
pub const LOG_POINTS: usize = 200;

/// Linear student: `η λ_max` stays near 0.1, close to gradient flow.
pub const LINEAR_LR: f64 = 0.5;
pub const LINEAR_BATCH: usize = 256;

pub const SUPER_LR: f64 = 1.0;
pub const SUPER_BATCH: usize = 32;
pub const SUPER_EVAL: usize = 4096;
/// Larger held-out batch where per-feature losses are inspected.
pub const FEATURE_EVAL: usize = 16384;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub a: f64,
    pub b: f64,
    /// `None` is the linear student with `K = N`.
    pub k: Option<usize>,
    pub lr: f64,
    pub batch: usize,
    pub eval_batch: usize,
    pub eta_t_end: f64,
    pub record_features: bool,
}

impl RunSpec {
    pub fn linear(a: f64, b: f64, eta_t_end: f64) -> Self {
        Self {
            a,
            b,
            k: None,
            lr: LINEAR_LR,
            batch: LINEAR_BATCH,
            eval_batch: LINEAR_BATCH,
            eta_t_end,
            record_features: false,
        }
    }

    pub fn superposition(a: f64, b: f64, k: usize, eta_t_end: f64) -> Self {
        Self {
            a,
            b,
            k: Some(k),
            lr: SUPER_LR,
            batch: SUPER_BATCH,
            eval_batch: SUPER_EVAL,
            eta_t_end,
            record_features: false,
        }
    }

    pub fn lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self.eval_batch = self.eval_batch.max(batch);
        self
    }

    pub fn features(mut self, eval_batch: usize) -> Self {
        self.record_features = true;
        self.eval_batch = eval_batch.max(self.batch);
        self
    }

    pub fn steps(&self) -> u64 {
        (self.eta_t_end / self.lr).ceil() as u64
    }

    pub fn label(&self) -> String {
        let k = self.k.map_or("linear".to_string(), |k| format!("K={k}"));
        format!(
            "a={} b={} {k} lr={} bs={} eta_t<={:e}",
            self.a, self.b, self.lr, self.batch, self.eta_t_end
        )
    }

    fn key(&self) -> String {
        format!("{self:?}")
    }
}

#[derive(Debug)]
pub struct Run {
    pub spec: RunSpec,
    /// Sum of the raw power-law weights.
    pub z: f64,
    pub probs: Vec<f64>,
    pub record: RunRecord,
}

impl Run {
    pub fn trace(&self) -> Vec<(f64, f64)> {
        self.record.trace()
    }

    pub fn k(&self) -> usize {
        self.record.k
    }
}

type Slot = Arc<OnceLock<Arc<Run>>>;

fn cache() -> &'static Mutex<HashMap<String, Slot>> {
    static CACHE: OnceLock<Mutex<HashMap<String, Slot>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Train `spec` once per process; concurrent callers wait for the same run.
pub fn run(spec: &RunSpec) -> Arc<Run> {
    let slot = {
        let mut map = cache().lock().expect("run cache poisoned");
        map.entry(spec.key()).or_default().clone()
    };
    slot.get_or_init(|| Arc::new(execute(spec))).clone()
}

fn execute(spec: &RunSpec) -> Run {
    let freq = FrequencyVector::build(DecayLaw::PowerLaw { a: spec.a }, N, true)
        .expect("valid power law");
    let teacher = Teacher::new(N, spec.b).expect("valid teacher");
    let (k, mode, init_scale, eval_mode) = match spec.k {
        None => (N, EmbeddingMode::Identity, 0.0, EvalMode::Exact),
        Some(k) => (k, EmbeddingMode::FixedRandom, DEFAULT_INIT_SCALE, EvalMode::MonteCarlo),
    };
    let mut model = init_model(N, k, mode, SEED, init_scale).expect("valid model");
    let cfg = TrainConfig {
        lr: spec.lr,
        steps: spec.steps(),
        batch_size: spec.batch,
        eval_batch_size: spec.eval_batch,
        seed: SEED,
        n_log_points: LOG_POINTS,
        snapshot_times: Vec::new(),
        learnable_embedding: false,
        eval_mode,
        record_features: spec.record_features,
        divergence_factor: 1e3,
    };
    let start = Instant::now();
    let record = train(&freq, &teacher, &mut model, &cfg).expect("training run");
    eprintln!("trained {} in {:.1}s", spec.label(), start.elapsed().as_secs_f64());
    Run {
        spec: spec.clone(),
        z: freq.normalization_constant(),
        probs: freq.probs().to_vec(),
        record,
    }
}
