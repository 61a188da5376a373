//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "universality"
//! base_seed = 0
//! replicates = 1
//!
//! [distribution]
//! kind = "power_law"      # power_law | exponential_decay | algebraic_edge | custom
//! a = 1.1
//! normalize = true
//!
//! [model]
//! n = 1024
//! k = [128, 256, 512]
//! teacher_b = 0.0
//! superposition = true
//! learnable_embedding = false
//! init_scale = 0.001
//!
//! [train]
//! lr = 0.1
//! steps = 100000
//! batch_size = 256
//! eval_batch_size = 4096
//! n_log_points = 200
//! snapshot_eta_t = [1000.0]
//! eval_mode = "monte_carlo"   # or "exact" (linear student only)
//! record_features = false
//!
//! [sweep]                     # optional grid over the power-law a and teacher b
//! a = [1.1, 1.5, 2.0]
//! b = [0.0, 0.5]
//!
//! [analysis]
//! fit_window = [1000.0, 10000.0]
//! subtract_offset = false
//! frontier = false
//! wavefront = false
//! ```
//!
//! Replicate `r` uses seed `base_seed + r`. The config hash covers every
//! field except `output_dir` and `workers`, which only say where and how
//! fast to run.

use serde::{Deserialize, Serialize};
use splab_core::features::DecayLaw;
use splab_core::model::EmbeddingMode;
use splab_core::trainer::{canonical_hash, EvalMode, TrainConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    pub distribution: Distribution,
    pub model: ModelSection,
    pub train: TrainSection,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub analysis: Analysis,
}

fn one() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    #[serde(flatten)]
    pub law: DecayLaw,
    #[serde(default = "default_true")]
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub n: usize,
    pub k: Vec<usize>,
    #[serde(default)]
    pub teacher_b: f64,
    pub superposition: bool,
    #[serde(default)]
    pub learnable_embedding: bool,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
}

fn default_init_scale() -> f64 {
    splab_core::model::DEFAULT_INIT_SCALE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub steps: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_eval_batch")]
    pub eval_batch_size: usize,
    #[serde(default = "default_log_points")]
    pub n_log_points: usize,
    #[serde(default)]
    pub snapshot_eta_t: Vec<f64>,
    #[serde(default)]
    pub eval_mode: EvalMode,
    #[serde(default)]
    pub record_features: bool,
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
}

fn default_lr() -> f64 {
    0.1
}
fn default_batch() -> usize {
    256
}
fn default_eval_batch() -> usize {
    4096
}
fn default_log_points() -> usize {
    200
}
fn default_divergence() -> f64 {
    1e3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default)]
    pub fit_window: Option<(f64, f64)>,
    #[serde(default)]
    pub subtract_offset: bool,
    #[serde(default)]
    pub frontier: bool,
    #[serde(default)]
    pub wavefront: bool,
}

/// One concrete run of an experiment grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub law: DecayLaw,
    pub normalize: bool,
    pub teacher_b: f64,
    pub n: usize,
    pub k: usize,
    pub mode: EmbeddingMode,
    pub init_scale: f64,
    pub replicate: usize,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1".into());
        }
        let m = &self.model;
        if m.k.is_empty() {
            return bad("model.k must list at least one width".into());
        }
        for &k in &m.k {
            if k == 0 || k > m.n {
                return bad(format!(
                    "every K must satisfy 1 <= K <= N = {}, got {k}",
                    m.n
                ));
            }
            if !m.superposition && k != m.n {
                return bad(format!("without superposition K must equal N, got K = {k}"));
            }
        }
        if m.learnable_embedding && !m.superposition {
            return bad("learnable_embedding needs superposition = true".into());
        }
        if m.superposition && self.train.eval_mode == EvalMode::Exact {
            return bad("eval_mode = \"exact\" is only available without superposition".into());
        }
        if let Some(s) = &self.sweep {
            if !s.a.is_empty() && !matches!(self.distribution.law, DecayLaw::PowerLaw { .. }) {
                return bad("sweep.a requires a power_law distribution".into());
            }
        }
        if let Some((lo, hi)) = self.analysis.fit_window {
            if !(lo > 0.0 && lo < hi) {
                return bad(format!(
                    "fit_window must satisfy 0 < lo < hi, got ({lo}, {hi})"
                ));
            }
        }
        for spec in self.runs() {
            spec.law
                .validate()
                .map_err(|e| CliError::Config(format!("{}: {e}", spec.run_id)))?;
            spec.train
                .validate()
                .map_err(|e| CliError::Config(format!("{}: {e}", spec.run_id)))?;
        }
        Ok(())
    }

    /// Stable hash of the experiment content.
    pub fn hash(&self) -> String {
        canonical_hash(self)
    }

    /// Short form used for directory names.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }

    pub fn mode(&self) -> EmbeddingMode {
        match (self.model.superposition, self.model.learnable_embedding) {
            (false, _) => EmbeddingMode::Identity,
            (true, false) => EmbeddingMode::FixedRandom,
            (true, true) => EmbeddingMode::Learnable,
        }
    }

    /// All runs, ordered by `a`, `b`, `K`, replicate.
    pub fn runs(&self) -> Vec<RunSpec> {
        let sweep = self.sweep.clone().unwrap_or(Sweep {
            a: vec![],
            b: vec![],
        });
        let laws: Vec<DecayLaw> = if sweep.a.is_empty() {
            vec![self.distribution.law.clone()]
        } else {
            sweep.a.iter().map(|&a| DecayLaw::PowerLaw { a }).collect()
        };
        let bs = if sweep.b.is_empty() {
            vec![self.model.teacher_b]
        } else {
            sweep.b.clone()
        };
        let mut out = Vec::new();
        for law in &laws {
            for &b in &bs {
                for &k in &self.model.k {
                    for r in 0..self.replicates {
                        let seed = self.base_seed + r as u64;
                        let lr = self.train.lr;
                        let steps = self.train.steps;
                        let snapshot_times = self
                            .train
                            .snapshot_eta_t
                            .iter()
                            .map(|&e| ((e / lr).round() as u64).min(steps))
                            .collect();
                        out.push(RunSpec {
                            run_id: run_id(law, b, k, r),
                            law: law.clone(),
                            normalize: self.distribution.normalize,
                            teacher_b: b,
                            n: self.model.n,
                            k,
                            mode: self.mode(),
                            init_scale: self.model.init_scale,
                            replicate: r,
                            train: TrainConfig {
                                lr,
                                steps,
                                batch_size: self.train.batch_size,
                                eval_batch_size: self.train.eval_batch_size,
                                seed,
                                n_log_points: self.train.n_log_points,
                                snapshot_times,
                                learnable_embedding: self.model.learnable_embedding,
                                eval_mode: self.train.eval_mode,
                                record_features: self.train.record_features,
                                divergence_factor: self.train.divergence_factor,
                            },
                        });
                    }
                }
            }
        }
        out
    }
}

fn law_tag(law: &DecayLaw) -> String {
    match law {
        DecayLaw::PowerLaw { a } => format!("pow-a{a}"),
        DecayLaw::ExponentialDecay { kappa, a } => format!("exp-k{kappa}-a{a}"),
        DecayLaw::AlgebraicEdge { a } => format!("alg-a{a}"),
        DecayLaw::Custom { .. } => "custom".into(),
    }
}

pub fn run_id(law: &DecayLaw, b: f64, k: usize, replicate: usize) -> String {
    format!("{}_b{b}_k{k}_r{replicate}", law_tag(law))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
name = "demo"
base_seed = 10
replicates = 2

[distribution]
kind = "power_law"
a = 1.5

[model]
n = 64
k = [16, 32]
teacher_b = 0.25
superposition = true

[train]
steps = 100
lr = 0.2
batch_size = 8
eval_batch_size = 64
snapshot_eta_t = [10.0]
"#;

    #[test]
    fn parses_and_expands_the_grid() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let runs = cfg.runs();
        assert_eq!(runs.len(), 4);
        assert_eq!(runs[0].run_id, "pow-a1.5_b0.25_k16_r0");
        assert_eq!(runs[1].train.seed, 11);
        assert_eq!(runs[0].train.snapshot_times, vec![50]);
        assert_eq!(runs[3].mode, EmbeddingMode::FixedRandom);
        assert!(cfg.distribution.normalize);
    }

    #[test]
    fn hash_ignores_layout_and_output_location() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        let reordered = r#"
replicates = 2
name = "demo"
base_seed = 10
output_dir = "/elsewhere"
workers = 3

[train]
batch_size = 8
lr = 0.2
eval_batch_size = 64
steps = 100
snapshot_eta_t = [10.0]

[model]
superposition = true
teacher_b = 0.25
n = 64
k = [16, 32]

[distribution]
a = 1.5
kind = "power_law"
"#;
        let other = ExperimentConfig::from_toml(reordered).unwrap();
        assert_eq!(cfg.hash(), other.hash());
        let changed =
            ExperimentConfig::from_toml(&BASE.replace("steps = 100", "steps = 101")).unwrap();
        assert_ne!(cfg.hash(), changed.hash());
    }

    #[test]
    fn sweep_expands_a_and_b() {
        let text = format!("{BASE}\n[sweep]\na = [1.1, 2.0]\nb = [0.0, 0.5, 1.0]\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(cfg.runs().len(), 2 * 3 * 2 * 2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for (from, to) in [
            ("k = [16, 32]", "k = [16, 128]"),
            ("superposition = true", "superposition = false"),
            ("a = 1.5", "a = -1.0"),
            ("replicates = 2", "replicates = 0"),
            ("steps = 100", "steps = 100\nbogus = 1"),
            ("eval_batch_size = 64", "eval_batch_size = 4"),
        ] {
            let text = BASE.replace(from, to);
            let err = ExperimentConfig::from_toml(&text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{from} -> {to}: {err}");
        }
    }
}
