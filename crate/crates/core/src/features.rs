//! Feature frequencies and sparse input sampling.
//!
//! Each input coordinate is `x_i = u_i * v_i` with `u_i ~ Bernoulli(p_i)` and
//! `v_i ~ Uniform(0, 1)`. The frequency vector `p` follows one of the decay
//! laws below. Simulations use the normalized form (`sum p = 1`, one active
//! feature per input on average); the closed-form theory uses raw weights.
//! The two differ only by a constant `Z = sum of raw weights`, which rescales
//! time and leaves every fitted exponent unchanged.

use rand::Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, LabError, Result};
use crate::rng::LabRng;

/// Shape of the feature-frequency profile over the index `i = 1..=N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayLaw {
    /// `p_i ∝ i^(-a)`.
    PowerLaw { a: f64 },
    /// `p_i ∝ exp(-kappa * i^a)`.
    ExponentialDecay { kappa: f64, a: f64 },
    /// `p_i ∝ (N - i)^a`, vanishing at the finite edge `i = N`.
    AlgebraicEdge { a: f64 },
    /// Explicit nonnegative weights of length `N`.
    Custom { weights: Vec<f64> },
}

impl DecayLaw {
    pub fn validate(&self) -> Result<()> {
        fn finite_nonneg(name: &str, v: f64) -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
            Ok(())
        }
        fn finite_pos(name: &str, v: f64) -> Result<()> {
            if !v.is_finite() || v <= 0.0 {
                return Err(invalid(format!("{name} must be finite and > 0, got {v}")));
            }
            Ok(())
        }
        match self {
            DecayLaw::PowerLaw { a } => finite_nonneg("a", *a),
            DecayLaw::ExponentialDecay { kappa, a } => {
                finite_pos("kappa", *kappa)?;
                finite_pos("a", *a)
            }
            DecayLaw::AlgebraicEdge { a } => finite_pos("a", *a),
            DecayLaw::Custom { weights } => {
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(invalid("custom weights must be finite and >= 0"));
                }
                if !weights.iter().any(|w| *w > 0.0) {
                    return Err(invalid("custom weights need at least one positive entry"));
                }
                Ok(())
            }
        }
    }

    /// Raw (unnormalized) weight of the 1-based feature `i` out of `n`.
    fn raw_weight(&self, i: usize, n: usize) -> f64 {
        let x = i as f64;
        match self {
            DecayLaw::PowerLaw { a } => x.powf(-a),
            DecayLaw::ExponentialDecay { kappa, a } => (-kappa * x.powf(*a)).exp(),
            DecayLaw::AlgebraicEdge { a } => ((n - i) as f64).powf(*a),
            DecayLaw::Custom { weights } => weights[i - 1],
        }
    }
}

/// Per-feature activation probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    p: Vec<f64>,
    normalized: bool,
    raw_sum: f64,
    law: DecayLaw,
}

impl FrequencyVector {
    /// Build `p` for `n` features. With `normalize`, `p` sums to one;
    /// otherwise raw weights are clipped into `[0, 1]`.
    pub fn build(law: DecayLaw, n: usize, normalize: bool) -> Result<Self> {
        if n == 0 {
            return Err(invalid("N must be at least 1"));
        }
        law.validate()?;
        if let DecayLaw::Custom { weights } = &law {
            if weights.len() != n {
                return Err(mismatch(format!(
                    "custom weights have length {}, expected {n}",
                    weights.len()
                )));
            }
        }
        let raw: Vec<f64> = (1..=n).map(|i| law.raw_weight(i, n)).collect();
        let raw_sum: f64 = raw.iter().sum();
        let p = if normalize {
            if !(raw_sum > 0.0 && raw_sum.is_finite()) {
                return Err(invalid(format!(
                    "weights sum to {raw_sum}; cannot normalize {law:?} at N = {n}"
                )));
            }
            raw.iter().map(|w| w / raw_sum).collect()
        } else {
            raw.iter().map(|w| w.clamp(0.0, 1.0)).collect()
        };
        Ok(Self {
            p,
            normalized: normalize,
            raw_sum,
            law,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn law(&self) -> &DecayLaw {
        &self.law
    }

    /// Sum of the raw weights before normalization (`Z`).
    pub fn normalization_constant(&self) -> f64 {
        self.raw_sum
    }

    /// Expected number of active features per input.
    pub fn activation_density(&self) -> f64 {
        self.p.iter().sum()
    }

    /// First and second moments of each coordinate: `(p/2, p/3)`.
    pub fn moments(&self) -> (Vec<f64>, Vec<f64>) {
        let first = self.p.iter().map(|p| p / 2.0).collect();
        let second = self.p.iter().map(|p| p / 3.0).collect();
        (first, second)
    }

    /// Median of the probabilities (mean of the middle pair for even `N`).
    pub fn median(&self) -> f64 {
        let mut sorted = self.p.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }
}

/// A batch of sparse inputs stored row-compressed.
///
/// Sampled batches hold only entries in `(0, 1)`; everything else is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBatch {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl InputBatch {
    /// Build from dense rows. Zero entries are dropped; any finite value is
    /// accepted so hand-built probes (unit vectors, ones) can be used.
    pub fn from_dense(rows: &ndarray::Array2<f64>) -> Result<Self> {
        if rows.iter().any(|v| !v.is_finite()) {
            return Err(invalid("input batch entries must be finite"));
        }
        let n = rows.ncols();
        let mut row_ptr = Vec::with_capacity(rows.nrows() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows.rows() {
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            vals,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_features(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Nonzero `(feature, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((self.rows(), self.n));
        for r in 0..self.rows() {
            for (j, v) in self.row(r) {
                out[[r, j]] = v;
            }
        }
        out
    }
}

/// Draw `batch_size` inputs.
///
/// Feature by feature, the rows where it is active are found by geometric
/// gaps between successes, which gives independent `Bernoulli(p_i)` gates at
/// a cost proportional to the number of active entries plus `N`. Each
/// active entry then draws its uniform value.
pub fn sample_batch(freq: &FrequencyVector, batch_size: usize, rng: &mut LabRng) -> InputBatch {
    let n = freq.len();
    let rows = batch_size as u64;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    for (j, &p) in freq.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let gap = (p < 1.0).then(|| Geometric::new(p).expect("p in (0, 1)"));
        let mut r = gap.as_ref().map_or(0, |g| g.sample(rng));
        while r < rows {
            let v: f64 = rng.random();
            if v > 0.0 {
                entries.push((r as usize, j, v));
            }
            r = r.saturating_add(1 + gap.as_ref().map_or(0, |g| g.sample(rng)));
        }
    }
    // Counting sort by row; features stay ascending within each row.
    let mut row_ptr = vec![0usize; batch_size + 1];
    for &(r, _, _) in &entries {
        row_ptr[r + 1] += 1;
    }
    for r in 0..batch_size {
        row_ptr[r + 1] += row_ptr[r];
    }
    let mut next = row_ptr.clone();
    let mut cols = vec![0usize; entries.len()];
    let mut vals = vec![0.0; entries.len()];
    for (r, j, v) in entries {
        cols[next[r]] = j;
        vals[next[r]] = v;
        next[r] += 1;
    }
    InputBatch {
        n,
        row_ptr,
        cols,
        vals,
    }
}

impl From<InputBatch> for ndarray::Array2<f64> {
    fn from(batch: InputBatch) -> Self {
        batch.to_dense()
    }
}

impl TryFrom<&ndarray::Array2<f64>> for InputBatch {
    type Error = LabError;

    fn try_from(rows: &ndarray::Array2<f64>) -> Result<Self> {
        InputBatch::from_dense(rows)
    }
}
