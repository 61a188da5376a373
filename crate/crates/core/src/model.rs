//! Teacher, embedding and student.
//!
//! The teacher is diagonal, `y* = A x` with `A_ii = i^(-b)`. The student has
//! two configurations:
//!
//! * linear (no superposition): `K = N`, identity embedding, `y = B x`, no
//!   bias and no output nonlinearity;
//! * superposition: `y = ReLU(Wᵀ B W x + bias)` with a column-normalized
//!   `K × N` embedding `W` that is either fixed or trained.
//!
//! The objective is `L = ½ E‖y* − y‖²`, summed (not averaged) over the `N`
//! outputs. Matrices that are sliced by column on hot paths (`B` for the
//! linear student, `W`) are kept in column-major layout.

use ndarray::{Array1, Array2, ArrayView1, Axis, ShapeBuilder, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, LabError, Result};
use crate::features::{FrequencyVector, InputBatch};
use crate::rng::{self, Stream};

/// Default standard deviation of the student's initial entries.
pub const DEFAULT_INIT_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    b: f64,
    diag: Vec<f64>,
}

impl Teacher {
    pub fn new(n: usize, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("teacher needs N >= 1"));
        }
        if !b.is_finite() || b < 0.0 {
            return Err(invalid(format!(
                "channel decay b must be finite and >= 0, got {b}"
            )));
        }
        let diag = (1..=n).map(|i| (i as f64).powf(-b)).collect();
        Ok(Self { b, diag })
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn decay(&self) -> f64 {
        self.b
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

/// `y* = A x`, returned dense.
pub fn teacher_forward(teacher: &Teacher, batch: &InputBatch) -> Result<Array2<f64>> {
    if batch.n_features() != teacher.n() {
        return Err(mismatch(format!(
            "batch has {} features, teacher expects {}",
            batch.n_features(),
            teacher.n()
        )));
    }
    let mut out = Array2::zeros((batch.rows(), teacher.n()));
    for r in 0..batch.rows() {
        for (j, v) in batch.row(r) {
            out[[r, j]] = teacher.diag[j] * v;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    Identity,
    FixedRandom,
    Learnable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    k: usize,
    n: usize,
    mode: EmbeddingMode,
    seed: u64,
    /// `K × N`, column-major. `None` for the identity.
    w: Option<Array2<f64>>,
}

impl Embedding {
    pub fn identity(n: usize) -> Self {
        Self {
            k: n,
            n,
            mode: EmbeddingMode::Identity,
            seed: 0,
            w: None,
        }
    }

    /// Gaussian `N(0, 1/K)` entries, each column then rescaled to unit norm.
    pub fn random(k: usize, n: usize, mode: EmbeddingMode, seed: u64) -> Result<Self> {
        if mode == EmbeddingMode::Identity {
            return Err(invalid("random embedding requested with identity mode"));
        }
        if k == 0 || k > n {
            return Err(invalid(format!("need 1 <= K <= N, got K = {k}, N = {n}")));
        }
        let mut rng = rng::stream(seed, Stream::Embedding);
        let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("finite sd");
        let mut w = Array2::zeros((k, n).f());
        for mut col in w.columns_mut() {
            for x in col.iter_mut() {
                *x = normal.sample(&mut rng);
            }
            let norm = col.dot(&col).sqrt();
            col.mapv_inplace(|x| x / norm);
        }
        Ok(Self {
            k,
            n,
            mode,
            seed,
            w: Some(w),
        })
    }

    /// Wrap an explicit `K × N` matrix (stored column-major internally).
    pub fn from_matrix(w: Array2<f64>, mode: EmbeddingMode) -> Result<Self> {
        if mode == EmbeddingMode::Identity {
            return Err(invalid("explicit matrices cannot use identity mode"));
        }
        let (k, n) = w.dim();
        if k == 0 || k > n {
            return Err(invalid(format!("need 1 <= K <= N, got K = {k}, N = {n}")));
        }
        let mut owned = Array2::zeros((k, n).f());
        owned.assign(&w);
        Ok(Self {
            k,
            n,
            mode,
            seed: 0,
            w: Some(owned),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mode(&self) -> EmbeddingMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matrix(&self) -> Option<&Array2<f64>> {
        self.w.as_ref()
    }

    pub(crate) fn matrix_mut(&mut self) -> Option<&mut Array2<f64>> {
        self.w.as_mut()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        match &self.w {
            None => vec![1.0; self.n],
            Some(w) => w.columns().into_iter().map(|c| c.dot(&c).sqrt()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    /// `K × K` student matrix.
    pub b: Array2<f64>,
    /// Output bias of length `N`; identically zero for the linear student.
    pub bias: Array1<f64>,
    pub uses_output_nonlinearity: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub grad_b: Array2<f64>,
    pub grad_bias: Array1<f64>,
    pub grad_w: Option<Array2<f64>>,
}

/// Student parameters together with their embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub student: StudentParams,
    pub embedding: Embedding,
}

impl Model {
    pub fn is_superposition(&self) -> bool {
        self.student.uses_output_nonlinearity
    }

    pub fn n(&self) -> usize {
        self.embedding.n()
    }

    pub fn k(&self) -> usize {
        self.embedding.k()
    }

    pub fn validate(&self) -> Result<()> {
        check_config(&self.student, &self.embedding)
    }
}

fn check_config(student: &StudentParams, emb: &Embedding) -> Result<()> {
    let k = emb.k();
    if student.b.dim() != (k, k) {
        return Err(mismatch(format!(
            "student matrix is {:?}, embedding latent size is {k}",
            student.b.dim()
        )));
    }
    if student.bias.len() != emb.n() {
        return Err(mismatch(format!(
            "bias has length {}, expected N = {}",
            student.bias.len(),
            emb.n()
        )));
    }
    match (student.uses_output_nonlinearity, emb.mode()) {
        (true, EmbeddingMode::Identity) => Err(LabError::Configuration(
            "superposition student (ReLU + bias) requires a random embedding".into(),
        )),
        (false, EmbeddingMode::FixedRandom | EmbeddingMode::Learnable) => {
            Err(LabError::Configuration(
                "linear student without superposition requires the identity embedding".into(),
            ))
        }
        (false, EmbeddingMode::Identity) if student.bias.iter().any(|&b| b != 0.0) => Err(
            LabError::Configuration("linear student must have zero bias".into()),
        ),
        _ => Ok(()),
    }
}

fn check_batch(emb: &Embedding, batch: &InputBatch) -> Result<()> {
    if batch.n_features() != emb.n() {
        return Err(mismatch(format!(
            "batch has {} features, model expects {}",
            batch.n_features(),
            emb.n()
        )));
    }
    Ok(())
}

/// Build a freshly initialized student and embedding.
///
/// `Identity` gives the linear student (`K` must equal `N`); the other modes
/// give the superposition student. `B` entries are i.i.d. `N(0, init_scale²)`
/// and the bias starts at zero.
pub fn init_model(
    n: usize,
    k: usize,
    mode: EmbeddingMode,
    seed: u64,
    init_scale: f64,
) -> Result<Model> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= K <= N, got K = {k}, N = {n}")));
    }
    if !init_scale.is_finite() || init_scale < 0.0 {
        return Err(invalid(format!(
            "init_scale must be finite and >= 0, got {init_scale}"
        )));
    }
    let embedding = match mode {
        EmbeddingMode::Identity => {
            if k != n {
                return Err(invalid(format!(
                    "identity embedding needs K = N, got K = {k}, N = {n}"
                )));
            }
            Embedding::identity(n)
        }
        _ => Embedding::random(k, n, mode, seed)?,
    };
    let mut b = Array2::zeros((k, k).f());
    if init_scale > 0.0 {
        let mut rng = rng::stream(seed, Stream::Init);
        let normal = Normal::new(0.0, init_scale).expect("finite sd");
        b.iter_mut().for_each(|x| *x = normal.sample(&mut rng));
    }
    Ok(Model {
        student: StudentParams {
            b,
            bias: Array1::zeros(n),
            uses_output_nonlinearity: mode != EmbeddingMode::Identity,
        },
        embedding,
    })
}

/// Intermediate activations of one forward pass.
struct Forward {
    /// `W x`, `bs × K` (superposition only).
    h: Option<Array2<f64>>,
    /// `B W x`, `bs × K` (superposition only).
    g: Option<Array2<f64>>,
    /// Pre-activation outputs, `bs × N`.
    z: Array2<f64>,
}

fn forward(student: &StudentParams, emb: &Embedding, batch: &InputBatch) -> Forward {
    let bs = batch.rows();
    let n = emb.n();
    match emb.matrix() {
        None => {
            let mut z = Array2::zeros((bs, n));
            for r in 0..bs {
                let mut row = z.row_mut(r);
                for (j, v) in batch.row(r) {
                    row.scaled_add(v, &student.b.column(j));
                }
            }
            Forward {
                h: None,
                g: None,
                z,
            }
        }
        Some(w) => {
            let mut h = Array2::zeros((bs, emb.k()));
            for r in 0..bs {
                let mut row = h.row_mut(r);
                for (j, v) in batch.row(r) {
                    row.scaled_add(v, &w.column(j));
                }
            }
            let g = h.dot(&student.b.t());
            let mut z = g.dot(w);
            z += &student.bias;
            Forward {
                h: Some(h),
                g: Some(g),
                z,
            }
        }
    }
}

/// `Wᵀ B W x + bias` for the superposition student, `B x` for the linear one.
pub fn pre_activations(
    student: &StudentParams,
    emb: &Embedding,
    batch: &InputBatch,
) -> Result<Array2<f64>> {
    check_config(student, emb)?;
    check_batch(emb, batch)?;
    Ok(forward(student, emb, batch).z)
}

pub fn student_forward(
    student: &StudentParams,
    emb: &Embedding,
    batch: &InputBatch,
) -> Result<Array2<f64>> {
    let mut z = pre_activations(student, emb, batch)?;
    if student.uses_output_nonlinearity {
        z.mapv_inplace(|v| v.max(0.0));
    }
    Ok(z)
}

/// Output error `y − y*` in place on the student output.
fn subtract_targets(y: &mut Array2<f64>, teacher: &Teacher, batch: &InputBatch) {
    for r in 0..batch.rows() {
        for (j, v) in batch.row(r) {
            y[[r, j]] -= teacher.diag()[j] * v;
        }
    }
}

fn output_error(
    student: &StudentParams,
    emb: &Embedding,
    teacher: &Teacher,
    batch: &InputBatch,
) -> Result<Array2<f64>> {
    if teacher.n() != emb.n() {
        return Err(mismatch("teacher and embedding disagree on N"));
    }
    if batch.rows() == 0 {
        return Err(LabError::EmptyBatch);
    }
    let mut y = student_forward(student, emb, batch)?;
    subtract_targets(&mut y, teacher, batch);
    Ok(y)
}

/// `½ · mean over rows of ‖y* − y‖²`.
pub fn mse_loss(
    student: &StudentParams,
    emb: &Embedding,
    teacher: &Teacher,
    batch: &InputBatch,
) -> Result<f64> {
    let err = output_error(student, emb, teacher, batch)?;
    Ok(0.5 * err.iter().map(|e| e * e).sum::<f64>() / batch.rows() as f64)
}

/// Per-output decomposition of [`mse_loss`]; the entries sum to the total.
pub fn per_feature_loss(
    student: &StudentParams,
    emb: &Embedding,
    teacher: &Teacher,
    batch: &InputBatch,
) -> Result<Array1<f64>> {
    let err = output_error(student, emb, teacher, batch)?;
    let scale = 0.5 / batch.rows() as f64;
    Ok(err.map_axis(Axis(0), |col| scale * col.dot(&col)))
}

/// Exact gradients of [`mse_loss`] on `batch`.
///
/// With pre-activation `z`, mask `m = [z > 0]` and masked residual
/// `r = (max(0, z) − y*) ⊙ m`: `∂b = mean r`, `∂B = W E[r xᵀ] Wᵀ`, and `∂W`
/// collects the decoder term `E[(BWx) rᵀ]` plus the encoder term
/// `E[(Bᵀ W r) xᵀ]`. The ReLU subgradient at zero is zero.
pub fn gradients(
    student: &StudentParams,
    emb: &Embedding,
    teacher: &Teacher,
    batch: &InputBatch,
) -> Result<GradientSet> {
    check_config(student, emb)?;
    check_batch(emb, batch)?;
    if teacher.n() != emb.n() {
        return Err(mismatch("teacher and embedding disagree on N"));
    }
    let bs = batch.rows();
    if bs == 0 {
        return Err(LabError::EmptyBatch);
    }
    let inv = 1.0 / bs as f64;
    let fwd = forward(student, emb, batch);
    let n = emb.n();
    let k = emb.k();

    let Some(w) = emb.matrix() else {
        let mut resid = fwd.z;
        subtract_targets(&mut resid, teacher, batch);
        let mut grad_b = Array2::zeros((k, k).f());
        accumulate_outer_sparse(&mut grad_b, &resid, batch, inv);
        return Ok(GradientSet {
            grad_b,
            grad_bias: Array1::zeros(n),
            grad_w: None,
        });
    };

    let mut resid = fwd.z.mapv(|v| v.max(0.0));
    subtract_targets(&mut resid, teacher, batch);
    Zip::from(&mut resid).and(&fwd.z).for_each(|r, &z| {
        if z <= 0.0 {
            *r = 0.0;
        }
    });

    let h = fwd.h.expect("superposition forward keeps W x");
    let u = project_residual(&resid, w);
    let grad_b = u.t().dot(&h) * inv;
    let grad_bias = resid.mean_axis(Axis(0)).expect("non-empty batch");
    let grad_w = if emb.mode() == EmbeddingMode::Learnable {
        let g = fwd.g.expect("superposition forward keeps B W x");
        let mut gw = g.t().dot(&resid) * inv;
        let ub = u.dot(&student.b);
        accumulate_outer_sparse(&mut gw, &ub, batch, inv);
        Some(gw)
    } else {
        None
    };
    Ok(GradientSet {
        grad_b,
        grad_bias,
        grad_w,
    })
}

/// `r Wᵀ`. Once the bias has learned to suppress inactive outputs most of the
/// masked residual is zero, and gathering columns of `W` beats the dense GEMM.
fn project_residual(resid: &Array2<f64>, w: &Array2<f64>) -> Array2<f64> {
    let nnz = resid.iter().filter(|&&v| v != 0.0).count();
    if 4 * nnz >= resid.len() {
        return resid.dot(&w.t());
    }
    let mut u = Array2::zeros((resid.nrows(), w.nrows()));
    for (r, row) in resid.rows().into_iter().enumerate() {
        let mut out = u.row_mut(r);
        for (i, &v) in row.iter().enumerate() {
            if v != 0.0 {
                out.scaled_add(v, &w.column(i));
            }
        }
    }
    u
}

/// `target[:, j] += scale · Σ_r x[r, j] · rows[r, :]` over the batch's nonzeros.
fn accumulate_outer_sparse(
    target: &mut Array2<f64>,
    rows: &Array2<f64>,
    batch: &InputBatch,
    scale: f64,
) {
    for r in 0..batch.rows() {
        let src = rows.row(r);
        for (j, v) in batch.row(r) {
            target.column_mut(j).scaled_add(scale * v, &src);
        }
    }
}

/// One plain SGD step `θ ← θ − lr · ∇θ L` on `batch`.
///
/// Equivalent to [`gradients`] followed by the update; the linear student
/// takes a sparse path that only touches the columns active in the batch.
pub fn sgd_step(model: &mut Model, teacher: &Teacher, batch: &InputBatch, lr: f64) -> Result<()> {
    if !model.is_superposition() {
        check_config(&model.student, &model.embedding)?;
        check_batch(&model.embedding, batch)?;
        if batch.rows() == 0 {
            return Err(LabError::EmptyBatch);
        }
        let mut resid = forward(&model.student, &model.embedding, batch).z;
        subtract_targets(&mut resid, teacher, batch);
        let scale = -lr / batch.rows() as f64;
        accumulate_outer_sparse(&mut model.student.b, &resid, batch, scale);
        return Ok(());
    }
    let grads = gradients(&model.student, &model.embedding, teacher, batch)?;
    model.student.b.scaled_add(-lr, &grads.grad_b);
    model.student.bias.scaled_add(-lr, &grads.grad_bias);
    if let (Some(gw), Some(w)) = (grads.grad_w, model.embedding.matrix_mut()) {
        w.scaled_add(-lr, &gw);
    }
    Ok(())
}

/// Population loss of the linear student under the exact input moments.
///
/// With `D = B − A`, `E[x_j²] = p_j/3` and `E[x_j x_k] = p_j p_k / 4` for
/// `j ≠ k`, each output contributes
/// `½ [Σ_j D_ij² (p_j/3 − p_j²/4) + (Σ_j D_ij p_j/2)²]`.
/// Returns `(total, per_feature)`.
pub fn exact_linear_loss(
    student: &StudentParams,
    emb: &Embedding,
    teacher: &Teacher,
    freq: &FrequencyVector,
) -> Result<(f64, Array1<f64>)> {
    check_config(student, emb)?;
    if student.uses_output_nonlinearity {
        return Err(LabError::Configuration(
            "exact population loss is only available for the linear student".into(),
        ));
    }
    let n = emb.n();
    if freq.len() != n || teacher.n() != n {
        return Err(mismatch("frequency, teacher and model disagree on N"));
    }
    let p = ArrayView1::from(freq.probs());
    let var: Array1<f64> = p.mapv(|p| p / 3.0 - p * p / 4.0);
    let half_mean: Array1<f64> = p.mapv(|p| p / 2.0);
    let mut per = Array1::zeros(n);
    for i in 0..n {
        let row = student.b.row(i);
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..n {
            let d = if i == j {
                row[j] - teacher.diag()[i]
            } else {
                row[j]
            };
            quad += d * d * var[j];
            lin += d * half_mean[j];
        }
        per[i] = 0.5 * (quad + lin * lin);
    }
    Ok((per.sum(), per))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{sample_batch, DecayLaw};
    use ndarray::array;

    fn linear(b: Array2<f64>) -> (StudentParams, Embedding) {
        let n = b.nrows();
        (
            StudentParams {
                b,
                bias: Array1::zeros(n),
                uses_output_nonlinearity: false,
            },
            Embedding::identity(n),
        )
    }

    #[test]
    fn identity_teacher_copies_input() {
        let t = Teacher::new(3, 0.0).unwrap();
        let x = array![[0.2, 0.0, 0.7]];
        let batch = InputBatch::from_dense(&x).unwrap();
        assert_eq!(teacher_forward(&t, &batch).unwrap(), x);
    }

    #[test]
    fn teacher_scales_by_channel_importance() {
        let t = Teacher::new(2, 1.0).unwrap();
        let batch = InputBatch::from_dense(&array![[0.0, 1.0]]).unwrap();
        assert_eq!(teacher_forward(&t, &batch).unwrap(), array![[0.0, 0.5]]);

        let t = Teacher::new(4, 0.5).unwrap();
        let batch = InputBatch::from_dense(&array![[1.0, 1.0, 1.0, 1.0]]).unwrap();
        let y = teacher_forward(&t, &batch).unwrap();
        let expect = [1.0, std::f64::consts::FRAC_1_SQRT_2, 1.0 / 3f64.sqrt(), 0.5];
        for (a, b) in y.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn teacher_rejects_wrong_width() {
        let t = Teacher::new(3, 0.0).unwrap();
        let batch = InputBatch::from_dense(&array![[1.0, 0.0]]).unwrap();
        assert!(matches!(
            teacher_forward(&t, &batch),
            Err(LabError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn student_matching_teacher_has_zero_loss() {
        let t = Teacher::new(4, 0.5).unwrap();
        let (s, e) = linear(Array2::from_diag(&Array1::from(t.diag().to_vec())));
        let x = array![[0.3, 0.0, 0.9, 0.1], [0.0, 0.5, 0.0, 0.0]];
        let batch = InputBatch::from_dense(&x).unwrap();
        assert_eq!(
            student_forward(&s, &e, &batch).unwrap(),
            teacher_forward(&t, &batch).unwrap()
        );
        assert_eq!(mse_loss(&s, &e, &t, &batch).unwrap(), 0.0);
        assert!(per_feature_loss(&s, &e, &t, &batch)
            .unwrap()
            .iter()
            .all(|&l| l == 0.0));
        let g = gradients(&s, &e, &t, &batch).unwrap();
        assert!(g.grad_b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_input_zero_student_loss_is_half() {
        let t = Teacher::new(3, 0.0).unwrap();
        let (s, e) = linear(Array2::zeros((3, 3)));
        let batch = InputBatch::from_dense(&array![[1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(mse_loss(&s, &e, &t, &batch).unwrap(), 0.5);
    }

    #[test]
    fn empty_batch_is_an_error() {
        let t = Teacher::new(3, 0.0).unwrap();
        let (s, e) = linear(Array2::zeros((3, 3)));
        let batch = InputBatch::from_dense(&Array2::zeros((0, 3))).unwrap();
        assert_eq!(mse_loss(&s, &e, &t, &batch), Err(LabError::EmptyBatch));
    }

    #[test]
    fn zero_superposition_student_outputs_zero() {
        let m = init_model(16, 4, EmbeddingMode::FixedRandom, 3, 0.0).unwrap();
        let f = FrequencyVector::build(DecayLaw::PowerLaw { a: 1.0 }, 16, true).unwrap();
        let batch = sample_batch(&f, 10, &mut rng::stream(1, Stream::Data));
        let y = student_forward(&m.student, &m.embedding, &batch).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_bias_clamps_small_inputs() {
        let mut m = init_model(8, 4, EmbeddingMode::FixedRandom, 9, 1e-3).unwrap();
        m.student.b.fill(0.0);
        m.student.bias.fill(-0.05);
        let x = Array2::from_elem((3, 8), 0.01);
        let batch = InputBatch::from_dense(&x).unwrap();
        let y = student_forward(&m.student, &m.embedding, &batch).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dead_relu_has_zero_gradient() {
        let mut m = init_model(8, 4, EmbeddingMode::Learnable, 2, 1e-2).unwrap();
        m.student.bias.fill(-100.0);
        let t = Teacher::new(8, 0.0).unwrap();
        let x = Array2::from_elem((4, 8), 0.5);
        let batch = InputBatch::from_dense(&x).unwrap();
        let g = gradients(&m.student, &m.embedding, &t, &batch).unwrap();
        assert!(g.grad_b.iter().all(|&v| v == 0.0));
        assert!(g.grad_bias.iter().all(|&v| v == 0.0));
        assert!(g.grad_w.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn config_mismatches_are_rejected() {
        let mut m = init_model(6, 6, EmbeddingMode::Identity, 1, 0.0).unwrap();
        m.student.uses_output_nonlinearity = true;
        assert!(matches!(m.validate(), Err(LabError::Configuration(_))));

        let mut m = init_model(6, 3, EmbeddingMode::FixedRandom, 1, 0.0).unwrap();
        m.student.uses_output_nonlinearity = false;
        assert!(matches!(m.validate(), Err(LabError::Configuration(_))));

        let mut m = init_model(6, 6, EmbeddingMode::Identity, 1, 0.0).unwrap();
        m.student.bias[0] = 0.1;
        assert!(matches!(m.validate(), Err(LabError::Configuration(_))));

        assert!(init_model(4, 5, EmbeddingMode::FixedRandom, 1, 0.0).is_err());
        assert!(init_model(4, 3, EmbeddingMode::Identity, 1, 0.0).is_err());
    }

    #[test]
    fn init_scale_zero_gives_zero_matrix() {
        let m = init_model(10, 5, EmbeddingMode::FixedRandom, 4, 0.0).unwrap();
        assert!(m.student.b.iter().all(|&v| v == 0.0));
        assert!(m.student.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn random_embedding_has_unit_columns() {
        for seed in 0..5 {
            let e = Embedding::random(7, 40, EmbeddingMode::FixedRandom, seed).unwrap();
            for norm in e.column_norms() {
                assert!((norm - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fused_step_equals_gradient_update() {
        let f = FrequencyVector::build(DecayLaw::PowerLaw { a: 0.3 }, 12, true).unwrap();
        let t = Teacher::new(12, 0.25).unwrap();
        let batch = sample_batch(&f, 16, &mut rng::stream(4, Stream::Data));
        for (k, mode) in [
            (12, EmbeddingMode::Identity),
            (5, EmbeddingMode::FixedRandom),
            (5, EmbeddingMode::Learnable),
        ] {
            let m0 = init_model(12, k, mode, 8, 0.2).unwrap();
            let g = gradients(&m0.student, &m0.embedding, &t, &batch).unwrap();
            let mut m = m0.clone();
            sgd_step(&mut m, &t, &batch, 0.1).unwrap();
            let expect_b = &m0.student.b - &(&g.grad_b * 0.1);
            for (a, b) in m.student.b.iter().zip(expect_b.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
            if let Some(gw) = g.grad_w {
                let w0 = m0.embedding.matrix().unwrap();
                let expect_w = w0 - &(&gw * 0.1);
                let w = m.embedding.matrix().unwrap();
                for (a, b) in w.iter().zip(expect_w.iter()) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn exact_linear_loss_of_zero_student() {
        let f = FrequencyVector::build(DecayLaw::PowerLaw { a: 1.3 }, 20, true).unwrap();
        let t = Teacher::new(20, 0.0).unwrap();
        let (s, e) = linear(Array2::zeros((20, 20)));
        let (total, per) = exact_linear_loss(&s, &e, &t, &f).unwrap();
        assert!((total - 1.0 / 6.0).abs() < 1e-14);
        for (l, p) in per.iter().zip(f.probs()) {
            assert!((l - p / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_residual_projection_matches_dense() {
        let w = Embedding::random(4, 9, EmbeddingMode::FixedRandom, 3).unwrap();
        let w = w.matrix().unwrap();
        let mut resid = Array2::zeros((3, 9));
        resid[[0, 2]] = 0.7;
        resid[[2, 8]] = -1.5;
        let sparse = project_residual(&resid, w);
        let dense = resid.dot(&w.t());
        assert!((&sparse - &dense).iter().all(|d| d.abs() < 1e-15));
    }
}
