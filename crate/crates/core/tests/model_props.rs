use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use splab_core::features::{sample_batch, DecayLaw, FrequencyVector, InputBatch};
use splab_core::model::{gradients, mse_loss, Embedding, EmbeddingMode, StudentParams, Teacher};
use splab_core::rng::{stream, Stream};

/// Dense reference loss: `½ mean ‖A x − relu(Wᵀ B W x + c)‖²`.
fn reference_loss(
    b: &Array2<f64>,
    bias: &Array1<f64>,
    w: &Array2<f64>,
    a_diag: &[f64],
    x: &Array2<f64>,
    relu: bool,
) -> f64 {
    let (k, n) = w.dim();
    let mut total = 0.0;
    for row in x.rows() {
        let mut h = vec![0.0; k];
        for p in 0..k {
            for i in 0..n {
                h[p] += w[[p, i]] * row[i];
            }
        }
        let mut g = vec![0.0; k];
        for p in 0..k {
            for q in 0..k {
                g[p] += b[[p, q]] * h[q];
            }
        }
        for i in 0..n {
            let mut z = bias[i];
            for p in 0..k {
                z += w[[p, i]] * g[p];
            }
            let y = if relu { z.max(0.0) } else { z };
            let d = a_diag[i] * row[i] - y;
            total += 0.5 * d * d;
        }
    }
    total / x.nrows() as f64
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, sd: f64) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| {
        sd * {
            let v: f64 = StandardNormal.sample(rng);
            v
        }
    })
}

fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let diff: f64 = fd
        .iter()
        .zip(an)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = an.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn central<F: Fn(f64) -> f64>(f: F, x0: f64) -> f64 {
    let h = 1e-6;
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn superposition_gradients_match_finite_differences(seed in any::<u64>()) {
        let (n, k, rows) = (7, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = normal_matrix(&mut rng, k, k, 1.0);
        let w = normal_matrix(&mut rng, k, n, 1.0);
        let bias = Array1::from_shape_fn(n, |_| { let v: f64 = StandardNormal.sample(&mut rng); 0.3 * v });
        let x = Array2::from_shape_fn((rows, n), |_| {
            if rng.random::<f64>() < 0.5 { rng.random::<f64>() } else { 0.0 }
        });
        let teacher = Teacher::new(n, 0.5).unwrap();
        let a = teacher.diag().to_vec();
        let batch = InputBatch::from_dense(&x).unwrap();
        let student = StudentParams { b: b.clone(), bias: bias.clone(), uses_output_nonlinearity: true };
        let emb = Embedding::from_matrix(w.clone(), EmbeddingMode::Learnable).unwrap();
        let g = gradients(&student, &emb, &teacher, &batch).unwrap();

        let lib = mse_loss(&student, &emb, &teacher, &batch).unwrap();
        let oracle = reference_loss(&b, &bias, &w, &a, &x, true);
        prop_assert!((lib - oracle).abs() <= 1e-12 * oracle.max(1.0));

        let mut fd_b = Vec::new();
        for idx in b.indexed_iter().map(|(i, _)| i) {
            fd_b.push(central(|v| {
                let mut bb = b.clone();
                bb[idx] = v;
                reference_loss(&bb, &bias, &w, &a, &x, true)
            }, b[idx]));
        }
        let an_b: Vec<f64> = b.indexed_iter().map(|(i, _)| g.grad_b[i]).collect();
        prop_assert!(rel_err(&fd_b, &an_b) < 1e-5, "B: {}", rel_err(&fd_b, &an_b));

        let fd_c: Vec<f64> = (0..n).map(|i| central(|v| {
            let mut cc = bias.clone();
            cc[i] = v;
            reference_loss(&b, &cc, &w, &a, &x, true)
        }, bias[i])).collect();
        prop_assert!(rel_err(&fd_c, g.grad_bias.as_slice().unwrap()) < 1e-5);

        let gw = g.grad_w.expect("learnable embedding has a W gradient");
        let mut fd_w = Vec::new();
        let mut an_w = Vec::new();
        for (idx, &w0) in w.indexed_iter() {
            fd_w.push(central(|v| {
                let mut ww = w.clone();
                ww[idx] = v;
                reference_loss(&b, &bias, &ww, &a, &x, true)
            }, w0));
            an_w.push(gw[idx]);
        }
        prop_assert!(rel_err(&fd_w, &an_w) < 1e-5, "W: {}", rel_err(&fd_w, &an_w));
    }

    #[test]
    fn linear_gradients_match_finite_differences(seed in any::<u64>()) {
        let (n, rows) = (6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = normal_matrix(&mut rng, n, n, 0.5);
        let x = Array2::from_shape_fn((rows, n), |_| rng.random::<f64>());
        let teacher = Teacher::new(n, 0.25).unwrap();
        let a = teacher.diag().to_vec();
        let eye = Array2::eye(n);
        let zero = Array1::zeros(n);
        let batch = InputBatch::from_dense(&x).unwrap();
        let student = StudentParams { b: b.clone(), bias: zero.clone(), uses_output_nonlinearity: false };
        let g = gradients(&student, &Embedding::identity(n), &teacher, &batch).unwrap();
        let mut fd = Vec::new();
        let mut an = Vec::new();
        for (idx, &b0) in b.indexed_iter() {
            fd.push(central(|v| {
                let mut bb = b.clone();
                bb[idx] = v;
                reference_loss(&bb, &zero, &eye, &a, &x, false)
            }, b0));
            an.push(g.grad_b[idx]);
        }
        prop_assert!(rel_err(&fd, &an) < 1e-5);
    }

    #[test]
    fn normalized_frequencies_sum_to_one(a in 0.0f64..3.0, n in 1usize..3000) {
        let f = FrequencyVector::build(DecayLaw::PowerLaw { a }, n, true).unwrap();
        prop_assert!((f.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(f.probs().windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn monte_carlo_moments_match_within_one_percent() {
    let freq = FrequencyVector::build(
        DecayLaw::Custom {
            weights: vec![0.9, 0.5, 0.2],
        },
        3,
        false,
    )
    .unwrap();
    let mut rng = stream(2024, Stream::Data);
    let batch = sample_batch(&freq, 1_000_000, &mut rng);
    let x = batch.to_dense();
    let (m1, m2) = freq.moments();
    for i in 0..3 {
        let col = x.column(i);
        let mean = col.mean().unwrap();
        let sq = col.mapv(|v| v * v).mean().unwrap();
        assert!(((mean - m1[i]) / m1[i]).abs() < 0.01, "E[x_{i}] = {mean}");
        assert!(((sq - m2[i]) / m2[i]).abs() < 0.01, "E[x_{i}^2] = {sq}");
    }
    let cross = x.column(0).dot(&x.column(1)) / 1e6;
    assert!((cross - 0.9 * 0.5 / 4.0).abs() / (0.9 * 0.5 / 4.0) < 0.01);
}
