//! Compact re-runs of the oracle and property checks for the acceptance
//! summary. The exhaustive versions live in the core crate's test suites.

use rand::Rng;
use splab_core::features::{sample_batch, DecayLaw, FrequencyVector, InputBatch};
use splab_core::model::{
    gradients, init_model, mse_loss, Embedding, EmbeddingMode, StudentParams, Teacher,
};
use splab_core::ndarray::{Array1, Array2};
use splab_core::rng::{stream, stream_index, Stream};
use splab_core::scaling::fit_power_law;
use splab_core::theory::{mode_solution, TheoryParams};
use splab_core::trainer::{train, TrainConfig};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

pub fn all() -> Vec<Check> {
    vec![
        gradient_check(),
        normalization_check(),
        moment_check(),
        ode_check(),
        fit_round_trip(),
        rescaling_invariance(),
        seed_determinism(),
    ]
}

fn rel_err(fd: &[f64], an: &[f64]) -> f64 {
    let diff = fd.iter().zip(an).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale = an.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Central differences of the superposition loss against the analytic
/// gradients in `B`, the bias and `W`, over 100 random states.
pub fn gradient_check() -> Check {
    let (n, k, rows, h) = (7, 3, 5, 1e-6);
    let mut worst = 0.0f64;
    for state in 0..100u64 {
        let mut rng = stream_index(state, 100);
        let mut normal = || rng.random::<f64>() * 2.0 - 1.0;
        let b = Array2::from_shape_fn((k, k), |_| normal());
        let w = Array2::from_shape_fn((k, n), |_| normal());
        let bias = Array1::from_shape_fn(n, |_| 0.3 * normal());
        let mut rng = stream_index(state, 101);
        let x = Array2::from_shape_fn((rows, n), |_| {
            if rng.random::<f64>() < 0.5 {
                rng.random::<f64>()
            } else {
                0.0
            }
        });
        let teacher = Teacher::new(n, 0.5).expect("valid teacher");
        let batch = InputBatch::from_dense(&x).expect("valid batch");
        let loss = |b: &Array2<f64>, bias: &Array1<f64>, w: &Array2<f64>| {
            let student = StudentParams {
                b: b.clone(),
                bias: bias.clone(),
                uses_output_nonlinearity: true,
            };
            let emb = Embedding::from_matrix(w.clone(), EmbeddingMode::Learnable).expect("W");
            mse_loss(&student, &emb, &teacher, &batch).expect("loss")
        };
        let student = StudentParams {
            b: b.clone(),
            bias: bias.clone(),
            uses_output_nonlinearity: true,
        };
        let emb = Embedding::from_matrix(w.clone(), EmbeddingMode::Learnable).expect("W");
        let g = gradients(&student, &emb, &teacher, &batch).expect("gradients");
        let gw = g.grad_w.expect("learnable W gradient");

        let (mut fd, mut an) = (Vec::new(), Vec::new());
        for (idx, &v) in b.indexed_iter() {
            let (mut up, mut dn) = (b.clone(), b.clone());
            up[idx] = v + h;
            dn[idx] = v - h;
            fd.push((loss(&up, &bias, &w) - loss(&dn, &bias, &w)) / (2.0 * h));
            an.push(g.grad_b[idx]);
        }
        for i in 0..n {
            let (mut up, mut dn) = (bias.clone(), bias.clone());
            up[i] += h;
            dn[i] -= h;
            fd.push((loss(&b, &up, &w) - loss(&b, &dn, &w)) / (2.0 * h));
            an.push(g.grad_bias[i]);
        }
        for (idx, &v) in w.indexed_iter() {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[idx] = v + h;
            dn[idx] = v - h;
            fd.push((loss(&b, &bias, &up) - loss(&b, &bias, &dn)) / (2.0 * h));
            an.push(gw[idx]);
        }
        worst = worst.max(rel_err(&fd, &an));
    }
    Check {
        name: "finite-difference gradients",
        pass: worst < 1e-5,
        detail: format!("worst relative error {worst:.2e} over 100 states"),
    }
}

pub fn normalization_check() -> Check {
    let mut worst = 0.0f64;
    for &a in &[0.0, 0.5, 1.1, 1.5, 2.0, 3.0] {
        for &n in &[1usize, 7, 1024, 4096] {
            let f = FrequencyVector::build(DecayLaw::PowerLaw { a }, n, true).expect("law");
            worst = worst.max((f.probs().iter().sum::<f64>() - 1.0).abs());
        }
    }
    Check {
        name: "frequency normalization",
        pass: worst < 1e-12,
        detail: format!("max |sum p - 1| = {worst:.1e}"),
    }
}

pub fn moment_check() -> Check {
    let weights = vec![0.9, 0.5, 0.2];
    let freq = FrequencyVector::build(DecayLaw::Custom { weights }, 3, false).expect("law");
    let samples = 1_000_000;
    let mut rng = stream(2024, Stream::Data);
    let x = sample_batch(&freq, samples, &mut rng).to_dense();
    let (m1, m2) = freq.moments();
    let mut worst = 0.0f64;
    for i in 0..3 {
        let col = x.column(i);
        let mean = col.sum() / samples as f64;
        let sq = col.dot(&col) / samples as f64;
        worst = worst.max(((mean - m1[i]) / m1[i]).abs());
        worst = worst.max(((sq - m2[i]) / m2[i]).abs());
    }
    Check {
        name: "Monte Carlo moments",
        pass: worst < 0.01,
        detail: format!("max relative deviation {worst:.2e} at 1e6 samples"),
    }
}

/// `ds/dt = η λ (c − s)` for the closed-form mode solutions.
pub fn ode_check() -> Check {
    let mut worst = 0.0f64;
    for &(a, b, lr) in &[(1.1, 0.0, 0.1), (1.5, 0.25, 1.0), (2.0, 0.5, 0.03)] {
        let p = TheoryParams::new(a, b, 1024, lr).expect("params");
        for &i in &[1usize, 10, 100, 1024] {
            for &t in &[0.1, 10.0, 1e3, 1e5] {
                let h = 1e-4 * t;
                let s = mode_solution(i, t, &p).expect("mode");
                let ds = (mode_solution(i, t + h, &p).expect("mode")
                    - mode_solution(i, t - h, &p).expect("mode"))
                    / (2.0 * h);
                let lambda = (i as f64).powf(-a) / 3.0;
                let rhs = lr * lambda * ((i as f64).powf(-b) - s);
                worst = worst.max((ds - rhs).abs());
            }
        }
    }
    Check {
        name: "mode ODE residual",
        pass: worst < 1e-8,
        detail: format!("max residual {worst:.1e}"),
    }
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

pub fn fit_round_trip() -> Check {
    let trace: Vec<(f64, f64)> = log_grid(1.0, 1e8, 300)
        .into_iter()
        .map(|t| (t, 2.0 / t + 0.01))
        .collect();
    let fit = fit_power_law(&trace, (1.0, 1e2), true).expect("fit");
    let err = (fit.alpha - 1.0).abs();
    Check {
        name: "power-law fit round trip",
        pass: err < 0.01,
        detail: format!("2/t + 0.01 recovers alpha {:.5}", fit.alpha),
    }
}

pub fn rescaling_invariance() -> Check {
    let mut rng = stream_index(3, 0);
    let base: Vec<(f64, f64)> = log_grid(1.0, 1e5, 120)
        .into_iter()
        .map(|t| (t, t.powf(-0.7) * (1.0 + 0.1 * rng.random::<f64>())))
        .collect();
    let mut worst = 0.0f64;
    for gamma in [1e-3, 0.5, 8.0, 1e3] {
        let scaled: Vec<(f64, f64)> = base.iter().map(|&(t, l)| (gamma * t, l)).collect();
        let a = fit_power_law(&base, (1e1, 1e4), false).expect("fit");
        let b = fit_power_law(&scaled, (gamma * 1e1, gamma * 1e4), false).expect("fit");
        worst = worst.max((a.alpha - b.alpha).abs());
    }
    Check {
        name: "exponent invariance under time rescaling",
        pass: worst <= 1e-12,
        detail: format!("max |delta alpha| {worst:.1e}"),
    }
}

pub fn seed_determinism() -> Check {
    let n = 64;
    let freq = FrequencyVector::build(DecayLaw::PowerLaw { a: 1.1 }, n, true).expect("law");
    let teacher = Teacher::new(n, 0.0).expect("teacher");
    let trace = |seed: u64| {
        let mut model = init_model(n, 16, EmbeddingMode::FixedRandom, seed, 1e-3).expect("model");
        let cfg = TrainConfig {
            lr: 0.5,
            steps: 500,
            batch_size: 16,
            eval_batch_size: 256,
            seed,
            n_log_points: 30,
            ..TrainConfig::default()
        };
        let rec = train(&freq, &teacher, &mut model, &cfg).expect("train");
        let bits: Vec<u64> = rec.loss_trace.iter().map(|p| p.loss.to_bits()).collect();
        (bits, model.student.b)
    };
    let (t1, b1) = trace(5);
    let (t2, b2) = trace(5);
    let (t3, _) = trace(6);
    let same = t1 == t2 && b1.iter().zip(&b2).all(|(x, y)| x.to_bits() == y.to_bits());
    Check {
        name: "seed determinism",
        pass: same && t1 != t3,
        detail: format!(
            "same seed bit-identical: {same}; different seed differs: {}",
            t1 != t3
        ),
    }
}
