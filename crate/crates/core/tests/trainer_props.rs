use splab_core::features::{DecayLaw, FrequencyVector};
use splab_core::model::{init_model, EmbeddingMode, Teacher};
use splab_core::rng::{stream_index, Stream};
use splab_core::trainer::evaluate;

#[test]
fn zero_student_loss_is_one_sixth() {
    let n = 256;
    let freq = FrequencyVector::build(DecayLaw::PowerLaw { a: 1.3 }, n, true).unwrap();
    let teacher = Teacher::new(n, 0.0).unwrap();
    let model = init_model(n, n, EmbeddingMode::Identity, 1, 0.0).unwrap();
    let mut rng = stream_index(5, Stream::Eval as u64);
    let eval_bs = 200_000;
    let (loss, per) = evaluate(&model, &freq, &teacher, eval_bs, &mut rng).unwrap();
    // Each active entry contributes v²/2 with v uniform, so the per-row loss
    // has variance below E[(Σ x²/2)²] ≤ 1/4 for about one active entry.
    let band = 5.0 * 0.5 / (eval_bs as f64).sqrt();
    assert!((loss - 1.0 / 6.0).abs() < band, "loss {loss}");
    assert!((per.sum() - loss).abs() < 1e-12);
}

#[test]
fn perfect_student_has_zero_loss() {
    let n = 16;
    let freq = FrequencyVector::build(DecayLaw::PowerLaw { a: 1.0 }, n, true).unwrap();
    let teacher = Teacher::new(n, 0.5).unwrap();
    let mut model = init_model(n, n, EmbeddingMode::Identity, 1, 0.0).unwrap();
    for i in 0..n {
        model.student.b[[i, i]] = teacher.diag()[i];
    }
    let mut rng = stream_index(5, 9);
    let (loss, per) = evaluate(&model, &freq, &teacher, 1000, &mut rng).unwrap();
    assert_eq!(loss, 0.0);
    assert!(per.iter().all(|&v| v == 0.0));
}

#[test]
fn independent_eval_seeds_agree() {
    let n = 128;
    let freq = FrequencyVector::build(DecayLaw::PowerLaw { a: 1.1 }, n, true).unwrap();
    let teacher = Teacher::new(n, 0.0).unwrap();
    let model = init_model(n, 32, EmbeddingMode::FixedRandom, 3, 0.1).unwrap();
    let bs = 20_000;
    let (l1, _) = evaluate(&model, &freq, &teacher, bs, &mut stream_index(1, 3)).unwrap();
    let (l2, _) = evaluate(&model, &freq, &teacher, bs, &mut stream_index(2, 3)).unwrap();
    let se = |l: f64| l / (bs as f64).sqrt();
    let combined = (se(l1).powi(2) + se(l2).powi(2)).sqrt();
    assert!((l1 - l2).abs() < 5.0 * combined, "{l1} vs {l2}");
}
