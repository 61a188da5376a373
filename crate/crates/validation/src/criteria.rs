//! One function per acceptance criterion.

use splab_core::features::DecayLaw;
use splab_core::scaling::{
    default_fit_window, fit_power_law, frontier, frontier_size_exponent, plateau_loss,
    size_fit_range, wavefront_metrics, width_scaling_fit, FitResult, SizedTrace,
};
use splab_core::theory::{
    default_tau, predicted_exponent, rescaled_exact_loss, theory_fit_window,
    theory_loss_general, TheoryParams,
};

use crate::runs::{run, Run, RunSpec, FEATURE_EVAL, N, SUPER_BATCH};
use crate::{oracles, Verdict};

pub const THEORY_TOLERANCE: f64 = 0.05;
pub const OVERLAY_TOLERANCE: f64 = 0.2;
pub const SUPERPOSITION_BAND: (f64, f64) = (0.85, 1.15);
pub const ACCELERATION_MIN: f64 = 10.0;
pub const EXPONENTIAL_TARGET: (f64, f64) = (0.977, 0.02);
pub const LINEAR_TARGET: (f64, f64) = (1.983, 0.03);
pub const WIDTH_TARGET: (f64, f64) = (1.30, 0.15);
pub const SIZE_TARGET: (f64, f64) = (0.27, 0.08);
pub const SPEARMAN_MIN: f64 = 0.95;
pub const UNISON_MAX: f64 = 10.0;
pub const SEQUENTIAL_MIN: f64 = 1e3;

pub const THEORY_GRID_A: [f64; 3] = [1.2, 1.5, 2.0];
pub const THEORY_GRID_B: [f64; 3] = [0.0, 0.25, 0.5];
pub const UNIVERSALITY_A: [f64; 3] = [1.1, 1.5, 2.0];
pub const UNIVERSALITY_B: [f64; 2] = [0.0, 0.5];
pub const UNIVERSALITY_K: [usize; 3] = [128, 256, 512];
pub const WIDTHS: [usize; 5] = [32, 64, 128, 256, 512];
pub const FRONTIER_WIDTHS: [usize; 6] = [32, 64, 128, 256, 512, 1024];
pub const PROBE_LRS: [f64; 3] = [0.03, 0.1, 0.3];

/// End of the superposition runs used for mid-training fits.
const MID_END: f64 = 1e4;
/// End of the overlay comparison.
const OVERLAY_END: f64 = 1e4;

fn within(x: f64, (centre, tol): (f64, f64)) -> bool {
    (x - centre).abs() <= tol
}

fn in_band(x: f64, (lo, hi): (f64, f64)) -> bool {
    x >= lo && x <= hi
}

fn power_alpha(a: f64, b: f64) -> f64 {
    predicted_exponent(&DecayLaw::PowerLaw { a }, b)
        .expect("a + 2b > 1 on every grid")
        .alpha
}

/// Theory window in `eta_t` for a normalized power law: `z_c ∈ [10, N/10]`.
pub fn linear_window(a: f64, z: f64) -> (f64, f64) {
    theory_fit_window(&DecayLaw::PowerLaw { a }, N, default_tau(1.0), z)
        .expect("N is large enough")
}

fn normalization(a: f64) -> f64 {
    (1..=N).map(|i| (i as f64).powf(-a)).sum()
}

pub fn linear_run(a: f64, b: f64) -> std::sync::Arc<Run> {
    let end = (1.25 * linear_window(a, normalization(a)).1).max(OVERLAY_END);
    run(&RunSpec::linear(a, b, end))
}

/// Common training horizon of the width sweep, in `eta_t`.
pub const PLATEAU_END: f64 = 2e5;

/// The `(1.1, 0)` superposition runs. `K = 512` also records per-feature
/// losses for the wavefront diagnostics.
pub fn reference_run(k: usize) -> std::sync::Arc<Run> {
    let mut spec = RunSpec::superposition(1.1, 0.0, k, PLATEAU_END);
    if k == 512 {
        spec = spec.features(FEATURE_EVAL);
    }
    if k > 512 {
        spec.eta_t_end = MID_END;
    }
    run(&spec)
}

fn universality_run(a: f64, b: f64, k: usize) -> std::sync::Arc<Run> {
    if a == 1.1 && b == 0.0 {
        reference_run(k)
    } else {
        run(&RunSpec::superposition(a, b, k, MID_END))
    }
}

fn mid_fit(trace: &[(f64, f64)]) -> Result<FitResult, String> {
    let window = default_fit_window(trace).map_err(|e| e.to_string())?;
    fit_power_law(trace, window, false).map_err(|e| e.to_string())
}

pub fn criterion_1() -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for &a in &THEORY_GRID_A {
        for &b in &THEORY_GRID_B {
            let r = linear_run(a, b);
            let window = linear_window(a, r.z);
            let predicted = power_alpha(a, b);
            match fit_power_law(&r.trace(), window, false) {
                Ok(fit) => {
                    let delta = (fit.alpha - predicted).abs();
                    let ok = delta <= THEORY_TOLERANCE;
                    pass &= ok;
                    lines.push(format!(
                        "a={a} b={b}: alpha {:.4} ± {:.4} vs {predicted:.4} (|d| = {delta:.4}) over eta_t [{:.3e}, {:.3e}] {}",
                        fit.alpha,
                        fit.alpha_stderr,
                        window.0,
                        window.1,
                        if ok { "ok" } else { "MISS" }
                    ));
                }
                Err(e) => {
                    pass = false;
                    lines.push(format!("a={a} b={b}: fit failed: {e}"));
                }
            }
        }
    }
    Verdict::new(
        "1",
        "no-superposition exponents match (a+2b-1)/a within 0.05",
        pass,
        lines.join("\n"),
    )
}

pub fn criterion_2() -> Verdict {
    let (a, b) = (1.5, 0.25);
    let r = linear_run(a, b);
    let params = TheoryParams::new(a, b, N, 1.0).expect("valid theory");
    let mut worst: (f64, f64) = (0.0, 0.0);
    let mut count = 0;
    for (eta_t, loss) in r.trace() {
        if !(10.0..=OVERLAY_END).contains(&eta_t) {
            continue;
        }
        let theory = rescaled_exact_loss(eta_t, &params, r.z).expect("finite theory");
        let rel = (loss / theory - 1.0).abs();
        count += 1;
        if rel > worst.0 {
            worst = (rel, eta_t);
        }
    }
    let pass = count > 0 && worst.0 <= OVERLAY_TOLERANCE;
    Verdict::new(
        "2",
        "loss tracks the rescaled closed form within 20% over eta_t [1e1, 1e4]",
        pass,
        format!(
            "a={a} b={b}: max relative error {:.4} at eta_t = {:.3e} over {count} log points",
            worst.0, worst.1
        ),
    )
}

pub fn criterion_3() -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for &a in &UNIVERSALITY_A {
        for &b in &UNIVERSALITY_B {
            for &k in &UNIVERSALITY_K {
                let r = universality_run(a, b, k);
                match mid_fit(&r.trace()) {
                    Ok(fit) => {
                        let ok = in_band(fit.alpha, SUPERPOSITION_BAND);
                        pass &= ok;
                        lines.push(format!(
                            "a={a} b={b} K={k}: alpha {:.4} ± {:.4} over [{:.0e}, {:.0e}] {}",
                            fit.alpha,
                            fit.alpha_stderr,
                            fit.window.0,
                            fit.window.1,
                            if ok { "ok" } else { "MISS" }
                        ));
                    }
                    Err(e) => {
                        pass = false;
                        lines.push(format!("a={a} b={b} K={k}: fit failed: {e}"));
                    }
                }
            }
        }
    }
    Verdict::new(
        "3",
        "superposition exponents lie in [0.85, 1.15]",
        pass,
        lines.join("\n"),
    )
}

/// Exponent at `(1.1, 0)`, `K = 128` for several learning rates. Reported
/// next to criterion 3; the band is the same.
pub fn learning_rate_probe() -> Verdict {
    let mut pass = true;
    let mut lines = Vec::new();
    for &lr in &PROBE_LRS {
        let r = run(&RunSpec::superposition(1.1, 0.0, 128, MID_END).lr(lr).batch(SUPER_BATCH));
        match mid_fit(&r.trace()) {
            Ok(fit) => {
                let ok = in_band(fit.alpha, SUPERPOSITION_BAND);
                pass &= ok;
                lines.push(format!("lr={lr}: alpha {:.4} ± {:.4}", fit.alpha, fit.alpha_stderr));
            }
            Err(e) => {
                pass = false;
                lines.push(format!("lr={lr}: fit failed: {e}"));
            }
        }
    }
    Verdict::new(
        "3b",
        "superposition exponent is insensitive to the learning rate",
        pass,
        lines.join("\n"),
    )
}

pub fn criterion_4() -> Verdict {
    let r = reference_run(512);
    let sequential = power_alpha(1.1, 0.0);
    let (pass, detail) = match mid_fit(&r.trace()) {
        Ok(fit) => {
            let factor = fit.alpha / sequential;
            (
                factor >= ACCELERATION_MIN,
                format!(
                    "alpha {:.4} / {sequential:.4} = {factor:.2}",
                    fit.alpha
                ),
            )
        }
        Err(e) => (false, format!("fit failed: {e}")),
    };
    Verdict::new(
        "4",
        "superposition accelerates the (1.1, 0) exponent at least tenfold",
        pass,
        detail,
    )
}

/// Longest run of consecutive log points with `loss < theory`, as
/// `(first eta_t, last eta_t)`.
pub fn longest_crossing(trace: &[(f64, f64)], theory: impl Fn(f64) -> f64) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<f64> = None;
    for &(t, loss) in trace.iter().filter(|p| p.0 > 0.0) {
        if loss < theory(t) {
            let s = *start.get_or_insert(t);
            if best.is_none_or(|(lo, hi)| t / s > hi / lo) {
                best = Some((s, t));
            }
        } else {
            start = None;
        }
    }
    best
}

pub fn criterion_5() -> Verdict {
    let r = reference_run(512);
    let params = TheoryParams::new(1.1, 0.0, N, 1.0).expect("valid theory");
    let theory = |t: f64| rescaled_exact_loss(t, &params, r.z).expect("finite theory");
    let crossing = longest_crossing(&r.trace(), theory);
    let (pass, detail) = match crossing {
        Some((lo, hi)) => (
            hi / lo >= 10.0,
            format!(
                "K=512 loss below the no-superposition closed form over eta_t [{lo:.3e}, {hi:.3e}] ({:.2} decades)",
                (hi / lo).log10()
            ),
        ),
        None => (false, "loss never drops below the closed form".into()),
    };
    Verdict::new(
        "5",
        "superposition loss crosses below the sequential curve for a decade",
        pass,
        detail,
    )
}

/// Fit a closed-form trace with weights `w` and unit channels over the
/// theory window of `law`.
pub fn general_theory_fit(law: &DecayLaw, weights: &[f64]) -> (FitResult, (f64, f64)) {
    let window = theory_fit_window(law, weights.len(), default_tau(1.0), 1.0)
        .expect("window for the weight profile");
    let channel = vec![1.0; weights.len()];
    let (lo, hi) = ((window.0 / 10.0).ln(), (window.1 * 10.0).ln());
    let trace: Vec<(f64, f64)> = (0..400)
        .map(|j| {
            let t = (lo + (hi - lo) * j as f64 / 399.0).exp();
            (t, theory_loss_general(t, weights, &channel).expect("matching lengths"))
        })
        .collect();
    (fit_power_law(&trace, window, false).expect("closed-form fit"), window)
}

pub fn criterion_6() -> Verdict {
    let exp_law = DecayLaw::ExponentialDecay { kappa: 0.5, a: 1.0 };
    let exp_w: Vec<f64> = (1..=N).map(|i| (-0.5 * i as f64).exp()).collect();
    let lin_law = DecayLaw::AlgebraicEdge { a: 1.0 };
    let lin_w: Vec<f64> = (1..=N).map(|i| (N - i) as f64).collect();
    let (e, ew) = general_theory_fit(&exp_law, &exp_w);
    let (l, lw) = general_theory_fit(&lin_law, &lin_w);
    let e_ok = within(e.alpha, EXPONENTIAL_TARGET);
    let l_ok = within(l.alpha, LINEAR_TARGET);
    Verdict::new(
        "6",
        "closed-form fits: exponential weights 0.977 ± 0.02, linear weights 1.983 ± 0.03",
        e_ok && l_ok,
        format!(
            "exp(-0.5 i): alpha {:.4} ± {:.1e} over t [{:.3e}, {:.3e}] {}\nN - i: alpha {:.4} ± {:.1e} over t [{:.3e}, {:.3e}] {}",
            e.alpha,
            e.alpha_stderr,
            ew.0,
            ew.1,
            if e_ok { "ok" } else { "MISS" },
            l.alpha,
            l.alpha_stderr,
            lw.0,
            lw.1,
            if l_ok { "ok" } else { "MISS" }
        ),
    )
}

pub fn criterion_7() -> Verdict {
    let mut finals = Vec::new();
    let mut lines = Vec::new();
    for &k in &WIDTHS {
        let r = reference_run(k);
        let plateau = plateau_loss(&r.trace()).expect("non-empty trace");
        lines.push(format!("K={k}: plateau {plateau:.4e} at eta_t {:.0e}", r.spec.eta_t_end));
        finals.push((k, plateau));
    }
    let (pass, head) = match width_scaling_fit(&finals, 0.0) {
        Ok(f) => (
            within(f.beta, WIDTH_TARGET),
            format!("beta {:.4} ± {:.4} (r² {:.4})", f.beta, f.beta_stderr, f.r_squared),
        ),
        Err(e) => (false, format!("fit failed: {e}")),
    };
    lines.insert(0, head);
    Verdict::new("7", "width exponent beta = 1.30 ± 0.15", pass, lines.join("\n"))
}

pub fn criterion_8() -> Verdict {
    let runs: Vec<SizedTrace> = FRONTIER_WIDTHS
        .iter()
        .map(|&k| SizedTrace {
            k,
            trace: reference_run(k).trace(),
        })
        .collect();
    let points = frontier(&runs).expect("non-empty runs");
    let winners: Vec<String> = {
        let mut seen: Vec<(usize, f64)> = Vec::new();
        for p in &points {
            if seen.last().is_none_or(|s| s.0 != p.k_star) {
                seen.push((p.k_star, p.compute));
            }
        }
        seen.iter().map(|(k, c)| format!("K*={k} from C={c:.2e}")).collect()
    };
    let (pass, head) = match size_fit_range(&points) {
        Some(range) => match frontier_size_exponent(&points, Some(range)) {
            Ok(f) => (
                within(f.slope, SIZE_TARGET),
                format!(
                    "K* ∝ C^{:.4} (± {:.4}) over C [{:.2e}, {:.2e}]",
                    f.slope, f.slope_stderr, range.0, range.1
                ),
            ),
            Err(e) => (false, format!("fit failed: {e}")),
        },
        None => (false, "a single width wins the whole frontier".into()),
    };
    Verdict::new(
        "8",
        "compute-optimal width exponent 0.27 ± 0.08",
        pass,
        format!("{head}\n{}", winners.join(", ")),
    )
}

pub fn criterion_9() -> Verdict {
    let seq = run(&RunSpec::linear(1.1, 0.0, 3e4).features(0));
    let sup = reference_run(512);
    let window = default_fit_window(&sup.trace()).expect("mid-training window");
    let metrics = |r: &Run| {
        let ft = r.record.feature_traces.as_ref().expect("per-feature traces");
        let m = wavefront_metrics(&ft.eta_t, ft.losses.view(), &r.probs).expect("wavefront");
        let in_window: Vec<f64> = ft
            .eta_t
            .iter()
            .zip(&m.interdecile)
            .filter(|(t, _)| **t >= window.0 && **t <= window.1)
            .map(|(_, r)| *r)
            .collect();
        (m, in_window)
    };
    let (m_seq, seq_ratios) = metrics(&seq);
    let (m_sup, sup_ratios) = metrics(&sup);
    let seq_max = seq_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sup_max = sup_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spearman_ok = m_seq.spearman >= SPEARMAN_MIN;
    let unison_ok = !sup_ratios.is_empty() && sup_max <= UNISON_MAX;
    let sequential_ok = seq_max > SEQUENTIAL_MIN;
    Verdict::new(
        "9",
        "wavefront without superposition, decay in unison with it",
        spearman_ok && unison_ok && sequential_ok,
        format!(
            "sequential Spearman(index, half-time) {:.4} ({} censored) {}\n\
             superposition max interdecile ratio {sup_max:.3e} over {} points in eta_t [{:.0e}, {:.0e}] {}\n\
             sequential max interdecile ratio {seq_max:.3e} {}\n\
             superposition Spearman {:.4} for reference",
            m_seq.spearman,
            m_seq.censored.iter().filter(|c| **c).count(),
            if spearman_ok { "ok" } else { "MISS" },
            sup_ratios.len(),
            window.0,
            window.1,
            if unison_ok { "ok" } else { "MISS" },
            if sequential_ok { "ok" } else { "MISS" },
            m_sup.spearman,
        ),
    )
}

pub fn criterion_10() -> Verdict {
    let checks = oracles::all();
    let pass = checks.iter().all(|c| c.pass);
    let detail = checks
        .iter()
        .map(|c| format!("{}: {} ({})", c.name, if c.pass { "ok" } else { "MISS" }, c.detail))
        .collect::<Vec<_>>()
        .join("\n");
    Verdict::new("10", "oracle and property checks", pass, detail)
}
