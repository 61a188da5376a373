use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use splab_core::scaling::{fit_power_law, frontier, iso_compute, width_scaling_fit, SizedTrace};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #[test]
    fn offset_power_law_round_trip(
        alpha in 0.5f64..2.0,
        c in 0.5f64..5.0,
        l0 in 0.01f64..0.1,
    ) {
        let trace: Vec<(f64, f64)> = log_grid(1.0, 1e12, 400)
            .into_iter()
            .map(|t| (t, c * t.powf(-alpha) + l0))
            .collect();
        let fit = fit_power_law(&trace, (10.0, 1e3), true).unwrap();
        prop_assert!(rel(fit.alpha, alpha) < 0.01, "alpha {} vs {}", fit.alpha, alpha);
        prop_assert!(rel(fit.c_t, c) < 0.01, "c {} vs {}", fit.c_t, c);
        prop_assert!(rel(fit.l0, l0) < 0.01, "l0 {} vs {}", fit.l0, l0);
    }

    #[test]
    fn exponent_invariant_under_time_rescaling(
        log_gamma in -3.0f64..3.0,
        alpha in 0.1f64..2.0,
        seed in any::<u64>(),
    ) {
        let gamma = 10f64.powf(log_gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<(f64, f64)> = log_grid(1.0, 1e5, 120)
            .into_iter()
            .map(|t| (t, t.powf(-alpha) * (1.0 + 0.1 * rng.random::<f64>())))
            .collect();
        let scaled: Vec<(f64, f64)> = base.iter().map(|&(t, l)| (gamma * t, l)).collect();
        let a = fit_power_law(&base, (1e1, 1e4), false).unwrap();
        let b = fit_power_law(&scaled, (gamma * 1e1, gamma * 1e4), false).unwrap();
        prop_assert_eq!(a.n_points, b.n_points);
        prop_assert!((a.alpha - b.alpha).abs() <= 1e-12 * a.alpha.abs().max(1.0));
    }

    #[test]
    fn noisy_width_exponent_is_recovered(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.05).unwrap();
        let data: Vec<(usize, f64)> = [32usize, 64, 128, 256, 512]
            .iter()
            .map(|&k| (k, 0.7 * (k as f64).powf(-1.3) * (1.0 + noise.sample(&mut rng))))
            .collect();
        let fit = width_scaling_fit(&data, 0.0).unwrap();
        prop_assert!((fit.beta - 1.3).abs() < 0.1, "beta {}", fit.beta);
    }
}

fn synthetic_runs(ks: &[usize], times: &dyn Fn(usize) -> Vec<f64>) -> Vec<SizedTrace> {
    ks.iter()
        .map(|&k| SizedTrace {
            k,
            trace: times(k)
                .into_iter()
                .map(|t| (t, 1.0 / k as f64 + 1.0 / t))
                .collect(),
        })
        .collect()
}

#[test]
fn iso_compute_matches_analytic_minimizer() {
    let ks: Vec<usize> = (2..=40).collect();
    let runs = synthetic_runs(&ks, &|_| log_grid(1e-4, 1e8, 4000));
    let budgets = [1e3, 5e3, 2e4, 1e5];
    let curves = iso_compute(&runs, &budgets).unwrap();
    for (curve, &c) in curves.iter().zip(&budgets) {
        // f(K) = 1/K + K²/C, minimized over the same integer widths.
        let f = |k: usize| 1.0 / k as f64 + (k * k) as f64 / c;
        let best = ks
            .iter()
            .copied()
            .min_by(|&x, &y| f(x).total_cmp(&f(y)))
            .unwrap();
        assert!(
            rel(f(curve.k_star), f(best)) < 1e-6,
            "budget {c}: iso picked {} but grid search gives {best}",
            curve.k_star
        );
        let continuous = (c / 2.0).cbrt();
        assert!((curve.k_star as f64 - continuous).abs() <= 1.0);
    }
}

#[test]
fn frontier_dominates_every_run_and_agrees_with_iso() {
    let ks = [2usize, 4, 8, 16, 32];
    // Log every run on the same compute grid, which coincides with the
    // frontier bucket edges.
    let (c_lo, c_hi) = (4.0 * 1e-2, 1024.0 * 1e4);
    let grid = log_grid(c_lo, c_hi, 51);
    let grid_ref = grid.clone();
    let runs = synthetic_runs(&ks, &move |k| {
        grid_ref.iter().map(|c| c / (k * k) as f64).collect()
    });
    let pts = frontier(&runs).unwrap();
    for w in pts.windows(2) {
        assert!(w[1].loss <= w[0].loss);
    }
    for p in &pts {
        for run in &runs {
            let k2 = (run.k * run.k) as f64;
            for &(t, l) in &run.trace {
                if t * k2 <= p.compute {
                    assert!(p.loss <= l);
                }
            }
        }
    }
    let budgets: Vec<f64> = pts.iter().map(|p| p.compute).collect();
    let iso = iso_compute(&runs, &budgets).unwrap();
    for (p, curve) in pts.iter().zip(&iso) {
        assert_eq!(p.k_star, curve.k_star, "budget {}", p.compute);
    }
}
