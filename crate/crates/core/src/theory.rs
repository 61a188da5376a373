//! Closed-form training dynamics of the linear student.
//!
//! Without superposition `B` stays (approximately) diagonal and each entry
//! relaxes independently, `ds_i/dt = η λ_i (a_i − s_i)`, so
//! `s_i(t) = a_i (1 − e^{−η λ_i t})`. Here `a_i = i^(-b)` is the teacher
//! coefficient and `λ_i` the variance of input `i`. For `x_i = u_i v_i` with
//! `u_i ~ Bernoulli(p_i)`, `v_i ~ U(0,1)` the second moment is `p_i / 3`,
//! hence `λ_i = p_i / 3` and every mode contributes
//! `½ λ_i a_i² e^{−2ηλ_i t} = (p_i/6) a_i² e^{−(2/3) η p_i t}` to the loss.
//! With raw weights `p_i = i^(-a)` this gives
//! `L(t) = (1/6) Σ i^{−(a+2b)} exp(−(2/3) η t i^{−a})`.
//!
//! Simulations use normalized frequencies `p_i = i^(-a) / Z`. Their loss is
//! `L_norm(t) = L(t / Z) / Z`: the normalization rescales both axes and
//! leaves exponents untouched. [`rescaled_exact_loss`] evaluates that form.
//!
//! The loss is dominated by modes beyond the critical index `z_c(t)` where
//! `f(z_c) t / τ = 1`; with `τ = 3/(2η)` this matches the decay constant
//! above. In the window `1 ≪ z_c ≪ N` the loss follows `t^{−α}`:
//!
//! | profile `f(z)`           | `α`              | log correction       |
//! |--------------------------|------------------|----------------------|
//! | `z^{−a}` (channel `b`)   | `(a + 2b − 1)/a` | none                 |
//! | `e^{−κ z^a}`             | `1`              | `(log t)^{1/a − 1}`  |
//! | `(z_* − z)^a`            | `1 + 1/a`        | none                 |
//!
//! The linear superposition limits live at the bottom of the module.

use crate::error::{invalid, mismatch, LabError, Result};
use crate::features::DecayLaw;

/// Inputs to the closed-form loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryParams {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub lr: f64,
    /// Explicit frequencies replacing `i^(-a)`.
    pub weights: Option<Vec<f64>>,
}

impl TheoryParams {
    pub fn new(a: f64, b: f64, n: usize, lr: f64) -> Result<Self> {
        let p = Self {
            a,
            b,
            n,
            lr,
            weights: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n {
            return Err(mismatch(format!(
                "{} weights for N = {}",
                weights.len(),
                self.n
            )));
        }
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(invalid("N must be at least 1"));
        }
        if !self.a.is_finite() {
            return Err(invalid("a must be finite"));
        }
        if !self.b.is_finite() || self.b < 0.0 {
            return Err(invalid("b must be finite and >= 0"));
        }
        if !self.lr.is_finite() || self.lr <= 0.0 {
            return Err(invalid("learning rate must be positive"));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(invalid("weights must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Input frequency of the 1-based feature `i`.
    pub fn frequency(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i - 1],
            None => (i as f64).powf(-self.a),
        }
    }

    /// Teacher coefficient `a_i = i^(-b)`.
    pub fn channel(&self, i: usize) -> f64 {
        (i as f64).powf(-self.b)
    }

    /// `λ_i = p_i / 3`.
    pub fn variance(&self, i: usize) -> f64 {
        self.frequency(i) / 3.0
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t < 0.0 {
        return Err(LabError::Domain(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Student diagonal entry `s_i(t) = a_i (1 − e^{−η λ_i t})`.
pub fn mode_solution(i: usize, t: f64, params: &TheoryParams) -> Result<f64> {
    if i == 0 || i > params.n {
        return Err(invalid(format!(
            "feature index {i} outside 1..={}",
            params.n
        )));
    }
    check_time(t)?;
    let rate = params.lr * params.variance(i);
    Ok(params.channel(i) * -(-rate * t).exp_m1())
}

/// Closed-form loss at time `t` (in optimizer steps; `η` comes from params).
///
/// Without explicit weights this is the raw-weight sum
/// `(1/6) Σ i^{−(a+2b)} exp(−(2/3) η t i^{−a})`; with weights `w` it is
/// `½ Σ (w_i/3) a_i² e^{−(2/3) η w_i t}`.
pub fn exact_loss(t: f64, params: &TheoryParams) -> Result<f64> {
    check_time(t)?;
    let eta_t = params.lr * t;
    let total = match &params.weights {
        None => {
            let (a, b) = (params.a, params.b);
            (1..=params.n)
                .map(|i| {
                    let x = i as f64;
                    x.powf(-(a + 2.0 * b)) * (-(2.0 / 3.0) * eta_t * x.powf(-a)).exp()
                })
                .sum::<f64>()
                / 6.0
        }
        Some(w) => w
            .iter()
            .enumerate()
            .map(|(idx, &wi)| {
                let c = params.channel(idx + 1);
                0.5 * (wi / 3.0) * c * c * (-(2.0 / 3.0) * wi * eta_t).exp()
            })
            .sum(),
    };
    if !total.is_finite() {
        return Err(LabError::Domain(format!("loss overflowed at t = {t}")));
    }
    Ok(total)
}

/// Loss of a simulation that normalizes the raw weights by `z`:
/// `L(t / z) / z`.
pub fn rescaled_exact_loss(t: f64, params: &TheoryParams, z: f64) -> Result<f64> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(invalid(format!(
            "normalization constant must be positive, got {z}"
        )));
    }
    Ok(exact_loss(t / z, params)? / z)
}

/// `½ Σ (w_i/3) c_i² exp(−(2/3) w_i t)` for arbitrary frequencies `w` and
/// channel weights `c`; `t` already includes the learning rate.
pub fn theory_loss_general(t: f64, weights: &[f64], channel: &[f64]) -> Result<f64> {
    if weights.len() != channel.len() {
        return Err(mismatch(format!(
            "{} weights but {} channel entries",
            weights.len(),
            channel.len()
        )));
    }
    check_time(t)?;
    Ok(weights
        .iter()
        .zip(channel)
        .map(|(&w, &c)| 0.5 * (w / 3.0) * c * c * (-(2.0 / 3.0) * w * t).exp())
        .sum())
}

/// Predicted mid-training exponent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponent {
    pub alpha: f64,
    /// Power of the `log t` prefactor (nonzero only for stretched exponentials).
    pub log_correction: f64,
}

pub fn predicted_exponent(law: &DecayLaw, b: f64) -> Result<Exponent> {
    if !b.is_finite() || b < 0.0 {
        return Err(invalid("b must be finite and >= 0"));
    }
    match *law {
        DecayLaw::PowerLaw { a } => {
            if !(a > 0.0) || a + 2.0 * b <= 1.0 {
                return Err(LabError::Domain(format!(
                    "power-law exponent needs a > 0 and a + 2b > 1 (a = {a}, b = {b})"
                )));
            }
            Ok(Exponent {
                alpha: (a + 2.0 * b - 1.0) / a,
                log_correction: 0.0,
            })
        }
        DecayLaw::ExponentialDecay { a, .. } => {
            require_flat_channel(b)?;
            require_positive_shape(a)?;
            Ok(Exponent {
                alpha: 1.0,
                log_correction: 1.0 / a - 1.0,
            })
        }
        DecayLaw::AlgebraicEdge { a } => {
            require_flat_channel(b)?;
            require_positive_shape(a)?;
            Ok(Exponent {
                alpha: 1.0 + 1.0 / a,
                log_correction: 0.0,
            })
        }
        DecayLaw::Custom { .. } => Err(LabError::Domain(
            "no closed-form exponent for custom weights".into(),
        )),
    }
}

fn require_flat_channel(b: f64) -> Result<()> {
    if b != 0.0 {
        return Err(LabError::Domain(
            "channel decay is only supported for the power-law class".into(),
        ));
    }
    Ok(())
}

fn require_positive_shape(a: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(LabError::Domain(format!(
            "shape exponent must be > 0, got {a}"
        )));
    }
    Ok(())
}

/// Time constant pairing `f(z_c) t / τ = 1` with the `(2/3) η` decay rate.
pub fn default_tau(lr: f64) -> f64 {
    1.5 / lr
}

/// Frequency profile `f(z)` of a built-in law with unit prefactor. The
/// algebraic edge sits at `z_* = n`.
pub fn profile(law: &DecayLaw, z: f64, n: usize) -> Result<f64> {
    match *law {
        DecayLaw::PowerLaw { a } => Ok(z.powf(-a)),
        DecayLaw::ExponentialDecay { kappa, a } => Ok((-kappa * z.powf(a)).exp()),
        DecayLaw::AlgebraicEdge { a } => Ok((n as f64 - z).max(0.0).powf(a)),
        DecayLaw::Custom { .. } => Err(LabError::Domain(
            "custom weights have no continuous profile".into(),
        )),
    }
}

/// `z_c(t) = f^{-1}(τ / t)` for the unit-prefactor profile of `law`.
///
/// `n` locates the edge `z_* = n` of the algebraic class and is ignored
/// otherwise.
pub fn critical_index(t: f64, law: &DecayLaw, tau: f64, n: usize) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) || !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("t and tau must be positive and finite"));
    }
    law.validate()?;
    let level = tau / t;
    let out_of_range = |range: &str| {
        LabError::Domain(format!(
            "tau/t = {level} is outside the range {range} of the profile"
        ))
    };
    match *law {
        DecayLaw::PowerLaw { a } => {
            if a == 0.0 {
                return Err(LabError::Domain("flat profile is not invertible".into()));
            }
            Ok(level.powf(-1.0 / a))
        }
        DecayLaw::ExponentialDecay { kappa, a } => {
            if level > 1.0 {
                return Err(out_of_range("(0, 1]"));
            }
            Ok((-level.ln() / kappa).powf(1.0 / a))
        }
        DecayLaw::AlgebraicEdge { a } => {
            let top = (n as f64).powf(a);
            if level > top {
                return Err(out_of_range("[0, N^a]"));
            }
            Ok(n as f64 - level.powf(1.0 / a))
        }
        DecayLaw::Custom { .. } => Err(LabError::Domain(
            "custom weights have no continuous profile".into(),
        )),
    }
}

/// Inverse of [`critical_index`]: the time at which index `z` is critical,
/// `t = τ / f(z)`.
pub fn critical_time(z: f64, law: &DecayLaw, tau: f64, n: usize) -> Result<f64> {
    let f = profile(law, z, n)?;
    if !(f > 0.0) {
        return Err(LabError::Domain(format!("profile vanishes at z = {z}")));
    }
    Ok(tau / f)
}

/// Mid-training window for fits on closed-form curves: the times at which
/// the unlearned region sits well inside the spectrum.
///
/// For decreasing profiles this is `z_c ∈ [10, N/10]`; for the algebraic
/// edge it is a gap `z_* − z_c ∈ [10, N/10]` to the edge. `scale` multiplies
/// both ends and converts from raw to normalized weights (pass the
/// normalization constant `Z`, or `1` for raw weights).
pub fn theory_fit_window(law: &DecayLaw, n: usize, tau: f64, scale: f64) -> Result<(f64, f64)> {
    let lo_idx = 10.0;
    let hi_idx = n as f64 / 10.0;
    if hi_idx <= lo_idx {
        return Err(LabError::Domain(format!(
            "N = {n} is too small for a window with 10 << z_c << N"
        )));
    }
    let (z_early, z_late) = match law {
        DecayLaw::AlgebraicEdge { .. } => (n as f64 - hi_idx, n as f64 - lo_idx),
        _ => (lo_idx, hi_idx),
    };
    let t_lo = critical_time(z_early, law, tau, n)? * scale;
    let t_hi = critical_time(z_late, law, tau, n)? * scale;
    Ok((t_lo, t_hi))
}

/// Hard assignment of features to latent directions (maximally positive
/// interference).
///
/// With `W_ji = 1` for `i ∈ G_j`, the projection covariance and correlation
/// are diagonal: `P_jj = n_j`, `C_jj = Σ_{i∈G_j} σ_i²`,
/// `S_jj = Σ_{i∈G_j} A_ii σ_i²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSpec {
    assignment: Vec<usize>,
    sizes: Vec<usize>,
    variance_sums: Vec<f64>,
    signal_sums: Vec<f64>,
}

impl ClusterSpec {
    /// `assignment[i]` is the 0-based cluster of feature `i`, in `0..k`.
    pub fn new(
        assignment: Vec<usize>,
        k: usize,
        variances: &[f64],
        teacher_diag: &[f64],
    ) -> Result<Self> {
        let n = assignment.len();
        if variances.len() != n || teacher_diag.len() != n {
            return Err(mismatch(
                "assignment, variances and teacher differ in length",
            ));
        }
        let mut sizes = vec![0usize; k];
        let mut variance_sums = vec![0.0; k];
        let mut signal_sums = vec![0.0; k];
        for (i, &j) in assignment.iter().enumerate() {
            if j >= k {
                return Err(invalid(format!(
                    "feature {i} assigned to cluster {j} >= K = {k}"
                )));
            }
            sizes[j] += 1;
            variance_sums[j] += variances[i];
            signal_sums[j] += teacher_diag[i] * variances[i];
        }
        Ok(Self {
            assignment,
            sizes,
            variance_sums,
            signal_sums,
        })
    }

    pub fn clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn cluster_of(&self, feature: usize) -> usize {
        self.assignment[feature]
    }

    pub fn size(&self, j: usize) -> usize {
        self.sizes[j]
    }

    pub fn variance_sum(&self, j: usize) -> f64 {
        self.variance_sums[j]
    }

    pub fn signal_sum(&self, j: usize) -> f64 {
        self.signal_sums[j]
    }

    /// `λ_eff = n_j C_jj`.
    pub fn effective_rate(&self, j: usize) -> Result<f64> {
        self.check_cluster(j)?;
        Ok(self.sizes[j] as f64 * self.variance_sums[j])
    }

    fn check_cluster(&self, j: usize) -> Result<()> {
        if j >= self.sizes.len() {
            return Err(invalid(format!("cluster {j} out of range")));
        }
        if self.sizes[j] == 0 {
            return Err(invalid(format!("cluster {j} is empty")));
        }
        if !(self.variance_sums[j] > 0.0) {
            return Err(invalid(format!("cluster {j} has no input variance")));
        }
        Ok(())
    }
}

/// `b_j(t) = S_jj / (n_j C_jj) · (1 − e^{−η n_j C_jj t})`.
pub fn clustered_dynamics(spec: &ClusterSpec, j: usize, t: f64, lr: f64) -> Result<f64> {
    check_time(t)?;
    let rate = spec.effective_rate(j)?;
    Ok(spec.signal_sum(j) / rate * -(-lr * rate * t).exp_m1())
}

/// Uniform rate `(N/K)² σ̄²` of the isotropic random-embedding limit, where
/// `E[W Wᵀ] = (N/K) I` and `E[W Σ Wᵀ] = (N/K) σ̄² I`.
pub fn isotropic_rate(n: usize, k: usize, mean_variance: f64) -> Result<f64> {
    if k == 0 || k > n {
        return Err(invalid(format!("need 1 <= K <= N, got K = {k}, N = {n}")));
    }
    let ratio = n as f64 / k as f64;
    Ok(ratio * ratio * mean_variance)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64, n: usize) -> TheoryParams {
        TheoryParams::new(a, b, n, 1.0).unwrap()
    }

    #[test]
    fn mode_starts_at_zero_and_relaxes_to_teacher() {
        let p = TheoryParams::new(1.5, 0.25, 100, 0.1).unwrap();
        assert_eq!(mode_solution(7, 0.0, &p).unwrap(), 0.0);
        let late = mode_solution(7, 1e9, &p).unwrap();
        assert!((late - 7f64.powf(-0.25)).abs() < 1e-12);
        assert!(mode_solution(0, 1.0, &p).is_err());
        assert!(mode_solution(101, 1.0, &p).is_err());
    }

    #[test]
    fn printed_sum_small_case() {
        let l = exact_loss(0.0, &params(1.0, 0.0, 2)).unwrap();
        assert!((l - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_vanishes_at_late_times() {
        let l = exact_loss(1e30, &params(1.5, 0.0, 64)).unwrap();
        assert!(l < 1e-300);
        assert!(exact_loss(-1.0, &params(1.5, 0.0, 64)).is_err());
    }

    #[test]
    fn general_weights_reduce_to_printed_sum() {
        for &(a, b) in &[(1.1, 0.0), (1.5, 0.25), (2.0, 0.5), (0.7, 0.1)] {
            let n = 300;
            let raw = params(a, b, n);
            let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-a)).collect();
            let c: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-b)).collect();
            let weighted = raw.clone().with_weights(w.clone()).unwrap();
            for &t in &[0.0, 1.0, 37.5, 1e3, 1e5] {
                let printed = exact_loss(t, &raw).unwrap();
                let general = exact_loss(t, &weighted).unwrap();
                let direct = theory_loss_general(t, &w, &c).unwrap();
                assert!((printed - general).abs() <= 1e-12 * printed.max(1e-300));
                assert!((printed - direct).abs() <= 1e-12 * printed.max(1e-300));
            }
        }
    }

    #[test]
    fn rescaling_matches_normalized_weights() {
        let (a, b, n) = (1.5, 0.25, 512);
        let raw = params(a, b, n);
        let z: f64 = (1..=n).map(|i| (i as f64).powf(-a)).sum();
        let w: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-a) / z).collect();
        let c: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-b)).collect();
        for &t in &[0.0, 3.0, 250.0, 4e4] {
            let lhs = rescaled_exact_loss(t, &raw, z).unwrap();
            let rhs = theory_loss_general(t, &w, &c).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        }
    }

    #[test]
    fn single_feature_is_pure_exponential() {
        let l = theory_loss_general(2.0, &[0.6], &[1.0]).unwrap();
        assert!((l - 0.1 * (-0.8f64).exp()).abs() < 1e-15);
        assert!(theory_loss_general(1.0, &[0.6, 0.4], &[1.0]).is_err());
    }

    #[test]
    fn exponents_per_class() {
        let e = predicted_exponent(&DecayLaw::PowerLaw { a: 1.1 }, 0.0).unwrap();
        assert!((e.alpha - 0.1 / 1.1).abs() < 1e-15);
        assert!((e.alpha - 0.0909).abs() < 1e-4);
        let e = predicted_exponent(&DecayLaw::PowerLaw { a: 1.5 }, 0.25).unwrap();
        assert!((e.alpha - 2.0 / 3.0).abs() < 1e-15);
        let e =
            predicted_exponent(&DecayLaw::ExponentialDecay { kappa: 0.5, a: 1.0 }, 0.0).unwrap();
        assert_eq!(
            e,
            Exponent {
                alpha: 1.0,
                log_correction: 0.0
            }
        );
        let e =
            predicted_exponent(&DecayLaw::ExponentialDecay { kappa: 0.5, a: 0.5 }, 0.0).unwrap();
        assert_eq!(e.log_correction, 1.0);
        let e = predicted_exponent(&DecayLaw::AlgebraicEdge { a: 1.0 }, 0.0).unwrap();
        assert_eq!(e.alpha, 2.0);
    }

    #[test]
    fn exponent_domain_errors() {
        assert!(predicted_exponent(&DecayLaw::PowerLaw { a: 0.9 }, 0.0).is_err());
        assert!(predicted_exponent(&DecayLaw::PowerLaw { a: 0.9 }, 0.1).is_ok());
        assert!(
            predicted_exponent(&DecayLaw::ExponentialDecay { kappa: 1.0, a: 1.0 }, 0.2).is_err()
        );
        assert!(predicted_exponent(&DecayLaw::AlgebraicEdge { a: 1.0 }, 0.5).is_err());
        assert!(predicted_exponent(&DecayLaw::Custom { weights: vec![1.0] }, 0.0).is_err());
    }

    #[test]
    fn critical_index_inverts_profiles() {
        let tau = 2.0;
        let z = critical_index(tau * 100.0, &DecayLaw::PowerLaw { a: 2.0 }, tau, 0).unwrap();
        assert!((z - 10.0).abs() < 1e-12);
        let z = critical_index(tau, &DecayLaw::PowerLaw { a: 1.3 }, tau, 0).unwrap();
        assert!((z - 1.0).abs() < 1e-15);
        let kappa = 0.5;
        let m = 7.0;
        let law = DecayLaw::ExponentialDecay { kappa, a: 1.0 };
        let z = critical_index(tau * (kappa * m).exp(), &law, tau, 0).unwrap();
        assert!((z - m).abs() < 1e-12);
        assert!(critical_index(tau / 2.0, &law, tau, 0).is_err());
        let law = DecayLaw::AlgebraicEdge { a: 1.0 };
        let z = critical_index(tau * 4.0, &law, tau, 100).unwrap();
        assert!((z - 99.75).abs() < 1e-12);
    }

    #[test]
    fn critical_time_round_trip() {
        let law = DecayLaw::PowerLaw { a: 1.7 };
        let t = critical_time(33.0, &law, 1.5, 1024).unwrap();
        let z = critical_index(t, &law, 1.5, 1024).unwrap();
        assert!((z - 33.0).abs() < 1e-10);
    }

    #[test]
    fn phase_diagram_ordering() {
        for &a in &[1.1, 1.5, 2.0, 4.0] {
            let alg = predicted_exponent(&DecayLaw::AlgebraicEdge { a }, 0.0)
                .unwrap()
                .alpha;
            let exp = predicted_exponent(&DecayLaw::ExponentialDecay { kappa: 1.0, a }, 0.0)
                .unwrap()
                .alpha;
            let pow = predicted_exponent(&DecayLaw::PowerLaw { a }, 0.0)
                .unwrap()
                .alpha;
            assert!(alg > exp && exp > pow);
            assert!((pow - (1.0 - 1.0 / a)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_cluster_fixed_point() {
        let spec = ClusterSpec::new(vec![0, 0], 1, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(spec.effective_rate(0).unwrap(), 4.0);
        assert_eq!(clustered_dynamics(&spec, 0, 0.0, 0.1).unwrap(), 0.0);
        let late = clustered_dynamics(&spec, 0, 1e6, 0.1).unwrap();
        assert!((late - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cluster_rate_is_quadratic_in_size() {
        let var = 0.01;
        for &size in &[1usize, 2, 5, 10] {
            let spec =
                ClusterSpec::new(vec![0; size], 1, &vec![var; size], &vec![1.0; size]).unwrap();
            let rate = spec.effective_rate(0).unwrap();
            assert!((rate - (size * size) as f64 * var).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_cluster_is_an_error() {
        let spec = ClusterSpec::new(vec![0, 0], 2, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!(clustered_dynamics(&spec, 1, 1.0, 0.1).is_err());
        assert!(ClusterSpec::new(vec![0, 3], 2, &[1.0, 1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn isotropic_rate_cases() {
        assert_eq!(isotropic_rate(64, 64, 0.3).unwrap(), 0.3);
        assert_eq!(isotropic_rate(1024, 512, 0.25).unwrap(), 1.0);
        assert!(isotropic_rate(4, 5, 1.0).is_err());
    }

    #[test]
    fn window_tracks_critical_index() {
        let law = DecayLaw::PowerLaw { a: 1.5 };
        let (lo, hi) = theory_fit_window(&law, 1024, 1.5, 1.0).unwrap();
        assert!((critical_index(lo, &law, 1.5, 1024).unwrap() - 10.0).abs() < 1e-9);
        assert!((critical_index(hi, &law, 1.5, 1024).unwrap() - 102.4).abs() < 1e-9);
        let law = DecayLaw::AlgebraicEdge { a: 1.0 };
        let (lo, hi) = theory_fit_window(&law, 1000, 1.5, 1.0).unwrap();
        assert!(lo < hi);
        assert!((critical_index(hi, &law, 1.5, 1000).unwrap() - 990.0).abs() < 1e-9);
        assert!(theory_fit_window(&law, 50, 1.5, 1.0).is_err());
    }
}
