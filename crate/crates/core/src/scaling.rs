//! Power-law fits, compute frontiers, width scaling and wavefront diagnostics.
//!
//! Traces are slices of `(eta_t, loss)` pairs. Points with `eta_t <= 0`
//! (the initial evaluation) never enter a log-log fit.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, LabError, Result};

/// Minimum number of points a log-log regression accepts.
pub const MIN_FIT_POINTS: usize = 10;

/// Fraction of the trace tail averaged to estimate the plateau.
pub const PLATEAU_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// OLS of `log L` on `log t`.
    LogLog,
    /// OLS of `log(L − L0)` on `log t` with `L0` from the trace tail.
    LogLogOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    pub c_t: f64,
    pub l0: f64,
    pub alpha_stderr: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_points: usize,
    pub method: FitMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthFit {
    pub beta: f64,
    pub c_k: f64,
    pub l0: f64,
    pub beta_stderr: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub compute: f64,
    pub loss: f64,
    pub k_star: usize,
}

/// Ordinary least squares `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

pub fn ols(xs: &[f64], ys: &[f64]) -> Result<Ols> {
    if xs.len() != ys.len() {
        return Err(mismatch("x and y differ in length"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(LabError::Fit(format!("need at least 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if !(sxx > 0.0) {
        return Err(LabError::Fit("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 {
        (1.0 - sse / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(Ols {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    })
}

/// Mean loss over the final 5% of the trace (at least one point).
pub fn plateau_loss(trace: &[(f64, f64)]) -> Result<f64> {
    if trace.is_empty() {
        return Err(LabError::Fit("empty trace".into()));
    }
    let m = ((trace.len() as f64 * PLATEAU_FRACTION).ceil() as usize).max(1);
    let tail = &trace[trace.len() - m..];
    Ok(tail.iter().map(|p| p.1).sum::<f64>() / m as f64)
}

/// Fit `L ≈ c_t t^{−α} (+ L0)` over `window`, inclusive at both ends.
pub fn fit_power_law(
    trace: &[(f64, f64)],
    window: (f64, f64),
    subtract_offset: bool,
) -> Result<FitResult> {
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(invalid(format!("bad fit window ({lo}, {hi})")));
    }
    let l0 = if subtract_offset {
        plateau_loss(trace)?
    } else {
        0.0
    };
    let mut in_window = 0usize;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &(t, loss) in trace {
        if t < lo || t > hi {
            continue;
        }
        in_window += 1;
        let adjusted = loss - l0;
        if adjusted > 0.0 && adjusted.is_finite() {
            xs.push(t.ln());
            ys.push(adjusted.ln());
        }
    }
    if in_window > 0 && xs.is_empty() {
        return Err(LabError::Fit(
            "no positive losses in the window after offset subtraction".into(),
        ));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(LabError::Fit(format!(
            "{} usable points in window ({lo:e}, {hi:e}), need {MIN_FIT_POINTS}",
            xs.len()
        )));
    }
    let fit = ols(&xs, &ys)?;
    Ok(FitResult {
        alpha: -fit.slope,
        c_t: fit.intercept.exp(),
        l0,
        alpha_stderr: fit.slope_stderr,
        window,
        r_squared: fit.r_squared,
        n_points: xs.len(),
        method: if subtract_offset {
            FitMethod::LogLogOffset
        } else {
            FitMethod::LogLog
        },
    })
}

/// Mid-training window: `[1e3, 1e4]` when the trace covers it, otherwise the
/// central 40% (in log time) of the part of the trace above twice the
/// plateau.
pub fn default_fit_window(trace: &[(f64, f64)]) -> Result<(f64, f64)> {
    let positive: Vec<(f64, f64)> = trace.iter().copied().filter(|p| p.0 > 0.0).collect();
    let (first, last) = match (positive.first(), positive.last()) {
        (Some(f), Some(l)) => (f.0, l.0),
        _ => return Err(LabError::Fit("trace has no positive times".into())),
    };
    // Two decades, allowing for rounding in the logged times.
    if (last / first).log10() < 2.0 - 1e-9 {
        return Err(LabError::Fit(format!(
            "trace spans [{first:e}, {last:e}], less than two decades"
        )));
    }
    if first <= 1e3 && last >= 1e4 {
        return Ok((1e3, 1e4));
    }
    let l0 = plateau_loss(trace)?;
    let active: Vec<f64> = positive
        .iter()
        .filter(|p| p.1 > 2.0 * l0)
        .map(|p| p.0.ln())
        .collect();
    if active.len() < 2 {
        return Err(LabError::Fit("no mid-training regime".into()));
    }
    let (a, b) = (active[0], active[active.len() - 1]);
    let span = b - a;
    if !(span > 0.0) {
        return Err(LabError::Fit("no mid-training regime".into()));
    }
    Ok(((a + 0.3 * span).exp(), (a + 0.7 * span).exp()))
}

/// One training run for frontier analysis: width `k` and `(eta_t, loss)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizedTrace {
    pub k: usize,
    pub trace: Vec<(f64, f64)>,
}

/// Number of log-spaced compute buckets.
pub const FRONTIER_BUCKETS: usize = 50;

/// Lower envelope of loss against compute `C = eta_t · K²`.
///
/// Each bucket reports the lowest loss reached by any run at compute up to
/// its upper edge, together with the width that reached it.
pub fn frontier(runs: &[SizedTrace]) -> Result<Vec<FrontierPoint>> {
    let mut points: Vec<(f64, f64, usize)> = Vec::new();
    for run in runs {
        let k2 = (run.k * run.k) as f64;
        for &(t, loss) in &run.trace {
            let c = t * k2;
            if c > 0.0 && loss.is_finite() {
                points.push((c, loss, run.k));
            }
        }
    }
    if points.is_empty() {
        return Err(LabError::Fit("no runs with positive compute".into()));
    }
    points.sort_by(|x, y| x.0.total_cmp(&y.0));
    let c_min = points[0].0;
    let c_max = points[points.len() - 1].0;
    let edges: Vec<f64> = if c_max > c_min {
        let (l0, l1) = (c_min.ln(), c_max.ln());
        let mut e: Vec<f64> = (1..=FRONTIER_BUCKETS)
            .map(|b| (l0 + (l1 - l0) * b as f64 / FRONTIER_BUCKETS as f64).exp())
            .collect();
        e[FRONTIER_BUCKETS - 1] = c_max;
        e
    } else {
        vec![c_max]
    };
    let mut out = Vec::with_capacity(edges.len());
    let mut best: Option<(f64, usize)> = None;
    let mut idx = 0;
    for (b, &edge) in edges.iter().enumerate() {
        let last = b + 1 == edges.len();
        // Rounding in t · K² must not push a point into the next bucket.
        while idx < points.len() && (points[idx].0 <= edge * (1.0 + 1e-12) || last) {
            let (_, loss, k) = points[idx];
            if best.is_none_or(|(l, _)| loss < l) {
                best = Some((loss, k));
            }
            idx += 1;
        }
        if let Some((loss, k_star)) = best {
            out.push(FrontierPoint {
                compute: edge,
                loss,
                k_star,
            });
        }
    }
    Ok(out)
}

/// Power-law fit `K_star ∝ C^γ` over frontier points with compute in
/// `range` (all points when `None`). Returns the OLS fit in log-log space.
pub fn frontier_size_exponent(points: &[FrontierPoint], range: Option<(f64, f64)>) -> Result<Ols> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| range.is_none_or(|(lo, hi)| p.compute >= lo && p.compute <= hi))
        .map(|p| (p.compute.ln(), (p.k_star as f64).ln()))
        .unzip();
    ols(&xs, &ys)
}

/// Frontier points over which the width exponent is fitted: from the first
/// bucket won by a wider model than the narrowest run to the first bucket
/// won by the widest run.
pub fn size_fit_range(points: &[FrontierPoint]) -> Option<(f64, f64)> {
    let kmin = points.iter().map(|p| p.k_star).min()?;
    let kmax = points.iter().map(|p| p.k_star).max()?;
    if kmin == kmax {
        return None;
    }
    let lo = points.iter().find(|p| p.k_star > kmin)?.compute;
    let hi = points.iter().find(|p| p.k_star == kmax)?.compute;
    (lo < hi).then_some((lo, hi))
}

/// Loss-vs-width curve at one compute budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoCurve {
    pub budget: f64,
    pub curve: Vec<(usize, f64)>,
    pub k_star: usize,
    pub loss_star: f64,
}

/// Loss at `t`, linear in `log t` between neighbouring logged points.
/// `None` outside the trace's positive-time support.
pub fn interpolate_loss(trace: &[(f64, f64)], t: f64) -> Option<f64> {
    let pos: Vec<&(f64, f64)> = trace.iter().filter(|p| p.0 > 0.0).collect();
    let first = pos.first()?;
    let last = pos.last()?;
    if t < first.0 || t > last.0 {
        return None;
    }
    let j = pos.partition_point(|p| p.0 < t);
    if pos[j].0 == t || j == 0 {
        return Some(pos[j].1);
    }
    let (t0, l0) = *pos[j - 1];
    let (t1, l1) = *pos[j];
    let w = (t.ln() - t0.ln()) / (t1.ln() - t0.ln());
    Some(l0 + w * (l1 - l0))
}

/// For each budget `C`, each run's loss at `t = C / K²` and the minimizer.
pub fn iso_compute(runs: &[SizedTrace], budgets: &[f64]) -> Result<Vec<IsoCurve>> {
    if runs.is_empty() {
        return Err(LabError::Fit("no runs".into()));
    }
    budgets
        .iter()
        .map(|&c| {
            let curve: Vec<(usize, f64)> = runs
                .iter()
                .filter_map(|r| {
                    interpolate_loss(&r.trace, c / (r.k * r.k) as f64).map(|l| (r.k, l))
                })
                .collect();
            let (k_star, loss_star) = curve
                .iter()
                .copied()
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .ok_or_else(|| {
                    LabError::Domain(format!("budget {c:e} is outside every run's range"))
                })?;
            Ok(IsoCurve {
                budget: c,
                curve,
                k_star,
                loss_star,
            })
        })
        .collect()
}

/// Fit `L(K) − L0 ≈ c_k K^{−β}`, with `L0 = l0_factor ×` the loss of the
/// widest run.
pub fn width_scaling_fit(final_losses: &[(usize, f64)], l0_factor: f64) -> Result<WidthFit> {
    let mut ks: Vec<usize> = final_losses.iter().map(|p| p.0).collect();
    ks.sort_unstable();
    ks.dedup();
    if ks.len() < 4 {
        return Err(LabError::Fit(format!(
            "need 4 distinct widths, got {}",
            ks.len()
        )));
    }
    if !(l0_factor >= 0.0) {
        return Err(invalid("l0_factor must be >= 0"));
    }
    let widest = final_losses
        .iter()
        .max_by_key(|p| p.0)
        .map(|p| p.1)
        .unwrap_or(0.0);
    let l0 = l0_factor * widest;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(k, loss) in final_losses {
        let adjusted = loss - l0;
        if !(adjusted > 0.0) {
            return Err(LabError::Fit(format!(
                "non-positive adjusted loss {adjusted:e} at K = {k}"
            )));
        }
        xs.push((k as f64).ln());
        ys.push(adjusted.ln());
    }
    let fit = ols(&xs, &ys)?;
    Ok(WidthFit {
        beta: -fit.slope,
        c_k: fit.intercept.exp(),
        l0,
        beta_stderr: fit.slope_stderr,
        r_squared: fit.r_squared,
    })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation; `NaN` when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(mismatch("spearman inputs differ in length"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WavefrontMetrics {
    /// Spearman correlation of feature index against half-time.
    pub spearman: f64,
    /// First logged time at which `L_i` fell below half its initial value.
    pub half_times: Vec<f64>,
    /// Features that never halved; their half-time is the final time.
    pub censored: Vec<bool>,
    /// 90/10 percentile ratio of `L_i(t) / L_i(0)` at every logged time,
    /// over features with above-median frequency.
    pub interdecile: Vec<f64>,
}

/// Wavefront diagnostics from per-feature losses (`times.len() × N`, first
/// row is the initial evaluation) and the feature frequencies `p`.
///
/// Features whose initial loss is zero carry no signal and are skipped by
/// both statistics.
pub fn wavefront_metrics(
    times: &[f64],
    losses: ArrayView2<'_, f64>,
    p: &[f64],
) -> Result<WavefrontMetrics> {
    let (rows, n) = losses.dim();
    if rows != times.len() || rows == 0 {
        return Err(mismatch(format!(
            "{} times for {rows} loss rows",
            times.len()
        )));
    }
    if p.len() != n {
        return Err(mismatch(format!(
            "{} frequencies for {n} features",
            p.len()
        )));
    }
    let final_time = times[rows - 1];
    let initial = losses.row(0);
    let mut half_times = vec![final_time; n];
    let mut censored = vec![true; n];
    for i in 0..n {
        let half = 0.5 * initial[i];
        if let Some(r) = (0..rows).find(|&r| losses[[r, i]] < half) {
            half_times[i] = times[r];
            censored[i] = false;
        }
    }
    let live: Vec<usize> = (0..n).filter(|&i| initial[i] > 0.0).collect();
    let idx: Vec<f64> = live.iter().map(|&i| i as f64).collect();
    let ht: Vec<f64> = live.iter().map(|&i| half_times[i]).collect();
    let spearman = spearman(&idx, &ht)?;

    let median_p = percentile(p, 0.5);
    let frequent: Vec<usize> = live.iter().copied().filter(|&i| p[i] > median_p).collect();
    let interdecile = (0..rows)
        .map(|r| {
            let rel: Vec<f64> = frequent
                .iter()
                .map(|&i| losses[[r, i]] / initial[i])
                .collect();
            percentile(&rel, 0.9) / percentile(&rel, 0.1)
        })
        .collect();
    Ok(WavefrontMetrics {
        spearman,
        half_times,
        censored,
        interdecile,
    })
}
