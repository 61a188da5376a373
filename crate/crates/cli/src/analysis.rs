//! Fits and summaries over stored runs. `fit`, `frontier` and `report` all
//! go through these functions, so their numbers always agree.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use splab_core::features::{DecayLaw, FrequencyVector};
use splab_core::scaling::{
    default_fit_window, fit_power_law, frontier, frontier_size_exponent, iso_compute, plateau_loss,
    size_fit_range, wavefront_metrics, width_scaling_fit, FitResult, FrontierPoint, IsoCurve,
    SizedTrace, WidthFit,
};
use splab_core::theory::predicted_exponent;

use crate::artifacts::{as_pairs, read_features, LoadedRun};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Band for superposition exponents.
pub const SUPERPOSITION_BAND: (f64, f64) = (0.85, 1.15);
/// Allowed gap between fitted and predicted exponents without superposition.
pub const THEORY_TOLERANCE: f64 = 0.05;
pub const WIDTH_TARGET: (f64, f64) = (1.30, 0.15);
pub const SIZE_TARGET: (f64, f64) = (0.27, 0.08);
pub const SPEARMAN_MIN: f64 = 0.95;
pub const UNISON_MAX: f64 = 10.0;

pub fn fit_trace(
    trace: &[(f64, f64)],
    window: Option<(f64, f64)>,
    subtract_offset: bool,
) -> CliResult<FitResult> {
    let window = match window {
        Some(w) => w,
        None => default_fit_window(trace)?,
    };
    Ok(fit_power_law(trace, window, subtract_offset)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentRow {
    pub run_id: String,
    pub a: Option<f64>,
    pub b: f64,
    pub k: usize,
    pub superposition: bool,
    pub alpha_fit: Option<f64>,
    pub alpha_stderr: Option<f64>,
    pub alpha_theory: Option<f64>,
    pub delta: Option<f64>,
    pub pass: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub widths: Vec<usize>,
    pub width_fit: Option<WidthFit>,
    pub size_exponent: Option<f64>,
    /// Only judged for the power-law `a = 1.1`, `b = 0` setting.
    pub width_pass: Option<bool>,
    pub size_pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WavefrontRow {
    pub run_id: String,
    pub superposition: bool,
    pub spearman: f64,
    pub censored: usize,
    pub max_interdecile: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub exponents: Vec<ExponentRow>,
    pub groups: Vec<GroupSummary>,
    pub wavefront: Vec<WavefrontRow>,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.exponents.iter().filter(|r| !r.pass).count()
            + self
                .groups
                .iter()
                .map(|g| {
                    usize::from(g.width_pass == Some(false))
                        + usize::from(g.size_pass == Some(false))
                })
                .sum::<usize>()
            + self.wavefront.iter().filter(|w| !w.pass).count()
    }
}

fn power_a(law: &DecayLaw) -> Option<f64> {
    match law {
        DecayLaw::PowerLaw { a } => Some(*a),
        _ => None,
    }
}

pub fn exponent_row(
    run: &LoadedRun,
    window: Option<(f64, f64)>,
    subtract_offset: bool,
) -> ExponentRow {
    let spec = &run.manifest.spec;
    let superposition = spec.mode != splab_core::model::EmbeddingMode::Identity;
    let theory = predicted_exponent(&spec.law, spec.teacher_b)
        .ok()
        .map(|e| e.alpha);
    let fit = fit_trace(&as_pairs(&run.trace), window, subtract_offset);
    let (alpha_fit, alpha_stderr, note) = match &fit {
        Ok(f) => (Some(f.alpha), Some(f.alpha_stderr), None),
        Err(e) => (None, None, Some(e.to_string())),
    };
    let delta = match (alpha_fit, theory) {
        (Some(f), Some(t)) => Some((f - t).abs()),
        _ => None,
    };
    let pass = match alpha_fit {
        None => false,
        Some(f) if superposition => f >= SUPERPOSITION_BAND.0 && f <= SUPERPOSITION_BAND.1,
        Some(_) => delta.is_some_and(|d| d <= THEORY_TOLERANCE),
    };
    ExponentRow {
        run_id: spec.run_id.clone(),
        a: power_a(&spec.law),
        b: spec.teacher_b,
        k: spec.k,
        superposition,
        alpha_fit,
        alpha_stderr,
        alpha_theory: theory,
        delta,
        pass,
        note,
    }
}

/// Runs that differ only in width, keyed by law, `b`, mode and replicate.
pub fn width_groups(runs: &[LoadedRun]) -> BTreeMap<String, Vec<&LoadedRun>> {
    let mut groups: BTreeMap<String, Vec<&LoadedRun>> = BTreeMap::new();
    for run in runs {
        let s = &run.manifest.spec;
        let key = format!(
            "{}_b{}_{:?}_r{}",
            serde_json::to_string(&s.law).unwrap_or_default(),
            s.teacher_b,
            s.mode,
            s.replicate
        );
        groups.entry(key).or_default().push(run);
    }
    groups
}

pub fn sized_traces(runs: &[&LoadedRun]) -> Vec<SizedTrace> {
    runs.iter()
        .map(|r| SizedTrace {
            k: r.manifest.spec.k,
            trace: as_pairs(&r.trace),
        })
        .collect()
}

pub fn size_exponent(points: &[FrontierPoint]) -> Option<f64> {
    let range = size_fit_range(points)?;
    frontier_size_exponent(points, Some(range))
        .ok()
        .map(|f| f.slope)
}

pub fn group_summary(key: &str, runs: &[&LoadedRun]) -> GroupSummary {
    let mut widths: Vec<usize> = runs.iter().map(|r| r.manifest.spec.k).collect();
    widths.sort_unstable();
    widths.dedup();
    let spec = &runs[0].manifest.spec;
    let judged = spec.mode != splab_core::model::EmbeddingMode::Identity
        && power_a(&spec.law) == Some(1.1)
        && spec.teacher_b == 0.0;
    let width_fit = if widths.len() >= 4 {
        let finals: Vec<(usize, f64)> = runs
            .iter()
            .filter_map(|r| {
                plateau_loss(&as_pairs(&r.trace))
                    .ok()
                    .map(|l| (r.manifest.spec.k, l))
            })
            .collect();
        width_scaling_fit(&finals, 0.0).ok()
    } else {
        None
    };
    let size_exponent = if widths.len() >= 2 {
        frontier(&sized_traces(runs))
            .ok()
            .and_then(|pts| size_exponent(&pts))
    } else {
        None
    };
    GroupSummary {
        group: key.to_string(),
        widths,
        width_pass: (judged && width_fit.is_some()).then(|| {
            let beta = width_fit.as_ref().map_or(f64::NAN, |w| w.beta);
            (beta - WIDTH_TARGET.0).abs() <= WIDTH_TARGET.1
        }),
        size_pass: (judged && size_exponent.is_some())
            .then(|| (size_exponent.unwrap_or(f64::NAN) - SIZE_TARGET.0).abs() <= SIZE_TARGET.1),
        width_fit,
        size_exponent,
    }
}

/// Wavefront diagnostics for a run with stored per-feature losses. Interdecile
/// ratios are judged inside the run's fit window.
pub fn wavefront_row(
    run: &LoadedRun,
    window: Option<(f64, f64)>,
) -> CliResult<Option<WavefrontRow>> {
    let path = run.dir.join("features.csv");
    if !path.exists() {
        return Ok(None);
    }
    let spec = &run.manifest.spec;
    let (steps, rows) = read_features(&path)?;
    let n = spec.n;
    if rows.iter().any(|r| r.len() != n) {
        return Err(CliError::Artifact(format!(
            "{}: ragged feature rows",
            path.display()
        )));
    }
    let times: Vec<f64> = steps.iter().map(|&s| s as f64 * spec.train.lr).collect();
    let losses = ndarray_from_rows(&rows, n);
    let freq = FrequencyVector::build(spec.law.clone(), n, spec.normalize)?;
    let m = wavefront_metrics(&times, losses.view(), freq.probs())?;
    let (lo, hi) = match window {
        Some(w) => w,
        None => {
            default_fit_window(&as_pairs(&run.trace)).unwrap_or((f64::MIN_POSITIVE, f64::INFINITY))
        }
    };
    let max_interdecile = times
        .iter()
        .zip(&m.interdecile)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(_, r)| *r)
        .fold(f64::NEG_INFINITY, f64::max);
    let superposition = spec.mode != splab_core::model::EmbeddingMode::Identity;
    let pass = if superposition {
        max_interdecile <= UNISON_MAX
    } else {
        m.spearman >= SPEARMAN_MIN
    };
    Ok(Some(WavefrontRow {
        run_id: spec.run_id.clone(),
        superposition,
        spearman: m.spearman,
        censored: m.censored.iter().filter(|c| **c).count(),
        max_interdecile,
        pass,
    }))
}

fn ndarray_from_rows(rows: &[Vec<f64>], n: usize) -> splab_core::ndarray::Array2<f64> {
    splab_core::ndarray::Array2::from_shape_fn((rows.len(), n), |(r, i)| rows[r][i])
}

/// Fit settings recorded in `<dir>/config.json`, if the directory is an
/// experiment directory written by `simulate`.
pub fn stored_fit_settings(dir: &Path) -> Option<(Option<(f64, f64)>, bool)> {
    let text = std::fs::read_to_string(dir.join("config.json")).ok()?;
    let mut stamp: serde_json::Value = serde_json::from_str(&text).ok()?;
    let cfg: ExperimentConfig = serde_json::from_value(stamp.get_mut("config")?.take()).ok()?;
    Some((cfg.analysis.fit_window, cfg.analysis.subtract_offset))
}

pub fn build_report(
    runs: &[LoadedRun],
    window: Option<(f64, f64)>,
    subtract_offset: bool,
) -> CliResult<Report> {
    let exponents = runs
        .iter()
        .map(|r| exponent_row(r, window, subtract_offset))
        .collect();
    let groups = width_groups(runs)
        .iter()
        .filter(|(_, g)| g.len() >= 2)
        .map(|(k, g)| group_summary(k, g))
        .collect();
    let mut wavefront = Vec::new();
    for run in runs {
        if let Some(row) = wavefront_row(run, window)? {
            wavefront.push(row);
        }
    }
    Ok(Report {
        exponents,
        groups,
        wavefront,
    })
}

/// `budgets` log-spaced inside the compute range of the frontier; budgets
/// no run covers are dropped.
pub fn iso_curves(runs: &[SizedTrace], points: &[FrontierPoint], budgets: usize) -> Vec<IsoCurve> {
    let (Some(first), Some(last)) = (points.first(), points.last()) else {
        return Vec::new();
    };
    let (lo, hi) = (first.compute.ln(), last.compute.ln());
    (0..budgets)
        .filter_map(|j| {
            let c = (lo + (hi - lo) * (j as f64 + 0.5) / budgets as f64).exp();
            iso_compute(runs, &[c]).ok().and_then(|mut v| v.pop())
        })
        .collect()
}

pub fn render_report(report: &Report) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    out.push_str("run_id\ta\tb\tK\talpha_fit\talpha_theory\t|delta|\tstatus\n");
    for r in &report.exponents {
        let theory = if r.superposition {
            format!("[{}, {}]", SUPERPOSITION_BAND.0, SUPERPOSITION_BAND.1)
        } else {
            opt(r.alpha_theory)
        };
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            r.run_id,
            opt(r.a),
            r.b,
            r.k,
            opt(r.alpha_fit),
            theory,
            if r.superposition {
                "-".into()
            } else {
                opt(r.delta)
            },
            if r.pass { "pass" } else { "FAIL" }
        ));
        if let Some(note) = &r.note {
            out.push_str(&format!("  {}: {note}\n", r.run_id));
        }
    }
    for g in &report.groups {
        let verdict = |p: Option<bool>| match p {
            Some(true) => " pass",
            Some(false) => " FAIL",
            None => "",
        };
        out.push_str(&format!(
            "group {} widths {:?}: beta {}{}, K* exponent {}{}\n",
            g.group,
            g.widths,
            opt(g.width_fit.as_ref().map(|w| w.beta)),
            verdict(g.width_pass),
            opt(g.size_exponent),
            verdict(g.size_pass)
        ));
    }
    for w in &report.wavefront {
        out.push_str(&format!(
            "wavefront {}: spearman {:.4} ({} censored), max interdecile {:.3e} {}\n",
            w.run_id,
            w.spearman,
            w.censored,
            w.max_interdecile,
            if w.pass { "pass" } else { "FAIL" }
        ));
    }
    out
}
