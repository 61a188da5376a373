//! Command-line front end: run configured sweeps, tabulate closed-form
//! curves, fit and summarize stored runs, and draw SVG figures.

pub mod analysis;
pub mod artifacts;
pub mod config;
pub mod error;
pub mod plot;
pub mod runner;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use splab_core::features::{DecayLaw, FrequencyVector};
use splab_core::scaling::frontier;
use splab_core::snapshot;
use splab_core::theory::{exact_loss, predicted_exponent, rescaled_exact_loss, TheoryParams};

use crate::analysis::{
    build_report, fit_trace, iso_curves, render_report, size_exponent, sized_traces,
};
use crate::artifacts::{
    as_pairs, fmt_f64, load_runs, output_root, read_features, read_trace, unix_now,
};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::plot::{Chart, Series};

#[derive(Debug, Parser)]
#[command(
    name = "splab",
    version,
    about = "Superposition scaling-law laboratory"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train every run of an experiment config; completed runs are skipped.
    Simulate {
        config: PathBuf,
        /// Output root (overrides SPLAB_OUTPUT_ROOT and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent runs (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Tabulate the closed-form loss of the linear student.
    Theory(TheoryArgs),
    /// Fit power laws to trace files and print the results as JSON.
    Fit {
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
        /// Subtract the plateau estimated from the trace tail.
        #[arg(long)]
        offset: bool,
    },
    /// Compute-optimal frontier and iso-compute curves of a sweep.
    Frontier {
        run_dir: PathBuf,
        /// Directory for frontier.csv, iso.csv and frontier.json.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 8)]
        budgets: usize,
    },
    /// Summary table with pass/fail against the acceptance thresholds.
    Report {
        run_dir: PathBuf,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
        #[arg(long)]
        offset: bool,
        /// Exit with status 3 when any threshold is missed.
        #[arg(long)]
        check: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Render an SVG figure.
    Plot {
        kind: PlotKind,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Loss,
    Exponents,
    Frontier,
    Iso,
    Features,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LawKind {
    PowerLaw,
    ExponentialDecay,
    AlgebraicEdge,
}

#[derive(Debug, clap::Args)]
pub struct TheoryArgs {
    #[arg(long, value_enum, default_value = "power-law")]
    pub law: LawKind,
    #[arg(long, default_value_t = 1.1)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b: f64,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1024)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    /// Use frequencies normalized to sum to one (the simulation convention).
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 1.0)]
    pub t_min: f64,
    #[arg(long, default_value_t = 1e5)]
    pub t_max: f64,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `args` and run; returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    match run(cli.command, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn window_arg(w: &Option<Vec<f64>>) -> CliResult<Option<(f64, f64)>> {
    match w.as_deref() {
        None => Ok(None),
        Some([lo, hi]) if *lo > 0.0 && lo < hi => Ok(Some((*lo, *hi))),
        Some(_) => Err(CliError::Usage("--window needs 0 < LO < HI".into())),
    }
}

pub fn run(command: Command, out: &mut dyn Write) -> CliResult<()> {
    match command {
        Command::Simulate {
            config,
            out: root,
            workers,
        } => cmd_simulate(&config, root.as_deref(), workers, out),
        Command::Theory(args) => cmd_theory(&args, out),
        Command::Fit {
            traces,
            window,
            offset,
        } => cmd_fit(&traces, window_arg(&window)?, offset, out),
        Command::Frontier {
            run_dir,
            out: dest,
            budgets,
        } => cmd_frontier(&run_dir, dest.as_deref(), budgets, out),
        Command::Report {
            run_dir,
            window,
            offset,
            check,
            json,
        } => cmd_report(
            &run_dir,
            window_arg(&window)?,
            offset,
            check,
            json.as_deref(),
            out,
        ),
        Command::Plot {
            kind,
            inputs,
            out: dest,
            window,
        } => cmd_plot(kind, &inputs, &dest, window_arg(&window)?),
    }
}

pub fn cmd_simulate(
    config: &Path,
    root: Option<&Path>,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let cfg = ExperimentConfig::load(config)?;
    let root = output_root(root, cfg.output_dir.as_deref());
    let workers = workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let reports = runner::simulate(&cfg, &root, workers)?;
    let dir = runner::experiment_dir(&root, &cfg);
    writeln!(out, "experiment {} -> {}", cfg.name, dir.display())?;
    let mut failed = 0;
    for r in &reports {
        let status = match &r.outcome {
            runner::Outcome::Completed => "ok".to_string(),
            runner::Outcome::Skipped => "skipped".to_string(),
            runner::Outcome::Failed(e) => {
                failed += 1;
                format!("failed: {e}")
            }
        };
        writeln!(out, "{}\t{status}", r.run_id)?;
    }
    if failed > 0 {
        return Err(CliError::Artifact(format!(
            "{failed} of {} runs failed",
            reports.len()
        )));
    }
    Ok(())
}

pub fn cmd_theory(args: &TheoryArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(args.t_min > 0.0 && args.t_min < args.t_max) || args.points < 2 {
        return Err(CliError::Usage(
            "need 0 < t_min < t_max and at least 2 points".into(),
        ));
    }
    let law = match args.law {
        LawKind::PowerLaw => DecayLaw::PowerLaw { a: args.a },
        LawKind::ExponentialDecay => DecayLaw::ExponentialDecay {
            kappa: args.kappa,
            a: args.a,
        },
        LawKind::AlgebraicEdge => DecayLaw::AlgebraicEdge { a: args.a },
    };
    let exponent = match predicted_exponent(&law, args.b) {
        Ok(e) => format!("{}, log_correction = {}", e.alpha, e.log_correction),
        Err(_) if matches!(law, DecayLaw::PowerLaw { .. }) => "n/a (a+2b ≤ 1)".to_string(),
        Err(e) => format!("n/a ({e})"),
    };
    let base = TheoryParams::new(args.a, args.b, args.n, args.lr)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (params, z) = match law {
        DecayLaw::PowerLaw { a } => {
            let z: f64 = (1..=args.n).map(|i| (i as f64).powf(-a)).sum();
            (base, args.normalize.then_some(z))
        }
        _ => {
            let freq = FrequencyVector::build(law.clone(), args.n, args.normalize)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            (base.with_weights(freq.probs().to_vec())?, None)
        }
    };
    let mut body = String::new();
    body.push_str(&format!(
        "# law = {}, b = {}, N = {}, lr = {}, normalized = {}\n# predicted_alpha = {exponent}\neta_t,loss\n",
        serde_json::to_string(&law)?,
        args.b,
        args.n,
        args.lr,
        args.normalize
    ));
    let (lo, hi) = (args.t_min.ln(), args.t_max.ln());
    for j in 0..args.points {
        let eta_t = (lo + (hi - lo) * j as f64 / (args.points - 1) as f64).exp();
        let steps = eta_t / args.lr;
        let loss = match z {
            Some(z) => rescaled_exact_loss(steps, &params, z)?,
            None => exact_loss(steps, &params)?,
        };
        body.push_str(&format!("{},{}\n", fmt_f64(eta_t), fmt_f64(loss)));
    }
    match &args.out {
        Some(p) => std::fs::write(p, body)?,
        None => out.write_all(body.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_fit(
    traces: &[PathBuf],
    window: Option<(f64, f64)>,
    offset: bool,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut results = Vec::new();
    for path in traces {
        let trace_path = if path.is_dir() {
            path.join("trace.csv")
        } else {
            path.clone()
        };
        let rows = read_trace(&trace_path)?;
        let fit = fit_trace(&as_pairs(&rows), window, offset)?;
        results.push(serde_json::json!({
            "trace": trace_path.display().to_string(),
            "fit": fit,
        }));
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&results)?)?;
    Ok(())
}

pub fn cmd_frontier(
    run_dir: &Path,
    dest: Option<&Path>,
    budgets: usize,
    out: &mut dyn Write,
) -> CliResult<()> {
    let runs = load_runs(run_dir)?;
    let refs: Vec<&artifacts::LoadedRun> = runs.iter().collect();
    let sized = sized_traces(&refs);
    let points = frontier(&sized)?;
    let iso = iso_curves(&sized, &points, budgets);
    let dest = dest.unwrap_or(run_dir);
    std::fs::create_dir_all(dest)?;
    let mut w = csv::Writer::from_path(dest.join("frontier.csv"))?;
    w.write_record(["compute", "loss", "k_star"])?;
    for p in &points {
        w.write_record([fmt_f64(p.compute), fmt_f64(p.loss), p.k_star.to_string()])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dest.join("iso.csv"))?;
    w.write_record(["budget", "k", "loss"])?;
    for c in &iso {
        for (k, l) in &c.curve {
            w.write_record([fmt_f64(c.budget), k.to_string(), fmt_f64(*l)])?;
        }
    }
    w.flush()?;
    let exponent = size_exponent(&points);
    let summary = serde_json::json!({
        "frontier": points,
        "iso": iso,
        "size_exponent": exponent,
        "fit_range": splab_core::scaling::size_fit_range(&points),
    });
    std::fs::write(
        dest.join("frontier.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    writeln!(
        out,
        "{} frontier points; K* exponent {}",
        points.len(),
        exponent.map_or("n/a".into(), |e| format!("{e:.4}"))
    )?;
    Ok(())
}

pub fn cmd_report(
    run_dir: &Path,
    window: Option<(f64, f64)>,
    offset: bool,
    check: bool,
    json: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let runs = load_runs(run_dir)?;
    let (window, offset) = resolve_fit(run_dir, window, offset);
    let report = build_report(&runs, window, offset)?;
    out.write_all(render_report(&report).as_bytes())?;
    if let Some(p) = json {
        std::fs::write(p, serde_json::to_string_pretty(&report)?)?;
    }
    let failures = report.failures();
    writeln!(out, "{failures} check(s) failed")?;
    if check && failures > 0 {
        return Err(CliError::CheckFailed(format!(
            "{failures} acceptance check(s) failed"
        )));
    }
    Ok(())
}

/// Command-line fit settings win; otherwise use those stored with the
/// experiment.
fn resolve_fit(dir: &Path, window: Option<(f64, f64)>, offset: bool) -> (Option<(f64, f64)>, bool) {
    match (window, analysis::stored_fit_settings(dir)) {
        (Some(w), _) => (Some(w), offset),
        (None, Some((stored, stored_offset))) => (stored, offset || stored_offset),
        (None, None) => (None, offset),
    }
}

fn svg_meta(hash: &str) -> Vec<(&'static str, String)> {
    vec![
        ("config_hash", hash.to_string()),
        ("timestamp_unix", unix_now().to_string()),
    ]
}

fn first_hash(runs: &[artifacts::LoadedRun]) -> String {
    runs.first()
        .map_or("n/a".into(), |r| r.manifest.config_hash.clone())
}

pub fn cmd_plot(
    kind: PlotKind,
    inputs: &[PathBuf],
    dest: &Path,
    window: Option<(f64, f64)>,
) -> CliResult<()> {
    let svg = match kind {
        PlotKind::Loss => plot_loss(inputs, window)?,
        PlotKind::Matrix => plot_matrix(&inputs[0])?,
        _ => {
            let runs = load_runs(&inputs[0])?;
            match kind {
                PlotKind::Exponents => {
                    let (window, offset) = resolve_fit(&inputs[0], window, false);
                    plot_exponents(&runs, window, offset)?
                }
                PlotKind::Frontier => plot_frontier(&runs)?,
                PlotKind::Iso => plot_iso(&runs)?,
                PlotKind::Features => plot_features(&runs[0])?,
                PlotKind::Loss | PlotKind::Matrix => unreachable!("handled above"),
            }
        }
    };
    if let Some(parent) = dest.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(dest, svg)?;
    Ok(())
}

fn plot_loss(inputs: &[PathBuf], window: Option<(f64, f64)>) -> CliResult<String> {
    let mut series = Vec::new();
    let mut hash = "n/a".to_string();
    for (i, path) in inputs.iter().enumerate() {
        let (trace_path, label) = if path.is_dir() {
            if let Ok(m) = artifacts::read_manifest(path) {
                hash = m.config_hash.clone();
            }
            (
                path.join("trace.csv"),
                path.file_name().map(|s| s.to_string_lossy().into_owned()),
            )
        } else {
            (
                path.clone(),
                path.parent()
                    .and_then(|p| p.file_name())
                    .map(|s| s.to_string_lossy().into_owned()),
            )
        };
        let pairs: Vec<(f64, f64)> = as_pairs(&read_trace(&trace_path)?)
            .into_iter()
            .filter(|p| p.0 > 0.0)
            .collect();
        let label = label.unwrap_or_else(|| format!("trace {i}"));
        if let Ok(fit) = fit_trace(&pairs, window, false) {
            let (lo, hi) = fit.window;
            let mut overlay = Series::line(
                format!("fit α = {:.3}", fit.alpha),
                vec![
                    (lo, fit.c_t * lo.powf(-fit.alpha)),
                    (hi, fit.c_t * hi.powf(-fit.alpha)),
                ],
                i,
            );
            overlay.dashed = true;
            series.push(Series::line(label, pairs, i));
            series.push(overlay);
        } else {
            series.push(Series::line(label, pairs, i));
        }
    }
    Ok(plot::render(
        &Chart {
            title: "Loss".into(),
            x_label: "eta_t".into(),
            y_label: "loss".into(),
            log_x: true,
            log_y: true,
            series,
        },
        &svg_meta(&hash),
    ))
}

fn plot_exponents(
    runs: &[artifacts::LoadedRun],
    window: Option<(f64, f64)>,
    offset: bool,
) -> CliResult<String> {
    let report = build_report(runs, window, offset)?;
    type Points = Vec<(f64, f64)>;
    let mut by_b: std::collections::BTreeMap<String, (Points, Points)> = Default::default();
    for r in &report.exponents {
        let (Some(a), Some(fit)) = (r.a, r.alpha_fit) else {
            continue;
        };
        let entry = by_b.entry(format!("b = {}", r.b)).or_default();
        entry.0.push((a, fit));
        if let Some(t) = r.alpha_theory.filter(|_| !r.superposition) {
            entry.1.push((a, t));
        }
    }
    let mut series = Vec::new();
    for (i, (label, (fits, mut theory))) in by_b.into_iter().enumerate() {
        let mut s = Series::line(format!("{label} fit"), fits, i);
        s.markers = true;
        series.push(s);
        if !theory.is_empty() {
            theory.sort_by(|x, y| x.0.total_cmp(&y.0));
            theory.dedup();
            let mut t = Series::line(format!("{label} theory"), theory, i);
            t.dashed = true;
            series.push(t);
        }
    }
    Ok(plot::render(
        &Chart {
            title: "Fitted exponents".into(),
            x_label: "a".into(),
            y_label: "alpha".into(),
            log_x: false,
            log_y: false,
            series,
        },
        &svg_meta(&first_hash(runs)),
    ))
}

fn plot_frontier(runs: &[artifacts::LoadedRun]) -> CliResult<String> {
    let refs: Vec<&artifacts::LoadedRun> = runs.iter().collect();
    let sized = sized_traces(&refs);
    let points = frontier(&sized)?;
    let mut series: Vec<Series> = sized
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let k2 = (s.k * s.k) as f64;
            Series::line(
                format!("K = {}", s.k),
                s.trace
                    .iter()
                    .filter(|p| p.0 > 0.0)
                    .map(|&(t, l)| (t * k2, l))
                    .collect(),
                i,
            )
        })
        .collect();
    let mut env = Series::line(
        "frontier",
        points.iter().map(|p| (p.compute, p.loss)).collect(),
        0,
    );
    env.color = "#000".into();
    series.push(env);
    Ok(plot::render(
        &Chart {
            title: "Compute-optimal frontier".into(),
            x_label: "C = eta_t K^2".into(),
            y_label: "loss".into(),
            log_x: true,
            log_y: true,
            series,
        },
        &svg_meta(&first_hash(runs)),
    ))
}

fn plot_iso(runs: &[artifacts::LoadedRun]) -> CliResult<String> {
    let refs: Vec<&artifacts::LoadedRun> = runs.iter().collect();
    let sized = sized_traces(&refs);
    let points = frontier(&sized)?;
    let series = iso_curves(&sized, &points, 8)
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let mut s = Series::line(
                format!("C = {:.1e}", c.budget),
                c.curve.iter().map(|&(k, l)| (k as f64, l)).collect(),
                i,
            );
            s.markers = c.curve.len() < 2;
            s
        })
        .collect();
    Ok(plot::render(
        &Chart {
            title: "Iso-compute curves".into(),
            x_label: "K".into(),
            y_label: "loss".into(),
            log_x: true,
            log_y: true,
            series,
        },
        &svg_meta(&first_hash(runs)),
    ))
}

fn plot_features(run: &artifacts::LoadedRun) -> CliResult<String> {
    let path = run.dir.join("features.csv");
    if !path.exists() {
        return Err(CliError::Artifact(format!(
            "{} has no per-feature traces",
            run.dir.display()
        )));
    }
    let (steps, rows) = read_features(&path)?;
    let n = rows.first().map_or(0, Vec::len);
    let lr = run.manifest.spec.train.lr;
    let mut picks: Vec<usize> = (0..12)
        .map(|j| ((n as f64).powf(j as f64 / 11.0).round() as usize).clamp(1, n.max(1)) - 1)
        .collect();
    picks.dedup();
    let series = picks
        .iter()
        .enumerate()
        .map(|(c, &i)| {
            Series::line(
                format!("feature {}", i + 1),
                steps
                    .iter()
                    .zip(&rows)
                    .filter(|(s, _)| **s > 0)
                    .map(|(&s, r)| (s as f64 * lr, r[i]))
                    .collect(),
                c,
            )
        })
        .collect();
    Ok(plot::render(
        &Chart {
            title: format!("Per-feature loss ({})", run.manifest.spec.run_id),
            x_label: "eta_t".into(),
            y_label: "loss_i".into(),
            log_x: true,
            log_y: true,
            series,
        },
        &svg_meta(&run.manifest.config_hash),
    ))
}

fn plot_matrix(path: &Path) -> CliResult<String> {
    let sidecar = path.with_extension("json");
    let meta: snapshot::SnapshotMeta = serde_json::from_str(
        &std::fs::read_to_string(&sidecar)
            .map_err(|e| CliError::Artifact(format!("{}: {e}", sidecar.display())))?,
    )
    .map_err(|e| CliError::Artifact(format!("{}: {e}", sidecar.display())))?;
    let m = snapshot::decode(&std::fs::read(path)?, meta.rows, meta.cols)?;
    let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
    Ok(plot::heatmap(
        &format!("B at eta_t = {} ({})", meta.eta_t, meta.run_id),
        &plot::downsample(&rows, 128),
        &[
            ("run_id", meta.run_id.clone()),
            ("timestamp_unix", unix_now().to_string()),
        ],
    ))
}
