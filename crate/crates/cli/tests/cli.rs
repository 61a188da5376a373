use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use splab_cli::artifacts::{as_pairs, load_runs, read_manifest, read_trace, RunStatus};
use splab_cli::config::ExperimentConfig;

fn splab(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splab"))
        .args(args)
        .env("SPLAB_OUTPUT_ROOT", root)
        .output()
        .expect("spawn splab")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"
name = "small"
base_seed = 7

[distribution]
kind = "power_law"
a = 1.1

[model]
n = 24
k = [4, 8]
superposition = true

[train]
lr = 0.5
steps = 3000
batch_size = 16
eval_batch_size = 512
n_log_points = 40
snapshot_eta_t = [100.0]
record_features = true

[analysis]
fit_window = [20.0, 1000.0]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn experiment_dir(root: &Path, text: &str) -> PathBuf {
    root.join(ExperimentConfig::from_toml(text).unwrap().short_hash())
}

#[test]
fn simulate_is_idempotent_and_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let root = tmp.path().join("out");
    let first = splab(
        &["simulate", cfg.to_str().unwrap(), "--workers", "2"],
        &root,
    );
    assert!(first.status.success(), "{}", stderr(&first));
    assert_eq!(
        stdout(&first).matches("\tok").count(),
        2,
        "{}",
        stdout(&first)
    );

    let exp = experiment_dir(&root, SMALL);
    assert!(exp.join("config.json").exists());
    let run = exp.join("pow-a1.1_b0_k8_r0");
    for f in [
        "trace.csv",
        "features.csv",
        "manifest.json",
        "snapshots/B_step200.bin",
    ] {
        assert!(run.join(f).exists(), "missing {f}");
    }
    let manifest = read_manifest(&run).unwrap();
    assert_eq!(manifest.status, RunStatus::Ok);
    let before = std::fs::read(run.join("trace.csv")).unwrap();

    let second = splab(&["simulate", cfg.to_str().unwrap()], &root);
    assert!(second.status.success());
    assert_eq!(
        stdout(&second).matches("\tskipped").count(),
        2,
        "{}",
        stdout(&second)
    );
    assert_eq!(before, std::fs::read(run.join("trace.csv")).unwrap());
}

#[test]
fn same_config_gives_bit_identical_traces() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let (r1, r2) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(
        splab(&["simulate", cfg.to_str().unwrap(), "--workers", "1"], &r1)
            .status
            .success()
    );
    assert!(
        splab(&["simulate", cfg.to_str().unwrap(), "--workers", "2"], &r2)
            .status
            .success()
    );
    let rel = Path::new(&ExperimentConfig::from_toml(SMALL).unwrap().short_hash())
        .join("pow-a1.1_b0_k4_r0/trace.csv");
    assert_eq!(
        std::fs::read(r1.join(&rel)).unwrap(),
        std::fs::read(r2.join(&rel)).unwrap()
    );
}

#[test]
fn zero_steps_records_only_the_initial_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let text = SMALL
        .replace("steps = 3000", "steps = 0")
        .replace("snapshot_eta_t = [100.0]", "snapshot_eta_t = []");
    let cfg = write_config(tmp.path(), "zero.toml", &text);
    let root = tmp.path().join("out");
    let o = splab(&["simulate", cfg.to_str().unwrap()], &root);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows =
        read_trace(&experiment_dir(&root, &text).join("pow-a1.1_b0_k4_r0/trace.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].step, 0);
    assert!(rows[0].loss > 0.0);
}

#[test]
fn invalid_config_exits_with_usage_status() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_config(
        tmp.path(),
        "bad.toml",
        &SMALL.replace("k = [4, 8]", "k = [0]"),
    );
    let o = splab(&["simulate", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let unknown = write_config(
        tmp.path(),
        "unknown.toml",
        &format!("{SMALL}\n[extra]\nx = 1\n"),
    );
    assert_eq!(
        splab(&["simulate", unknown.to_str().unwrap()], tmp.path())
            .status
            .code(),
        Some(1)
    );

    assert_eq!(
        splab(&["no-such-command"], tmp.path()).status.code(),
        Some(1)
    );
    assert_eq!(splab(&["--help"], tmp.path()).status.code(), Some(0));
}

#[test]
fn report_on_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = splab(&["report", tmp.path().to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no runs found"), "{}", stderr(&o));
}

#[test]
fn theory_prints_predicted_exponent_and_decreasing_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let o = splab(
        &[
            "theory", "--a", "1.1", "--b", "0", "--n", "1024", "--points", "50",
        ],
        tmp.path(),
    );
    assert!(o.status.success());
    let text = stdout(&o);
    let header = text
        .lines()
        .find(|l| l.contains("predicted_alpha"))
        .unwrap();
    let alpha: f64 = header
        .split('=')
        .nth(1)
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!((alpha - 0.0909).abs() < 1e-4);
    let losses: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("eta_t"))
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(losses.len(), 50);
    assert!(losses.windows(2).all(|w| w[1] < w[0]));

    let flat = splab(&["theory", "--a", "0.5", "--b", "0"], tmp.path());
    assert!(stdout(&flat).contains("n/a (a+2b ≤ 1)"));
}

#[test]
fn report_fit_and_frontier_agree_on_stored_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let root = tmp.path().join("out");
    assert!(splab(&["simulate", cfg.to_str().unwrap()], &root)
        .status
        .success());
    let exp = experiment_dir(&root, SMALL);

    let runs = load_runs(&exp).unwrap();
    assert_eq!(runs.len(), 2);
    let run = exp.join("pow-a1.1_b0_k8_r0");
    let fit = splab(
        &["fit", run.to_str().unwrap(), "--window", "20", "1000"],
        &root,
    );
    assert!(fit.status.success(), "{}", stderr(&fit));
    let parsed: serde_json::Value = serde_json::from_str(&stdout(&fit)).unwrap();
    let alpha = parsed[0]["fit"]["alpha"].as_f64().unwrap();
    let direct = splab_core::scaling::fit_power_law(
        &as_pairs(&read_trace(&run.join("trace.csv")).unwrap()),
        (20.0, 1000.0),
        false,
    )
    .unwrap();
    assert_eq!(alpha, direct.alpha);

    let json = tmp.path().join("report.json");
    let rep = splab(
        &[
            "report",
            exp.to_str().unwrap(),
            "--json",
            json.to_str().unwrap(),
        ],
        &root,
    );
    assert!(rep.status.success(), "{}", stderr(&rep));
    assert!(stdout(&rep).contains("pow-a1.1_b0_k8_r0"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let row = report["exponents"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["run_id"] == "pow-a1.1_b0_k8_r0")
        .unwrap();
    assert_eq!(row["alpha_fit"].as_f64().unwrap(), alpha);

    let check = splab(&["report", exp.to_str().unwrap(), "--check"], &root);
    assert!(matches!(check.status.code(), Some(0) | Some(3)));

    let fr = splab(&["frontier", exp.to_str().unwrap()], &root);
    assert!(fr.status.success(), "{}", stderr(&fr));
    for f in ["frontier.csv", "iso.csv", "frontier.json"] {
        assert!(exp.join(f).exists(), "missing {f}");
    }
}

#[test]
fn plots_render_svg_with_metadata() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL);
    let root = tmp.path().join("out");
    assert!(splab(&["simulate", cfg.to_str().unwrap()], &root)
        .status
        .success());
    let exp = experiment_dir(&root, SMALL);
    let run = exp.join("pow-a1.1_b0_k8_r0");
    let snap = run.join("snapshots/B_step200.bin");
    let cases: [(&str, &Path); 6] = [
        ("loss", &run),
        ("exponents", &exp),
        ("frontier", &exp),
        ("iso", &exp),
        ("features", &exp),
        ("matrix", &snap),
    ];
    for (kind, input) in cases {
        let out = tmp.path().join(format!("{kind}.svg"));
        let o = splab(
            &[
                "plot",
                kind,
                input.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ],
            &root,
        );
        assert!(o.status.success(), "{kind}: {}", stderr(&o));
        let svg = std::fs::read_to_string(&out).unwrap();
        assert!(
            svg.starts_with("<svg") || svg.starts_with("<?xml"),
            "{kind}"
        );
        assert!(svg.contains("<metadata>"), "{kind}");
    }
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert!(!cfg.runs().is_empty());
            seen += 1;
        }
    }
    assert!(seen >= 3);
}
