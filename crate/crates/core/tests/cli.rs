use std::fs;
use std::path::{Path, PathBuf};

use sthawkes::cli::{cmd_fit, load_config, run, FitCommandConfig, FitSummary, ModelFile};
use sthawkes::evaluation::{EvalResult, FittedModel};
use sthawkes::ModelKind;
use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Runs the command line and returns the exit code, stdout and the run
/// directory printed after `-> `.
fn sthawkes(root: &Path, args: &[&str]) -> (i32, String, Option<PathBuf>) {
    let mut out = Vec::new();
    let mut argv = vec!["sthawkes"];
    argv.extend_from_slice(args);
    let code = run(argv, root, &mut out);
    let text = String::from_utf8(out).unwrap();
    let dir = text
        .lines()
        .filter_map(|l| l.rsplit_once("-> ").map(|(_, d)| PathBuf::from(d.trim())))
        .next_back();
    (code, text, dir)
}

fn simulated_events(root: &Path, duration: &str) -> PathBuf {
    let sim1 = configs().join("sim1.toml");
    let (code, _, dir) = sthawkes(
        root,
        &["simulate", sim1.to_str().unwrap(), "--duration", duration],
    );
    assert_eq!(code, 0);
    dir.unwrap().join("events.csv")
}

fn fit_args<'a>(events: &'a str, model: &'a str) -> Vec<&'a str> {
    vec![
        "fit",
        "--events",
        events,
        "--num-types",
        "1",
        "--model",
        model,
        "--fit.batch_size",
        "32",
        "--fit.rff_dim",
        "20",
        "--fit.max_epoch",
        "4",
        "--fit.learning_rate",
        "0.01",
        "--fit.softplus_scale",
        "0.1",
    ]
}

#[test]
fn simulation_is_deterministic() {
    let root = TempDir::new().unwrap();
    let a = simulated_events(root.path(), "100000.0");
    let b = simulated_events(root.path(), "100000.0");
    assert_ne!(a, b, "each run gets its own directory");
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    assert!(text.starts_with(b"u,t,x,y\n"));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.with_file_name("metadata.json")).unwrap())
            .unwrap();
    assert_eq!(meta["type_sampling"], "verbatim");
    assert!(meta["acceptance_rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_duration_gives_an_empty_file() {
    let root = TempDir::new().unwrap();
    let events = simulated_events(root.path(), "0.0");
    assert_eq!(fs::read_to_string(events).unwrap(), "u,t,x,y\n");
}

#[test]
fn invalid_configs_exit_with_one() {
    let root = TempDir::new().unwrap();
    let sim1 = configs().join("sim1.toml");
    let sim1 = sim1.to_str().unwrap();
    assert_eq!(
        sthawkes(root.path(), &["simulate", sim1, "--bogus", "1"]).0,
        1
    );
    assert_eq!(
        sthawkes(root.path(), &["simulate", sim1, "--grid-resolution", "1"]).0,
        1
    );
    assert_eq!(sthawkes(root.path(), &["frobnicate"]).0, 1);
    assert_eq!(sthawkes(root.path(), &["--help"]).0, 0);
}

#[test]
fn missing_events_file_is_named() {
    let root = TempDir::new().unwrap();
    let config: FitCommandConfig = load_config(
        None,
        &[
            "--events".into(),
            "/nowhere/events.csv".into(),
            "--num_types".into(),
            "1".into(),
        ],
    )
    .unwrap();
    let err = cmd_fit(&config, root.path(), &mut Vec::new()).unwrap_err();
    assert!(err.to_string().contains("/nowhere/events.csv"), "{err}");
    assert_eq!(err.exit_code(), 2);
    let (code, _, _) = sthawkes(
        root.path(),
        &["fit", "--events", "/nowhere/events.csv", "--num-types", "1"],
    );
    assert_eq!(code, 2);
}

#[test]
fn poisson_fit_has_one_parameter_per_type_and_no_basis() {
    let root = TempDir::new().unwrap();
    let events = simulated_events(root.path(), "1000000.0");
    let (code, _, dir) = sthawkes(root.path(), &fit_args(events.to_str().unwrap(), "poisson"));
    assert_eq!(code, 0);
    let dir = dir.unwrap();
    let model = ModelFile::load(&dir.join("model.json")).unwrap();
    assert!(matches!(model.model, FittedModel::Poisson { .. }));
    assert_eq!(model.rff_dim, None);
    let summary: FitSummary =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(summary.model_kind, ModelKind::Poisson);
    assert_eq!(summary.p, 1);
}

#[test]
fn fit_evaluate_and_report_agree() {
    let root = TempDir::new().unwrap();
    let events = simulated_events(root.path(), "1000000.0");
    let ev = events.to_str().unwrap();
    let (code, text, dir) = sthawkes(root.path(), &fit_args(ev, "hawkes"));
    assert_eq!(code, 0, "{text}");
    let dir = dir.unwrap();
    let model_path = dir.join("model.json");
    let recorded: Vec<EvalResult> =
        serde_json::from_str(&fs::read_to_string(dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(recorded.len(), 3);
    let epochs = fs::read_to_string(dir.join("epochs.csv")).unwrap();
    assert!(epochs.starts_with("epoch,train_nll_per_event,val_nll_per_event\n"));

    // re-evaluation through the saved file reproduces the numbers exactly
    let (code, _, eval_dir) = sthawkes(
        root.path(),
        &[
            "evaluate",
            "--model",
            model_path.to_str().unwrap(),
            "--events",
            ev,
        ],
    );
    assert_eq!(code, 0);
    let again: Vec<EvalResult> =
        serde_json::from_str(&fs::read_to_string(eval_dir.unwrap().join("eval.json")).unwrap())
            .unwrap();
    assert_eq!(recorded, again);

    // save -> load -> save is byte-identical
    let text = fs::read_to_string(&model_path).unwrap();
    assert_eq!(
        ModelFile::from_json(&text).unwrap().to_json().unwrap(),
        text
    );

    let end: f64 = fs::read_to_string(&events)
        .unwrap()
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let times = format!("[{}]", end * 0.5);
    let (code, text, report_dir) = sthawkes(
        root.path(),
        &[
            "report",
            "--model",
            model_path.to_str().unwrap(),
            "--events",
            ev,
            "--grid-times",
            &times,
            "--resolution",
            "50",
        ],
    );
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("triggering excitation"));
    let grid = fs::read_to_string(report_dir.unwrap().join("grid-0.csv")).unwrap();
    assert_eq!(grid.lines().count(), 50);
    assert!(grid.lines().all(|l| l.split(',').count() == 50));
}

#[test]
fn poisson_grid_is_flat() {
    let root = TempDir::new().unwrap();
    let events = simulated_events(root.path(), "1000000.0");
    let (_, _, dir) = sthawkes(root.path(), &fit_args(events.to_str().unwrap(), "poisson"));
    let model = dir.unwrap().join("model.json");
    let (code, _, report) = sthawkes(
        root.path(),
        &[
            "report",
            "--model",
            model.to_str().unwrap(),
            "--grid-times",
            "[1.0]",
            "--resolution",
            "10",
        ],
    );
    assert_eq!(code, 0);
    let grid = fs::read_to_string(report.unwrap().join("grid-0.csv")).unwrap();
    let values: Vec<&str> = grid.lines().flat_map(|l| l.split(',')).collect();
    assert_eq!(values.len(), 100);
    assert!(values.iter().all(|v| *v == values[0]));
}

#[test]
fn schema_version_gates_loading() {
    let root = TempDir::new().unwrap();
    let events = simulated_events(root.path(), "1000000.0");
    let (_, _, dir) = sthawkes(root.path(), &fit_args(events.to_str().unwrap(), "poisson"));
    let path = dir.unwrap().join("model.json");
    let text = fs::read_to_string(&path)
        .unwrap()
        .replace("\"schema_version\": 1", "\"schema_version\": 99");
    let bad = root.path().join("future.json");
    fs::write(&bad, text).unwrap();
    let (code, _, _) = sthawkes(root.path(), &["report", "--model", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
}

#[test]
fn gradcheck_passes_and_detects_a_broken_block() {
    let root = TempDir::new().unwrap();
    let cfg = configs().join("gradcheck.toml");
    let (code, text, _) = sthawkes(root.path(), &["gradcheck", cfg.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert_eq!(
        text.lines()
            .filter(|l| l.contains("max relative error"))
            .count(),
        7
    );
    let (code, _, _) = sthawkes(root.path(), &["gradcheck", "--perturb-block", "l_gamma"]);
    assert_eq!(code, 3);
}
