//! Commands behind the `sthawkes` binary: configuration loading, run
//! directories and model files.
//!
//! Every command reads one TOML document (optional when all required keys
//! are given as flags) and accepts `--key value` overrides, where nested keys
//! are dotted (`--fit.learning_rate 0.1`). Outputs go to a fresh directory
//! under `$STHAWKES_RUNS` (default `runs`).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{fit_poisson, fit_spatial_poisson};
use crate::error::{Error, Result};
use crate::evaluation::{
    evaluate, excitation_report, grid_to_csv, intensity_grid, poisson_grid, EvalResult,
    FittedModel, SplitTag,
};
use crate::events::{
    normalize_space, parse_events, rescale_time, split_chronological, to_csv, EventSequence, Rect,
    ScalingInfo, Split, SplitSpec,
};
use crate::gradients::{check_gradients, GradCheckConfig};
use crate::intensity::{aic, count_parameters, HawkesParams, ModelKind};
use crate::optimizer::{fit, FitConfig, FitReport};
use crate::rff::CovarianceParams;
use crate::simulator::{simulate, BaseAnchor, SimConfig, TypeSampling};

pub const SCHEMA_VERSION: u32 = 1;
pub const RUNS_ENV: &str = "STHAWKES_RUNS";

// ---------------------------------------------------------------------------
// configuration documents

/// Parses a TOML document (or an empty one) and applies `--key value` overrides.
pub fn load_config<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String]) -> Result<T> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    let mut it = overrides.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected `--key value`, found `{flag}`")))?;
        let raw = it
            .next()
            .ok_or_else(|| Error::Config(format!("flag `{flag}` has no value")))?;
        set_dotted(&mut table, &key.replace('-', "_"), parse_value(raw))?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

/// TOML literal if it parses as one, otherwise a plain string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| Error::Config(format!("bad flag `--{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `--{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn default_domain() -> Rect {
    Rect::symmetric(1.0)
}

/// Model parameters as written in configuration files: excitation and decay
/// matrices (row = source type) and the two spatial covariance matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSpec {
    pub k_mu: Vec<Vec<f64>>,
    pub k_gamma: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    pub sigma_mu: [[f64; 2]; 2],
    pub sigma_gamma: [[f64; 2]; 2],
}

fn square(name: &str, rows: &[Vec<f64>]) -> Result<ndarray::Array2<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Config(format!(
            "`{name}` must be a non-empty square matrix"
        )));
    }
    Ok(ndarray::Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]))
}

impl ParamsSpec {
    pub fn to_params(&self) -> Result<HawkesParams> {
        let cfg = |e: Error| Error::Config(e.to_string());
        HawkesParams::new(
            square("k_mu", &self.k_mu)?,
            square("k_gamma", &self.k_gamma)?,
            square("w", &self.w)?,
            CovarianceParams::from_covariance(&self.sigma_mu).map_err(cfg)?,
            CovarianceParams::from_covariance(&self.sigma_gamma).map_err(cfg)?,
        )
        .map_err(cfg)
    }
}

/// A background source for simulation; `type_id` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub type_id: usize,
    pub location: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub params: ParamsSpec,
    pub duration: f64,
    #[serde(default = "default_domain")]
    pub domain: Rect,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_resolution")]
    pub grid_resolution: usize,
    #[serde(default = "default_cutoff")]
    pub history_cutoff: f64,
    #[serde(default)]
    pub type_sampling: TypeSampling,
    #[serde(default)]
    pub anchors: Vec<AnchorSpec>,
    #[serde(default)]
    pub max_events: Option<usize>,
}

fn default_resolution() -> usize {
    50
}

fn default_cutoff() -> f64 {
    100.0
}

impl SimulateConfig {
    pub fn to_sim_config(&self) -> Result<SimConfig> {
        let params = self.params.to_params()?;
        let u_n = params.num_types();
        let mut anchors = Vec::with_capacity(self.anchors.len());
        for a in &self.anchors {
            if a.type_id < 1 || a.type_id > u_n {
                return Err(Error::Config(format!(
                    "anchor type {} outside 1..={u_n}",
                    a.type_id
                )));
            }
            anchors.push(BaseAnchor {
                kind: a.type_id - 1,
                location: a.location,
            });
        }
        let config = SimConfig {
            params,
            duration: self.duration,
            domain: self.domain,
            grid_resolution: self.grid_resolution,
            history_cutoff: self.history_cutoff,
            seed: self.seed,
            type_sampling: self.type_sampling,
            base_anchors: anchors,
            max_events: self.max_events,
        };
        config
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitCommandConfig {
    pub events: PathBuf,
    pub num_types: usize,
    #[serde(default = "default_domain")]
    pub domain: Rect,
    /// Observation end in raw time units; defaults to the last event.
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub normalize_space: bool,
    #[serde(default)]
    pub split: SplitSpec,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub type_names: Vec<String>,
}

fn default_model() -> ModelKind {
    ModelKind::Hawkes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: PathBuf,
    pub events: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportConfig {
    pub model: PathBuf,
    /// Needed for intensity grids of models with a base or triggering term.
    #[serde(default)]
    pub events: Option<PathBuf>,
    /// Grid times in raw time units.
    #[serde(default)]
    pub grid_times: Vec<f64>,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

// ---------------------------------------------------------------------------
// model files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: FitCommandConfig,
    /// Git-style blob hash (`sha256("blob <len>\0" + bytes)`) of the events file.
    pub data_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model_kind: ModelKind,
    pub num_types: usize,
    pub rff_dim: Option<usize>,
    pub type_names: Vec<String>,
    pub scaling: ScalingInfo,
    /// Spatial domain of the raw data.
    pub domain: Rect,
    pub split: SplitSpec,
    pub model: FittedModel,
    pub provenance: Provenance,
}

impl ModelFile {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Serde(format!(
                    "model file schema version {v} is not supported (expected {SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::Serde("model file has no schema_version".into())),
        }
        serde_json::from_value(value).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn type_labels(&self) -> Vec<String> {
        type_labels(&self.type_names, self.num_types)
    }
}

fn type_labels(names: &[String], num_types: usize) -> Vec<String> {
    if names.len() == num_types {
        names.to_vec()
    } else {
        (1..=num_types).map(|u| format!("type {u}")).collect()
    }
}

/// Git-style content hash of a byte string (blob header + SHA-256).
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// run directories

/// Creates `<root>/<command>-<unix seconds>-<hash8>`, never reusing a name.
pub fn create_run_dir(root: &Path, command: &str, echo: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let hash = content_hash(echo.as_bytes());
    let stem = format!("{command}-{secs}-{}", &hash[..8]);
    for k in 0.. {
        let name = if k == 0 {
            stem.clone()
        } else {
            format!("{stem}-{k}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("unbounded search for a free run directory name")
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))
}

fn toml_echo<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::Serde(e.to_string()))
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

// ---------------------------------------------------------------------------
// commands

#[derive(Debug, Serialize)]
struct SimMetadata<'a> {
    config: &'a SimulateConfig,
    seed: u64,
    type_sampling: TypeSampling,
    events: usize,
    candidates: usize,
    acceptance_rate: f64,
    max_bound_ratio: f64,
    truncated: bool,
    end_time: f64,
}

pub fn cmd_simulate(
    config: &SimulateConfig,
    runs_root: &Path,
    out: &mut dyn Write,
) -> Result<PathBuf> {
    let sim = config.to_sim_config()?;
    let output = simulate(&sim)?;
    if output.sequence.is_empty() {
        warn!("no events were generated (duration {})", config.duration);
    }
    let echo = toml_echo(config)?;
    let dir = create_run_dir(runs_root, "simulate", &echo)?;
    write(&dir, "config.toml", &echo)?;
    write(&dir, "events.csv", to_csv(&output.sequence))?;
    let meta = SimMetadata {
        config,
        seed: config.seed,
        type_sampling: config.type_sampling,
        events: output.sequence.len(),
        candidates: output.candidates,
        acceptance_rate: output.acceptance_rate(),
        max_bound_ratio: output.max_bound_ratio,
        truncated: output.truncated,
        end_time: output.sequence.end(),
    };
    write(&dir, "metadata.json", json(&meta)?)?;
    writeln!(
        out,
        "simulated {} events (acceptance rate {:.4}) -> {}",
        output.sequence.len(),
        output.acceptance_rate(),
        dir.display()
    )
    .map_err(out_err)?;
    Ok(dir)
}

/// Machine-readable summary of a fit run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSummary {
    pub model_kind: ModelKind,
    pub p: usize,
    pub train_total_nll: f64,
    pub aic_train: f64,
    pub training: Option<FitReport>,
    pub evaluations: Vec<EvalResult>,
}

fn epochs_csv(report: &FitReport) -> String {
    let mut s = String::from("epoch,train_nll_per_event,val_nll_per_event\n");
    for (i, (t, v)) in report
        .train_nll_per_event
        .iter()
        .zip(&report.val_nll_per_event)
        .enumerate()
    {
        s.push_str(&format!("{},{t:?},{v:?}\n", i + 1));
    }
    s
}

struct Prepared {
    split: Split,
    scaling: ScalingInfo,
}

fn read_events(
    path: &Path,
    num_types: usize,
    domain: Rect,
    duration: Option<f64>,
) -> Result<(EventSequence, String)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| Error::Parse {
        row: 0,
        msg: format!("{} is not UTF-8", path.display()),
    })?;
    Ok((
        parse_events(&text, num_types, domain, duration)?,
        content_hash(&bytes),
    ))
}

fn prepare(raw: &EventSequence, normalize: bool, split: &SplitSpec) -> Result<Prepared> {
    let (scaled, mut scaling) = rescale_time(raw)?;
    let seq = if normalize {
        let (s, norm) = normalize_space(&scaled)?;
        scaling.spatial = Some(norm);
        s
    } else {
        scaled
    };
    Ok(Prepared {
        split: split_chronological(&seq, split)?,
        scaling,
    })
}

fn evaluate_all(split: &Split, model: &FittedModel) -> Result<Vec<EvalResult>> {
    let mut out = Vec::new();
    for (tag, part) in [
        (SplitTag::Fit, &split.fit),
        (SplitTag::Val, &split.val),
        (SplitTag::Test, &split.test),
    ] {
        if part.is_empty() {
            warn!("skipping the empty {} split", tag.as_str());
            continue;
        }
        out.push(evaluate(split, model, tag)?);
    }
    Ok(out)
}

pub fn cmd_fit(
    config: &FitCommandConfig,
    runs_root: &Path,
    out: &mut dyn Write,
) -> Result<PathBuf> {
    config.fit.validate()?;
    if config.num_types == 0 {
        return Err(Error::Config("num_types must be at least 1".into()));
    }
    if !config.type_names.is_empty() && config.type_names.len() != config.num_types {
        return Err(Error::Config(format!(
            "{} type names for {} types",
            config.type_names.len(),
            config.num_types
        )));
    }
    let (raw, data_hash) = read_events(
        &config.events,
        config.num_types,
        config.domain,
        config.duration,
    )?;
    let prep = prepare(&raw, config.normalize_space, &config.split)?;
    let split = &prep.split;
    info!(
        "{} events: fit {}, val {}, test {}",
        raw.len(),
        split.fit.len(),
        split.val.len(),
        split.test.len()
    );
    let echo = toml_echo(config)?;
    let dir = create_run_dir(runs_root, "fit", &echo)?;
    write(&dir, "config.toml", &echo)?;

    let u_n = config.num_types;
    let (model, training) = match config.model {
        ModelKind::Poisson => (
            FittedModel::Poisson {
                params: fit_poisson(&split.fit)?,
            },
            None,
        ),
        kind => {
            let result = match kind {
                ModelKind::Hawkes => fit(&split.fit, &split.val, &config.fit),
                _ => fit_spatial_poisson(&split.fit, &split.val, &config.fit),
            };
            let report = match result {
                Ok(r) => r,
                Err(Error::Training { epoch, msg, report }) => {
                    write(&dir, "report.json", json(&*report)?)?;
                    write(&dir, "epochs.csv", epochs_csv(&report))?;
                    return Err(Error::Training { epoch, msg, report });
                }
                Err(e) => return Err(e),
            };
            let params = report.best_params.clone();
            let bases = report.bases.clone();
            let model = if kind == ModelKind::Hawkes {
                FittedModel::Hawkes { params, bases }
            } else {
                FittedModel::SpatialPoisson { params, bases }
            };
            write(&dir, "epochs.csv", epochs_csv(&report))?;
            (model, Some(report))
        }
    };
    let evaluations = evaluate_all(split, &model)?;
    let p = count_parameters(config.model, u_n);
    let train_total_nll = evaluations
        .iter()
        .find(|e| e.split == SplitTag::Fit)
        .map_or(f64::NAN, |e| e.total_nll);
    let file = ModelFile {
        schema_version: SCHEMA_VERSION,
        model_kind: config.model,
        num_types: u_n,
        rff_dim: (config.model != ModelKind::Poisson).then_some(config.fit.rff_dim),
        type_names: config.type_names.clone(),
        scaling: prep.scaling,
        domain: config.domain,
        split: config.split,
        model,
        provenance: Provenance {
            config: config.clone(),
            data_hash,
            seed: config.fit.seed,
        },
    };
    file.save(&dir.join("model.json"))?;
    let summary = FitSummary {
        model_kind: config.model,
        p,
        train_total_nll,
        aic_train: aic(train_total_nll, p),
        training,
        evaluations,
    };
    write(&dir, "report.json", json(&summary)?)?;
    write(&dir, "eval.json", json(&summary.evaluations)?)?;
    if let Some(r) = &summary.training {
        writeln!(
            out,
            "trained {} epochs, best epoch {}",
            r.epochs_run, r.best_epoch
        )
        .map_err(out_err)?;
    }
    for e in &summary.evaluations {
        writeln!(out, "{e}").map_err(out_err)?;
    }
    writeln!(out, "-> {}", dir.display()).map_err(out_err)?;
    Ok(dir)
}

/// Re-evaluates a saved model on the events it was fitted to (or new events
/// of the same shape), applying the recorded preprocessing and split.
pub fn evaluate_model_file(model: &ModelFile, events: &Path) -> Result<Vec<EvalResult>> {
    let cfg = &model.provenance.config;
    let (raw, _) = read_events(events, model.num_types, model.domain, cfg.duration)?;
    let seq = model.scaling.apply(&raw)?;
    let split = split_chronological(&seq, &model.split)?;
    evaluate_all(&split, &model.model)
}

pub fn cmd_evaluate(
    config: &EvaluateConfig,
    runs_root: &Path,
    out: &mut dyn Write,
) -> Result<PathBuf> {
    let model = ModelFile::load(&config.model)?;
    let results = evaluate_model_file(&model, &config.events)?;
    let echo = toml_echo(config)?;
    let dir = create_run_dir(runs_root, "evaluate", &echo)?;
    write(&dir, "config.toml", &echo)?;
    write(&dir, "eval.json", json(&results)?)?;
    for e in &results {
        writeln!(out, "{e}").map_err(out_err)?;
    }
    writeln!(out, "-> {}", dir.display()).map_err(out_err)?;
    Ok(dir)
}

pub fn cmd_report(config: &ReportConfig, runs_root: &Path, out: &mut dyn Write) -> Result<PathBuf> {
    let model = ModelFile::load(&config.model)?;
    if config.resolution < 2 {
        return Err(Error::Config(format!(
            "resolution must be at least 2, got {}",
            config.resolution
        )));
    }
    let echo = toml_echo(config)?;
    let dir = create_run_dir(runs_root, "report", &echo)?;
    write(&dir, "config.toml", &echo)?;
    let labels = model.type_labels();
    match &model.model {
        FittedModel::Poisson { params } => {
            write(&dir, "rates.json", json(params)?)?;
            for (l, m) in labels.iter().zip(&params.mu) {
                writeln!(out, "{l}: rate {m:.6e} per unit time and area").map_err(out_err)?;
            }
        }
        FittedModel::Hawkes { params, .. } | FittedModel::SpatialPoisson { params, .. } => {
            let report = excitation_report(params, &labels)?;
            write(&dir, "excitation.json", json(&report)?)?;
            write(&dir, "excitation.txt", report.to_string())?;
            write!(out, "{report}").map_err(out_err)?;
        }
    }
    if !config.grid_times.is_empty() {
        let seq = match (&model.model, &config.events) {
            (FittedModel::Poisson { .. }, _) => None,
            (_, Some(path)) => {
                let cfg = &model.provenance.config;
                let (raw, _) = read_events(path, model.num_types, model.domain, cfg.duration)?;
                Some(model.scaling.apply(&raw)?)
            }
            (_, None) => return Err(Error::Config("intensity grids need `events`".into())),
        };
        for (k, &t_raw) in config.grid_times.iter().enumerate() {
            let t = t_raw * model.scaling.time_scale;
            let grid = match (&model.model, &seq) {
                (FittedModel::Poisson { params }, _) => {
                    warn!("homogeneous Poisson model: the intensity grid is flat, spatial structure is absent");
                    poisson_grid(params, config.resolution)
                }
                (
                    FittedModel::Hawkes { params, .. } | FittedModel::SpatialPoisson { params, .. },
                    Some(seq),
                ) => {
                    if !(t >= seq.start() && t <= seq.end()) {
                        return Err(Error::Config(format!(
                            "grid time {t_raw} outside the observation window"
                        )));
                    }
                    intensity_grid(params, seq, t, config.resolution)?
                }
                _ => unreachable!("events are loaded for intensity models"),
            };
            let path = write(&dir, &format!("grid-{k}.csv"), grid_to_csv(&grid))?;
            writeln!(out, "grid at t={t_raw} -> {}", path.display()).map_err(out_err)?;
        }
    }
    writeln!(out, "-> {}", dir.display()).map_err(out_err)?;
    Ok(dir)
}

pub fn cmd_gradcheck(
    config: &GradCheckConfig,
    runs_root: &Path,
    out: &mut dyn Write,
) -> Result<PathBuf> {
    let report = check_gradients(config)?;
    let echo = toml_echo(config)?;
    let dir = create_run_dir(runs_root, "gradcheck", &echo)?;
    write(&dir, "config.toml", &echo)?;
    write(&dir, "gradcheck.json", json(&report)?)?;
    for b in &report.blocks {
        writeln!(
            out,
            "{:<8} max relative error {:.3e}  worst {} (seed {})",
            b.block, b.max_relative_error, b.worst_coordinate, b.worst_seed
        )
        .map_err(out_err)?;
    }
    if !report.passed() {
        let w = report.worst();
        return Err(Error::Numerical(format!(
            "gradient check failed: {} has relative error {:.3e} > {:.0e} (seed {})",
            w.worst_coordinate, w.max_relative_error, report.tolerance, w.worst_seed
        )));
    }
    writeln!(
        out,
        "all blocks within {:.0e} -> {}",
        report.tolerance,
        dir.display()
    )
    .map_err(out_err)?;
    Ok(dir)
}

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Debug, Parser)]
#[command(
    name = "sthawkes",
    version,
    about = "Spatio-temporal Hawkes processes: simulate, fit, evaluate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ConfigArgs {
    /// Optional TOML config file, then `--key value` overrides (dotted keys for nested tables).
    #[arg(allow_hyphen_values = true, trailing_var_arg = true, num_args = 0..)]
    rest: Vec<String>,
}

impl ConfigArgs {
    fn load<T: DeserializeOwned>(&self) -> Result<T> {
        match self.rest.first() {
            Some(first) if !first.starts_with("--") => {
                load_config(Some(Path::new(first)), &self.rest[1..])
            }
            _ => load_config(None, &self.rest),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an event sequence by thinning.
    Simulate(ConfigArgs),
    /// Rescale, split and fit a model to an events CSV.
    Fit(ConfigArgs),
    /// Re-evaluate a saved model on an events CSV.
    Evaluate(ConfigArgs),
    /// Excitation matrices and intensity grids of a saved model.
    Report(ConfigArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(ConfigArgs),
}

/// Runs the command line and returns the process exit code.
pub fn run<I, S>(args: I, runs_root: &Path, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => a.load().and_then(|c| cmd_simulate(&c, runs_root, out)),
        Command::Fit(a) => a.load().and_then(|c| cmd_fit(&c, runs_root, out)),
        Command::Evaluate(a) => a.load().and_then(|c| cmd_evaluate(&c, runs_root, out)),
        Command::Report(a) => a.load().and_then(|c| cmd_report(&c, runs_root, out)),
        Command::Gradcheck(a) => a.load().and_then(|c| cmd_gradcheck(&c, runs_root, out)),
    };
    match result {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Run-directory root from the environment.
pub fn runs_root() -> PathBuf {
    std::env::var_os(RUNS_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}
