//! Held-out metrics, excitation reports and intensity grids.

use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::baselines::{nll_poisson, PoissonParams};
use crate::error::{Error, Result};
use crate::events::{EventSequence, Split};
use crate::intensity::{
    aic, count_parameters, evaluate_intensity, nll, Context, HawkesParams, KernelMode, ModelKind,
    Span,
};
use crate::rff::FeatureBases;

/// Which part of a chronological split a result refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Fit,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitTag::Fit => "fit",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }
}

/// A fitted model of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedModel {
    Poisson {
        params: PoissonParams,
    },
    SpatialPoisson {
        params: HawkesParams,
        bases: FeatureBases,
    },
    Hawkes {
        params: HawkesParams,
        bases: FeatureBases,
    },
}

impl FittedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Poisson { .. } => ModelKind::Poisson,
            FittedModel::SpatialPoisson { .. } => ModelKind::SpatialPoisson,
            FittedModel::Hawkes { .. } => ModelKind::Hawkes,
        }
    }

    pub fn num_types(&self) -> usize {
        match self {
            FittedModel::Poisson { params } => params.mu.len(),
            FittedModel::SpatialPoisson { params, .. } | FittedModel::Hawkes { params, .. } => {
                params.num_types()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub model_kind: ModelKind,
    pub split: SplitTag,
    pub nll_per_event: f64,
    pub total_nll: f64,
    pub p: usize,
    pub aic: f64,
    pub n_events: usize,
}

impl EvalResult {
    fn new(
        model_kind: ModelKind,
        split: SplitTag,
        total_nll: f64,
        p: usize,
        n_events: usize,
    ) -> Self {
        Self {
            model_kind,
            split,
            nll_per_event: total_nll / n_events as f64,
            total_nll,
            p,
            aic: aic(total_nll, p),
            n_events,
        }
    }
}

impl fmt::Display for EvalResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} {:<5} n={:<6} nll/event={:.6} total={:.4} p={} aic={:.4}",
            self.model_kind.as_str(),
            self.split.as_str(),
            self.n_events,
            self.nll_per_event,
            self.total_nll,
            self.p,
            self.aic
        )
    }
}

/// NLL of one split part. Validation and test events see every earlier
/// event as triggering history; the base always aggregates the fit part.
pub fn evaluate(split: &Split, model: &FittedModel, tag: SplitTag) -> Result<EvalResult> {
    let part = match tag {
        SplitTag::Fit => &split.fit,
        SplitTag::Val => &split.val,
        SplitTag::Test => &split.test,
    };
    if part.is_empty() {
        return Err(Error::Evaluation(format!(
            "the {} split has no events",
            tag.as_str()
        )));
    }
    if model.num_types() != part.num_types() {
        return Err(Error::Evaluation(format!(
            "model has {} types, data has {}",
            model.num_types(),
            part.num_types()
        )));
    }
    let kind = model.kind();
    let p = count_parameters(kind, part.num_types());
    let total = match model {
        FittedModel::Poisson { params } => nll_poisson(part, params)?,
        FittedModel::SpatialPoisson { params, bases } | FittedModel::Hawkes { params, bases } => {
            let history = match tag {
                SplitTag::Fit => split.fit.clone(),
                SplitTag::Val => EventSequence::concat(&[&split.fit, &split.val])?,
                SplitTag::Test => EventSequence::concat(&[&split.fit, &split.val, &split.test])?,
            };
            let ctx = Context::with_history(&history, &split.fit, None);
            let span = Span::part(history.len() - part.len(), part);
            nll(&ctx, &span, params, bases)?
        }
    };
    Ok(EvalResult::new(kind, tag, total, p, part.len()))
}

/// Labelled excitation and decay matrices with per-type totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationReport {
    pub types: Vec<String>,
    pub k_mu: Vec<Vec<f64>>,
    pub k_gamma: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    /// Row sums of `k_gamma`: how strongly each type triggers others.
    pub out_excitation: Vec<f64>,
    /// Column sums of `k_gamma`: how strongly each type is triggered.
    pub in_excitation: Vec<f64>,
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub fn excitation_report(params: &HawkesParams, type_names: &[String]) -> Result<ExcitationReport> {
    let u_n = params.num_types();
    if type_names.len() != u_n {
        return Err(Error::Config(format!(
            "{} type labels for {u_n} types",
            type_names.len()
        )));
    }
    Ok(ExcitationReport {
        types: type_names.to_vec(),
        k_mu: rows(&params.k_mu),
        k_gamma: rows(&params.k_gamma),
        w: rows(&params.w),
        out_excitation: params.k_gamma.rows().into_iter().map(|r| r.sum()).collect(),
        in_excitation: params
            .k_gamma
            .columns()
            .into_iter()
            .map(|c| c.sum())
            .collect(),
    })
}

impl fmt::Display for ExcitationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .types
            .iter()
            .map(|t| t.len())
            .max()
            .unwrap_or(0)
            .max(10);
        let table = |f: &mut fmt::Formatter<'_>, title: &str, m: &[Vec<f64>]| -> fmt::Result {
            writeln!(f, "{title} (row: source, column: target)")?;
            write!(f, "{:width$}", "")?;
            for t in &self.types {
                write!(f, " {t:>width$}")?;
            }
            writeln!(f)?;
            for (t, row) in self.types.iter().zip(m) {
                write!(f, "{t:width$}")?;
                for v in row {
                    write!(f, " {v:>width$.4}")?;
                }
                writeln!(f)?;
            }
            Ok(())
        };
        table(f, "base excitation", &self.k_mu)?;
        table(f, "triggering excitation", &self.k_gamma)?;
        table(f, "decay", &self.w)?;
        writeln!(f, "type totals (out / in)")?;
        for (i, t) in self.types.iter().enumerate() {
            writeln!(
                f,
                "{t:width$} {:.4} / {:.4}",
                self.out_excitation[i], self.in_excitation[i]
            )?;
        }
        Ok(())
    }
}

/// `Σ_u λ_u(t, s)` with exact kernels on a `resolution x resolution` grid
/// over the domain. Row `r` holds `y = y_lo + r * step`, columns run over x.
/// The base aggregates the whole sequence.
pub fn intensity_grid(
    params: &HawkesParams,
    seq: &EventSequence,
    t: f64,
    resolution: usize,
) -> Result<Array2<f64>> {
    if resolution < 2 {
        return Err(Error::Config(format!(
            "grid resolution must be at least 2, got {resolution}"
        )));
    }
    let ctx = Context::for_sequence(seq, None);
    let points = seq.domain().grid(resolution);
    let mut out = Array2::zeros((resolution, resolution));
    for (k, s) in points.into_iter().enumerate() {
        let mut total = 0.0;
        for u in 0..params.num_types() {
            total += evaluate_intensity(u, t, s, params, &ctx, KernelMode::Exact)?;
        }
        out[[k / resolution, k % resolution]] = total;
    }
    Ok(out)
}

/// Flat grid for a homogeneous Poisson model.
pub fn poisson_grid(params: &PoissonParams, resolution: usize) -> Array2<f64> {
    Array2::from_elem((resolution, resolution), params.mu.iter().sum())
}

/// Row-major CSV with full-precision values.
pub fn grid_to_csv(grid: &Array2<f64>) -> String {
    let mut out = String::new();
    for row in grid.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}
