//! Comparison models: homogeneous Poisson and spatially inhomogeneous Poisson.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventSequence;
use crate::optimizer::{train, FitConfig, FitReport, Variant};

/// Constant per-type intensity per unit time and unit area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonParams {
    pub mu: Vec<f64>,
}

impl PoissonParams {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() || mu.iter().any(|m| !(*m > 0.0) || !m.is_finite()) {
            return Err(Error::Domain(format!(
                "Poisson rates must be positive: {mu:?}"
            )));
        }
        Ok(Self { mu })
    }
}

/// Closed-form maximum-likelihood rates `N_u / (T |S|)`. A type without
/// events gets half an event's worth of rate.
pub fn fit_poisson(seq: &EventSequence) -> Result<PoissonParams> {
    let exposure = seq.duration() * seq.domain().area();
    if !(exposure > 0.0) {
        return Err(Error::Domain(
            "Poisson fit needs a positive duration".into(),
        ));
    }
    let mu = seq
        .type_counts()
        .iter()
        .enumerate()
        .map(|(u, &n)| {
            if n == 0 {
                warn!(
                    "type {} has no events; using half an event for its rate",
                    u + 1
                );
                0.5 / exposure
            } else {
                n as f64 / exposure
            }
        })
        .collect();
    PoissonParams::new(mu)
}

/// `-Σ_i log μ_{u_i} + T |S| Σ_u μ_u` over the sequence window.
pub fn nll_poisson(seq: &EventSequence, params: &PoissonParams) -> Result<f64> {
    if params.mu.len() != seq.num_types() {
        return Err(Error::Domain(format!(
            "{} rates for {} event types",
            params.mu.len(),
            seq.num_types()
        )));
    }
    let log_term: f64 = seq.events().iter().map(|e| -params.mu[e.kind].ln()).sum();
    let exposure = seq.duration() * seq.domain().area();
    Ok(log_term + exposure * params.mu.iter().sum::<f64>())
}

/// Fits the base-intensity-only model with the mini-batch pipeline; the
/// triggering matrix stays exactly zero.
pub fn fit_spatial_poisson(
    fit_seq: &EventSequence,
    val_seq: &EventSequence,
    config: &FitConfig,
) -> Result<FitReport> {
    train(fit_seq, val_seq, config, Variant::SpatialPoisson, None)
}
