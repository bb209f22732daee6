//! Mini-batch maximum-likelihood training with random Fourier features.
//!
//! Positive blocks (`K`, `W`, `ℓ`) are optimised through a softplus with
//! sharpness `s`; eigenvector blocks are updated as raw matrices and pulled
//! back onto the orthonormal group after every step.

use std::time::Instant;

use log::{debug, info, warn};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventSequence, Rect};
use crate::gradients::{grad_all, softplus_slope, GradientSet};
use crate::intensity::{
    aic, count_parameters, nll, span_intensities, Context, HawkesParams, ModelKind, Span,
    INTENSITY_FLOOR,
};
use crate::linalg::{self, Mat2};
use crate::rff::{CovarianceParams, FeatureBases};

/// Smallest singular value accepted by [`project_orthonormal`].
pub const PROCRUSTES_MIN_SINGULAR: f64 = 1e-12;

/// `(1/s) log(1 + e^(s x))` in the overflow-free form.
pub fn softplus(x: f64, s: f64) -> f64 {
    x.max(0.0) + (-(s * x).abs()).exp().ln_1p() / s
}

/// Inverse of [`softplus`]: `(1/s) log(e^(s y) - 1)`.
pub fn softplus_inverse(y: f64, s: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::Domain(format!(
            "softplus inverse needs a positive value, got {y}"
        )));
    }
    let z = s * y;
    // log(e^z - 1) = z + log(1 - e^-z)
    Ok((z + (-(-z).exp()).ln_1p()) / s)
}

/// Nearest orthonormal matrix in Frobenius norm (the polar factor of `m`).
pub fn project_orthonormal(m: &Mat2) -> Result<Mat2> {
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite matrix {m:?}")));
    }
    let (_, s_min, q) = linalg::polar(m);
    if s_min < PROCRUSTES_MIN_SINGULAR {
        return Err(Error::Degenerate(format!(
            "singular value {s_min:e} too small to fix an orthonormal direction"
        )));
    }
    Ok(q)
}

/// Unconstrained training coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawParams {
    pub raw_k_mu: Array2<f64>,
    pub raw_k_gamma: Array2<f64>,
    pub raw_w: Array2<f64>,
    pub v_mu: Mat2,
    pub v_gamma: Mat2,
    pub raw_l_mu: [f64; 2],
    pub raw_l_gamma: [f64; 2],
}

impl RawParams {
    /// Constrained parameters. With `triggering` off the excitation matrix
    /// `K^(γ)` is exactly zero.
    pub fn to_params(&self, s: f64, triggering: bool) -> HawkesParams {
        let sp = |m: &Array2<f64>| m.mapv(|x| softplus(x, s));
        let k_gamma = if triggering {
            sp(&self.raw_k_gamma)
        } else {
            Array2::zeros(self.raw_k_gamma.dim())
        };
        HawkesParams {
            k_mu: sp(&self.raw_k_mu),
            k_gamma,
            w: sp(&self.raw_w),
            cov_mu: CovarianceParams {
                eigvecs: self.v_mu,
                eigvals: self.raw_l_mu.map(|x| softplus(x, s)),
            },
            cov_gamma: CovarianceParams {
                eigvecs: self.v_gamma,
                eigvals: self.raw_l_gamma.map(|x| softplus(x, s)),
            },
        }
    }

    /// Raw coordinates for the given constrained parameters. Zero entries
    /// (allowed in `K`) have no preimage and are rejected.
    pub fn from_params(p: &HawkesParams, s: f64) -> Result<Self> {
        let inv = |m: &Array2<f64>| -> Result<Array2<f64>> {
            let v: Result<Vec<f64>> = m.iter().map(|y| softplus_inverse(*y, s)).collect();
            Ok(Array2::from_shape_vec(m.dim(), v?).expect("same shape"))
        };
        Ok(Self {
            raw_k_mu: inv(&p.k_mu)?,
            raw_k_gamma: inv(&p.k_gamma)?,
            raw_w: inv(&p.w)?,
            v_mu: p.cov_mu.eigvecs,
            v_gamma: p.cov_gamma.eigvecs,
            raw_l_mu: [
                softplus_inverse(p.cov_mu.eigvals[0], s)?,
                softplus_inverse(p.cov_mu.eigvals[1], s)?,
            ],
            raw_l_gamma: [
                softplus_inverse(p.cov_gamma.eigvals[0], s)?,
                softplus_inverse(p.cov_gamma.eigvals[1], s)?,
            ],
        })
    }
}

/// Initial parameters: excitations uniform in `[0.5, 1.5] * rate_scale`,
/// decays uniform in `[0.5, 2]`, eigenvalues `0.1 * side²`, identity eigenvectors.
pub fn init_params(
    num_types: usize,
    seed: u64,
    rate_scale: f64,
    domain: &Rect,
    s: f64,
) -> Result<RawParams> {
    if num_types == 0 {
        return Err(Error::Config("at least one event type is required".into()));
    }
    if !(rate_scale > 0.0) {
        return Err(Error::Config(format!(
            "rate scale must be positive, got {rate_scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |lo: f64, hi: f64| -> Result<Array2<f64>> {
        let v: Result<Vec<f64>> = (0..num_types * num_types)
            .map(|_| softplus_inverse(rng.random_range(lo..hi), s))
            .collect();
        Ok(Array2::from_shape_vec((num_types, num_types), v?).expect("square"))
    };
    let raw_k_mu = draw(0.5 * rate_scale, 1.5 * rate_scale)?;
    let raw_k_gamma = draw(0.5 * rate_scale, 1.5 * rate_scale)?;
    let raw_w = draw(0.5, 2.0)?;
    let l = [0.1 * domain.width().powi(2), 0.1 * domain.height().powi(2)];
    let raw_l = [softplus_inverse(l[0], s)?, softplus_inverse(l[1], s)?];
    Ok(RawParams {
        raw_k_mu,
        raw_k_gamma,
        raw_w,
        v_mu: linalg::IDENTITY,
        v_gamma: linalg::IDENTITY,
        raw_l_mu: raw_l,
        raw_l_gamma: raw_l,
    })
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub rff_dim: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub softplus_scale: f64,
    pub max_epoch: usize,
    pub patience: usize,
    pub seed: u64,
    pub history_cutoff: Option<f64>,
    /// Separate random bases for the base and triggering kernels.
    pub independent_bases: bool,
    /// Adam-style per-coordinate step sizes instead of plain gradient descent.
    pub adaptive: bool,
    /// Initialisations drawn (from consecutive seeds) before giving up on
    /// one that keeps every intensity positive.
    pub init_attempts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rff_dim: 50,
            learning_rate: 0.005,
            batch_size: 256,
            softplus_scale: 0.01,
            max_epoch: 300,
            patience: 30,
            seed: 0,
            history_cutoff: None,
            independent_bases: false,
            adaptive: false,
            init_attempts: 5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(crate::rff::MIN_DIM..=crate::rff::MAX_DIM).contains(&self.rff_dim) {
            return bad(format!("rff_dim {} outside [1, 5000]", self.rff_dim));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad(format!(
                "learning_rate must be non-negative, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.softplus_scale > 0.0) {
            return bad(format!(
                "softplus_scale must be positive, got {}",
                self.softplus_scale
            ));
        }
        if self.max_epoch == 0 || self.patience == 0 || self.init_attempts == 0 {
            return bad("max_epoch, patience and init_attempts must be positive".into());
        }
        if let Some(tau) = self.history_cutoff {
            if !(tau > 0.0) {
                return bad(format!("history_cutoff must be positive, got {tau}"));
            }
        }
        Ok(())
    }

    pub fn bases(&self) -> Result<FeatureBases> {
        if self.independent_bases {
            FeatureBases::independent(self.rff_dim, self.seed)
        } else {
            FeatureBases::shared(self.rff_dim, self.seed)
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub model_kind: ModelKind,
    pub epochs_run: usize,
    pub train_nll_per_event: Vec<f64>,
    pub val_nll_per_event: Vec<f64>,
    pub best_epoch: usize,
    pub best_params: HawkesParams,
    pub best_val_nll: f64,
    pub bases: FeatureBases,
    pub p: usize,
    /// Total NLL of the fit sequence under the best parameters.
    pub train_total_nll: f64,
    pub aic_train: f64,
    /// Steps after which a positive entry was non-positive or an eigenvector
    /// block drifted from orthonormality by more than 1e-10.
    pub constraint_violations: usize,
    /// Procrustes projections skipped because the update was degenerate.
    pub degenerate_projections: usize,
    /// Step attempts shortened because they produced a non-positive intensity.
    pub rejected_steps: usize,
    pub wall_time: f64,
}

impl FitReport {
    /// Equality of everything except wall time.
    pub fn same_outcome(&self, other: &FitReport) -> bool {
        self.model_kind == other.model_kind
            && self.epochs_run == other.epochs_run
            && bits(&self.train_nll_per_event) == bits(&other.train_nll_per_event)
            && bits(&self.val_nll_per_event) == bits(&other.val_nll_per_event)
            && self.best_epoch == other.best_epoch
            && self.best_params == other.best_params
            && self.best_val_nll.to_bits() == other.best_val_nll.to_bits()
            && self.bases == other.bases
            && self.p == other.p
            && self.aic_train.to_bits() == other.aic_train.to_bits()
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Adam moments per coordinate, flattened in block order.
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn steps(&mut self, g: &[f64], lr: f64) -> Vec<f64> {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        self.t += 1;
        let c1 = 1.0 - B1.powi(self.t);
        let c2 = 1.0 - B2.powi(self.t);
        g.iter()
            .enumerate()
            .map(|(i, gi)| {
                self.m[i] = B1 * self.m[i] + (1.0 - B1) * gi;
                self.v[i] = B2 * self.v[i] + (1.0 - B2) * gi * gi;
                lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + 1e-8)
            })
            .collect()
    }
}

/// Training with optional masking of the triggering component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Variant {
    Hawkes,
    SpatialPoisson,
}

/// Raw-space gradient, flattened as: k_mu, k_gamma, w, v_mu, v_gamma, l_mu, l_gamma.
fn raw_gradient(raw: &RawParams, g: &GradientSet, s: f64, variant: Variant) -> Vec<f64> {
    let mut out = Vec::new();
    let chain = |out: &mut Vec<f64>,
                 grad: &mut dyn Iterator<Item = f64>,
                 x: &mut dyn Iterator<Item = f64>| {
        for (gi, xi) in grad.zip(x) {
            out.push(gi * softplus_slope(xi, s));
        }
    };
    let triggering = variant == Variant::Hawkes;
    chain(
        &mut out,
        &mut g.d_k_mu.iter().copied(),
        &mut raw.raw_k_mu.iter().copied(),
    );
    let n2 = raw.raw_k_gamma.len();
    if triggering {
        chain(
            &mut out,
            &mut g.d_k_gamma.iter().copied(),
            &mut raw.raw_k_gamma.iter().copied(),
        );
        chain(
            &mut out,
            &mut g.d_w.iter().copied(),
            &mut raw.raw_w.iter().copied(),
        );
    } else {
        out.extend(std::iter::repeat_n(0.0, 2 * n2));
    }
    out.extend(g.d_v_mu.iter().flatten());
    if triggering {
        out.extend(g.d_v_gamma.iter().flatten());
    } else {
        out.extend([0.0; 4]);
    }
    chain(
        &mut out,
        &mut g.d_l_mu.iter().copied(),
        &mut raw.raw_l_mu.iter().copied(),
    );
    if triggering {
        chain(
            &mut out,
            &mut g.d_l_gamma.iter().copied(),
            &mut raw.raw_l_gamma.iter().copied(),
        );
    } else {
        out.extend([0.0; 2]);
    }
    out
}

fn apply_step(raw: &mut RawParams, step: &[f64]) {
    let mut it = step.iter();
    for x in raw.raw_k_mu.iter_mut() {
        *x -= it.next().unwrap();
    }
    for x in raw.raw_k_gamma.iter_mut() {
        *x -= it.next().unwrap();
    }
    for x in raw.raw_w.iter_mut() {
        *x -= it.next().unwrap();
    }
    for x in raw.v_mu.iter_mut().flatten() {
        *x -= it.next().unwrap();
    }
    for x in raw.v_gamma.iter_mut().flatten() {
        *x -= it.next().unwrap();
    }
    for x in raw.raw_l_mu.iter_mut() {
        *x -= it.next().unwrap();
    }
    for x in raw.raw_l_gamma.iter_mut() {
        *x -= it.next().unwrap();
    }
}

/// True when every positive block is positive and both eigenvector blocks are orthonormal.
pub fn constraints_hold(p: &HawkesParams, triggering: bool) -> bool {
    let pos = |m: &Array2<f64>| m.iter().all(|v| *v > 0.0);
    let k_gamma_ok = if triggering {
        pos(&p.k_gamma)
    } else {
        p.k_gamma.iter().all(|v| *v == 0.0)
    };
    pos(&p.k_mu)
        && k_gamma_ok
        && pos(&p.w)
        && p.cov_mu
            .eigvals
            .iter()
            .chain(&p.cov_gamma.eigvals)
            .all(|v| *v > 0.0)
        && linalg::orthonormality_defect(&p.cov_mu.eigvecs) <= 1e-10
        && linalg::orthonormality_defect(&p.cov_gamma.eigvecs) <= 1e-10
}

/// Fits the spatio-temporal Hawkes model.
pub fn fit(
    fit_seq: &EventSequence,
    val_seq: &EventSequence,
    config: &FitConfig,
) -> Result<FitReport> {
    train(fit_seq, val_seq, config, Variant::Hawkes, None)
}

/// [`fit`] starting from given parameters instead of the seeded initialisation.
pub fn fit_from(
    fit_seq: &EventSequence,
    val_seq: &EventSequence,
    config: &FitConfig,
    init: &HawkesParams,
) -> Result<FitReport> {
    train(fit_seq, val_seq, config, Variant::Hawkes, Some(init))
}

/// Patience-based early stopping on a validation series.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Records a value; returns `(improved, stop)`.
    pub fn observe(&mut self, value: f64) -> (bool, bool) {
        if value < self.best {
            self.best = value;
            self.since_best = 0;
            (true, false)
        } else {
            self.since_best += 1;
            (false, self.since_best >= self.patience)
        }
    }
}

/// Halvings tried before a step that leaves the feasible region is skipped.
const MAX_STEP_HALVINGS: usize = 10;

pub(crate) fn train(
    fit_seq: &EventSequence,
    val_seq: &EventSequence,
    config: &FitConfig,
    variant: Variant,
    init: Option<&HawkesParams>,
) -> Result<FitReport> {
    config.validate()?;
    let started = Instant::now();
    let n_fit = fit_seq.len();
    if n_fit < 2 * config.batch_size {
        return Err(Error::Config(format!(
            "fit sequence has {n_fit} events; batch size {} needs at least {}",
            config.batch_size,
            2 * config.batch_size
        )));
    }
    if val_seq.is_empty() {
        return Err(Error::Config("validation sequence is empty".into()));
    }
    if val_seq.num_types() != fit_seq.num_types() {
        return Err(Error::Config(
            "fit and validation sequences disagree on the number of types".into(),
        ));
    }
    let u_n = fit_seq.num_types();
    let s = config.softplus_scale;
    let triggering = variant == Variant::Hawkes;
    let model_kind = match variant {
        Variant::Hawkes => ModelKind::Hawkes,
        Variant::SpatialPoisson => ModelKind::SpatialPoisson,
    };
    let bases = config.bases()?;
    let rate_scale = n_fit as f64 / (fit_seq.duration() * u_n as f64);

    let history = EventSequence::concat(&[fit_seq, val_seq])?;
    let ctx_fit = Context::for_sequence(fit_seq, config.history_cutoff);
    let whole_fit = Span::whole(fit_seq);
    let ctx_val = Context::with_history(&history, fit_seq, config.history_cutoff);
    let val_span = Span::part(n_fit, val_seq);
    let all_span = Span {
        events: 0..history.len(),
        window: (history.start(), history.end()),
    };
    // every fit and validation intensity above the floor
    let feasible = |p: &HawkesParams| -> Result<bool> {
        match span_intensities(&ctx_val, &all_span, p, &bases) {
            Ok(a) => Ok(history
                .events()
                .iter()
                .enumerate()
                .all(|(i, e)| a[[i, e.kind]] > INTENSITY_FLOOR)),
            Err(e) => Err(e),
        }
    };

    let candidates: Vec<RawParams> = match init {
        Some(p) if p.num_types() != u_n => {
            return Err(Error::Config(format!(
                "initial parameters have {} types, data has {u_n}",
                p.num_types()
            )))
        }
        Some(p) => vec![RawParams::from_params(p, s)?],
        None => (0..config.init_attempts as u64)
            .map(|k| {
                init_params(
                    u_n,
                    config.seed.wrapping_add(k),
                    rate_scale,
                    &fit_seq.domain(),
                    s,
                )
            })
            .collect::<Result<_>>()?,
    };
    let mut raw = candidates[0].clone();
    for (k, c) in candidates.iter().enumerate() {
        if feasible(&c.to_params(s, triggering))? {
            if k > 0 {
                info!("initialisation {k} is the first with positive intensities");
            }
            raw = c.clone();
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5851_f42d_4c95_7f2d));
    let steps = (n_fit / config.batch_size).max(1);
    let mut moments = Moments::new(3 * u_n * u_n + 12);

    let p = count_parameters(model_kind, u_n);
    let init = raw.to_params(s, triggering);
    let mut report = FitReport {
        model_kind,
        epochs_run: 0,
        train_nll_per_event: Vec::new(),
        val_nll_per_event: Vec::new(),
        best_epoch: 0,
        best_params: init.clone(),
        best_val_nll: f64::INFINITY,
        bases: bases.clone(),
        p,
        train_total_nll: f64::NAN,
        aic_train: f64::NAN,
        constraint_violations: 0,
        degenerate_projections: 0,
        rejected_steps: 0,
        wall_time: 0.0,
    };
    let diverged = |report: &FitReport, epoch: usize, msg: String| {
        let mut r = report.clone();
        r.wall_time = started.elapsed().as_secs_f64();
        Error::Training {
            epoch,
            msg,
            report: Box::new(r),
        }
    };
    if !feasible(&init)? {
        return Err(diverged(
            &report,
            0,
            "no initialisation gives positive intensities at every event; try another seed or feature dimension".into(),
        ));
    }
    let mut best_train_total = f64::NAN;
    let mut stopper = EarlyStopping::new(config.patience);

    for epoch in 1..=config.max_epoch {
        for _ in 0..steps {
            let start = rng.random_range(0..=n_fit - config.batch_size);
            let span = Span::batch(&ctx_fit, start..start + config.batch_size)?;
            let params = raw.to_params(s, triggering);
            let g = match grad_all(&ctx_fit, &span, &params, &bases) {
                Ok((_, g)) => g,
                Err(e) => return Err(diverged(&report, epoch, e.to_string())),
            };
            let grad = raw_gradient(&raw, &g, s, variant);
            let step: Vec<f64> = if config.adaptive {
                moments.steps(&grad, config.learning_rate)
            } else {
                grad.iter().map(|g| config.learning_rate * g).collect()
            };
            if step.iter().any(|v| !v.is_finite()) {
                return Err(diverged(&report, epoch, "non-finite update".into()));
            }
            // the likelihood is undefined where an intensity is non-positive:
            // such steps are shortened until they stay feasible
            let mut scale = 1.0;
            for _ in 0..=MAX_STEP_HALVINGS {
                let mut cand = raw.clone();
                apply_step(
                    &mut cand,
                    &step.iter().map(|v| v * scale).collect::<Vec<_>>(),
                );
                for (v, prev) in [(&mut cand.v_mu, raw.v_mu), (&mut cand.v_gamma, raw.v_gamma)] {
                    match project_orthonormal(v) {
                        Ok(q) => *v = q,
                        Err(e) => {
                            warn!("epoch {epoch}: keeping previous eigenvectors ({e})");
                            *v = prev;
                            report.degenerate_projections += 1;
                        }
                    }
                }
                let updated = cand.to_params(s, triggering);
                if feasible(&updated)? {
                    if !constraints_hold(&updated, triggering) {
                        report.constraint_violations += 1;
                    }
                    debug_assert!(
                        constraints_hold(&updated, triggering),
                        "constraint violated after update"
                    );
                    raw = cand;
                    break;
                }
                report.rejected_steps += 1;
                scale *= 0.5;
            }
        }

        let params = raw.to_params(s, triggering);
        let evals = nll(&ctx_fit, &whole_fit, &params, &bases)
            .and_then(|train| Ok((train, nll(&ctx_val, &val_span, &params, &bases)?)));
        let (train_total, val_total) = match evals {
            Ok(v) => v,
            Err(e) => return Err(diverged(&report, epoch, e.to_string())),
        };
        let train = train_total / n_fit as f64;
        let val = val_total / val_seq.len() as f64;
        report.epochs_run = epoch;
        report.train_nll_per_event.push(train);
        report.val_nll_per_event.push(val);
        debug!("epoch {epoch}: train {train:.5} val {val:.5}");
        let (improved, stop) = stopper.observe(val);
        if improved {
            report.best_val_nll = val;
            report.best_params = params;
            report.best_epoch = epoch;
            best_train_total = train_total;
        }
        if stop {
            break;
        }
    }
    report.train_total_nll = best_train_total;
    report.aic_train = aic(best_train_total, p);
    report.wall_time = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::EventRecord;

    #[test]
    fn softplus_examples() {
        assert!((softplus(0.0, 0.01) - 2f64.ln() / 0.01).abs() < 1e-10);
        assert!((softplus(1e6, 0.01) - 1e6).abs() < 1e-6);
        assert!(softplus(-1e6, 0.01) >= 0.0);
        for y in [0.01, 1.0, 100.0] {
            let x = softplus_inverse(y, 0.01).unwrap();
            assert!((softplus(x, 0.01) - y).abs() <= 1e-12 * y.max(1.0), "{y}");
        }
        assert!(softplus_inverse(2f64.ln() / 0.01, 0.01).unwrap().abs() < 1e-9);
        assert!((softplus_inverse(1e4, 0.1).unwrap() - 1e4).abs() < 1e-9);
        assert!(softplus_inverse(0.0, 0.1).is_err());
        assert!(softplus_inverse(-1.0, 0.1).is_err());
    }

    #[test]
    fn procrustes_fixed_points() {
        let th: f64 = 1.1;
        let r = [[th.cos(), th.sin()], [th.sin(), -th.cos()]];
        let q = project_orthonormal(&r).unwrap();
        assert!(linalg::frobenius(&linalg::sub(&q, &r)) < 1e-12);
        let q = project_orthonormal(&[[2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!(linalg::frobenius(&linalg::sub(&q, &linalg::IDENTITY)) < 1e-15);
        assert!(project_orthonormal(&[[1.0, 2.0], [2.0, 4.0]]).is_err());
        assert!(project_orthonormal(&[[0.0; 2]; 2]).is_err());
    }

    #[test]
    fn init_is_deterministic_and_positive() {
        let d = Rect::symmetric(1.0);
        let a = init_params(3, 11, 0.2, &d, 0.01).unwrap();
        let b = init_params(3, 11, 0.2, &d, 0.01).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(3, 12, 0.2, &d, 0.01).unwrap());
        let p = a.to_params(0.01, true);
        assert!(constraints_hold(&p, true));
        assert_eq!(a.v_mu, linalg::IDENTITY);
        assert_eq!(a.v_gamma, linalg::IDENTITY);
        assert!((p.cov_mu.eigvals[0] - 0.4).abs() < 1e-12);
        assert!(p.w.iter().all(|w| (0.5..=2.0 + 1e-9).contains(w)));
    }

    #[test]
    fn raw_round_trip() {
        let d = Rect::symmetric(1.0);
        let raw = init_params(2, 3, 1.0, &d, 0.1).unwrap();
        let p = raw.to_params(0.1, true);
        let back = RawParams::from_params(&p, 0.1)
            .unwrap()
            .to_params(0.1, true);
        for (x, y) in p.k_gamma.iter().zip(back.k_gamma.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn toy(n: usize, seed: u64) -> EventSequence {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = 0.0;
        let ev: Vec<_> = (0..n)
            .map(|_| {
                t += rng.random_range(0.1..1.9);
                EventRecord::new(
                    rng.random_range(0..2),
                    t,
                    [rng.random_range(-0.15..0.15), rng.random_range(-0.15..0.15)],
                )
            })
            .collect();
        EventSequence::from_events(ev, 2, Rect::symmetric(1.0), None).unwrap()
    }

    fn small_config() -> FitConfig {
        FitConfig {
            rff_dim: 10,
            batch_size: 32,
            max_epoch: 4,
            softplus_scale: 0.1,
            ..FitConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let s = toy(150, 1);
        let (fit_seq, val_seq) = (
            EventSequence::new(
                s.events()[..120].to_vec(),
                2,
                s.domain(),
                0.0,
                s.events()[119].time,
            )
            .unwrap(),
            EventSequence::new(
                s.events()[120..].to_vec(),
                2,
                s.domain(),
                s.events()[119].time,
                s.end(),
            )
            .unwrap(),
        );
        let cfg = FitConfig {
            learning_rate: 0.0,
            ..small_config()
        };
        let r = fit(&fit_seq, &val_seq, &cfg).unwrap();
        assert!(r.train_nll_per_event.windows(2).all(|w| w[0] == w[1]));
        let init = init_params(2, 0, 120.0 / (fit_seq.duration() * 2.0), &s.domain(), 0.1)
            .unwrap()
            .to_params(0.1, true);
        assert_eq!(r.best_params, init);
    }

    #[test]
    fn reproducible_and_constrained() {
        let s = toy(200, 2);
        let fit_seq = EventSequence::new(
            s.events()[..160].to_vec(),
            2,
            s.domain(),
            0.0,
            s.events()[159].time,
        )
        .unwrap();
        let val_seq = EventSequence::new(
            s.events()[160..].to_vec(),
            2,
            s.domain(),
            s.events()[159].time,
            s.end(),
        )
        .unwrap();
        let a = fit(&fit_seq, &val_seq, &small_config()).unwrap();
        let b = fit(&fit_seq, &val_seq, &small_config()).unwrap();
        assert!(a.same_outcome(&b));
        assert_eq!(a.constraint_violations, 0);
        let best = a
            .val_nll_per_event
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_val_nll, best);
        // re-evaluating the best parameters reproduces the recorded value
        let history = EventSequence::concat(&[&fit_seq, &val_seq]).unwrap();
        let ctx = Context::with_history(&history, &fit_seq, None);
        let v = nll(&ctx, &Span::part(160, &val_seq), &a.best_params, &a.bases).unwrap() / 40.0;
        assert!((v - a.best_val_nll).abs() <= 1e-10);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let series = [5.0, 4.0, 3.0, 3.5, 3.2, 3.1, 3.0, 2.0];
        let mut e = EarlyStopping::new(3);
        let mut run = 0;
        for v in series {
            run += 1;
            if e.observe(v).1 {
                break;
            }
        }
        // stalls after index 2 (epoch 3)
        assert!(run <= 3 + 3);
        assert_eq!(run, 6);
    }

    #[test]
    fn rejects_small_fit_sequences() {
        let s = toy(50, 3);
        let cfg = FitConfig {
            batch_size: 32,
            ..small_config()
        };
        assert!(matches!(fit(&s, &s, &cfg), Err(Error::Config(_))));
    }
}
