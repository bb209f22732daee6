//! Conditional intensity, compensator and negative log-likelihood.
//!
//! The intensity of type `u` at `(t, s)` is
//!
//! ```text
//! λ_u(t, s) = (1/T) Σ_{j ∈ base} Kμ[u_j, u] g(s, s_j; Σμ)
//!           + Σ_{j: t_j < t} Kγ[u_j, u] w[u_j, u] exp(-w[u_j, u] (t - t_j)) g(s, s_j; Σγ)
//! ```
//!
//! where `g` is the bivariate Gaussian density, either exact or through random
//! Fourier features. Two evaluation routes exist:
//!
//! * [`intensity_matrix`] materialises the per-batch matrices (`Z`, `d`, `Y`,
//!   `N`, `Q`, `A`) row by row, which is quadratic in the history length;
//! * the likelihood pass behind [`nll`] keeps exponentially decayed feature
//!   sums per `(source type, target type)` pair, which is linear.
//!
//! Both agree to round-off; tests hold them against each other and against
//! pointwise evaluation.

use std::ops::Range;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventRecord, EventSequence};
use crate::rff::{self, dot, CovarianceParams, FeatureBases, Features};

/// Selected intensities must exceed this before the logarithm.
pub const INTENSITY_FLOOR: f64 = 1e-12;

/// Full parameter set of the spatio-temporal Hawkes model.
///
/// Entry `[a, u]` of each matrix describes the effect of type-`a` events on
/// type-`u` intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HawkesParams {
    pub k_mu: Array2<f64>,
    pub k_gamma: Array2<f64>,
    pub w: Array2<f64>,
    pub cov_mu: CovarianceParams,
    pub cov_gamma: CovarianceParams,
}

impl HawkesParams {
    /// Validates shapes and signs. Excitation entries may be zero (a masked or
    /// absent component); decay rates must be strictly positive.
    pub fn new(
        k_mu: Array2<f64>,
        k_gamma: Array2<f64>,
        w: Array2<f64>,
        cov_mu: CovarianceParams,
        cov_gamma: CovarianceParams,
    ) -> Result<Self> {
        let p = Self {
            k_mu,
            k_gamma,
            w,
            cov_mu,
            cov_gamma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let u = self.k_mu.nrows();
        for (name, m) in [
            ("k_mu", &self.k_mu),
            ("k_gamma", &self.k_gamma),
            ("w", &self.w),
        ] {
            if m.dim() != (u, u) || u == 0 {
                return Err(Error::Domain(format!(
                    "{name} must be a non-empty square {u}x{u} matrix"
                )));
            }
            if m.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Domain(format!(
                    "{name} has negative or non-finite entries"
                )));
            }
        }
        if self.w.iter().any(|v| *v <= 0.0) {
            return Err(Error::Domain(
                "decay rates must be strictly positive".into(),
            ));
        }
        CovarianceParams::new(self.cov_mu.eigvecs, self.cov_mu.eigvals)?;
        CovarianceParams::new(self.cov_gamma.eigvecs, self.cov_gamma.eigvals)?;
        Ok(())
    }

    pub fn num_types(&self) -> usize {
        self.k_mu.nrows()
    }
}

/// Kernel used by pointwise evaluation.
#[derive(Debug, Clone, Copy)]
pub enum KernelMode<'a> {
    Exact,
    Rff(&'a FeatureBases),
}

/// Event history plus the base set that defines the background intensity.
///
/// The first `base_len` events form the base set with horizon `base_horizon`
/// (the `T` in `1/T`). Triggering uses every event strictly before the
/// evaluation time, optionally truncated to the last `cutoff` time units.
#[derive(Debug, Clone, Copy)]
pub struct Context<'a> {
    pub events: &'a [EventRecord],
    pub num_types: usize,
    pub start: f64,
    pub base_len: usize,
    pub base_horizon: f64,
    pub cutoff: Option<f64>,
}

impl<'a> Context<'a> {
    /// The sequence is its own base set and history.
    pub fn for_sequence(seq: &'a EventSequence, cutoff: Option<f64>) -> Self {
        Self {
            events: seq.events(),
            num_types: seq.num_types(),
            start: seq.start(),
            base_len: seq.len(),
            base_horizon: seq.duration(),
            cutoff,
        }
    }

    /// `history` continues `base` chronologically (e.g. fit ++ val ++ test);
    /// the base set is the first `base.len()` events.
    pub fn with_history(
        history: &'a EventSequence,
        base: &EventSequence,
        cutoff: Option<f64>,
    ) -> Self {
        Self {
            events: history.events(),
            num_types: history.num_types(),
            start: history.start(),
            base_len: base.len(),
            base_horizon: base.duration(),
            cutoff,
        }
    }

    fn base(&self) -> &'a [EventRecord] {
        &self.events[..self.base_len]
    }

    fn in_cutoff(&self, lag: f64) -> bool {
        self.cutoff.is_none_or(|tau| lag <= tau)
    }

    /// `J(t)`: events strictly before `t` within the cutoff.
    fn history_before(&self, t: f64) -> Vec<EventRecord> {
        let n = self.events.partition_point(|e| e.time < t);
        self.events[..n]
            .iter()
            .filter(|e| self.in_cutoff(t - e.time))
            .copied()
            .collect()
    }
}

/// Evaluation events (indices into the context) and the compensator window `(a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub events: Range<usize>,
    pub window: (f64, f64),
}

impl Span {
    /// Contiguous batch `lo..hi`; the window runs from the previous event time
    /// (or the context start) to the last batch event time.
    pub fn batch(ctx: &Context<'_>, events: Range<usize>) -> Result<Self> {
        if events.start >= events.end || events.end > ctx.events.len() {
            return Err(Error::Contract(format!(
                "batch {events:?} not contained in a history of {} events",
                ctx.events.len()
            )));
        }
        let a = if events.start == 0 {
            ctx.start
        } else {
            ctx.events[events.start - 1].time
        };
        let b = ctx.events[events.end - 1].time;
        Ok(Self {
            events,
            window: (a, b),
        })
    }

    /// All events of a sequence over its own window.
    pub fn whole(seq: &EventSequence) -> Self {
        Self {
            events: 0..seq.len(),
            window: (seq.start(), seq.end()),
        }
    }

    /// Events `offset..offset + part.len()` over `part`'s window.
    pub fn part(offset: usize, part: &EventSequence) -> Self {
        Self {
            events: offset..offset + part.len(),
            window: (part.start(), part.end()),
        }
    }
}

/// Temporal kernel vector for history events: `w[u_j,u] exp(-w[u_j,u] (t - t_j))`.
pub fn decay_vector(
    t: f64,
    history: &[EventRecord],
    eval_type: usize,
    w: &Array2<f64>,
) -> Result<Vec<f64>> {
    history
        .iter()
        .map(|e| {
            if e.time >= t {
                return Err(Error::Contract(format!(
                    "history event at {} is not strictly before {t}",
                    e.time
                )));
            }
            let rate = w[[e.kind, eval_type]];
            Ok(rate * (-rate * (t - e.time)).exp())
        })
        .collect()
}

fn spatial_kernel(
    mode: KernelMode<'_>,
    cov: &CovarianceParams,
    gamma: bool,
    a: [f64; 2],
    b: [f64; 2],
) -> f64 {
    match mode {
        KernelMode::Exact => rff::gaussian_kernel_exact(a, b, cov),
        KernelMode::Rff(bases) => {
            let basis = if gamma { &bases.gamma } else { &bases.mu };
            rff::kernel_approx(a, b, cov, basis)
        }
    }
}

/// Base intensity `μ_u(s)`.
pub fn base_intensity(
    u: usize,
    s: [f64; 2],
    params: &HawkesParams,
    ctx: &Context<'_>,
    mode: KernelMode<'_>,
) -> f64 {
    let sum: f64 = ctx
        .base()
        .iter()
        .map(|e| {
            params.k_mu[[e.kind, u]] * spatial_kernel(mode, &params.cov_mu, false, s, e.location)
        })
        .sum();
    sum / ctx.base_horizon
}

/// Triggering intensity `γ_u(t, s)` from history events strictly before `t`.
pub fn triggering_intensity(
    u: usize,
    t: f64,
    s: [f64; 2],
    params: &HawkesParams,
    ctx: &Context<'_>,
    mode: KernelMode<'_>,
) -> f64 {
    let n = ctx.events.partition_point(|e| e.time < t);
    ctx.events[..n]
        .iter()
        .filter(|e| ctx.in_cutoff(t - e.time))
        .map(|e| {
            let k = params.k_gamma[[e.kind, u]];
            if k == 0.0 {
                return 0.0;
            }
            let rate = params.w[[e.kind, u]];
            k * rate
                * (-rate * (t - e.time)).exp()
                * spatial_kernel(mode, &params.cov_gamma, true, s, e.location)
        })
        .sum()
}

/// Pointwise `λ_u(t, s) = μ_u(s) + γ_u(t, s)`.
pub fn evaluate_intensity(
    u: usize,
    t: f64,
    s: [f64; 2],
    params: &HawkesParams,
    ctx: &Context<'_>,
    mode: KernelMode<'_>,
) -> Result<f64> {
    if u >= params.num_types() {
        return Err(Error::Domain(format!("unknown event type {}", u + 1)));
    }
    Ok(base_intensity(u, s, params, ctx, mode) + triggering_intensity(u, t, s, params, ctx, mode))
}

/// Compensator over the window `(a, b]`: the integral of `Σ_u λ_u` over time
/// and over the whole plane.
pub fn compensator_window(
    ctx: &Context<'_>,
    params: &HawkesParams,
    window: (f64, f64),
) -> Result<f64> {
    let (a, b) = window;
    if !(a <= b) {
        return Err(Error::Contract(format!(
            "reversed compensator window ({a}, {b}]"
        )));
    }
    let u_n = params.num_types();
    let mut base = 0.0;
    for e in ctx.base() {
        for u in 0..u_n {
            base += params.k_mu[[e.kind, u]];
        }
    }
    let mut total = if ctx.base_horizon > 0.0 {
        (b - a) / ctx.base_horizon * base
    } else {
        0.0
    };
    for e in ctx.events.iter().take_while(|e| e.time < b) {
        let lo = a.max(e.time);
        let hi = match ctx.cutoff {
            Some(tau) => b.min(e.time + tau),
            None => b,
        };
        if hi <= lo {
            continue;
        }
        for u in 0..u_n {
            let rate = params.w[[e.kind, u]];
            let k = params.k_gamma[[e.kind, u]];
            total += k * ((-rate * (lo - e.time)).exp() - (-rate * (hi - e.time)).exp());
        }
    }
    Ok(total)
}

/// Compensator over the sequence's whole window (the `R` term).
pub fn compensator_full(seq: &EventSequence, params: &HawkesParams) -> f64 {
    let ctx = Context::for_sequence(seq, None);
    compensator_window(&ctx, params, (seq.start(), seq.end())).expect("window of a valid sequence")
}

/// Compensator of the batch window `(t_start, t_end]` within `full`.
pub fn compensator_batch(
    bounds: (f64, f64),
    full: &EventSequence,
    params: &HawkesParams,
) -> Result<f64> {
    if bounds.0 > bounds.1 || bounds.0 < full.start() || bounds.1 > full.end() {
        return Err(Error::Contract(format!(
            "batch bounds {bounds:?} outside [{}, {}] or reversed",
            full.start(),
            full.end()
        )));
    }
    compensator_window(&Context::for_sequence(full, None), params, bounds)
}

/// Per-batch matrices of the explicit matrix formulation.
///
/// `a` follows the paper-style assembly `Q^(μ) K^(μ) + Q^(γ) K^(γ)` where the
/// decay vector of row `i` uses the row's own type, so only the entry
/// selected by `y` is an intensity. `intensities` holds `λ_u(t_i, s_i)` for
/// every type `u`.
#[derive(Debug, Clone)]
pub struct BatchMatrices {
    pub z_mu: Array2<f64>,
    pub z_gamma: Array2<f64>,
    /// Decay vector over `J(t_i)` for each batch row (own type).
    pub d: Vec<Vec<f64>>,
    pub y: Array2<f64>,
    pub n_mu: Array2<f64>,
    /// `N^(γ)(t_i)` (`D x U`) for each batch row.
    pub n_gamma: Vec<Array2<f64>>,
    pub q_mu: Array2<f64>,
    pub q_gamma: Array2<f64>,
    pub a: Array2<f64>,
    pub intensities: Array2<f64>,
    /// Compensator of the span window.
    pub compensator: f64,
}

impl BatchMatrices {
    /// `-sum(log(A) ⊙ Y) + R`.
    pub fn nll(&self) -> Result<f64> {
        let mut log_term = 0.0;
        for (i, (arow, yrow)) in self.a.rows().into_iter().zip(self.y.rows()).enumerate() {
            for (a, y) in arow.iter().zip(yrow.iter()) {
                if *y != 0.0 {
                    if !(*a > INTENSITY_FLOOR) {
                        return Err(Error::IntensityFloor {
                            event: i,
                            value: *a,
                        });
                    }
                    log_term -= a.ln();
                }
            }
        }
        Ok(log_term + self.compensator)
    }
}

/// Which intensity component [`aggregate`] sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    /// All base-set events, unweighted.
    Base,
    /// Events strictly before `t` within the cutoff, weighted by the decay
    /// towards `eval_type`.
    Triggering { eval_type: usize },
}

/// `D x U` feature aggregate `κ Zᵀ diag(d) Y` over the component's events
/// (`d = 1` for the base).
pub fn aggregate(
    ctx: &Context<'_>,
    t: f64,
    params: &HawkesParams,
    bases: &FeatureBases,
    component: Component,
) -> Result<Array2<f64>> {
    let u_n = params.num_types();
    let (events, weights, cov, basis) = match component {
        Component::Base => {
            let base = ctx.base().to_vec();
            let ones = vec![1.0; base.len()];
            (base, ones, &params.cov_mu, &bases.mu)
        }
        Component::Triggering { eval_type } => {
            if eval_type >= u_n {
                return Err(Error::Domain(format!(
                    "unknown event type {}",
                    eval_type + 1
                )));
            }
            let hist = ctx.history_before(t);
            let d = decay_vector(t, &hist, eval_type, &params.w)?;
            (hist, d, &params.cov_gamma, &bases.gamma)
        }
    };
    let locs: Vec<[f64; 2]> = events.iter().map(|e| e.location).collect();
    let z = rff::embed(&locs, cov, basis);
    let mut weighted = Array2::zeros((events.len(), u_n));
    for (j, e) in events.iter().enumerate() {
        if e.kind >= u_n {
            return Err(Error::Domain(format!("unknown event type {}", e.kind + 1)));
        }
        weighted[[j, e.kind]] = weights[j];
    }
    Ok(z.t().dot(&weighted) * cov.normaliser())
}

/// Builds the batch matrices row by row from explicit history matrices.
pub fn intensity_matrix(
    ctx: &Context<'_>,
    span: &Span,
    params: &HawkesParams,
    bases: &FeatureBases,
) -> Result<BatchMatrices> {
    if span.events.end > ctx.events.len() || span.events.start > span.events.end {
        return Err(Error::Contract("batch not contained in the history".into()));
    }
    let u_n = params.num_types();
    let batch = &ctx.events[span.events.clone()];
    let nb = batch.len();
    let locs: Vec<[f64; 2]> = batch.iter().map(|e| e.location).collect();
    let z_mu = rff::embed(&locs, &params.cov_mu, &bases.mu);
    let z_gamma = rff::embed(&locs, &params.cov_gamma, &bases.gamma);

    let mut y = Array2::zeros((nb, u_n));
    for (i, e) in batch.iter().enumerate() {
        y[[i, e.kind]] = 1.0;
    }

    let n_mu = aggregate(ctx, span.window.1, params, bases, Component::Base)?;
    let q_mu = z_mu.dot(&n_mu) / ctx.base_horizon;

    let mut d_rows = Vec::with_capacity(nb);
    let mut n_gamma = Vec::with_capacity(nb);
    let mut q_gamma = Array2::zeros((nb, u_n));
    let mut trig_full = Array2::<f64>::zeros((nb, u_n));
    for (i, e) in batch.iter().enumerate() {
        let hist = ctx.history_before(e.time);
        let zi = z_gamma.row(i);
        // one aggregate per target type; the own-type decay is the paper's d
        let mut own = None;
        for u in 0..u_n {
            let n_g = aggregate(
                ctx,
                e.time,
                params,
                bases,
                Component::Triggering { eval_type: u },
            )?;
            let q_row = zi.dot(&n_g);
            trig_full[[i, u]] = (0..u_n).map(|a| q_row[a] * params.k_gamma[[a, u]]).sum();
            if u == e.kind {
                q_gamma.row_mut(i).assign(&q_row);
                own = Some((decay_vector(e.time, &hist, u, &params.w)?, n_g));
            }
        }
        let (d, n_g) = own.expect("event type within range");
        d_rows.push(d);
        n_gamma.push(n_g);
    }
    let a = q_mu.dot(&params.k_mu) + q_gamma.dot(&params.k_gamma);
    let intensities = q_mu.dot(&params.k_mu) + &trig_full;
    let compensator = compensator_window(ctx, params, span.window)?;
    Ok(BatchMatrices {
        z_mu,
        z_gamma,
        d: d_rows,
        y,
        n_mu,
        n_gamma,
        q_mu,
        q_gamma,
        a,
        intensities,
        compensator,
    })
}

/// Terms recorded for one evaluation event during the forward pass.
#[derive(Debug, Clone)]
pub(crate) struct RowTerms {
    /// `Q^(μ)` row (length `U`).
    pub q_mu: Vec<f64>,
    /// `κγ w[a,u] z_iᵀ P[a,u]` for every `(a, u)`, row-major `U x U`.
    pub g: Vec<f64>,
    /// `λ_u(t_i, s_i)` for every `u`.
    pub a: Vec<f64>,
    /// `∂λ_{u_i}/∂w[a, u_i]` for every source type `a`.
    pub dw: Vec<f64>,
    /// `∂λ_{u_i}/∂z^(γ)_i` (length `D`).
    pub dz_gamma: Vec<f64>,
}

/// Output of the linear-time likelihood pass.
pub(crate) struct Forward {
    pub feats_mu: Features,
    pub feats_gamma: Features,
    /// Base aggregates `M_a = Σ_{j ∈ base, u_j = a} z^(μ)_j`, row-major `U x D`.
    pub base_sums: Vec<f64>,
    pub rows: Vec<RowTerms>,
}

impl Forward {
    pub fn run(
        ctx: &Context<'_>,
        span: &Span,
        params: &HawkesParams,
        bases: &FeatureBases,
        with_grad: bool,
    ) -> Result<Self> {
        let n = span.events.end;
        if n > ctx.events.len() || span.events.start > n {
            return Err(Error::Contract("span not contained in the history".into()));
        }
        if ctx.base_len > ctx.events.len() {
            return Err(Error::Contract("base set longer than the history".into()));
        }
        let u_n = params.num_types();
        let dim = bases.dim();
        let ev = ctx.events;
        let n_mu = n.max(ctx.base_len);
        let feats_mu = Features::compute(
            ev[..n_mu].iter().map(|e| e.location),
            &params.cov_mu,
            &bases.mu,
            with_grad,
        );
        let feats_gamma = Features::compute(
            ev[..n].iter().map(|e| e.location),
            &params.cov_gamma,
            &bases.gamma,
            with_grad,
        );

        let mut base_sums = vec![0.0; u_n * dim];
        for (j, e) in ev[..ctx.base_len].iter().enumerate() {
            let zj = feats_mu.row(j);
            let m = &mut base_sums[e.kind * dim..(e.kind + 1) * dim];
            for d in 0..dim {
                m[d] += zj[d];
            }
        }

        let kappa_mu = params.cov_mu.normaliser() / ctx.base_horizon;
        let kappa_g = params.cov_gamma.normaliser();
        let w = &params.w;
        let pairs = u_n * u_n;
        // decayed sums P[a,u] = Σ_j exp(-w (t - t_j)) z_j and, for the decay
        // gradient, P'[a,u] = Σ_j (t - t_j) exp(-w (t - t_j)) z_j
        let mut p = vec![0.0; pairs * dim];
        let mut pp = vec![0.0; if with_grad { pairs * dim } else { 0 }];
        let mut rows = Vec::with_capacity(span.events.len());
        let mut t_cur = ev.first().map_or(0.0, |e| e.time);
        let mut oldest = 0usize;
        let mut i = 0usize;
        while i < n {
            let t = ev[i].time;
            let mut group_end = i + 1;
            while group_end < n && ev[group_end].time == t {
                group_end += 1;
            }
            let dt = t - t_cur;
            if dt > 0.0 {
                for a in 0..u_n {
                    for u in 0..u_n {
                        let k = a * u_n + u;
                        let f = (-w[[a, u]] * dt).exp();
                        let ps = &mut p[k * dim..(k + 1) * dim];
                        if with_grad {
                            let pps = &mut pp[k * dim..(k + 1) * dim];
                            for d in 0..dim {
                                pps[d] = f * (pps[d] + dt * ps[d]);
                            }
                        }
                        for v in ps.iter_mut() {
                            *v *= f;
                        }
                    }
                }
                t_cur = t;
            }
            if let Some(tau) = ctx.cutoff {
                while oldest < i && t - ev[oldest].time > tau {
                    let e = &ev[oldest];
                    let zj = feats_gamma.row(oldest);
                    let lag = t - e.time;
                    for u in 0..u_n {
                        let k = e.kind * u_n + u;
                        let f = (-w[[e.kind, u]] * lag).exp();
                        for d in 0..dim {
                            p[k * dim + d] -= f * zj[d];
                        }
                        if with_grad {
                            for d in 0..dim {
                                pp[k * dim + d] -= lag * f * zj[d];
                            }
                        }
                    }
                    oldest += 1;
                }
            }
            for idx in i.max(span.events.start)..group_end {
                let e = &ev[idx];
                let zm = feats_mu.row(idx);
                let zg = feats_gamma.row(idx);
                let q_mu: Vec<f64> = (0..u_n)
                    .map(|a| kappa_mu * dot(zm, &base_sums[a * dim..(a + 1) * dim]))
                    .collect();
                let mut g = vec![0.0; pairs];
                for a in 0..u_n {
                    for u in 0..u_n {
                        let k = a * u_n + u;
                        g[k] = kappa_g * w[[a, u]] * dot(zg, &p[k * dim..(k + 1) * dim]);
                    }
                }
                let a_row: Vec<f64> = (0..u_n)
                    .map(|u| {
                        (0..u_n)
                            .map(|a| {
                                q_mu[a] * params.k_mu[[a, u]]
                                    + g[a * u_n + u] * params.k_gamma[[a, u]]
                            })
                            .sum()
                    })
                    .collect();
                let (dw, dz_gamma) = if with_grad {
                    let ui = e.kind;
                    let mut dw = vec![0.0; u_n];
                    let mut dz = vec![0.0; dim];
                    for a in 0..u_n {
                        let k = a * u_n + ui;
                        let (kg, rate) = (params.k_gamma[[a, ui]], w[[a, ui]]);
                        let ps = &p[k * dim..(k + 1) * dim];
                        let pps = &pp[k * dim..(k + 1) * dim];
                        let mut acc = 0.0;
                        for d in 0..dim {
                            acc += zg[d] * (ps[d] - rate * pps[d]);
                            dz[d] += kappa_g * kg * rate * ps[d];
                        }
                        dw[a] = kappa_g * kg * acc;
                    }
                    (dw, dz)
                } else {
                    (Vec::new(), Vec::new())
                };
                rows.push(RowTerms {
                    q_mu,
                    g,
                    a: a_row,
                    dw,
                    dz_gamma,
                });
            }
            for idx in i..group_end {
                let kind = ev[idx].kind;
                let zg = feats_gamma.row(idx);
                for u in 0..u_n {
                    let k = kind * u_n + u;
                    for d in 0..dim {
                        p[k * dim + d] += zg[d];
                    }
                }
            }
            i = group_end;
        }
        Ok(Self {
            feats_mu,
            feats_gamma,
            base_sums,
            rows,
        })
    }

    /// `-Σ log λ_{u_i}(t_i, s_i)` over the span, checking the positivity floor.
    pub fn log_term(&self, ctx: &Context<'_>, span: &Span) -> Result<f64> {
        let mut acc = 0.0;
        for (row, idx) in self.rows.iter().zip(span.events.clone()) {
            let a = row.a[ctx.events[idx].kind];
            if !(a > INTENSITY_FLOOR) {
                return Err(Error::IntensityFloor {
                    event: idx,
                    value: a,
                });
            }
            acc -= a.ln();
        }
        Ok(acc)
    }
}

/// Negative log-likelihood of the span: `-Σ log λ + compensator`.
pub fn nll(
    ctx: &Context<'_>,
    span: &Span,
    params: &HawkesParams,
    bases: &FeatureBases,
) -> Result<f64> {
    let fwd = Forward::run(ctx, span, params, bases, false)?;
    let log_term = fwd.log_term(ctx, span)?;
    let value = log_term + compensator_window(ctx, params, span.window)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite negative log-likelihood {value}"
        )));
    }
    Ok(value)
}

/// Per-event intensities `λ_u(t_i, s_i)` (all types) for the span, via the linear pass.
pub fn span_intensities(
    ctx: &Context<'_>,
    span: &Span,
    params: &HawkesParams,
    bases: &FeatureBases,
) -> Result<Array2<f64>> {
    let fwd = Forward::run(ctx, span, params, bases, false)?;
    let u_n = params.num_types();
    let mut out = Array2::zeros((fwd.rows.len(), u_n));
    for (i, row) in fwd.rows.iter().enumerate() {
        for u in 0..u_n {
            out[[i, u]] = row.a[u];
        }
    }
    Ok(out)
}

/// Negative log-likelihood with pointwise intensity evaluation in either kernel mode.
///
/// Quadratic in the history length; meant for diagnostics and small data.
pub fn nll_pointwise(
    ctx: &Context<'_>,
    span: &Span,
    params: &HawkesParams,
    mode: KernelMode<'_>,
) -> Result<f64> {
    let mut acc = 0.0;
    for idx in span.events.clone() {
        let e = &ctx.events[idx];
        let lam = evaluate_intensity(e.kind, e.time, e.location, params, ctx, mode)?;
        if !(lam > INTENSITY_FLOOR) {
            return Err(Error::IntensityFloor {
                event: idx,
                value: lam,
            });
        }
        acc -= lam.ln();
    }
    Ok(acc + compensator_window(ctx, params, span.window)?)
}

/// Model families compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Poisson,
    SpatialPoisson,
    Hawkes,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Poisson => "poisson",
            ModelKind::SpatialPoisson => "spatial-poisson",
            ModelKind::Hawkes => "hawkes",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(ModelKind::Poisson),
            "spatial-poisson" | "spatial_poisson" => Ok(ModelKind::SpatialPoisson),
            "hawkes" => Ok(ModelKind::Hawkes),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// Free parameters per model. Each covariance counts its 4 eigenvector and 2
/// eigenvalue entries.
pub fn count_parameters(model: ModelKind, num_types: usize) -> usize {
    let u2 = num_types * num_types;
    match model {
        ModelKind::Poisson => num_types,
        ModelKind::SpatialPoisson => u2 + 6,
        ModelKind::Hawkes => 3 * u2 + 12,
    }
}

/// Akaike information criterion `2 L + 2 p` from the total (not per-event) NLL.
pub fn aic(total_nll: f64, p: usize) -> f64 {
    2.0 * total_nll + 2.0 * p as f64
}
