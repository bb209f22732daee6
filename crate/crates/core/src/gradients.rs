//! Analytic gradients of the negative log-likelihood and a finite-difference oracle.
//!
//! The log term is differentiated with an adjoint sweep over the same
//! decayed feature sums used by the forward pass: excitation and decay
//! gradients come straight from the recorded row terms, while the feature
//! gradients are pushed back through the embedding onto `V` and `ℓ`. The
//! compensator contributes closed-form terms for `K` and `W` only.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventRecord, EventSequence, Rect};
use crate::intensity::{compensator_window, Context, Forward, HawkesParams, Span};
use crate::linalg::Mat2;
use crate::rff::{CovarianceParams, FeatureBases, Features, RffBasis};

/// Gradient with the same block structure as [`HawkesParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub d_k_mu: Array2<f64>,
    pub d_k_gamma: Array2<f64>,
    pub d_w: Array2<f64>,
    pub d_v_mu: Mat2,
    pub d_v_gamma: Mat2,
    pub d_l_mu: [f64; 2],
    pub d_l_gamma: [f64; 2],
}

/// Block names in reporting order.
pub const BLOCK_NAMES: [&str; 7] = ["k_mu", "k_gamma", "w", "v_mu", "v_gamma", "l_mu", "l_gamma"];

impl GradientSet {
    pub fn zeros(num_types: usize) -> Self {
        Self {
            d_k_mu: Array2::zeros((num_types, num_types)),
            d_k_gamma: Array2::zeros((num_types, num_types)),
            d_w: Array2::zeros((num_types, num_types)),
            d_v_mu: [[0.0; 2]; 2],
            d_v_gamma: [[0.0; 2]; 2],
            d_l_mu: [0.0; 2],
            d_l_gamma: [0.0; 2],
        }
    }

    /// Flattened blocks, ordered as [`BLOCK_NAMES`].
    pub fn blocks(&self) -> [Vec<f64>; 7] {
        let flat = |m: &Mat2| m.iter().flatten().copied().collect::<Vec<_>>();
        [
            self.d_k_mu.iter().copied().collect(),
            self.d_k_gamma.iter().copied().collect(),
            self.d_w.iter().copied().collect(),
            flat(&self.d_v_mu),
            flat(&self.d_v_gamma),
            self.d_l_mu.to_vec(),
            self.d_l_gamma.to_vec(),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.blocks().iter().flatten().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        self.d_k_mu += &other.d_k_mu;
        self.d_k_gamma += &other.d_k_gamma;
        self.d_w += &other.d_w;
        for m in 0..2 {
            for n in 0..2 {
                self.d_v_mu[m][n] += other.d_v_mu[m][n];
                self.d_v_gamma[m][n] += other.d_v_gamma[m][n];
            }
            self.d_l_mu[m] += other.d_l_mu[m];
            self.d_l_gamma[m] += other.d_l_gamma[m];
        }
    }
}

/// Compensator gradients for `K^(μ)`, `K^(γ)` and `W` over a window.
pub fn compensator_grad(
    ctx: &Context<'_>,
    params: &HawkesParams,
    window: (f64, f64),
    out: &mut GradientSet,
) {
    let (a, b) = window;
    let u_n = params.num_types();
    if ctx.base_horizon > 0.0 {
        let frac = (b - a) / ctx.base_horizon;
        for e in &ctx.events[..ctx.base_len] {
            for u in 0..u_n {
                out.d_k_mu[[e.kind, u]] += frac;
            }
        }
    }
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
            let (l0, l1) = (lo - e.time, hi - e.time);
            let (e0, e1) = ((-rate * l0).exp(), (-rate * l1).exp());
            out.d_k_gamma[[e.kind, u]] += e0 - e1;
            out.d_w[[e.kind, u]] += params.k_gamma[[e.kind, u]] * (l1 * e1 - l0 * e0);
        }
    }
}

/// Pushes feature gradients `∂L/∂z_j` back onto the eigenvectors and eigenvalues.
fn chain_features(
    feats: &Features,
    locations: impl Iterator<Item = [f64; 2]>,
    dz: &[f64],
    cov: &CovarianceParams,
    basis: &RffBasis,
) -> (Mat2, [f64; 2]) {
    let dim = feats.dim;
    // ∂L/∂F where the argument is sᵀ F + b and F = V diag(ℓ)^(-1/2) U
    let mut df = [vec![0.0; dim], vec![0.0; dim]];
    for (j, s) in locations.enumerate() {
        let g = &dz[j * dim..(j + 1) * dim];
        let dr = feats.drow(j);
        for d in 0..dim {
            let c = g[d] * dr[d];
            df[0][d] += s[0] * c;
            df[1][d] += s[1] * c;
        }
    }
    let v = &cov.eigvecs;
    let mut dv = [[0.0; 2]; 2];
    let mut dl = [0.0; 2];
    for n in 0..2 {
        let u = &basis.directions[n];
        let inv_sqrt = 1.0 / cov.eigvals[n].sqrt();
        let mut acc = 0.0;
        for m in 0..2 {
            let s: f64 = (0..dim).map(|d| df[m][d] * u[d]).sum();
            dv[m][n] = s * inv_sqrt;
            acc += s * v[m][n];
        }
        dl[n] = -0.5 * inv_sqrt.powi(3) * acc;
    }
    (dv, dl)
}

/// Negative log-likelihood of the span and its gradient with respect to every parameter block.
pub fn grad_all(
    ctx: &Context<'_>,
    span: &Span,
    params: &HawkesParams,
    bases: &FeatureBases,
) -> Result<(f64, GradientSet)> {
    let fwd = Forward::run(ctx, span, params, bases, true)?;
    let log_term = fwd.log_term(ctx, span)?;
    let value = log_term + compensator_window(ctx, params, span.window)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite negative log-likelihood {value}"
        )));
    }
    let u_n = params.num_types();
    let dim = bases.dim();
    let ev = ctx.events;
    let n = span.events.end;
    let kappa_mu = params.cov_mu.normaliser() / ctx.base_horizon;
    let kappa_g = params.cov_gamma.normaliser();

    let mut grad = GradientSet::zeros(u_n);
    let mut r = vec![0.0; n];
    let mut dz_mu = vec![0.0; fwd.feats_mu.len() * dim];
    let mut dz_g = vec![0.0; n * dim];
    let mut dm = vec![0.0; u_n * dim];
    let (mut mu_part, mut gamma_part) = (0.0, 0.0);

    for (row, idx) in fwd.rows.iter().zip(span.events.clone()) {
        let ui = ev[idx].kind;
        let ri = 1.0 / row.a[ui];
        r[idx] = ri;
        let zi = fwd.feats_mu.row(idx);
        let mut a_mu = 0.0;
        for a in 0..u_n {
            grad.d_k_mu[[a, ui]] -= ri * row.q_mu[a];
            grad.d_k_gamma[[a, ui]] -= ri * row.g[a * u_n + ui];
            grad.d_w[[a, ui]] -= ri * row.dw[a];
            a_mu += row.q_mu[a] * params.k_mu[[a, ui]];
            let c = ri * kappa_mu * params.k_mu[[a, ui]];
            let m = &fwd.base_sums[a * dim..(a + 1) * dim];
            let dzi = &mut dz_mu[idx * dim..(idx + 1) * dim];
            let dma = &mut dm[a * dim..(a + 1) * dim];
            for d in 0..dim {
                dzi[d] -= c * m[d];
                dma[d] -= c * zi[d];
            }
        }
        mu_part += ri * a_mu;
        gamma_part += ri * (row.a[ui] - a_mu);
        let dzi = &mut dz_g[idx * dim..(idx + 1) * dim];
        for d in 0..dim {
            dzi[d] -= ri * row.dz_gamma[d];
        }
    }
    for (j, e) in ev[..ctx.base_len].iter().enumerate() {
        let dzj = &mut dz_mu[j * dim..(j + 1) * dim];
        let dma = &dm[e.kind * dim..(e.kind + 1) * dim];
        for d in 0..dim {
            dzj[d] += dma[d];
        }
    }

    // Backward sweep: B[a,u] = Σ_{later evaluated i, u_i = u} r_i exp(-w[a,u] (t_i - t)) z_i
    let w = &params.w;
    let mut back = vec![0.0; u_n * u_n * dim];
    if n > 0 {
        let mut t_cur = ev[n - 1].time;
        // `back` holds evaluated events with index in j_end..newest
        let mut newest = n;
        let mut j_end = n;
        while j_end > 0 {
            let t = ev[j_end - 1].time;
            let mut j_start = j_end - 1;
            while j_start > 0 && ev[j_start - 1].time == t {
                j_start -= 1;
            }
            let dt = t_cur - t;
            if dt > 0.0 {
                for a in 0..u_n {
                    for u in 0..u_n {
                        let k = a * u_n + u;
                        let f = (-w[[a, u]] * dt).exp();
                        for v in &mut back[k * dim..(k + 1) * dim] {
                            *v *= f;
                        }
                    }
                }
                t_cur = t;
            }
            if let Some(tau) = ctx.cutoff {
                while newest > j_end && ev[newest - 1].time - t > tau {
                    let i = newest - 1;
                    if span.events.contains(&i) {
                        let zi = fwd.feats_gamma.row(i);
                        let ui = ev[i].kind;
                        let lag = ev[i].time - t;
                        for a in 0..u_n {
                            let k = a * u_n + ui;
                            let f = r[i] * (-w[[a, ui]] * lag).exp();
                            for d in 0..dim {
                                back[k * dim + d] -= f * zi[d];
                            }
                        }
                    }
                    newest -= 1;
                }
            }
            for j in j_start..j_end {
                let a = ev[j].kind;
                let dzj = &mut dz_g[j * dim..(j + 1) * dim];
                for u in 0..u_n {
                    let c = kappa_g * params.k_gamma[[a, u]] * w[[a, u]];
                    if c == 0.0 {
                        continue;
                    }
                    let k = a * u_n + u;
                    for d in 0..dim {
                        dzj[d] -= c * back[k * dim + d];
                    }
                }
            }
            for i in j_start..j_end {
                if !span.events.contains(&i) {
                    continue;
                }
                let zi = fwd.feats_gamma.row(i);
                let ui = ev[i].kind;
                for a in 0..u_n {
                    let k = a * u_n + ui;
                    for d in 0..dim {
                        back[k * dim + d] += r[i] * zi[d];
                    }
                }
            }
            j_end = j_start;
        }
    }

    let (dv, dl) = chain_features(
        &fwd.feats_mu,
        ev[..fwd.feats_mu.len()].iter().map(|e| e.location),
        &dz_mu,
        &params.cov_mu,
        &bases.mu,
    );
    grad.d_v_mu = dv;
    grad.d_l_mu = [
        dl[0] + mu_part / (2.0 * params.cov_mu.eigvals[0]),
        dl[1] + mu_part / (2.0 * params.cov_mu.eigvals[1]),
    ];
    let (dv, dl) = chain_features(
        &fwd.feats_gamma,
        ev[..n].iter().map(|e| e.location),
        &dz_g,
        &params.cov_gamma,
        &bases.gamma,
    );
    grad.d_v_gamma = dv;
    grad.d_l_gamma = [
        dl[0] + gamma_part / (2.0 * params.cov_gamma.eigvals[0]),
        dl[1] + gamma_part / (2.0 * params.cov_gamma.eigvals[1]),
    ];

    compensator_grad(ctx, params, span.window, &mut grad);
    if !grad.is_finite() {
        return Err(Error::Numerical("non-finite gradient".into()));
    }
    Ok((value, grad))
}

/// Coordinates of the parameter vector, named for error reporting.
fn coordinates(num_types: usize) -> Vec<(usize, usize, usize, String)> {
    let mut out = Vec::new();
    for (b, name) in BLOCK_NAMES.iter().enumerate() {
        let (rows, cols) = match b {
            0..=2 => (num_types, num_types),
            3 | 4 => (2, 2),
            _ => (1, 2),
        };
        for i in 0..rows {
            for j in 0..cols {
                let label = if b >= 5 {
                    format!("{name}[{j}]")
                } else {
                    format!("{name}[{i},{j}]")
                };
                out.push((b, i, j, label));
            }
        }
    }
    out
}

fn coord_mut(p: &mut HawkesParams, block: usize, i: usize, j: usize) -> &mut f64 {
    match block {
        0 => &mut p.k_mu[[i, j]],
        1 => &mut p.k_gamma[[i, j]],
        2 => &mut p.w[[i, j]],
        3 => &mut p.cov_mu.eigvecs[i][j],
        4 => &mut p.cov_gamma.eigvecs[i][j],
        5 => &mut p.cov_mu.eigvals[j],
        _ => &mut p.cov_gamma.eigvals[j],
    }
}

fn coord_set(g: &mut GradientSet, block: usize, i: usize, j: usize, v: f64) {
    match block {
        0 => g.d_k_mu[[i, j]] = v,
        1 => g.d_k_gamma[[i, j]] = v,
        2 => g.d_w[[i, j]] = v,
        3 => g.d_v_mu[i][j] = v,
        4 => g.d_v_gamma[i][j] = v,
        5 => g.d_l_mu[j] = v,
        _ => g.d_l_gamma[j] = v,
    }
}

/// Central differences of an arbitrary objective over every parameter coordinate.
///
/// Eigenvector entries are perturbed as raw matrix entries, without re-projection.
pub fn finite_diff_with(
    params: &HawkesParams,
    h: f64,
    f: impl Fn(&HawkesParams) -> Result<f64>,
) -> Result<GradientSet> {
    if !(h > 0.0) {
        return Err(Error::Contract(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let u_n = params.num_types();
    let mut out = GradientSet::zeros(u_n);
    let mut probe = params.clone();
    for (block, i, j, label) in coordinates(u_n) {
        let x0 = *coord_mut(&mut probe, block, i, j);
        let mut eval = |x: f64| -> Result<f64> {
            *coord_mut(&mut probe, block, i, j) = x;
            f(&probe).map_err(|e| Error::Oracle {
                coordinate: label.clone(),
                source: Box::new(e),
            })
        };
        let plus = eval(x0 + h)?;
        let minus = eval(x0 - h)?;
        *coord_mut(&mut probe, block, i, j) = x0;
        coord_set(&mut out, block, i, j, (plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Central differences of the span NLL.
pub fn finite_diff(
    ctx: &Context<'_>,
    span: &Span,
    params: &HawkesParams,
    bases: &FeatureBases,
    h: f64,
) -> Result<GradientSet> {
    finite_diff_with(params, h, |p| crate::intensity::nll(ctx, span, p, bases))
}

/// Relative disagreement `|g - f| / max(|g|, |f|, 1e-6)`.
pub fn relative_error(g: f64, f: f64) -> f64 {
    (g - f).abs() / g.abs().max(f.abs()).max(1e-6)
}

/// Per-block maximum relative error, with the worst coordinate index of each block.
pub fn compare(analytic: &GradientSet, numeric: &GradientSet) -> [(f64, usize); 7] {
    let a = analytic.blocks();
    let b = numeric.blocks();
    let mut out = [(0.0, 0); 7];
    for k in 0..7 {
        for (idx, (x, y)) in a[k].iter().zip(&b[k]).enumerate() {
            let e = relative_error(*x, *y);
            if e > out[k].0 || e.is_nan() {
                out[k] = (e, idx);
            }
        }
    }
    out
}

/// Logistic derivative of the softplus `(1/s) log(1 + e^(s x))`.
pub fn softplus_slope(x: f64, s: f64) -> f64 {
    let z = s * x;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Chains a constrained-space gradient through the softplus at `raw`.
pub fn chain_softplus(grad: &[f64], raw: &[f64], s: f64) -> Result<Vec<f64>> {
    if grad.len() != raw.len() {
        return Err(Error::Contract(format!(
            "gradient has {} entries but raw block has {}",
            grad.len(),
            raw.len()
        )));
    }
    Ok(grad
        .iter()
        .zip(raw)
        .map(|(g, x)| g * softplus_slope(*x, s))
        .collect())
}

/// Random instance for gradient verification: `n` events of `num_types`
/// types clustered near the origin of `[-1, 1]²`, with parameters whose
/// kernels are wide enough that low-dimensional feature maps keep every
/// intensity positive.
pub fn check_instance(
    seed: u64,
    n: usize,
    num_types: usize,
) -> Result<(EventSequence, HawkesParams)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = 0.0;
    let ev: Vec<_> = (0..n)
        .map(|_| {
            t += rng.random_range(0.05..1.5);
            EventRecord::new(
                rng.random_range(0..num_types),
                t,
                [rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4)],
            )
        })
        .collect();
    let seq = EventSequence::from_events(ev, num_types, Rect::symmetric(1.0), Some(t + 0.5))?;
    let mut m = |lo: f64, hi: f64| {
        Array2::from_shape_fn((num_types, num_types), |_| rng.random_range(lo..hi))
    };
    let k_mu = m(1.0, 3.0);
    let k_gamma = m(0.1, 0.5);
    let w = m(0.5, 2.0);
    let th: f64 = 0.4 + seed as f64;
    let rot = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
    let params = HawkesParams::new(
        k_mu,
        k_gamma,
        w,
        CovarianceParams::new(rot, [0.6, 0.4])?,
        CovarianceParams::new(crate::linalg::transpose(&rot), [0.15, 0.25])?,
    )?;
    Ok((seq, params))
}

/// Name of the `idx`-th coordinate of a gradient block, e.g. `w[1,0]`.
pub fn coordinate_label(num_types: usize, block: usize, idx: usize) -> String {
    coordinates(num_types)
        .into_iter()
        .filter(|c| c.0 == block)
        .nth(idx)
        .map(|c| c.3)
        .unwrap_or_else(|| format!("{}[?{idx}]", BLOCK_NAMES.get(block).unwrap_or(&"?")))
}

/// Settings for [`check_gradients`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckConfig {
    pub seeds: Vec<u64>,
    pub num_events: usize,
    pub num_types: usize,
    pub rff_dim: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Adds a relative error of 1e-3 to the named analytic block; used to
    /// confirm that the check can fail.
    pub perturb_block: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            seeds: (0..5).collect(),
            num_events: 50,
            num_types: 2,
            rff_dim: 10,
            step: 1e-5,
            tolerance: 1e-5,
            perturb_block: None,
        }
    }
}

/// Worst disagreement of one block over all instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub block: String,
    pub max_relative_error: f64,
    pub worst_coordinate: String,
    pub worst_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.max_relative_error <= self.tolerance)
    }

    pub fn worst(&self) -> &BlockCheck {
        self.blocks
            .iter()
            .max_by(|a, b| a.max_relative_error.total_cmp(&b.max_relative_error))
            .expect("seven blocks")
    }
}

/// Analytic against central-difference gradients on random instances.
pub fn check_gradients(config: &GradCheckConfig) -> Result<GradCheckReport> {
    if config.seeds.is_empty() {
        return Err(Error::Config(
            "gradient check needs at least one seed".into(),
        ));
    }
    let perturbed = match &config.perturb_block {
        Some(name) => Some(
            BLOCK_NAMES
                .iter()
                .position(|b| b == name)
                .ok_or_else(|| Error::Config(format!("unknown gradient block `{name}`")))?,
        ),
        None => None,
    };
    let mut blocks: Vec<BlockCheck> = BLOCK_NAMES
        .iter()
        .map(|b| BlockCheck {
            block: b.to_string(),
            max_relative_error: 0.0,
            worst_coordinate: String::new(),
            worst_seed: 0,
        })
        .collect();
    for &seed in &config.seeds {
        let (seq, params) = check_instance(seed, config.num_events, config.num_types)?;
        let bases = FeatureBases::shared(config.rff_dim, seed)?;
        let ctx = Context::for_sequence(&seq, None);
        let span = Span::whole(&seq);
        let (_, mut analytic) = grad_all(&ctx, &span, &params, &bases)?;
        if let Some(b) = perturbed {
            perturb_block(&mut analytic, b, 1e-3);
        }
        let numeric = finite_diff(&ctx, &span, &params, &bases, config.step)?;
        for (k, (err, idx)) in compare(&analytic, &numeric).into_iter().enumerate() {
            let entry = &mut blocks[k];
            if err > entry.max_relative_error || err.is_nan() || entry.worst_coordinate.is_empty() {
                entry.max_relative_error = err;
                entry.worst_coordinate = coordinate_label(config.num_types, k, idx);
                entry.worst_seed = seed;
            }
        }
    }
    Ok(GradCheckReport {
        blocks,
        tolerance: config.tolerance,
    })
}

fn perturb_block(g: &mut GradientSet, block: usize, size: f64) {
    let bump = |v: &mut f64| *v += size * v.abs().max(1.0);
    match block {
        0 => g.d_k_mu.iter_mut().for_each(bump),
        1 => g.d_k_gamma.iter_mut().for_each(bump),
        2 => g.d_w.iter_mut().for_each(bump),
        3 => g.d_v_mu.iter_mut().flatten().for_each(bump),
        4 => g.d_v_gamma.iter_mut().flatten().for_each(bump),
        5 => g.d_l_mu.iter_mut().for_each(bump),
        _ => g.d_l_gamma.iter_mut().for_each(bump),
    }
}
