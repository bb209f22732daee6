//! Thinning simulation of multi-type spatio-temporal Hawkes processes.
//!
//! Candidates arrive at rate `λ̄ |S|` for a dominating bound `λ̄` on the
//! intensity density, land uniformly on the domain `S` and are kept with
//! probability `λ(t, s) / λ̄`; the type of a kept event is drawn from the
//! per-type intensities at that point.
//!
//! The background intensity is anchored: each anchor of type `a` at `c`
//! contributes `K^(μ)[a, u] g(s, c; Σμ)` to `μ_u(s)`. By default there is one
//! anchor per type at the centre of the domain.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{EventRecord, EventSequence, Rect};
use crate::intensity::HawkesParams;
use crate::rff::gaussian_kernel_exact;

/// Multiplier applied to the grid maximum.
pub const SAFETY_FACTOR: f64 = 1.2;

/// How the type of an accepted event is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TypeSampling {
    /// `p(u) ∝ exp(-λ_u)`.
    #[default]
    Verbatim,
    /// `p(u) ∝ λ_u`.
    Proportional,
}

/// Background source: `K^(μ)[kind, ·]` times a Gaussian centred at `location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseAnchor {
    pub kind: usize,
    pub location: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub params: HawkesParams,
    pub duration: f64,
    pub domain: Rect,
    pub grid_resolution: usize,
    pub history_cutoff: f64,
    pub seed: u64,
    pub type_sampling: TypeSampling,
    /// Empty means one anchor per type at the domain centre.
    pub base_anchors: Vec<BaseAnchor>,
    /// Stop after this many events; the sequence then ends at the last event.
    pub max_events: Option<usize>,
}

impl SimConfig {
    pub fn new(params: HawkesParams, duration: f64, domain: Rect, seed: u64) -> Self {
        Self {
            params,
            duration,
            domain,
            grid_resolution: 50,
            history_cutoff: 100.0,
            seed,
            type_sampling: TypeSampling::Verbatim,
            base_anchors: Vec::new(),
            max_events: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::Config(format!(
                "duration must be finite and non-negative, got {}",
                self.duration
            )));
        }
        if self.grid_resolution < 2 {
            return Err(Error::Config("grid_resolution must be at least 2".into()));
        }
        if !(self.history_cutoff > 0.0) {
            return Err(Error::Config("history_cutoff must be positive".into()));
        }
        let u_n = self.params.num_types();
        if let Some(a) = self.base_anchors.iter().find(|a| a.kind >= u_n) {
            return Err(Error::Config(format!(
                "base anchor type {} exceeds {u_n} types",
                a.kind + 1
            )));
        }
        if self.max_events == Some(0) {
            return Err(Error::Config("max_events must be positive".into()));
        }
        Ok(())
    }

    fn anchors(&self) -> Vec<BaseAnchor> {
        if self.base_anchors.is_empty() {
            (0..self.params.num_types())
                .map(|kind| BaseAnchor {
                    kind,
                    location: self.domain.center(),
                })
                .collect()
        } else {
            self.base_anchors.clone()
        }
    }
}

/// Background intensity `μ_u(s)` for every type.
pub fn base_intensities(s: [f64; 2], config: &SimConfig) -> Vec<f64> {
    let p = &config.params;
    let mut out = vec![0.0; p.num_types()];
    for a in config.anchors() {
        let g = gaussian_kernel_exact(s, a.location, &p.cov_mu);
        for (u, o) in out.iter_mut().enumerate() {
            *o += p.k_mu[[a.kind, u]] * g;
        }
    }
    out
}

/// Per-type intensities at `(t, s)` from the anchored background and the
/// history strictly before `t` within the cutoff.
pub fn intensities_at(
    t: f64,
    s: [f64; 2],
    history: &[EventRecord],
    config: &SimConfig,
) -> Vec<f64> {
    let p = &config.params;
    let mut out = base_intensities(s, config);
    for e in history.iter().rev() {
        let lag = t - e.time;
        if lag <= 0.0 {
            continue;
        }
        if lag > config.history_cutoff {
            break;
        }
        let g = gaussian_kernel_exact(s, e.location, &p.cov_gamma);
        for (u, o) in out.iter_mut().enumerate() {
            let w = p.w[[e.kind, u]];
            *o += p.k_gamma[[e.kind, u]] * w * (-w * lag).exp() * g;
        }
    }
    out
}

/// Maximum of `Σ_u λ_u(t, ·)` over a `resolution x resolution` grid (boundaries included).
pub fn grid_max_intensity(
    t: f64,
    history: &[EventRecord],
    config: &SimConfig,
    resolution: usize,
) -> f64 {
    config
        .domain
        .grid(resolution)
        .into_iter()
        .map(|s| intensities_at(t, s, history, config).iter().sum::<f64>())
        .fold(0.0, f64::max)
}

/// Thinning bound at `t`: the safety factor times the grid maximum.
pub fn estimate_lambda_bar(t: f64, history: &[EventRecord], config: &SimConfig) -> f64 {
    SAFETY_FACTOR * grid_max_intensity(t, history, config, config.grid_resolution)
}

/// Draws an event type from per-type intensities.
pub fn sample_type(intensities: &[f64], mode: TypeSampling, rng: &mut impl Rng) -> Result<usize> {
    if intensities.is_empty() || intensities.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain(format!(
            "invalid intensities {intensities:?}"
        )));
    }
    let probs = type_probabilities(intensities, mode);
    let v: f64 = rng.random();
    let mut acc = 0.0;
    for (u, p) in probs.iter().enumerate() {
        acc += p;
        if v < acc {
            return Ok(u);
        }
    }
    Ok(probs.len() - 1)
}

/// Type distribution used by [`sample_type`].
pub fn type_probabilities(intensities: &[f64], mode: TypeSampling) -> Vec<f64> {
    let weights: Vec<f64> = match mode {
        TypeSampling::Verbatim => {
            let lo = intensities.iter().cloned().fold(f64::INFINITY, f64::min);
            intensities.iter().map(|l| (-(l - lo)).exp()).collect()
        }
        TypeSampling::Proportional => {
            if intensities.iter().all(|l| *l == 0.0) {
                warn!("all intensities are zero; drawing the event type uniformly");
                vec![1.0; intensities.len()]
            } else {
                intensities.to_vec()
            }
        }
    };
    let total: f64 = weights.iter().sum();
    weights.iter().map(|w| w / total).collect()
}

/// Triggering contributions on the bound grid, updated incrementally.
///
/// `pairs[a * U + u][k]` holds `Σ_j K^(γ)[a,u] w[a,u] e^{-w[a,u](t - t_j)} g(s_k, s_j)`
/// over tracked type-`a` events.
struct BoundGrid {
    points: Vec<[f64; 2]>,
    base: Vec<f64>,
    pairs: Vec<Vec<f64>>,
    time: f64,
    oldest: usize,
}

impl BoundGrid {
    fn new(config: &SimConfig) -> Self {
        let points = config.domain.grid(config.grid_resolution);
        let base = points
            .iter()
            .map(|s| base_intensities(*s, config).iter().sum())
            .collect();
        let u_n = config.params.num_types();
        let pairs = vec![vec![0.0; points.len()]; u_n * u_n];
        Self {
            points,
            base,
            pairs,
            time: 0.0,
            oldest: 0,
        }
    }

    fn advance(&mut self, t: f64, events: &[EventRecord], config: &SimConfig) {
        let p = &config.params;
        let u_n = p.num_types();
        let dt = t - self.time;
        if dt > 0.0 {
            for a in 0..u_n {
                for u in 0..u_n {
                    let f = (-p.w[[a, u]] * dt).exp();
                    self.pairs[a * u_n + u].iter_mut().for_each(|v| *v *= f);
                }
            }
            self.time = t;
        }
        while self.oldest < events.len() && t - events[self.oldest].time > config.history_cutoff {
            self.apply(&events[self.oldest], -1.0, config);
            self.oldest += 1;
        }
    }

    fn apply(&mut self, e: &EventRecord, sign: f64, config: &SimConfig) {
        let p = &config.params;
        let u_n = p.num_types();
        let lag = self.time - e.time;
        for (k, s) in self.points.iter().enumerate() {
            let g = gaussian_kernel_exact(*s, e.location, &p.cov_gamma);
            for u in 0..u_n {
                let w = p.w[[e.kind, u]];
                self.pairs[e.kind * u_n + u][k] +=
                    sign * p.k_gamma[[e.kind, u]] * w * (-w * lag).exp() * g;
            }
        }
    }

    fn max(&self) -> f64 {
        let mut best = 0.0f64;
        for k in 0..self.points.len() {
            let v = self.base[k] + self.pairs.iter().map(|g| g[k]).sum::<f64>();
            best = best.max(v);
        }
        best
    }
}

/// Simulation output with thinning diagnostics.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub sequence: EventSequence,
    pub candidates: usize,
    pub accepted: usize,
    /// Largest observed `λ(t, s) / λ̄` over all candidates.
    pub max_bound_ratio: f64,
    /// True when `max_events` stopped the run before the horizon.
    pub truncated: bool,
}

impl SimOutput {
    pub fn acceptance_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.accepted as f64 / self.candidates as f64
        }
    }
}

/// Runs the thinning algorithm.
pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    config.validate()?;
    let u_n = config.params.num_types();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut events: Vec<EventRecord> = Vec::new();
    if config.duration == 0.0 {
        warn!("zero duration: the simulated sequence is empty");
        return Ok(SimOutput {
            sequence: EventSequence::new(events, u_n, config.domain, 0.0, 0.0)?,
            candidates: 0,
            accepted: 0,
            max_bound_ratio: 0.0,
            truncated: false,
        });
    }
    let mut grid = BoundGrid::new(config);
    let mut t = 0.0;
    let mut lambda_bar = SAFETY_FACTOR * grid.max();
    let mut estimated_at = 0.0;
    let (mut candidates, mut max_ratio, mut truncated) = (0usize, 0.0f64, false);
    let d = config.domain;
    let area = d.area();
    loop {
        if !(lambda_bar > 0.0) {
            // nothing can happen any more
            break;
        }
        // λ̄ bounds a density per unit area, so candidates arrive at λ̄ |S|
        let q: f64 = 1.0 - rng.random::<f64>();
        t += -q.ln() / (lambda_bar * area);
        if t > config.duration {
            break;
        }
        candidates += 1;
        let s = [
            rng.random_range(d.x_lo..=d.x_hi),
            rng.random_range(d.y_lo..=d.y_hi),
        ];
        let v: f64 = rng.random();
        let lam = intensities_at(t, s, &events, config);
        let total: f64 = lam.iter().sum();
        max_ratio = max_ratio.max(total / lambda_bar);
        if total > lambda_bar {
            return Err(Error::Soundness {
                t,
                intensity: total,
                bound: lambda_bar,
            });
        }
        if total > v * lambda_bar {
            let kind = sample_type(&lam, config.type_sampling, &mut rng)?;
            let e = EventRecord::new(kind, t, s);
            grid.advance(t, &events, config);
            grid.apply(&e, 1.0, config);
            events.push(e);
            lambda_bar = SAFETY_FACTOR * grid.max();
            estimated_at = t;
            if config.max_events.is_some_and(|m| events.len() >= m) {
                truncated = true;
                break;
            }
        } else if t - estimated_at > 1.0 / (lambda_bar * area) {
            grid.advance(t, &events, config);
            lambda_bar = SAFETY_FACTOR * grid.max();
            estimated_at = t;
        }
    }
    let accepted = events.len();
    let end = if truncated {
        events.last().map_or(config.duration, |e| e.time)
    } else {
        config.duration
    };
    Ok(SimOutput {
        sequence: EventSequence::new(events, u_n, config.domain, 0.0, end)?,
        candidates,
        accepted,
        max_bound_ratio: max_ratio,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rff::CovarianceParams;
    use ndarray::{array, Array2};

    fn flat_config(mu: f64, duration: f64, seed: u64) -> SimConfig {
        // a very wide Gaussian is flat over the unit square to 1e-6
        let var = 1e6;
        let k = mu * 2.0 * std::f64::consts::PI * var;
        let p = HawkesParams::new(
            array![[k]],
            array![[0.0]],
            array![[1.0]],
            CovarianceParams::isotropic(var).unwrap(),
            CovarianceParams::isotropic(1.0).unwrap(),
        )
        .unwrap();
        SimConfig::new(p, duration, Rect::symmetric(1.0), seed)
    }

    fn sim3(seed: u64) -> SimConfig {
        let p = HawkesParams::new(
            array![[0.01, 0.005], [0.01, 0.02]],
            array![[1.0, 0.5], [1.0, 2.0]],
            array![[2.0, 1.0], [1.0, 4.0]],
            CovarianceParams::isotropic(0.01).unwrap(),
            CovarianceParams::isotropic(0.04).unwrap(),
        )
        .unwrap();
        let mut c = SimConfig::new(p, 1e5, Rect::symmetric(1.0), seed);
        c.max_events = Some(300);
        c.type_sampling = TypeSampling::Proportional;
        c
    }

    #[test]
    fn type_probability_examples() {
        for m in [TypeSampling::Verbatim, TypeSampling::Proportional] {
            let p = type_probabilities(&[1.0, 1.0], m);
            assert!((p[0] - 0.5).abs() < 1e-15);
        }
        let p = type_probabilities(&[0.0, 2f64.ln()], TypeSampling::Verbatim);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        let p = type_probabilities(&[1.0, 3.0], TypeSampling::Proportional);
        assert_eq!(p, vec![0.25, 0.75]);
        let p = type_probabilities(&[0.0, 0.0, 0.0], TypeSampling::Proportional);
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_type(&[1.0, -1.0], TypeSampling::Verbatim, &mut rng).is_err());
    }

    #[test]
    fn flat_bound_is_constant() {
        let c = flat_config(0.5, 10.0, 0);
        let lb = estimate_lambda_bar(0.0, &[], &c);
        assert!((lb - 0.5 * SAFETY_FACTOR).abs() < 1e-6);
    }

    #[test]
    fn bound_dominates_grid_and_nests() {
        let c = sim3(1);
        let out = simulate(&c).unwrap();
        let hist = out.sequence.events();
        let t = hist[hist.len() / 2].time + 0.01;
        let h = &hist[..hist.len() / 2 + 1];
        let coarse = grid_max_intensity(t, h, &c, 20);
        let fine = grid_max_intensity(t, h, &c, 39);
        assert!(fine >= coarse * (1.0 - 1e-12));
        let lb = estimate_lambda_bar(t, h, &c);
        for s in c.domain.grid(c.grid_resolution) {
            assert!(intensities_at(t, s, h, &c).iter().sum::<f64>() <= lb);
        }
    }

    #[test]
    fn incremental_grid_matches_direct_bound() {
        let c = sim3(2);
        let out = simulate(&c).unwrap();
        let ev = out.sequence.events();
        let mut g = BoundGrid::new(&c);
        for (i, e) in ev.iter().enumerate().take(120) {
            g.advance(e.time, &ev[..i], &c);
            g.apply(e, 1.0, &c);
        }
        let t = ev[119].time + 0.3;
        g.advance(t, &ev[..120], &c);
        let direct = grid_max_intensity(t, &ev[..120], &c, c.grid_resolution);
        assert!((g.max() - direct).abs() <= 1e-9 * direct);
    }

    #[test]
    fn output_invariants_and_determinism() {
        let c = sim3(3);
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.sequence, b.sequence);
        assert!(a.truncated);
        assert_eq!(a.sequence.len(), 300);
        assert!(a.max_bound_ratio <= 1.0);
        let ev = a.sequence.events();
        assert!(ev.windows(2).all(|w| w[0].time < w[1].time));
        assert!(ev
            .iter()
            .all(|e| c.domain.contains(e.location) && e.time <= a.sequence.end()));
    }

    #[test]
    fn zero_duration_is_empty() {
        let out = simulate(&flat_config(1.0, 0.0, 0)).unwrap();
        assert!(out.sequence.is_empty());
    }

    #[test]
    fn poisson_counts_are_calibrated() {
        let (mu, t) = (2.0, 50.0);
        let mean = mu * t * 4.0;
        for seed in 0..5 {
            let n = simulate(&flat_config(mu, t, seed)).unwrap().sequence.len() as f64;
            assert!((n - mean).abs() < 4.0 * mean.sqrt(), "{n} vs {mean}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut c = flat_config(1.0, 1.0, 0);
        c.grid_resolution = 1;
        assert!(matches!(simulate(&c), Err(Error::Config(_))));
        let mut c = flat_config(1.0, 1.0, 0);
        c.base_anchors = vec![BaseAnchor {
            kind: 3,
            location: [0.0, 0.0],
        }];
        assert!(simulate(&c).is_err());
        let mut c = flat_config(1.0, 1.0, 0);
        c.params.w = Array2::zeros((1, 1));
        assert!(simulate(&c).is_err());
    }
}
