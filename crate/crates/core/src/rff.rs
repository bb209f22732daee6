//! Random Fourier features for the bivariate Gaussian kernel.
//!
//! A covariance `Σ = V diag(ℓ) Vᵀ` is carried as its eigenvectors `V` and
//! eigenvalues `ℓ`. The embedding of a location `s` is
//!
//! ```text
//! z(s) = sqrt(2/D) * cos(sᵀ V diag(ℓ)^(-1/2) U + b)
//! ```
//!
//! with `U` a `2 x D` matrix of standard normal draws and `b` uniform phases,
//! so that `z(a)ᵀ z(b)` is an unbiased estimate of `exp(-½ (a-b)ᵀ Σ⁻¹ (a-b))`.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat2};

pub const MIN_DIM: usize = 1;
pub const MAX_DIM: usize = 5000;

/// Frozen random directions and phases defining a `dim`-dimensional feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffBasis {
    pub dim: usize,
    /// Row `n` holds the `n`-th coordinate of every direction (`2 x D`).
    pub directions: [Vec<f64>; 2],
    pub phases: Vec<f64>,
    pub seed: u64,
}

// Sine and cosine for the feature maps: Cody-Waite reduction by π/2 with a
// three-part constant, then the classic minimax kernels on [-π/4, π/4].
// Quadrant selection is branch-free; large arguments fall back to libm.
const P1: f64 = 1.57079632673412561417e+00;
const P2: f64 = 6.07710050630396597660e-11;
const P3: f64 = 2.02226624871116645580e-21;
const S1: f64 = -1.66666666666666324348e-01;
const S2: f64 = 8.33333333332248946124e-03;
const S3: f64 = -1.98412698298579493134e-04;
const S4: f64 = 2.75573137070700676789e-06;
const S5: f64 = -2.50507602534068634195e-08;
const S6: f64 = 1.58969099521155010221e-10;
const C1: f64 = 4.16666666666666019037e-02;
const C2: f64 = -1.38888888888741095749e-03;
const C3: f64 = 2.48015872894767294178e-05;
const C4: f64 = -2.75573143513906633035e-07;
const C5: f64 = 2.08757232129817482790e-09;
const C6: f64 = -1.13596475577881948265e-11;
const SHIFTER: f64 = 6755399441055744.0;
const LIMIT: f64 = 1e5;

#[inline]
fn kernels(x: f64) -> (f64, f64, u64) {
    let kf = (x * std::f64::consts::FRAC_2_PI + SHIFTER) - SHIFTER;
    let r = ((x - kf * P1) - kf * P2) - kf * P3;
    let z = r * r;
    let s = r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
    let hz = 0.5 * z;
    let w = 1.0 - hz;
    let c =
        w + (((1.0 - w) - hz) + z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6))))));
    (s, c, (kf as i64 & 3) as u64)
}

#[inline]
pub(crate) fn cos_fast(x: f64) -> f64 {
    if !(x.abs() < LIMIT) {
        return x.cos();
    }
    let (s, c, q) = kernels(x);
    let (sb, cb) = (s.to_bits(), c.to_bits());
    let odd = 0u64.wrapping_sub(q & 1);
    let neg = (((q + 1) >> 1) & 1) << 63;
    f64::from_bits(((cb & !odd) | (sb & odd)) ^ neg)
}

#[inline]
pub(crate) fn sin_cos_fast(x: f64) -> (f64, f64) {
    if !(x.abs() < LIMIT) {
        return x.sin_cos();
    }
    let (s, c, q) = kernels(x);
    let (sb, cb) = (s.to_bits(), c.to_bits());
    let odd = 0u64.wrapping_sub(q & 1);
    let sin = ((sb & !odd) | (cb & odd)) ^ (((q >> 1) & 1) << 63);
    let cos = ((cb & !odd) | (sb & odd)) ^ ((((q + 1) >> 1) & 1) << 63);
    (f64::from_bits(sin), f64::from_bits(cos))
}

/// Samples a basis deterministically from `seed`.
pub fn sample_basis(dim: usize, seed: u64) -> Result<RffBasis> {
    if !(MIN_DIM..=MAX_DIM).contains(&dim) {
        return Err(Error::Config(format!(
            "feature dimension {dim} outside [{MIN_DIM}, {MAX_DIM}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d0 = Vec::with_capacity(dim);
    let mut d1 = Vec::with_capacity(dim);
    let mut phases = Vec::with_capacity(dim);
    for _ in 0..dim {
        d0.push(rng.sample::<f64, _>(StandardNormal));
        d1.push(rng.sample::<f64, _>(StandardNormal));
        phases.push(rng.random_range(0.0..TAU));
    }
    Ok(RffBasis {
        dim,
        directions: [d0, d1],
        phases,
        seed,
    })
}

/// Bases used for the base (`mu`) and triggering (`gamma`) kernels.
///
/// By default both components share one basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBases {
    pub mu: RffBasis,
    pub gamma: RffBasis,
}

impl FeatureBases {
    pub fn shared(dim: usize, seed: u64) -> Result<Self> {
        let b = sample_basis(dim, seed)?;
        Ok(Self {
            mu: b.clone(),
            gamma: b,
        })
    }

    pub fn independent(dim: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            mu: sample_basis(dim, seed)?,
            gamma: sample_basis(dim, seed ^ 0x9e37_79b9_7f4a_7c15)?,
        })
    }

    pub fn is_shared(&self) -> bool {
        self.mu == self.gamma
    }

    pub fn dim(&self) -> usize {
        self.mu.dim
    }
}

/// Covariance in eigen form: orthonormal `eigvecs` (columns) and positive `eigvals`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceParams {
    pub eigvecs: Mat2,
    pub eigvals: [f64; 2],
}

impl CovarianceParams {
    pub fn new(eigvecs: Mat2, eigvals: [f64; 2]) -> Result<Self> {
        if !eigvals.iter().all(|l| l.is_finite() && *l > 0.0) {
            return Err(Error::Domain(format!(
                "eigenvalues must be positive: {eigvals:?}"
            )));
        }
        if linalg::orthonormality_defect(&eigvecs) > 1e-10 {
            return Err(Error::Domain(format!(
                "eigenvector matrix is not orthonormal: {eigvecs:?}"
            )));
        }
        Ok(Self { eigvecs, eigvals })
    }

    pub fn isotropic(variance: f64) -> Result<Self> {
        Self::new(linalg::IDENTITY, [variance, variance])
    }

    /// Eigen-decomposes a symmetric positive definite covariance matrix.
    pub fn from_covariance(sigma: &Mat2) -> Result<Self> {
        if (sigma[0][1] - sigma[1][0]).abs() > 1e-12 * (sigma[0][1].abs() + 1.0) {
            return Err(Error::Domain("covariance matrix must be symmetric".into()));
        }
        let (vals, vecs) = linalg::sym_eigen(sigma);
        Self::new(vecs, vals)
    }

    /// Builds from standard deviations and correlation.
    pub fn from_std_corr(sigma_x: f64, sigma_y: f64, rho: f64) -> Result<Self> {
        let c = rho * sigma_x * sigma_y;
        Self::from_covariance(&[[sigma_x * sigma_x, c], [c, sigma_y * sigma_y]])
    }

    /// `Σ = V diag(ℓ) Vᵀ`.
    pub fn covariance_matrix(&self) -> Mat2 {
        let v = &self.eigvecs;
        let lam = [[self.eigvals[0], 0.0], [0.0, self.eigvals[1]]];
        let s = linalg::mul(&linalg::mul(v, &lam), &linalg::transpose(v));
        // exact symmetry
        let off = 0.5 * (s[0][1] + s[1][0]);
        [[s[0][0], off], [off, s[1][1]]]
    }

    /// `|Σ|^(-1/2) = 1 / sqrt(ℓ₁ ℓ₂)`.
    pub fn inv_sqrt_det(&self) -> f64 {
        1.0 / (self.eigvals[0] * self.eigvals[1]).sqrt()
    }

    /// Gaussian density normaliser `(1/2π) |Σ|^(-1/2)`.
    pub fn normaliser(&self) -> f64 {
        self.inv_sqrt_det() / (2.0 * PI)
    }

    /// `dᵀ Σ⁻¹ d`.
    pub fn mahalanobis_sq(&self, d: [f64; 2]) -> f64 {
        let v = &self.eigvecs;
        (0..2)
            .map(|n| {
                let p = d[0] * v[0][n] + d[1] * v[1][n];
                p * p / self.eigvals[n]
            })
            .sum()
    }

    /// Projection `g = sᵀ V diag(ℓ)^(-1/2)` used inside the embedding.
    pub fn project(&self, s: [f64; 2]) -> [f64; 2] {
        let v = &self.eigvecs;
        [
            (s[0] * v[0][0] + s[1] * v[1][0]) / self.eigvals[0].sqrt(),
            (s[0] * v[0][1] + s[1] * v[1][1]) / self.eigvals[1].sqrt(),
        ]
    }
}

/// Exact Gaussian kernel `(1/2π)|Σ|^(-1/2) exp(-½ (a-b)ᵀ Σ⁻¹ (a-b))`.
pub fn gaussian_kernel_exact(a: [f64; 2], b: [f64; 2], cov: &CovarianceParams) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1]];
    cov.normaliser() * (-0.5 * cov.mahalanobis_sq(d)).exp()
}

/// Embeds one location into `out` (length `D`); returns nothing, writes `z`.
pub fn embed_point(s: [f64; 2], cov: &CovarianceParams, basis: &RffBasis, out: &mut [f64]) {
    let g = cov.project(s);
    let amp = (2.0 / basis.dim as f64).sqrt();
    let [u0, u1] = &basis.directions;
    for d in 0..basis.dim {
        out[d] = amp * cos_fast(g[0] * u0[d] + g[1] * u1[d] + basis.phases[d]);
    }
}

/// `N' x D` embedding matrix, one row per location.
pub fn embed(points: &[[f64; 2]], cov: &CovarianceParams, basis: &RffBasis) -> Array2<f64> {
    let mut z = Array2::zeros((points.len(), basis.dim));
    for (i, &p) in points.iter().enumerate() {
        let mut row = z.row_mut(i);
        embed_point(p, cov, basis, row.as_slice_mut().expect("standard layout"));
    }
    z
}

/// Embedding rows together with `-sqrt(2/D) sin(argument)`, the derivative
/// of each feature with respect to its argument.
#[derive(Debug, Clone)]
pub struct Features {
    pub dim: usize,
    /// Row-major `N' x D`.
    pub z: Vec<f64>,
    /// Row-major `N' x D`, `∂z/∂argument`.
    pub dz: Vec<f64>,
}

impl Features {
    /// `dz` stays empty unless `with_derivative` is set.
    pub fn compute(
        points: impl Iterator<Item = [f64; 2]>,
        cov: &CovarianceParams,
        basis: &RffBasis,
        with_derivative: bool,
    ) -> Self {
        let dim = basis.dim;
        let amp = (2.0 / dim as f64).sqrt();
        let [u0, u1] = &basis.directions;
        let mut z = Vec::new();
        let mut dz = Vec::new();
        for p in points {
            let g = cov.project(p);
            for d in 0..dim {
                let arg = g[0] * u0[d] + g[1] * u1[d] + basis.phases[d];
                if with_derivative {
                    let (sin, cos) = sin_cos_fast(arg);
                    z.push(amp * cos);
                    dz.push(-amp * sin);
                } else {
                    z.push(amp * cos_fast(arg));
                }
            }
        }
        Self { dim, z, dz }
    }

    pub fn len(&self) -> usize {
        self.z.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.dim..(i + 1) * self.dim]
    }

    pub fn drow(&self, i: usize) -> &[f64] {
        &self.dz[i * self.dim..(i + 1) * self.dim]
    }
}

/// Random-feature approximation `(1/2π)|Σ|^(-1/2) z(a)ᵀ z(b)`. May be slightly negative.
pub fn kernel_approx(a: [f64; 2], b: [f64; 2], cov: &CovarianceParams, basis: &RffBasis) -> f64 {
    let mut za = vec![0.0; basis.dim];
    let mut zb = vec![0.0; basis.dim];
    embed_point(a, cov, basis, &mut za);
    embed_point(b, cov, basis, &mut zb);
    cov.normaliser() * dot(&za, &zb)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_trig_matches_libm() {
        let mut worst = 0.0f64;
        let special = [
            0.0,
            -0.0,
            1e-300,
            PI / 4.0,
            PI / 2.0,
            PI,
            -2.5,
            9.9e4,
            2e5,
            -7e6,
        ];
        let sweep = (0..200_000).map(|i| i as f64 * 0.5 - 5e4);
        for x in special.into_iter().chain(sweep) {
            let (s, c) = sin_cos_fast(x);
            worst = worst.max((c - x.cos()).abs()).max((s - x.sin()).abs());
            assert_eq!(c, cos_fast(x));
        }
        assert!(worst < 4e-16, "{worst:e}");
        assert!(cos_fast(f64::NAN).is_nan());
    }

    #[test]
    fn sampling_is_deterministic_and_phases_in_range() {
        let a = sample_basis(64, 7).unwrap();
        let b = sample_basis(64, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.phases.iter().all(|p| (0.0..TAU).contains(p)));
        assert_ne!(a, sample_basis(64, 8).unwrap());
    }

    #[test]
    fn rejects_bad_dimension() {
        assert!(matches!(sample_basis(0, 1), Err(Error::Config(_))));
        assert!(matches!(
            sample_basis(MAX_DIM + 1, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn direction_covariance_is_identity() {
        let b = sample_basis(MAX_DIM, 3).unwrap();
        let n = b.dim as f64;
        let [u0, u1] = &b.directions;
        let m0 = u0.iter().sum::<f64>() / n;
        let m1 = u1.iter().sum::<f64>() / n;
        let c00 = u0.iter().map(|x| (x - m0) * (x - m0)).sum::<f64>() / n;
        let c11 = u1.iter().map(|x| (x - m1) * (x - m1)).sum::<f64>() / n;
        let c01 = u0
            .iter()
            .zip(u1)
            .map(|(x, y)| (x - m0) * (y - m1))
            .sum::<f64>()
            / n;
        assert!((c00 - 1.0).abs() < 0.08 && (c11 - 1.0).abs() < 0.08 && c01.abs() < 0.06);
    }

    #[test]
    fn covariance_matrix_examples() {
        let c = CovarianceParams::isotropic(10.0).unwrap();
        assert_eq!(c.covariance_matrix(), [[10.0, 0.0], [0.0, 10.0]]);
        let c = CovarianceParams::isotropic(0.04).unwrap();
        assert_eq!(c.covariance_matrix(), [[0.04, 0.0], [0.0, 0.04]]);
        let th: f64 = 0.3;
        let v = [[th.cos(), -th.sin()], [th.sin(), th.cos()]];
        let c = CovarianceParams::new(v, [2.0, 0.5]).unwrap();
        let s = c.covariance_matrix();
        assert_eq!(s[0][1], s[1][0]);
        assert!((linalg::det(&s) - 1.0).abs() < 1e-12);
        assert!((c.inv_sqrt_det() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eigen_roundtrip_up_to_sign() {
        let c = CovarianceParams::from_std_corr(3.0, 1.0, 0.8).unwrap();
        let again = CovarianceParams::from_covariance(&c.covariance_matrix()).unwrap();
        let a = c.covariance_matrix();
        let b = again.covariance_matrix();
        assert!(linalg::frobenius(&linalg::sub(&a, &b)) < 1e-12);
    }

    #[test]
    fn rejects_invalid_covariance() {
        assert!(CovarianceParams::new(linalg::IDENTITY, [1.0, 0.0]).is_err());
        assert!(CovarianceParams::new([[1.0, 0.1], [0.0, 1.0]], [1.0, 1.0]).is_err());
    }

    #[test]
    fn exact_kernel_values() {
        let i = CovarianceParams::isotropic(1.0).unwrap();
        assert!(
            (gaussian_kernel_exact([0.3, 0.3], [0.3, 0.3], &i) - 0.159_154_943_091_895_35).abs()
                < 1e-15
        );
        let small = CovarianceParams::isotropic(0.01).unwrap();
        let v = gaussian_kernel_exact([0.0, 0.0], [0.0, 0.0], &small);
        assert!((v - 100.0 / TAU).abs() < 1e-12);
        let c = CovarianceParams::from_std_corr(3.0, 1.0, 0.8).unwrap();
        let (a, b) = ([0.4, -1.2], [2.0, 0.7]);
        assert_eq!(
            gaussian_kernel_exact(a, b, &c),
            gaussian_kernel_exact(b, a, &c)
        );
    }

    #[test]
    fn embedding_bounds() {
        let basis = sample_basis(40, 11).unwrap();
        let cov = CovarianceParams::from_std_corr(0.5, 0.2, -0.3).unwrap();
        let pts = [[0.0, 0.0], [0.3, -0.9], [5.0, 2.0]];
        let z = embed(&pts, &cov, &basis);
        let bound = (2.0 / 40.0f64).sqrt();
        assert!(z.iter().all(|v| v.abs() <= bound + 1e-15));
        for row in z.rows() {
            assert!(row.dot(&row) <= 2.0 + 1e-12);
        }
        for (d, p) in basis.phases.iter().enumerate() {
            assert!((z[[0, d]] - bound * p.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn features_match_embed() {
        let basis = sample_basis(16, 2).unwrap();
        let cov = CovarianceParams::from_std_corr(0.4, 0.6, 0.1).unwrap();
        let pts = [[0.2, 0.1], [-0.5, 0.9]];
        let f = Features::compute(pts.iter().copied(), &cov, &basis, true);
        let z = embed(&pts, &cov, &basis);
        for i in 0..2 {
            assert_eq!(f.row(i), z.row(i).as_slice().unwrap());
        }
    }
}
