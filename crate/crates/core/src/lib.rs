//! Spatio-temporal multivariate Hawkes processes with Gaussian spatial
//! kernels, fitted by mini-batch gradient descent on a random Fourier
//! feature approximation of the likelihood.

// `!(x > 0.0)` is deliberate: it rejects NaN as well. The trig
// coefficients are kept at their published precision.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::excessive_precision,
    clippy::needless_range_loop
)]

pub mod baselines;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod gradients;
pub mod intensity;
pub mod linalg;
pub mod optimizer;
pub mod rff;
pub mod simulator;

pub use error::{Error, Result};
pub use events::{EventRecord, EventSequence, Rect};
pub use intensity::{HawkesParams, ModelKind};
pub use optimizer::{FitConfig, FitReport};
pub use rff::{CovarianceParams, FeatureBases};
