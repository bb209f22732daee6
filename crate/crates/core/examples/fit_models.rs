//! Fits the homogeneous Poisson, spatial Poisson and Hawkes models to a
//! simulated realisation and compares held-out likelihoods.
//!
//! Run with `cargo run --release --example fit_models [seed]`. Takes a
//! minute or two.

use ndarray::array;
use sthawkes::baselines::{fit_poisson, fit_spatial_poisson};
use sthawkes::evaluation::{evaluate, excitation_report, FittedModel, SplitTag};
use sthawkes::events::{rescale_time, split_chronological, SplitSpec};
use sthawkes::optimizer::fit;
use sthawkes::simulator::{simulate, SimConfig, TypeSampling};
use sthawkes::{CovarianceParams, FitConfig, HawkesParams, Rect, Result};

fn main() -> Result<()> {
    env_logger::init();
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let truth = HawkesParams::new(
        array![[0.01, 0.005], [0.01, 0.02]],
        array![[1.0, 0.5], [1.0, 2.0]],
        array![[2.0, 1.0], [1.0, 4.0]],
        CovarianceParams::isotropic(0.01)?,
        CovarianceParams::isotropic(0.04)?,
    )?;
    let mut sim = SimConfig::new(truth, 100.0, Rect::symmetric(1.0), seed);
    sim.type_sampling = TypeSampling::Proportional;
    sim.max_events = Some(1200);
    let (seq, _) = rescale_time(&simulate(&sim)?.sequence)?;
    let split = split_chronological(&seq, &SplitSpec::default())?;
    println!(
        "fit/val/test = {}/{}/{}",
        split.fit.len(),
        split.val.len(),
        split.test.len()
    );

    let config = FitConfig {
        rff_dim: 200,
        learning_rate: 0.1,
        softplus_scale: 0.1,
        batch_size: 128,
        max_epoch: 60,
        patience: 10,
        seed,
        ..FitConfig::default()
    };

    let poisson = FittedModel::Poisson {
        params: fit_poisson(&split.fit)?,
    };
    let spatial = fit_spatial_poisson(&split.fit, &split.val, &config)?;
    let spatial = FittedModel::SpatialPoisson {
        params: spatial.best_params,
        bases: spatial.bases,
    };
    let hawkes = fit(&split.fit, &split.val, &config)?;
    println!(
        "hawkes: {} epochs, best at {}, {} shortened steps, {:.1}s",
        hawkes.epochs_run, hawkes.best_epoch, hawkes.rejected_steps, hawkes.wall_time
    );
    let report = excitation_report(&hawkes.best_params, &["a".into(), "b".into()])?;
    let hawkes = FittedModel::Hawkes {
        params: hawkes.best_params,
        bases: hawkes.bases,
    };

    for model in [&poisson, &spatial, &hawkes] {
        for tag in [SplitTag::Val, SplitTag::Test] {
            println!("{}", evaluate(&split, model, tag)?);
        }
    }
    println!("\n{report}");
    Ok(())
}
