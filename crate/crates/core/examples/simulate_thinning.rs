//! Generates a two-type self-exciting realisation by thinning and prints
//! the thinning diagnostics and the first few events.
//!
//! Run with `cargo run --release --example simulate_thinning [seed]`.

use ndarray::array;
use sthawkes::events::{rescale_time, to_csv};
use sthawkes::simulator::{simulate, SimConfig, TypeSampling};
use sthawkes::{CovarianceParams, HawkesParams, Rect, Result};

fn main() -> Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    let params = HawkesParams::new(
        array![[0.01, 0.005], [0.01, 0.02]],
        array![[1.0, 0.5], [1.0, 2.0]],
        array![[2.0, 1.0], [1.0, 4.0]],
        CovarianceParams::isotropic(0.01)?,
        CovarianceParams::isotropic(0.04)?,
    )?;
    // K^(γ) has spectral radius above one, so the process explodes; cap it
    let mut config = SimConfig::new(params, 100.0, Rect::symmetric(1.0), seed);
    config.type_sampling = TypeSampling::Proportional;
    config.max_events = Some(1000);

    let out = simulate(&config)?;
    let seq = &out.sequence;
    println!(
        "{} events by t = {:.3} ({} candidates, acceptance {:.3}, truncated: {})",
        seq.len(),
        seq.end(),
        out.candidates,
        out.acceptance_rate(),
        out.truncated
    );
    println!("type counts {:?}", seq.type_counts());
    println!(
        "largest λ/λ̄ seen at a candidate: {:.3}",
        out.max_bound_ratio
    );

    let (scaled, scaling) = rescale_time(seq)?;
    println!("time scale for a unit mean gap: {:.2}", scaling.time_scale);
    for line in to_csv(&scaled).lines().take(6) {
        println!("  {line}");
    }
    Ok(())
}
