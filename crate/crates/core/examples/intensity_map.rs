//! Evaluates the exact conditional intensity on a spatial grid at a few
//! times and writes the grids as CSV for plotting.
//!
//! Run with `cargo run --release --example intensity_map [out_dir]`.

use std::fs;
use std::path::PathBuf;

use ndarray::array;
use sthawkes::evaluation::{excitation_report, grid_to_csv, intensity_grid};
use sthawkes::simulator::{simulate, SimConfig, TypeSampling};
use sthawkes::{CovarianceParams, HawkesParams, Rect, Result};

fn main() -> Result<()> {
    let out_dir = PathBuf::from(
        std::env::args()
            .nth(1)
            .unwrap_or_else(|| "intensity-map".into()),
    );
    fs::create_dir_all(&out_dir).map_err(|e| sthawkes::Error::io(&out_dir, e))?;

    let params = HawkesParams::new(
        array![[0.2, 0.0], [0.0, 0.2]],
        array![[0.3, 0.3], [0.0, 0.5]],
        array![[1.0, 1.0], [1.0, 0.5]],
        CovarianceParams::isotropic(0.25)?,
        CovarianceParams::from_std_corr(0.3, 0.1, 0.6)?,
    )?;
    let mut config = SimConfig::new(params.clone(), 40.0, Rect::symmetric(2.0), 3);
    config.type_sampling = TypeSampling::Proportional;
    let seq = simulate(&config)?.sequence;
    println!("{} events on [0, {}]", seq.len(), seq.end());

    print!(
        "{}",
        excitation_report(&params, &["mainshock".into(), "aftershock".into()])?
    );

    for t in [10.0, 20.0, 30.0, 40.0] {
        let grid = intensity_grid(&params, &seq, t, 40)?;
        let (lo, hi) = grid.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let path = out_dir.join(format!("grid-t{t}.csv"));
        fs::write(&path, grid_to_csv(&grid)).map_err(|e| sthawkes::Error::io(&path, e))?;
        println!(
            "t = {t:>4}: total intensity in [{lo:.4}, {hi:.4}] -> {}",
            path.display()
        );
    }
    Ok(())
}
