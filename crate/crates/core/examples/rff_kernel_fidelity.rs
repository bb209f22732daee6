//! How closely random Fourier features reproduce a Gaussian kernel as the
//! feature dimension grows.
//!
//! Run with `cargo run --release --example rff_kernel_fidelity`.

use sthawkes::rff::{gaussian_kernel_exact, kernel_approx, sample_basis};
use sthawkes::{CovarianceParams, Result};

fn main() -> Result<()> {
    // elongated, correlated kernel
    let cov = CovarianceParams::from_std_corr(3.0, 1.0, 0.8)?;
    let peak = gaussian_kernel_exact([0.0; 2], [0.0; 2], &cov);
    let n = 41;
    let grid: Vec<[f64; 2]> = (0..n * n)
        .map(|k| {
            let step = 12.0 / (n - 1) as f64;
            [-6.0 + step * (k % n) as f64, -6.0 + step * (k / n) as f64]
        })
        .collect();

    println!("{:>6} {:>12} {:>10}", "D", "mean |err|", "% of peak");
    for dim in [10, 20, 50, 100, 500, 2000] {
        let mut total = 0.0;
        let bases = 10;
        for seed in 0..bases {
            let basis = sample_basis(dim, seed)?;
            total += grid
                .iter()
                .map(|&b| {
                    (kernel_approx([0.0; 2], b, &cov, &basis)
                        - gaussian_kernel_exact([0.0; 2], b, &cov))
                    .abs()
                })
                .sum::<f64>()
                / grid.len() as f64;
        }
        let mae = total / bases as f64;
        println!("{dim:>6} {mae:>12.3e} {:>9.2}%", 100.0 * mae / peak);
    }
    Ok(())
}
