//! Compares the analytic likelihood gradient with central finite differences
//! on small random problems, block by block.
//!
//! Run with `cargo run --release --example gradient_check`.

use sthawkes::gradients::{check_gradients, GradCheckConfig};

fn main() -> sthawkes::Result<()> {
    let config = GradCheckConfig::default();
    let report = check_gradients(&config)?;
    for b in &report.blocks {
        println!(
            "{:<10} max rel err {:.2e}  (worst at {} on seed {})",
            b.block, b.max_relative_error, b.worst_coordinate, b.worst_seed
        );
    }
    println!(
        "{}",
        if report.passed() {
            "all blocks agree"
        } else {
            "MISMATCH"
        }
    );

    // a deliberately corrupted block must be caught
    let broken = check_gradients(&GradCheckConfig {
        perturb_block: Some("w".into()),
        ..config
    })?;
    println!(
        "with W perturbed the worst block is {}",
        broken.worst().block
    );
    Ok(())
}
