//! The likelihood three ways: the batched random-feature form, the
//! pointwise form with the same features, and the pointwise form with the
//! exact Gaussian kernel. Also shows that batch compensators telescope.
//!
//! Run with `cargo run --release --example likelihood`.

use sthawkes::gradients::check_instance;
use sthawkes::intensity::{
    compensator_batch, compensator_full, nll, nll_pointwise, Context, KernelMode, Span,
};
use sthawkes::{FeatureBases, Result};

fn main() -> Result<()> {
    let (seq, params) = check_instance(11, 80, 3)?;
    let ctx = Context::for_sequence(&seq, None);
    let span = Span::whole(&seq);

    for dim in [10, 100, 1000] {
        let bases = FeatureBases::shared(dim, 0)?;
        let matrix = nll(&ctx, &span, &params, &bases)?;
        let pointwise = nll_pointwise(&ctx, &span, &params, KernelMode::Rff(&bases))?;
        println!("D = {dim:>4}: batched {matrix:.10}  pointwise {pointwise:.10}");
    }
    let exact = nll_pointwise(&ctx, &span, &params, KernelMode::Exact)?;
    println!("exact kernel: {exact:.10}");

    let times: Vec<f64> = seq.events().iter().map(|e| e.time).collect();
    let mut edges = vec![seq.start()];
    edges.extend(times.iter().step_by(20).skip(1).copied());
    edges.push(seq.end());
    let mut parts = 0.0;
    for w in edges.windows(2) {
        parts += compensator_batch((w[0], w[1]), &seq, &params)?;
    }
    println!(
        "compensator: whole window {:.12}, sum over {} batches {parts:.12}",
        compensator_full(&seq, &params),
        edges.len() - 1
    );
    Ok(())
}
