//! Reads events in the `u,t,x,y` CSV shape, rescales time to a unit mean
//! gap, splits chronologically and compares a Hawkes fit against the
//! homogeneous Poisson baseline on the held-out part.
//!
//! Run with `cargo run --release --example ingest_csv -- events.csv U x_lo x_hi y_lo y_hi`.
//! Without arguments a synthetic clustered data set is used.

use std::fs;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sthawkes::baselines::fit_poisson;
use sthawkes::evaluation::{evaluate, FittedModel, SplitTag};
use sthawkes::events::{
    normalize_space, parse_events, rescale_time, split_chronological, SplitSpec,
};
use sthawkes::intensity::{nll_pointwise, Context, KernelMode, Span};
use sthawkes::optimizer::fit;
use sthawkes::{Error, EventSequence, FitConfig, Rect, Result};

// bursts of activity around random centres, like aftershock sequences
fn synthetic() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = String::from("u,t,x,y\n");
    let mut t = 0.0;
    for _ in 0..60 {
        t += rng.random_range(5.0..20.0);
        let c: [f64; 2] = [rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)];
        let kind = rng.random_range(1..=2);
        let mut tt = t;
        for _ in 0..rng.random_range(5..25) {
            tt += rng.random::<f64>().powi(3) * 2.0;
            let x = (c[0] + rng.random_range(-0.5..0.5f64)).clamp(-10.0, 10.0);
            let y = (c[1] + rng.random_range(-0.5..0.5f64)).clamp(-10.0, 10.0);
            out.push_str(&format!("{kind},{tt},{x},{y}\n"));
        }
    }
    out
}

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (text, types, domain) = if args.len() == 6 {
        let num = |i: usize| args[i].parse::<f64>().expect("numeric bound");
        let text = fs::read_to_string(&args[0]).map_err(|e| sthawkes::Error::io(&args[0], e))?;
        (
            text,
            args[1].parse().expect("type count"),
            Rect::new(num(2), num(3), num(4), num(5))?,
        )
    } else {
        (synthetic(), 2, Rect::symmetric(10.0))
    };

    let raw = parse_events(&text, types, domain, None)?;
    let (seq, scaling) = rescale_time(&raw)?;
    let (seq, _) = normalize_space(&seq)?;
    println!(
        "{} events, time scale {:.4}, counts {:?}",
        seq.len(),
        scaling.time_scale,
        seq.type_counts()
    );
    let split = split_chronological(&seq, &SplitSpec::default())?;

    let config = FitConfig {
        rff_dim: 100,
        learning_rate: 0.05,
        softplus_scale: 0.1,
        batch_size: 64,
        max_epoch: 80,
        patience: 15,
        ..FitConfig::default()
    };
    let hawkes = fit(&split.fit, &split.val, &config)?;
    let poisson = FittedModel::Poisson {
        params: fit_poisson(&split.fit)?,
    };
    println!("{}", evaluate(&split, &poisson, SplitTag::Test)?);

    let params = hawkes.best_params.clone();
    let model = FittedModel::Hawkes {
        params: hawkes.best_params,
        bases: hawkes.bases,
    };
    match evaluate(&split, &model, SplitTag::Test) {
        Ok(r) => println!("{r}"),
        // an isolated test event can push the feature approximation below zero;
        // the exact kernel is always positive
        Err(Error::IntensityFloor { event, .. }) => {
            let history = EventSequence::concat(&[&split.fit, &split.val, &split.test])?;
            let ctx = Context::with_history(&history, &split.fit, None);
            let span = Span::part(history.len() - split.test.len(), &split.test);
            let total = nll_pointwise(&ctx, &span, &params, KernelMode::Exact)?;
            println!(
                "hawkes           test  feature intensity negative at event {event}; exact kernel nll/event={:.6}",
                total / split.test.len() as f64
            );
        }
        Err(e) => return Err(e),
    }
    Ok(())
}
