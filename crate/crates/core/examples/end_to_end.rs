//! Realizable step network trained end to end.
//!
//! `cargo run --release --example end_to_end -- [n] [seeds]`

use std::time::Instant;

use nnlift::activation::Activation;
use nnlift::pipeline::{run_realizable, LabelMode, RealizableSpec, TrainConfig};

fn main() -> nnlift::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seeds: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let spec = RealizableSpec {
        d: 10,
        k: 5,
        n,
        sigma_x: 1.0,
        activation: Activation::Step,
        labels: LabelMode::Continuous { noise: 0.01 },
    };
    let cfg = TrainConfig::default();
    println!("seed  max_err  mean_err  max_bias_err  rel_risk   repaired  secs");
    for seed in 0..seeds {
        let clock = Instant::now();
        let rep = run_realizable(&spec, &cfg, 10_000, seed)?;
        println!(
            "{seed:>4}  {:>7.4}  {:>8.4}  {:>12.4}  {:>8.4}   {:>8}  {:.1}",
            rep.max_column_error().unwrap_or(f64::NAN),
            rep.mean_column_error().unwrap_or(f64::NAN),
            rep.max_bias_error().unwrap_or(f64::NAN),
            rep.risk.relative(),
            rep.repaired,
            clock.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
