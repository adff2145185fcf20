//! Gaussian-kernel-mixture target approximated by networks of growing width.

use nnlift::activation::Activation;
use nnlift::pipeline::{run_kernel, KernelMixtureTarget, TrainConfig};

fn main() -> nnlift::error::Result<()> {
    let d = 8;
    let n = 100_000;
    let cfg = TrainConfig::default();
    println!("seed  k=2      k=4      k=8      (relative risk)");
    for seed in 0..5 {
        let target = KernelMixtureTarget::random(d, 3, 1000 + seed);
        let mut line = format!("{seed:>4}");
        for k in [2, 4, 8] {
            let rep = run_kernel(&target, d, k, n, 1.0, Activation::Sigmoid, &cfg, 10_000, seed)?;
            line.push_str(&format!("  {:.5}", rep.risk.relative()));
        }
        println!("{line}");
    }
    Ok(())
}
