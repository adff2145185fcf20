//! Penalty selection by holdout on random features.

use nalgebra::{DMatrix, DVector};
use nnlift::regression::{ridge, select_lambda, RegressionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> nnlift::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, p) = (400, 6);
    let h = DMatrix::from_fn(n, p, |_, j| if j == p - 1 { 1.0 } else { rng.sample(StandardNormal) });
    let beta = DVector::from_fn(p, |i, _| 0.2 * i as f64 - 0.4);
    let cfg = RegressionConfig::default();
    for noise in [0.0, 0.5, 5.0] {
        let y = &h * &beta + DVector::from_fn(n, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
        let grid = cfg.grid_for(&h);
        let fit = select_lambda(&h, &y, &grid, cfg.holdout, 0)?;
        println!(
            "noise {noise:>4}: lambda {:.3e}  holdout mse {:.3e}  |beta| {:.3}",
            fit.lambda,
            fit.holdout_mse.unwrap_or(f64::NAN),
            fit.beta.norm()
        );
    }
    let y = &h * &beta;
    println!("exact fit error {:.1e}", (ridge(&h, &y, 0.0)?.beta - beta).amax());
    Ok(())
}
