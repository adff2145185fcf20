//! Bias recovery from the Fourier phase with the true directions supplied.

use nnlift::activation::Activation;
use nnlift::fourier::{estimate_bias, ActivationSpectrum, BiasWindow, FourierConfig};
use nnlift::pipeline::{generate_realizable, LabelMode};
use nnlift::score::GaussianDensity;

fn main() -> nnlift::error::Result<()> {
    let (d, k, n) = (4, 2, 1_000_000);
    let g = GaussianDensity::standard(d)?;
    let spectrum = ActivationSpectrum::for_activation(Activation::Step)?;
    println!("Sigma(1/2) = {}", spectrum.value);
    for seed in 0..3 {
        let (data, p) = generate_realizable(d, k, n, 1.0, Activation::Step, LabelMode::Binary, seed)?;
        let mean = data.ys.iter().sum::<f64>() / n as f64;
        let yc: Vec<f64> = data.ys.iter().map(|y| y - mean).collect();
        for window in [BiasWindow::default(), BiasWindow::DensityFloor] {
            let cfg = FourierConfig {
                window,
                seed,
                ..Default::default()
            };
            let est = estimate_bias(&data.xs, &yc, &g, &p.a1, &spectrum, &cfg)?;
            let name = if matches!(window, BiasWindow::DensityFloor) { "floor" } else { "taper" };
            for j in 0..k {
                println!(
                    "seed {seed} {name} unit {j}: b1 {:+.4} est {:+.4}   a2 {:.4} est {:.4}",
                    p.b1[j], est.b1[j], p.a2[j], est.a2_magnitude[j]
                );
            }
        }
    }
    Ok(())
}
