//! Cross moments of a sigmoid network against Gaussian score functions,
//! compared with the coefficient formula `lambda_j = a2_j E[sigma'''(z_j)]`.

use nnlift::activation::Activation;
use nnlift::moments::accumulate_parallel;
use nnlift::pipeline::{generate_realizable, LabelMode};
use nnlift::score::{Density, GaussianDensity};
use nnlift::tensor::Tensor3;

fn main() -> nnlift::error::Result<()> {
    let (d, k, n) = (4, 2, 400_000);
    let labels = LabelMode::Continuous { noise: 0.0 };
    let (data, p) = generate_realizable(d, k, n, 1.0, Activation::Sigmoid, labels, 1)?;
    let g = GaussianDensity::standard(d)?;

    let s3 = g.score3(&[0.3, -1.0, 0.5, 2.0])?;
    println!("score symmetry defect {:.1e}", s3.symmetry_defect().unwrap_or(f64::NAN));

    let acc = accumulate_parallel(&data.xs, &data.ys, &g, 8192)?;
    let (m2, t) = acc.finalize()?;

    let mut expected = Tensor3::zeros_cubic(d);
    let mut expected_m2 = nalgebra::DMatrix::zeros(d, d);
    for j in 0..k {
        let a = p.a1.column(j).into_owned();
        let lam = p.a2[j] * Activation::Sigmoid.gaussian_derivative_mean(p.b1[j], 1.0, 3)?;
        let lam_t = p.a2[j] * Activation::Sigmoid.gaussian_derivative_mean(p.b1[j], 1.0, 2)?;
        println!("unit {j}: b1 {:+.3}  lambda {:+.4}  lambda~ {:+.4}", p.b1[j], lam, lam_t);
        expected.add_rank_one(lam, &a, &a, &a);
        expected_m2 += &a * a.transpose() * lam_t;
    }
    let diff = t.axpy(-1.0, &expected)?;
    println!("|T_hat - T|_F = {:.4}  (|T|_F = {:.4})", diff.frobenius_norm(), expected.frobenius_norm());
    println!("|M2_hat - M2|_F = {:.4}  (|M2|_F = {:.4})", (m2 - &expected_m2).norm(), expected_m2.norm());
    Ok(())
}
