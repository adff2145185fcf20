//! Score functions of a Gaussian mixture from the recursive construction,
//! checked against finite differences of the density.

use nalgebra::DVector;
use nnlift::score::{Density, FiniteDifference, GaussianDensity, GenericDensity};

fn main() -> nnlift::error::Result<()> {
    let g = GaussianDensity::new(3, 0.5)?;
    let x = [0.2, -0.7, 1.1];
    let closed = g.score2(&x)?;
    let recursive = GenericDensity::from_gaussian(&g, true).score2(&x)?;
    println!("Gaussian S2 closed form vs recursion: {:.2e}", (closed - recursive).amax());

    let means = [DVector::from_vec(vec![1.0, 0.0, 0.0]), DVector::from_vec(vec![-0.5, 0.5, 0.0])];
    let mix = GenericDensity::gaussian_mixture(&[0.3, 0.7], &means, &[1.0, 0.6])?
        .with_finite_difference(Some(FiniteDifference::default()));
    let s1 = mix.score1(&x)?;
    let s3 = mix.score3(&x)?;
    println!("mixture S1 {:?}", s1.as_slice());
    println!("mixture S3 norm {:.4}, symmetry defect {:.1e}", s3.frobenius_norm(), s3.symmetry_defect().unwrap_or(0.0));
    Ok(())
}
