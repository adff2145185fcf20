//! Noiseless CP recovery from a paired second moment and a third-order
//! tensor with an indefinite coefficient pattern.

use nalgebra::{DMatrix, DVector};
use nnlift::cp::{decompose, DecomposeConfig};
use nnlift::pipeline::align;
use nnlift::tensor::Tensor3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> nnlift::error::Result<()> {
    let (d, k) = (6, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut a = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut c in a.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let lambda = [1.0, -0.6, 0.8, -0.4];
    let lambda_tilde = [0.5, 0.9, -0.7, 0.3];
    let m2 = &a * DMatrix::from_diagonal(&DVector::from_column_slice(&lambda_tilde)) * a.transpose();
    let mut t = Tensor3::zeros_cubic(d);
    for (j, &l) in lambda.iter().enumerate() {
        let c = a.column(j).into_owned();
        t.add_rank_one(l, &c, &c, &c);
    }

    let res = decompose(&m2, &t, k, &DecomposeConfig::default())?;
    let al = align(&a, &res.directions)?;
    println!("whitening eigenvalues {:?}", res.initial_gamma.as_slice());
    println!("sign repair used: {}", res.repaired);
    for (i, &j) in al.permutation.iter().enumerate() {
        println!(
            "true {i} -> est {j}  sign {:+}  error {:.2e}  lambda {:+.4}  lambda~ {:+.4}",
            al.signs[i], al.errors[i], res.lambda[j], res.lambda_tilde[j]
        );
    }
    println!("max aligned error {:.2e}", al.max_error);
    Ok(())
}
