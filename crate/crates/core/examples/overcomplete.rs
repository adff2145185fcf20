//! Six components in three dimensions, recovered from the tensorized
//! sixth-order moment.

use nalgebra::DMatrix;
use nnlift::cp::{decompose_overcomplete, DecomposeConfig};
use nnlift::pipeline::align;
use nnlift::tensor::{khatri_rao, tensorize_6_to_3, Tensor6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() -> nnlift::error::Result<()> {
    let (d, k) = (3, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut a = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut c in a.column_iter_mut() {
        let n = c.norm();
        c /= n;
    }
    let kr = khatri_rao(&a, &a)?;
    let sv = kr.clone().svd(false, false).singular_values;
    println!("A (.) A singular values {:?}", sv.as_slice());

    let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.5..1.5)).collect();
    let t6 = Tensor6::symmetric_from_columns(&a, &weights)?;
    let t = tensorize_6_to_3(&t6)?;
    let res = decompose_overcomplete(&t, k, &DecomposeConfig::default())?;

    let kr_al = align(&kr, &res.khatri_rao)?;
    let a_al = align(&a, &res.directions)?;
    println!("Khatri-Rao column errors {:?}", kr_al.errors);
    println!("direction errors        {:?}", a_al.errors);
    Ok(())
}
