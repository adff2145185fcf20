//! Streaming label/score cross-moments
//! `M2 = (1/n) sum y_i S_2(x_i)` and `T = (1/n) sum y_i S_3(x_i)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::score::Density;
use crate::tensor::Tensor3;

/// Compensated running sum over a flat buffer.
#[derive(Clone, Debug, PartialEq)]
struct KahanBuf {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl KahanBuf {
    fn new(len: usize) -> Self {
        Self {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    #[inline]
    fn add_scaled(&mut self, w: f64, values: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(values) {
            let y = w * v - *c;
            let t = *s + y;
            *c = (t - *s) - y;
            *s = t;
        }
    }

    fn merge(&mut self, other: &KahanBuf) {
        for i in 0..self.sum.len() {
            let y = (other.sum[i] - other.comp[i]) - self.comp[i];
            let t = self.sum[i] + y;
            self.comp[i] = (t - self.sum[i]) - y;
            self.sum[i] = t;
        }
    }

    fn mean(&self, n: usize) -> Vec<f64> {
        let nf = n as f64;
        self.sum.iter().zip(&self.comp).map(|(s, c)| (s - c) / nf).collect()
    }
}

/// Running sums of `y S_2(x)` and `y S_3(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    dim: usize,
    count: usize,
    second: KahanBuf,
    third: KahanBuf,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            count: 0,
            second: KahanBuf::new(dim * dim),
            third: KahanBuf::new(dim * dim * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn accumulate(&mut self, x: &[f64], y: f64, density: &dyn Density) -> Result<()> {
        if x.len() != self.dim || density.dim() != self.dim {
            return Err(invalid(format!(
                "accumulator has dimension {}, got point of length {} and density of dimension {}",
                self.dim,
                x.len(),
                density.dim()
            )));
        }
        self.count += 1;
        if y == 0.0 {
            return Ok(());
        }
        let s2 = density.score2(x)?;
        let s3 = density.score3(x)?;
        // s2 is symmetric, so column-major order equals row-major order
        self.second.add_scaled(y, s2.as_slice());
        self.third.add_scaled(y, s3.data());
        Ok(())
    }

    /// Accumulate a flat row-major `n x d` block with labels `ys`.
    pub fn accumulate_batch(&mut self, xs: &[f64], ys: &[f64], density: &dyn Density) -> Result<()> {
        check_batch(xs, ys.len(), self.dim)?;
        for (x, &y) in xs.chunks_exact(self.dim.max(1)).zip(ys) {
            self.accumulate(x, y, density)?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &MomentAccumulator) -> Result<()> {
        if other.dim != self.dim {
            return Err(invalid("cannot merge accumulators of different dimension"));
        }
        self.count += other.count;
        self.second.merge(&other.second);
        self.third.merge(&other.third);
        Ok(())
    }

    pub fn finalize(&self) -> Result<(DMatrix<f64>, Tensor3)> {
        if self.count == 0 {
            return Err(Error::EmptyAccumulator);
        }
        let d = self.dim;
        let m2 = DMatrix::from_row_slice(d, d, &self.second.mean(self.count));
        let t = Tensor3::from_vec([d, d, d], self.third.mean(self.count))?;
        Ok((m2, t))
    }
}

fn check_batch(xs: &[f64], n: usize, d: usize) -> Result<()> {
    if d == 0 || xs.len() != n * d {
        return Err(invalid(format!(
            "batch of {} values does not hold {} rows of dimension {}",
            xs.len(),
            n,
            d
        )));
    }
    Ok(())
}

/// Sharded accumulation over a flat dataset. Shard boundaries depend only
/// on `n` and `shard_size`, so the result is independent of thread count.
pub fn accumulate_parallel(
    xs: &[f64],
    ys: &[f64],
    density: &dyn Density,
    shard_size: usize,
) -> Result<MomentAccumulator> {
    let d = density.dim();
    check_batch(xs, ys.len(), d)?;
    let shard = shard_size.max(1);
    let parts: Vec<Result<MomentAccumulator>> = xs
        .par_chunks(shard * d)
        .zip(ys.par_chunks(shard))
        .map(|(xb, yb)| {
            let mut acc = MomentAccumulator::new(d);
            acc.accumulate_batch(xb, yb, density)?;
            Ok(acc)
        })
        .collect();
    let mut total = MomentAccumulator::new(d);
    for p in parts {
        total.merge(&p?)?;
    }
    Ok(total)
}

/// Third-order moment for vector labels contracted on the fly:
/// sums `<y, theta> S_3(x)` without forming the fourth-order tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorOutputAccumulator {
    theta: DVector<f64>,
    inner: MomentAccumulator,
}

impl VectorOutputAccumulator {
    pub fn new(dim: usize, theta: DVector<f64>) -> Self {
        Self {
            theta,
            inner: MomentAccumulator::new(dim),
        }
    }

    pub fn accumulate(&mut self, x: &[f64], y: &[f64], density: &dyn Density) -> Result<()> {
        if y.len() != self.theta.len() {
            return Err(invalid(format!(
                "label has {} outputs, contraction vector has {}",
                y.len(),
                self.theta.len()
            )));
        }
        let w: f64 = y.iter().zip(self.theta.iter()).map(|(a, b)| a * b).sum();
        self.inner.accumulate(x, w, density)
    }

    pub fn merge(&mut self, other: &VectorOutputAccumulator) -> Result<()> {
        if other.theta != self.theta {
            return Err(invalid("cannot merge accumulators with different contraction vectors"));
        }
        self.inner.merge(&other.inner)
    }

    pub fn count(&self) -> usize {
        self.inner.count()
    }

    pub fn finalize(&self) -> Result<Tensor3> {
        Ok(self.inner.finalize()?.1)
    }

    /// Both contracted moments, `E[<y,theta> S_2]` and `E[<y,theta> S_3]`.
    pub fn finalize_both(&self) -> Result<(DMatrix<f64>, Tensor3)> {
        self.inner.finalize()
    }
}

/// Contract accumulated vector-label data by `theta` in one call.
pub fn contract_vector_output(
    xs: &[f64],
    ys: &[f64],
    label_dim: usize,
    density: &dyn Density,
    theta: &DVector<f64>,
) -> Result<Tensor3> {
    let d = density.dim();
    if theta.len() != label_dim || label_dim == 0 {
        return Err(invalid(format!(
            "contraction vector has length {}, labels have {} outputs",
            theta.len(),
            label_dim
        )));
    }
    if ys.len() % label_dim != 0 {
        return Err(invalid("label buffer is not a whole number of rows"));
    }
    let n = ys.len() / label_dim;
    check_batch(xs, n, d)?;
    let mut acc = VectorOutputAccumulator::new(d, theta.clone());
    for (x, y) in xs.chunks_exact(d).zip(ys.chunks_exact(label_dim)) {
        acc.accumulate(x, y, density)?;
    }
    acc.finalize()
}
