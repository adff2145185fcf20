//! Output-layer fit by ridge regression on estimated hidden features.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{invalid, Error, Result};

/// Coefficients `[a2; b2]` with the penalty used.
#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub holdout_mse: Option<f64>,
}

impl RidgeFit {
    pub fn a2(&self) -> DVector<f64> {
        self.beta.rows(0, self.beta.len() - 1).into_owned()
    }

    pub fn b2(&self) -> f64 {
        self.beta[self.beta.len() - 1]
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> DVector<f64> {
        features * &self.beta
    }
}

/// `[sigma(A1^T x + b1); 1]`.
pub fn featurize(x: &[f64], a1: &DMatrix<f64>, b1: &DVector<f64>, activation: Activation) -> DVector<f64> {
    let k = a1.ncols();
    let mut h = DVector::from_element(k + 1, 1.0);
    for j in 0..k {
        let z: f64 = a1.column(j).iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b1[j];
        h[j] = activation.eval(z);
    }
    h
}

/// Feature matrix with one row per sample of the flat row-major `xs`.
pub fn featurize_batch(
    xs: &[f64],
    a1: &DMatrix<f64>,
    b1: &DVector<f64>,
    activation: Activation,
) -> Result<DMatrix<f64>> {
    let d = a1.nrows();
    let k = a1.ncols();
    if b1.len() != k {
        return Err(invalid(format!("bias length {} does not match {} columns", b1.len(), k)));
    }
    if d == 0 || xs.len() % d != 0 {
        return Err(invalid("input length is not a multiple of the dimension"));
    }
    let n = xs.len() / d;
    let rows: Vec<DVector<f64>> = xs
        .par_chunks_exact(d)
        .map(|x| featurize(x, a1, b1, activation))
        .collect();
    Ok(DMatrix::from_fn(n, k + 1, |i, j| rows[i][j]))
}

/// `(1/n) H^T H` and `(1/n) H^T y`.
pub fn normal_equations(features: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("ridge regression needs at least one sample".into()));
    }
    if y.len() != n {
        return Err(invalid(format!("{} labels for {} feature rows", y.len(), n)));
    }
    let nf = n as f64;
    Ok((features.tr_mul(features) / nf, features.tr_mul(y) / nf))
}

/// Cholesky solve of `(sigma + lambda I) beta = rhs`.
pub fn solve_system(sigma: &DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    let p = sigma.nrows();
    let sys = sigma + DMatrix::identity(p, p) * lambda;
    let scale = (0..p).map(|i| sigma[(i, i)].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(sys).ok_or(Error::SingularDesign { lambda })?;
    let l = chol.l_dirty();
    let tiny = (0..p).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * scale);
    if lambda == 0.0 && tiny {
        return Err(Error::SingularDesign { lambda });
    }
    let beta = chol.solve(rhs);
    if beta.iter().all(|v| v.is_finite()) {
        Ok(beta)
    } else {
        Err(Error::SingularDesign { lambda })
    }
}

/// Solves `(Sigma + lambda I) beta = (1/n) H^T y`.
pub fn ridge(features: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<RidgeFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(invalid(format!("penalty must be finite and nonnegative, got {lambda}")));
    }
    let (sigma, rhs) = normal_equations(features, y)?;
    Ok(RidgeFit {
        beta: solve_system(&sigma, &rhs, lambda)?,
        lambda,
        holdout_mse: None,
    })
}

/// Grid multipliers, scaled by `trace(Sigma) / (k + 1)` when `relative`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    pub lambda_grid: Vec<f64>,
    pub relative: bool,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            lambda_grid: vec![0.0, 1e-6, 1e-4, 1e-2, 1.0, 1e2],
            relative: true,
            holdout: 0.2,
            seed: 0,
        }
    }
}

impl RegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::Configuration("lambda_grid must be nonempty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Configuration("lambda_grid entries must be finite and nonnegative".into()));
        }
        if !(self.holdout > 0.0 && self.holdout < 1.0) {
            return Err(Error::Configuration(format!("holdout must lie in (0, 1), got {}", self.holdout)));
        }
        Ok(())
    }

    /// Absolute penalties for a feature matrix.
    pub fn grid_for(&self, features: &DMatrix<f64>) -> Vec<f64> {
        if !self.relative {
            return self.lambda_grid.clone();
        }
        let n = features.nrows().max(1) as f64;
        let trace: f64 = features.iter().map(|v| v * v).sum::<f64>() / n;
        let s = trace / features.ncols().max(1) as f64;
        self.lambda_grid.iter().map(|m| m * s).collect()
    }
}

/// Train/holdout index split.
pub fn holdout_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let h = (fraction * n as f64).round() as usize;
    if h == 0 || h >= n {
        return Err(invalid(format!(
            "holdout fraction {fraction} leaves an empty split for n = {n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let hold = idx.split_off(n - h);
    Ok((idx, hold))
}

fn rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    m.select_rows(idx)
}

fn squared_errors(pred: &DVector<f64>, y: &DVector<f64>) -> (f64, f64) {
    let m = y.len() as f64;
    let e: Vec<f64> = pred.iter().zip(y.iter()).map(|(p, t)| (p - t) * (p - t)).collect();
    let mean = e.iter().sum::<f64>() / m;
    let var = if e.len() > 1 {
        e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    (mean, (var / m).sqrt())
}

/// Fits every penalty on a training split and scores it on the holdout.
/// Penalties within one standard error of the best holdout error count as
/// tied and the largest of them is kept. The returned coefficients are
/// refit on all rows.
pub fn select_lambda(
    features: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    holdout: f64,
    seed: u64,
) -> Result<RidgeFit> {
    if grid.is_empty() {
        return Err(invalid("penalty grid is empty"));
    }
    if y.len() != features.nrows() {
        return Err(invalid(format!("{} labels for {} feature rows", y.len(), features.nrows())));
    }
    let (train, hold) = holdout_split(y.len(), holdout, seed)?;
    let (ft, yt) = (rows(features, &train), y.select_rows(&train));
    let (fh, yh) = (rows(features, &hold), y.select_rows(&hold));
    let (sigma, rhs) = normal_equations(&ft, &yt)?;
    let mut order: Vec<f64> = grid.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    order.dedup();
    let scored: Vec<(f64, Result<(f64, f64)>)> = order
        .par_iter()
        .map(|&lambda| {
            let r = solve_system(&sigma, &rhs, lambda).map(|beta| squared_errors(&(&fh * beta), &yh));
            (lambda, r)
        })
        .collect();
    let mut best: Option<(f64, f64, f64)> = None;
    let mut last_err = None;
    for (lambda, r) in &scored {
        match r {
            Ok((e, se)) if best.is_none_or(|(_, b, _)| *e < b) => best = Some((*lambda, *e, *se)),
            Ok(_) => {}
            Err(_) => last_err = Some(*lambda),
        }
    }
    let Some((_, e_min, se_min)) = best else {
        return Err(Error::SingularDesign {
            lambda: last_err.unwrap_or(0.0),
        });
    };
    // descending order: the first admissible entry is the largest penalty
    let (lambda, e) = scored
        .iter()
        .find_map(|(l, r)| match r {
            Ok((e, _)) if *e <= e_min + se_min => Some((*l, *e)),
            _ => None,
        })
        .expect("the minimizer is admissible");
    let mut fit = ridge(features, y, lambda)?;
    fit.holdout_mse = Some(e);
    Ok(fit)
}
