//! End-to-end training, synthetic targets, alignment and risk.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::cp::{decompose, DecomposeConfig, DecompositionResult};
use crate::error::{invalid, Error, Result, Stage};
use crate::fourier::{estimate_bias, flipped_bias, ActivationSpectrum, BiasEstimate, FourierConfig, FourierWarning};
use crate::moments::accumulate_parallel;
use crate::regression::{featurize, featurize_batch, holdout_split, select_lambda, RegressionConfig, RidgeFit};
use crate::score::{Density, GaussianDensity};

/// Independent seed for sub-task `stream` of a master seed.
pub fn sub_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// `f(x) = <a2, sigma(A1^T x + b1)> + b2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRepr", into = "ParamsRepr")]
pub struct NetworkParams {
    pub a1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub a2: DVector<f64>,
    pub b2: f64,
    pub activation: Activation,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsRepr {
    activation: Activation,
    /// Columns of the first-layer matrix.
    a1: Vec<Vec<f64>>,
    b1: Vec<f64>,
    a2: Vec<f64>,
    b2: f64,
}

impl From<NetworkParams> for ParamsRepr {
    fn from(p: NetworkParams) -> Self {
        ParamsRepr {
            activation: p.activation,
            a1: p.a1.column_iter().map(|c| c.iter().copied().collect()).collect(),
            b1: p.b1.as_slice().to_vec(),
            a2: p.a2.as_slice().to_vec(),
            b2: p.b2,
        }
    }
}

impl TryFrom<ParamsRepr> for NetworkParams {
    type Error = Error;

    fn try_from(r: ParamsRepr) -> Result<Self> {
        let k = r.a1.len();
        let d = r.a1.first().map_or(0, |c| c.len());
        if k == 0 || d == 0 || r.a1.iter().any(|c| c.len() != d) {
            return Err(invalid("first-layer columns must be nonempty and of equal length"));
        }
        let flat: Vec<f64> = r.a1.into_iter().flatten().collect();
        NetworkParams::new(
            DMatrix::from_vec(d, k, flat),
            DVector::from_vec(r.b1),
            DVector::from_vec(r.a2),
            r.b2,
            r.activation,
        )
    }
}

impl NetworkParams {
    pub fn new(
        a1: DMatrix<f64>,
        b1: DVector<f64>,
        a2: DVector<f64>,
        b2: f64,
        activation: Activation,
    ) -> Result<Self> {
        let k = a1.ncols();
        if b1.len() != k || a2.len() != k {
            return Err(invalid(format!(
                "{} columns but {} biases and {} output weights",
                k,
                b1.len(),
                a2.len()
            )));
        }
        let finite = a1.iter().chain(b1.iter()).chain(a2.iter()).all(|v| v.is_finite()) && b2.is_finite();
        if !finite {
            return Err(invalid("network parameters must be finite"));
        }
        Ok(Self {
            a1,
            b1,
            a2,
            b2,
            activation,
        })
    }

    pub fn dim(&self) -> usize {
        self.a1.nrows()
    }

    pub fn width(&self) -> usize {
        self.a1.ncols()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let h = featurize(x, &self.a1, &self.b1, self.activation);
        (0..self.width()).map(|j| self.a2[j] * h[j]).sum::<f64>() + self.b2
    }

    pub fn eval_batch(&self, xs: &[f64]) -> Vec<f64> {
        xs.par_chunks_exact(self.dim()).map(|x| self.eval(x)).collect()
    }
}

/// Inputs stored row-major with scalar labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if dim == 0 || xs.len() != dim * ys.len() {
            return Err(invalid(format!(
                "{} input values do not form {} rows of dimension {}",
                xs.len(),
                ys.len(),
                dim
            )));
        }
        Ok(Self { dim, xs, ys })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.xs[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelMode {
    /// `y ~ Bernoulli(f(x))`.
    Binary,
    /// `y = f(x) + noise * N(0, 1)`.
    Continuous { noise: f64 },
}

/// Random realizable network and a sample from it.
pub fn random_network(d: usize, k: usize, activation: Activation, labels: LabelMode, seed: u64) -> Result<NetworkParams> {
    if d == 0 || k == 0 {
        return Err(invalid("dimension and width must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a1 = DMatrix::zeros(d, k);
    for j in 0..k {
        let col = loop {
            let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let n = g.norm();
            if n > 1e-8 {
                break g / n;
            }
        };
        a1.set_column(j, &col);
    }
    let b1 = DVector::from_fn(k, |_, _| rng.random_range(-1.0..=1.0));
    let a2_raw = DVector::from_fn(k, |_, _| rng.random_range(0.5..=1.0));
    let b2_raw: f64 = rng.random_range(0.0..=0.5);
    let (a2, b2) = match labels {
        LabelMode::Binary => {
            if matches!(activation, Activation::Linear) {
                return Err(invalid("binary labels need a bounded activation"));
            }
            let s = 1.0 / (a2_raw.sum() + 2.0 * b2_raw);
            (a2_raw * s, b2_raw * s)
        }
        LabelMode::Continuous { .. } => (a2_raw, b2_raw),
    };
    NetworkParams::new(a1, b1, a2, b2, activation)
}

pub fn generate_realizable(
    d: usize,
    k: usize,
    n: usize,
    sigma_x: f64,
    activation: Activation,
    labels: LabelMode,
    seed: u64,
) -> Result<(Dataset, NetworkParams)> {
    if n == 0 {
        return Err(invalid("sample count must be positive"));
    }
    if let LabelMode::Continuous { noise } = labels {
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err(invalid("label noise must be finite and nonnegative"));
        }
    }
    let params = random_network(d, k, activation, labels, sub_seed(seed, 0))?;
    let density = GaussianDensity::from_std(d, sigma_x)?;
    let xs = density.sample(n, &mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 1)));
    let f = params.eval_batch(&xs);
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2));
    let ys = match labels {
        LabelMode::Binary => f
            .iter()
            .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            .collect(),
        LabelMode::Continuous { noise } => f
            .iter()
            .map(|&v| v + noise * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    };
    Ok((Dataset::new(d, xs, ys)?, params))
}

/// `g K(alpha (x + beta))` with `K(u) = exp(-|u|^2 / 2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelComponent {
    pub alpha: f64,
    pub beta: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelMixtureTarget {
    pub components: Vec<KernelComponent>,
}

impl KernelMixtureTarget {
    pub fn new(components: Vec<KernelComponent>) -> Result<Self> {
        let t = Self { components };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.components.first().map_or(0, |c| c.beta.len());
        for c in &self.components {
            if !(c.alpha > 0.0 && c.alpha.is_finite()) || !c.weight.is_finite() {
                return Err(invalid("kernel scales must be positive and weights finite"));
            }
            if c.beta.len() != d || c.beta.iter().any(|v| !v.is_finite()) {
                return Err(invalid("kernel shifts must be finite and share one dimension"));
            }
        }
        Ok(())
    }

    /// `m` components with `alpha ~ U[0.5, 1]`, `beta ~ N(0, I/4)`,
    /// `g ~ U[0.5, 1]`.
    pub fn random(d: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let components = (0..m)
            .map(|_| KernelComponent {
                alpha: rng.random_range(0.5..=1.0),
                beta: (0..d).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect(),
                weight: rng.random_range(0.5..=1.0),
            })
            .collect();
        Self { components }
    }

    pub fn dim(&self) -> Option<usize> {
        self.components.first().map(|c| c.beta.len())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let r2: f64 = x.iter().zip(&c.beta).map(|(a, b)| (c.alpha * (a + b)).powi(2)).sum();
                c.weight * (-0.5 * r2).exp()
            })
            .sum()
    }
}

pub fn generate_kernel_target(target: &KernelMixtureTarget, d: usize, n: usize, sigma_x: f64, seed: u64) -> Result<Dataset> {
    target.validate()?;
    if n == 0 {
        return Err(invalid("sample count must be positive"));
    }
    if target.dim().is_some_and(|td| td != d) {
        return Err(invalid("kernel shift dimension does not match the input dimension"));
    }
    let density = GaussianDensity::from_std(d, sigma_x)?;
    let xs = density.sample(n, &mut ChaCha8Rng::seed_from_u64(sub_seed(seed, 1)));
    let ys = xs.par_chunks_exact(d).map(|x| target.eval(x)).collect();
    Dataset::new(d, xs, ys)
}

/// Candidate sign combinations for the recovered columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignSearch {
    /// Exhaustive up to 12 columns, greedy beyond.
    #[default]
    Auto,
    Exhaustive,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub decomposition: DecomposeConfig,
    pub fourier: FourierConfig,
    pub regression: RegressionConfig,
    pub sign_search: SignSearch,
    pub shard_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            decomposition: DecomposeConfig::default(),
            fourier: FourierConfig::default(),
            regression: RegressionConfig::default(),
            sign_search: SignSearch::Auto,
            shard_size: 4096,
        }
    }
}

impl TrainConfig {
    /// Derives every sub-task seed from one master seed.
    pub fn with_seed(mut self, master: u64) -> Self {
        self.decomposition.power.seed = sub_seed(master, 10);
        if let crate::cp::WhiteningSource::Contracted { seed } = &mut self.decomposition.source {
            *seed = sub_seed(master, 11);
        }
        self.fourier.seed = sub_seed(master, 12);
        self.regression.seed = sub_seed(master, 13);
        self
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub moments: f64,
    pub decomposition: f64,
    pub fourier: f64,
    pub regression: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.moments + self.decomposition + self.fourier + self.regression
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: NetworkParams,
    pub decomposition: DecompositionResult,
    pub bias: BiasEstimate,
    pub fit: RidgeFit,
    /// Columns whose direction was negated by sign resolution.
    pub flipped: Vec<bool>,
    pub timings: StageTimings,
}

/// Runs moments, decomposition, bias recovery and the output-layer fit.
pub fn train(
    data: &Dataset,
    density: &dyn Density,
    k: usize,
    activation: Activation,
    cfg: &TrainConfig,
) -> Result<TrainOutput> {
    if density.dim() != data.dim {
        return Err(invalid("density dimension does not match the dataset"));
    }
    if data.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    cfg.regression.validate().map_err(|e| e.at(Stage::Regression))?;
    let n = data.len();
    let mean = data.ys.iter().sum::<f64>() / n as f64;
    let yc: Vec<f64> = data.ys.iter().map(|y| y - mean).collect();

    let clock = Instant::now();
    let (m2, t) = accumulate_parallel(&data.xs, &yc, density, cfg.shard_size)
        .and_then(|acc| acc.finalize())
        .map_err(|e| e.at(Stage::Moments))?;
    let t_moments = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let dec = decompose(&m2, &t, k, &cfg.decomposition).map_err(|e| e.at(Stage::Decomposition))?;
    let mut a1 = dec.directions.clone();
    for mut c in a1.column_iter_mut() {
        let nrm = c.norm();
        c /= nrm;
    }
    let t_dec = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let spectrum = ActivationSpectrum::for_activation(activation).map_err(|e| e.at(Stage::Fourier))?;
    let bias = estimate_bias(&data.xs, &yc, density, &a1, &spectrum, &cfg.fourier).map_err(|e| e.at(Stage::Fourier))?;
    let t_fourier = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let y = DVector::from_column_slice(&data.ys);
    let b_flip = bias.b1.map(|b| flipped_bias(b, &spectrum));
    let flipped = resolve_signs(data, &y, &a1, &bias.b1, &b_flip, activation, cfg).map_err(|e| e.at(Stage::Regression))?;
    let mut b1 = bias.b1.clone();
    for j in 0..k {
        if flipped[j] {
            a1.set_column(j, &(-a1.column(j)));
            b1[j] = b_flip[j];
        }
    }
    let features = featurize_batch(&data.xs, &a1, &b1, activation).map_err(|e| e.at(Stage::Regression))?;
    let grid = cfg.regression.grid_for(&features);
    let fit = select_lambda(&features, &y, &grid, cfg.regression.holdout, cfg.regression.seed)
        .map_err(|e| e.at(Stage::Regression))?;
    let t_reg = clock.elapsed().as_secs_f64();

    let params = NetworkParams::new(a1, b1, fit.a2(), fit.b2(), activation)?;
    Ok(TrainOutput {
        params,
        decomposition: dec,
        bias,
        fit,
        flipped,
        timings: StageTimings {
            moments: t_moments,
            decomposition: t_dec,
            fourier: t_fourier,
            regression: t_reg,
        },
    })
}

/// Picks, for every column, either `(a, b)` or `(-a, b')` by the holdout
/// error of the best ridge fit over the penalty grid.
fn resolve_signs(
    data: &Dataset,
    y: &DVector<f64>,
    a1: &DMatrix<f64>,
    b_plus: &DVector<f64>,
    b_minus: &DVector<f64>,
    activation: Activation,
    cfg: &TrainConfig,
) -> Result<Vec<bool>> {
    let k = a1.ncols();
    let mut both = DMatrix::zeros(a1.nrows(), 2 * k);
    both.columns_mut(0, k).copy_from(a1);
    both.columns_mut(k, k).copy_from(&(-a1));
    let mut bb = DVector::zeros(2 * k);
    bb.rows_mut(0, k).copy_from(b_plus);
    bb.rows_mut(k, k).copy_from(b_minus);
    let f = featurize_batch(&data.xs, &both, &bb, activation)?;
    let (train, hold) = holdout_split(data.len(), cfg.regression.holdout, cfg.regression.seed)?;
    let (ft, fh) = (f.select_rows(&train), f.select_rows(&hold));
    let (yt, yh) = (y.select_rows(&train), y.select_rows(&hold));
    let gt = ft.tr_mul(&ft) / train.len() as f64;
    let rt = ft.tr_mul(&yt) / train.len() as f64;
    let gh = fh.tr_mul(&fh) / hold.len() as f64;
    let rh = fh.tr_mul(&yh) / hold.len() as f64;
    let yy = yh.norm_squared() / hold.len() as f64;

    let score = |flips: &[bool]| -> f64 {
        let mut idx: Vec<usize> = (0..k).map(|j| if flips[j] { k + j } else { j }).collect();
        idx.push(2 * k);
        let g = gt.select_rows(&idx).select_columns(&idx);
        let r = rt.select_rows(&idx);
        let gh_s = gh.select_rows(&idx).select_columns(&idx);
        let rh_s = rh.select_rows(&idx);
        let scale = if cfg.regression.relative { g.trace() / (k + 1) as f64 } else { 1.0 };
        let mut best = f64::INFINITY;
        for &m in &cfg.regression.lambda_grid {
            if let Ok(beta) = crate::regression::solve_system(&g, &r, m * scale) {
                let mse = yy - 2.0 * beta.dot(&rh_s) + beta.dot(&(&gh_s * &beta));
                if mse < best {
                    best = mse;
                }
            }
        }
        best
    };

    let exhaustive = match cfg.sign_search {
        SignSearch::Exhaustive => true,
        SignSearch::Greedy => false,
        SignSearch::Auto => k <= 12,
    };
    if exhaustive {
        let combos: Vec<(u64, f64)> = (0..1u64 << k)
            .into_par_iter()
            .map(|mask| {
                let flips: Vec<bool> = (0..k).map(|j| mask >> j & 1 == 1).collect();
                (mask, score(&flips))
            })
            .collect();
        let mut best = (0u64, f64::INFINITY);
        for (mask, s) in combos {
            if s < best.1 {
                best = (mask, s);
            }
        }
        if !best.1.is_finite() {
            return Err(Error::SingularDesign { lambda: 0.0 });
        }
        Ok((0..k).map(|j| best.0 >> j & 1 == 1).collect())
    } else {
        let mut flips = vec![false; k];
        let mut current = score(&flips);
        loop {
            let mut improved = false;
            for j in 0..k {
                flips[j] = !flips[j];
                let s = score(&flips);
                if s < current {
                    current = s;
                    improved = true;
                } else {
                    flips[j] = !flips[j];
                }
            }
            if !improved {
                break;
            }
        }
        if !current.is_finite() {
            return Err(Error::SingularDesign { lambda: 0.0 });
        }
        Ok(flips)
    }
}

/// Minimum-cost perfect matching on a square cost matrix; entry `i` of the
/// result is the column assigned to row `i`.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = cost.nrows();
    if cost.ncols() != n {
        return Err(invalid("assignment cost matrix must be square"));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(invalid("assignment costs must be finite"));
    }
    // potentials, 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    Ok(assign)
}

/// Matching of true to estimated columns under sign flips.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// True column `i` is matched to estimated column `permutation[i]`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    /// `|a_i - z_i a_hat_{pi(i)}|`.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub mean_error: f64,
}

pub fn align(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<AlignmentReport> {
    if truth.shape() != est.shape() {
        return Err(invalid(format!(
            "cannot align {:?} with {:?}",
            truth.shape(),
            est.shape()
        )));
    }
    let k = truth.ncols();
    let cost = DMatrix::from_fn(k, k, |i, j| {
        let (a, b) = (truth.column(i), est.column(j));
        let den = a.norm() * b.norm();
        let c = if den > 0.0 { a.dot(&b) / den } else { 0.0 };
        1.0 - c.abs()
    });
    let permutation = hungarian(&cost)?;
    let mut signs = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for (i, &j) in permutation.iter().enumerate() {
        let (a, b) = (truth.column(i), est.column(j));
        let z = if a.dot(&b) < 0.0 { -1.0 } else { 1.0 };
        signs.push(z);
        errors.push((a - b * z).norm());
    }
    let max_error = errors.iter().cloned().fold(0.0, f64::max);
    let mean_error = if k > 0 { errors.iter().sum::<f64>() / k as f64 } else { 0.0 };
    Ok(AlignmentReport {
        permutation,
        signs,
        errors,
        max_error,
        mean_error,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub risk: f64,
    pub std_error: f64,
    /// Sample variance of the target on the same points.
    pub target_variance: f64,
    pub n: usize,
}

impl RiskEstimate {
    pub fn relative(&self) -> f64 {
        self.risk / self.target_variance
    }
}

/// Monte-Carlo `E |f(x) - f_hat(x)|^2` over fresh draws from `sampler`.
pub fn risk(
    f_true: impl Fn(&[f64]) -> f64 + Sync,
    f_est: impl Fn(&[f64]) -> f64 + Sync,
    sampler: &GaussianDensity,
    n_mc: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if n_mc < 2 {
        return Err(invalid("risk estimation needs at least two points"));
    }
    let d = sampler.dim();
    let xs = sampler.sample(n_mc, &mut ChaCha8Rng::seed_from_u64(seed));
    let pairs: Vec<(f64, f64)> = xs
        .par_chunks_exact(d)
        .map(|x| {
            let t = f_true(x);
            (t, (t - f_est(x)).powi(2))
        })
        .collect();
    let m = n_mc as f64;
    let r = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let var_r = pairs.iter().map(|p| (p.1 - r).powi(2)).sum::<f64>() / (m - 1.0);
    let ft = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let var_f = pairs.iter().map(|p| (p.0 - ft).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(RiskEstimate {
        risk: r,
        std_error: (var_r / m).sqrt(),
        target_variance: var_f,
        n: n_mc,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub seed: u64,
    pub alignment: Option<AlignmentReport>,
    /// `|b1 - b1_hat|` per true column after alignment.
    pub bias_errors: Option<Vec<f64>>,
    /// `|a2 - a2_hat|` per true column after alignment.
    pub output_errors: Option<Vec<f64>>,
    pub b2_error: Option<f64>,
    pub risk: RiskEstimate,
    pub lambda: f64,
    pub flipped: Vec<bool>,
    pub repaired: bool,
    pub warnings: Vec<FourierWarning>,
    pub timings: StageTimings,
}

impl ExperimentReport {
    pub fn max_column_error(&self) -> Option<f64> {
        self.alignment.as_ref().map(|a| a.max_error)
    }

    pub fn mean_column_error(&self) -> Option<f64> {
        self.alignment.as_ref().map(|a| a.mean_error)
    }

    pub fn max_bias_error(&self) -> Option<f64> {
        self.bias_errors.as_ref().map(|b| b.iter().cloned().fold(0.0, f64::max))
    }
}

fn base_report(out: &TrainOutput, data: &Dataset, seed: u64, risk: RiskEstimate) -> ExperimentReport {
    ExperimentReport {
        d: data.dim,
        k: out.params.width(),
        n: data.len(),
        seed,
        alignment: None,
        bias_errors: None,
        output_errors: None,
        b2_error: None,
        risk,
        lambda: out.fit.lambda,
        flipped: out.flipped.clone(),
        repaired: out.decomposition.repaired,
        warnings: out.bias.warnings.clone(),
        timings: out.timings,
    }
}

/// Scores a trained network against the generating one. Fresh points are
/// drawn from a stream of the master `seed`.
pub fn evaluate_realizable(
    truth: &NetworkParams,
    out: &TrainOutput,
    data: &Dataset,
    sampler: &GaussianDensity,
    n_mc: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let est = &out.params;
    let al = align(&truth.a1, &est.a1)?;
    let mut bias_errors = Vec::new();
    let mut output_errors = Vec::new();
    for (i, &j) in al.permutation.iter().enumerate() {
        let z = al.signs[i];
        bias_errors.push((truth.b1[i] - z * est.b1[j]).abs());
        output_errors.push((truth.a2[i] - z * est.a2[j]).abs());
    }
    // a negated unit contributes a2 to the intercept
    let shift: f64 = al
        .permutation
        .iter()
        .enumerate()
        .filter(|(i, _)| al.signs[*i] < 0.0)
        .map(|(_, &j)| est.a2[j])
        .sum();
    let r = risk(|x| truth.eval(x), |x| est.eval(x), sampler, n_mc, sub_seed(seed, 3))?;
    let mut rep = base_report(out, data, seed, r);
    rep.b2_error = Some((truth.b2 - est.b2 - shift).abs());
    rep.alignment = Some(al);
    rep.bias_errors = Some(bias_errors);
    rep.output_errors = Some(output_errors);
    Ok(rep)
}

/// Scores a trained network against an arbitrary target.
pub fn evaluate_target(
    target: impl Fn(&[f64]) -> f64 + Sync,
    out: &TrainOutput,
    data: &Dataset,
    sampler: &GaussianDensity,
    n_mc: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let r = risk(target, |x| out.params.eval(x), sampler, n_mc, sub_seed(seed, 3))?;
    Ok(base_report(out, data, seed, r))
}

/// Realizable experiment description.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealizableSpec {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub sigma_x: f64,
    pub activation: Activation,
    pub labels: LabelMode,
}

/// Generate, train and evaluate with every seed derived from `seed`.
pub fn run_realizable(spec: &RealizableSpec, cfg: &TrainConfig, n_mc: usize, seed: u64) -> Result<ExperimentReport> {
    let (data, truth) = generate_realizable(spec.d, spec.k, spec.n, spec.sigma_x, spec.activation, spec.labels, seed)?;
    let density = GaussianDensity::from_std(spec.d, spec.sigma_x)?;
    let out = train(&data, &density, spec.k, spec.activation, &cfg.clone().with_seed(seed))?;
    evaluate_realizable(&truth, &out, &data, &density, n_mc, seed)
}

/// Kernel-mixture experiment; the target is drawn from `seed` unless given.
#[allow(clippy::too_many_arguments)]
pub fn run_kernel(
    target: &KernelMixtureTarget,
    d: usize,
    k: usize,
    n: usize,
    sigma_x: f64,
    activation: Activation,
    cfg: &TrainConfig,
    n_mc: usize,
    seed: u64,
) -> Result<ExperimentReport> {
    let data = generate_kernel_target(target, d, n, sigma_x, seed)?;
    let density = GaussianDensity::from_std(d, sigma_x)?;
    let out = train(&data, &density, k, activation, &cfg.clone().with_seed(seed))?;
    evaluate_target(|x| target.eval(x), &out, &data, &density, n_mc, seed)
}
