//! Symmetric CP decomposition by whitening and robust tensor power
//! iteration, with deflation and un-whitening back to input space.
//!
//! When the paired second moment is indefinite the whitened components are
//! only orthogonal in a signed inner product and power iteration does not
//! converge to them. `decompose` then runs a simultaneous-diagonalization
//! pass in whitened space, estimates the sign of every coefficient, and
//! rebuilds a positive semidefinite second moment `T(I, I, theta)` with
//! `<a_j, theta> = sign(lambda_j)` before the power method proper.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::tensor::{contract_mode1, multilinear_sym, Tensor3};

/// Power-method settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerConfig {
    /// Updates per restart.
    pub iterations: usize,
    /// Restarts per component; `None` means `10 k`.
    pub restarts: Option<usize>,
    pub tol: f64,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            restarts: None,
            tol: 1e-10,
            seed: 0,
        }
    }
}

impl PowerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("power iterations must be at least 1"));
        }
        if self.restarts == Some(0) {
            return Err(invalid("power restarts must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(invalid("power tolerance must be positive"));
        }
        Ok(())
    }

    pub fn restarts_for(&self, k: usize) -> usize {
        self.restarts.unwrap_or(10 * k).max(1)
    }
}

/// Which second-order moment drives the whitening.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WhiteningSource {
    /// The supplied `M2`.
    SecondMoment,
    /// `T(I, I, theta)` with `theta` standard normal from this seed.
    Contracted { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeConfig {
    pub power: PowerConfig,
    pub source: WhiteningSource,
    /// Relative floor on the k-th whitening eigenvalue.
    pub eigen_floor: f64,
    /// Rebuild a definite second moment when the whitening moment is
    /// indefinite.
    pub sign_repair: bool,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self {
            power: PowerConfig::default(),
            source: WhiteningSource::SecondMoment,
            eigen_floor: 1e-10,
            sign_repair: true,
        }
    }
}

/// Rank-k whitening map `W = U Diag(|gamma|^{-1/2})`.
#[derive(Clone, Debug, PartialEq)]
pub struct WhiteningTransform {
    pub w: DMatrix<f64>,
    pub u: DMatrix<f64>,
    pub gamma: DVector<f64>,
    pub signs: DVector<f64>,
}

impl WhiteningTransform {
    pub fn rank(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_definite(&self) -> bool {
        let s0 = self.signs[0];
        self.signs.iter().all(|&s| s == s0)
    }

    /// `U Diag(|gamma|^{1/2})`, the left inverse of `W^T` on the range.
    pub fn dewhitening(&self) -> DMatrix<f64> {
        let mut m = self.u.clone();
        for (j, mut col) in m.column_iter_mut().enumerate() {
            col *= self.gamma[j].abs().sqrt();
        }
        m
    }
}

/// Top-k eigenpairs by magnitude, largest first.
fn top_eigen(m2: &DMatrix<f64>, k: usize, floor: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = m2.nrows();
    if m2.ncols() != d {
        return Err(invalid("second moment must be square"));
    }
    if k == 0 || k > d {
        return Err(invalid(format!("rank {k} must lie in 1..={d}")));
    }
    let sym = (m2 + m2.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let lead = eig.eigenvalues[order[0]].abs();
    let thresh = floor * lead.max(1.0);
    let mut u = DMatrix::zeros(d, k);
    let mut gamma = DVector::zeros(k);
    for (j, &idx) in order.iter().take(k).enumerate() {
        let g = eig.eigenvalues[idx];
        if !(g.abs() > thresh) {
            return Err(Error::IllConditionedMoment {
                index: j,
                magnitude: g.abs(),
                floor: thresh,
            });
        }
        gamma[j] = g;
        let mut col = eig.eigenvectors.column(idx).into_owned();
        // deterministic eigenvector sign: largest entry positive
        let imax = col.iamax();
        if col[imax] < 0.0 {
            col = -col;
        }
        u.set_column(j, &col);
    }
    Ok((u, gamma))
}

fn transform_from(u: DMatrix<f64>, gamma: DVector<f64>) -> WhiteningTransform {
    let mut w = u.clone();
    for (j, mut col) in w.column_iter_mut().enumerate() {
        col /= gamma[j].abs().sqrt();
    }
    let signs = gamma.map(|g| if g < 0.0 { -1.0 } else { 1.0 });
    WhiteningTransform { w, u, gamma, signs }
}

/// Whitening map from the top-k eigenpairs of `m2` and the whitened tensor
/// `T(W, W, W)`.
pub fn whiten(m2: &DMatrix<f64>, t: &Tensor3, k: usize) -> Result<(WhiteningTransform, Tensor3)> {
    whiten_with_floor(m2, t, k, 1e-10)
}

pub fn whiten_with_floor(
    m2: &DMatrix<f64>,
    t: &Tensor3,
    k: usize,
    floor: f64,
) -> Result<(WhiteningTransform, Tensor3)> {
    let d = t
        .cubic_dim()
        .ok_or_else(|| invalid("moment tensor must be cubic"))?;
    if m2.nrows() != d {
        return Err(invalid(format!(
            "second moment is {}x{}, tensor side is {}",
            m2.nrows(),
            m2.ncols(),
            d
        )));
    }
    let (u, gamma) = top_eigen(m2, k, floor)?;
    let wt = transform_from(u, gamma);
    let tw = multilinear_sym(t, &wt.w)?;
    Ok((wt, tw))
}

/// `M2 = T(I, I, theta)`.
pub fn second_moment_option2(t: &Tensor3, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    t.contract_mode3(theta)
}

fn gaussian_vector(k: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

fn top_left_singular(m: DMatrix<f64>) -> DVector<f64> {
    let svd = m.svd(true, false);
    svd.u.expect("requested u").column(0).into_owned()
}

fn init_candidate(t: &Tensor3, rng: &mut ChaCha8Rng) -> Result<DVector<f64>> {
    let k = t.dims()[0];
    let theta = gaussian_vector(k, rng);
    Ok(top_left_singular(t.contract_mode3(&theta)?))
}

/// SVD-based initialization: best of `trials` top singular vectors of
/// `T(I, I, theta)` by `|T(u, u, u)|`, oriented so `T(u, u, u) >= 0`.
pub fn svd_init(t: &Tensor3, trials: usize, seed: u64) -> Result<DVector<f64>> {
    if t.cubic_dim().is_none() {
        return Err(invalid("svd_init needs a cubic tensor"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(f64, DVector<f64>)> = None;
    for _ in 0..trials.max(1) {
        let u = init_candidate(t, &mut rng)?;
        let val = t.cubic_form(&u)?;
        if best.as_ref().is_none_or(|(b, _)| val.abs() > *b) {
            let u = if val < 0.0 { -u } else { u };
            best = Some((val.abs(), u));
        }
    }
    Ok(best.expect("at least one trial").1)
}

/// Outcome of one power run.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerResult {
    pub vector: DVector<f64>,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `v <- T(I, v, v) / |T(I, v, v)|` until `|1 - <v_t, v_{t-1}>| < tol`
/// or `iterations` updates; returns `v` and `mu = T(v, v, v)`.
pub fn power_iterate(t: &Tensor3, v0: &DVector<f64>, cfg: &PowerConfig) -> Result<PowerResult> {
    power_run(t, v0, cfg.iterations, cfg.tol)
}

fn power_run(t: &Tensor3, v0: &DVector<f64>, iterations: usize, tol: f64) -> Result<PowerResult> {
    let nv = v0.norm();
    if !(nv > 0.0) {
        return Err(invalid("power iteration needs a nonzero start vector"));
    }
    let mut v = v0 / nv;
    let mut converged = false;
    let mut used = 0;
    for _ in 0..iterations {
        let w = contract_mode1(t, &v, &v)?;
        let norm = w.norm();
        if norm < 1e-14 {
            return Err(Error::DegenerateIterate { norm });
        }
        let next = w / norm;
        let step = (1.0 - next.dot(&v)).abs();
        v = next;
        used += 1;
        if step < tol {
            converged = true;
            break;
        }
    }
    let mu = t.cubic_form(&v)?;
    Ok(PowerResult {
        vector: v,
        eigenvalue: mu,
        iterations: used,
        converged,
    })
}

/// `T - mu v^{(x)3}`.
pub fn deflate(t: &Tensor3, v: &DVector<f64>, mu: f64) -> Result<Tensor3> {
    if t.cubic_dim() != Some(v.len()) {
        return Err(invalid("deflation vector does not match tensor"));
    }
    let mut out = t.clone();
    out.add_rank_one(-mu, v, v, v);
    Ok(out)
}

/// `U Diag(|gamma|^{1/2}) v / sqrt(|lambda_tilde|)`, normalized to unit norm.
pub fn unwhiten(wt: &WhiteningTransform, v: &DVector<f64>, lambda_tilde: f64) -> Result<DVector<f64>> {
    if v.len() != wt.rank() {
        return Err(invalid("whitened vector length does not match the transform rank"));
    }
    if !(lambda_tilde.abs() > 1e-14) {
        return Err(Error::DegenerateCoefficient {
            index: 0,
            value: lambda_tilde,
        });
    }
    let a = wt.dewhitening() * v / lambda_tilde.abs().sqrt();
    let n = a.norm();
    if !(n > 0.0) {
        return Err(Error::DegenerateCoefficient { index: 0, value: n });
    }
    Ok(a / n)
}

/// Per-component diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentDiagnostics {
    /// Whitened-tensor Frobenius norm after deflating this component.
    pub residual_norm: f64,
    /// Power updates spent on the selected restart, including refinement.
    pub iterations: usize,
    pub converged: bool,
    pub failed_restarts: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompositionResult {
    /// Unit-norm recovered directions, one per column.
    pub directions: DMatrix<f64>,
    /// Whitened eigenvalues `mu_j >= 0`.
    pub mu: DVector<f64>,
    /// Second-order coefficients, least squares against the whitening moment.
    pub lambda_tilde: DVector<f64>,
    /// Third-order coefficients, least squares against the input tensor.
    pub lambda: DVector<f64>,
    pub whitening: WhiteningTransform,
    pub diagnostics: Vec<ComponentDiagnostics>,
    /// Whether the definite second moment was rebuilt.
    pub repaired: bool,
    /// Eigenvalues of the original whitening moment (before repair).
    pub initial_gamma: DVector<f64>,
}

/// Least-squares weights `c` minimizing `|T - sum c_j a_j^{(x)3}|_F`.
pub fn third_order_weights(t: &Tensor3, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = a.ncols();
    let gram = a.transpose() * a;
    let g = gram.map(|v| v * v * v);
    let mut rhs = DVector::zeros(k);
    for j in 0..k {
        let col = a.column(j).into_owned();
        rhs[j] = t.cubic_form(&col)?;
    }
    lstsq(&g, &rhs)
}

/// Least-squares weights `c` minimizing `|M - sum c_j a_j a_j^T|_F`.
pub fn second_order_weights(m: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<DVector<f64>> {
    let k = a.ncols();
    let gram = a.transpose() * a;
    let g = gram.map(|v| v * v);
    let mut rhs = DVector::zeros(k);
    for j in 0..k {
        let col = a.column(j);
        rhs[j] = (col.transpose() * m * col)[(0, 0)];
    }
    lstsq(&g, &rhs)
}

fn lstsq(g: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = g.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    svd.solve(rhs, eps).map_err(|e| invalid(e.to_string()))
}

/// Directions of a tensor whose whitened components are linearly
/// independent but not orthogonal, by simultaneous diagonalization of two
/// random slices. Returns unit columns in input space.
fn simultaneous_diagonalization(
    tw: &Tensor3,
    wt: &WhiteningTransform,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let k = wt.rank();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut best: Option<(f64, DMatrix<f64>)> = None;
    for _ in 0..8 {
        let ma = tw.contract_mode3(&gaussian_vector(k, &mut rng))?;
        let mb = tw.contract_mode3(&gaussian_vector(k, &mut rng))?;
        let Some(mb_inv) = mb.clone().try_inverse() else {
            continue;
        };
        let m = &ma * mb_inv;
        let evals = m.clone().complex_eigenvalues();
        let scale = evals.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(1e-300);
        let imag = evals.iter().map(|z| z.im.abs()).fold(0.0f64, f64::max) / scale;
        let mut vecs = DMatrix::zeros(k, k);
        for (j, z) in evals.iter().enumerate() {
            let shifted = &m - DMatrix::identity(k, k) * z.re;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t.expect("requested v_t");
            vecs.set_row(j, &vt.row(k - 1));
        }
        let vecs = vecs.transpose();
        // separation of real parts, relative to scale
        let mut sep = f64::INFINITY;
        for i in 0..k {
            for j in 0..i {
                sep = sep.min((evals[i].re - evals[j].re).abs() / scale);
            }
        }
        let score = if k == 1 { 1.0 } else { sep } - imag;
        let a = wt.dewhitening() * vecs;
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, a));
        }
        if imag < 1e-8 && sep > 1e-3 {
            break;
        }
    }
    let (_, mut a) = best.ok_or_else(|| Error::DegenerateIterate { norm: 0.0 })?;
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > 0.0 {
            col /= n;
        }
    }
    Ok(a)
}

/// Definite second moment `T(I, I, theta)` with `<a_j, theta> = sign(lambda_j)`
/// for the directions `a` estimated without orthogonality.
fn repaired_second_moment(t: &Tensor3, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let lam = third_order_weights(t, a)?;
    let signs = lam.map(|l| if l < 0.0 { -1.0 } else { 1.0 });
    let gram = a.transpose() * a;
    let coef = lstsq(&gram, &signs)?;
    let theta = a * coef;
    t.contract_mode3(&theta)
}

fn restart_rng(seed: u64, component: usize, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((component as u64) << 32) | restart as u64);
    rng
}

/// Extract `k` components from an orthogonally decomposable whitened
/// tensor: best-of-R power runs per component, refinement, deflation.
pub fn power_deflate(
    tw: &Tensor3,
    k: usize,
    cfg: &PowerConfig,
) -> Result<(DMatrix<f64>, DVector<f64>, Vec<ComponentDiagnostics>)> {
    cfg.validate()?;
    let p = tw
        .cubic_dim()
        .ok_or_else(|| invalid("whitened tensor must be cubic"))?;
    if k > p {
        return Err(invalid(format!("cannot extract {k} components from side {p}")));
    }
    let r = cfg.restarts_for(k);
    let mut work = tw.clone();
    let mut vs = DMatrix::zeros(p, k);
    let mut mus = DVector::zeros(k);
    let mut diags = Vec::with_capacity(k);
    for j in 0..k {
        let runs: Vec<Result<PowerResult>> = (0..r)
            .into_par_iter()
            .map(|rs| {
                let mut rng = restart_rng(cfg.seed, j, rs);
                let v0 = init_candidate(&work, &mut rng)?;
                power_run(&work, &v0, cfg.iterations, cfg.tol)
            })
            .collect();
        let failed = runs.iter().filter(|r| r.is_err()).count();
        let mut best: Option<PowerResult> = None;
        let mut first_err = None;
        for run in runs {
            match run {
                Ok(res) => {
                    if best.as_ref().is_none_or(|b| res.eigenvalue > b.eigenvalue) {
                        best = Some(res);
                    }
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let best = match best {
            Some(b) => b,
            None => {
                return Err(Error::Component {
                    index: j,
                    source: Box::new(first_err.expect("all restarts failed")),
                })
            }
        };
        let refined = power_run(&work, &best.vector, 2 * cfg.iterations, cfg.tol).map_err(|e| {
            Error::Component {
                index: j,
                source: Box::new(e),
            }
        })?;
        let (mut v, mut mu) = (refined.vector, refined.eigenvalue);
        if mu < 0.0 {
            v = -v;
            mu = -mu;
        }
        work = deflate(&work, &v, mu)?;
        vs.set_column(j, &v);
        mus[j] = mu;
        diags.push(ComponentDiagnostics {
            residual_norm: work.frobenius_norm(),
            iterations: best.iterations + refined.iterations,
            converged: refined.converged,
            failed_restarts: failed,
        });
    }
    Ok((vs, mus, diags))
}

/// Whitening, power iteration with deflation, and un-whitening.
pub fn decompose(
    m2: &DMatrix<f64>,
    t: &Tensor3,
    k: usize,
    cfg: &DecomposeConfig,
) -> Result<DecompositionResult> {
    cfg.power.validate()?;
    let d = t
        .cubic_dim()
        .ok_or_else(|| invalid("moment tensor must be cubic"))?;
    let base = match cfg.source {
        WhiteningSource::SecondMoment => m2.clone(),
        WhiteningSource::Contracted { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            second_moment_option2(t, &gaussian_vector(d, &mut rng))?
        }
    };
    let (mut wt, mut tw) = whiten_with_floor(&base, t, k, cfg.eigen_floor)?;
    let initial_gamma = wt.gamma.clone();
    let mut whitening_moment = base;
    let mut repaired = false;
    if cfg.sign_repair && !wt.is_definite() {
        let a0 = simultaneous_diagonalization(&tw, &wt, cfg.power.seed)?;
        let fixed = repaired_second_moment(t, &a0)?;
        let (w2, t2) = whiten_with_floor(&fixed, t, k, cfg.eigen_floor)?;
        wt = w2;
        tw = t2;
        whitening_moment = fixed;
        repaired = true;
    }
    let (vs, mu, diagnostics) = power_deflate(&tw, k, &cfg.power)?;
    let mut directions = DMatrix::zeros(d, k);
    for j in 0..k {
        let a = unwhiten(&wt, &vs.column(j).into_owned(), 1.0).map_err(|e| Error::Component {
            index: j,
            source: Box::new(e),
        })?;
        directions.set_column(j, &a);
    }
    let lambda_tilde = second_order_weights(&whitening_moment, &directions)?;
    let lambda = third_order_weights(t, &directions)?;
    Ok(DecompositionResult {
        directions,
        mu,
        lambda_tilde,
        lambda,
        whitening: wt,
        diagnostics,
        repaired,
        initial_gamma,
    })
}

/// Overcomplete recovery from a tensorized sixth-order moment over
/// `R^{d^2}`. Whitens with `T(I, I, vec(I_d))`, decomposes, and extracts
/// each `a_j` as the leading eigenvector of its reshaped `d x d` column.
#[derive(Clone, Debug, PartialEq)]
pub struct OvercompleteResult {
    /// Unit columns in `R^{d^2}`, estimates of `a_j (.) a_j`.
    pub khatri_rao: DMatrix<f64>,
    /// Unit columns in `R^d`.
    pub directions: DMatrix<f64>,
    pub inner: DecompositionResult,
}

pub fn decompose_overcomplete(t: &Tensor3, k: usize, cfg: &DecomposeConfig) -> Result<OvercompleteResult> {
    let dd = t
        .cubic_dim()
        .ok_or_else(|| invalid("tensorized moment must be cubic"))?;
    let d = (dd as f64).sqrt().round() as usize;
    if d * d != dd {
        return Err(invalid(format!("tensor side {dd} is not a perfect square")));
    }
    let vec_id = DVector::from_fn(dd, |r, _| if r / d == r % d { 1.0 } else { 0.0 });
    let m2 = t.contract_mode3(&vec_id)?;
    let inner = decompose(&m2, t, k, cfg)?;
    let mut directions = DMatrix::zeros(d, k);
    for j in 0..k {
        let col = inner.directions.column(j);
        let mat = DMatrix::from_fn(d, d, |i, l| col[l + i * d]);
        let sym = (&mat + mat.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let idx = eig.eigenvalues.iamax();
        let mut a = eig.eigenvectors.column(idx).into_owned();
        let imax = a.iamax();
        if a[imax] < 0.0 {
            a = -a;
        }
        directions.set_column(j, &a);
    }
    Ok(OvercompleteResult {
        khatri_rao: inner.directions.clone(),
        directions,
        inner,
    })
}
