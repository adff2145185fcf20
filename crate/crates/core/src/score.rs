//! Input densities and their score functions
//! `S_m(x) = (-1)^m grad^m p(x) / p(x)` for `m = 1, 2, 3`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor3;

/// Score value of order 1, 2 or 3.
#[derive(Clone, Debug, PartialEq)]
pub enum ScoreValue {
    First(DVector<f64>),
    Second(DMatrix<f64>),
    Third(Tensor3),
}

impl ScoreValue {
    pub fn order(&self) -> usize {
        match self {
            ScoreValue::First(_) => 1,
            ScoreValue::Second(_) => 2,
            ScoreValue::Third(_) => 3,
        }
    }

    /// Largest deviation from index symmetry (always 0 for order 1).
    pub fn symmetry_defect(&self) -> f64 {
        match self {
            ScoreValue::First(_) => 0.0,
            ScoreValue::Second(m) => (m - m.transpose()).amax(),
            ScoreValue::Third(t) => t.symmetry_defect().unwrap_or(f64::INFINITY),
        }
    }

    pub fn into_first(self) -> Option<DVector<f64>> {
        match self {
            ScoreValue::First(v) => Some(v),
            _ => None,
        }
    }

    pub fn into_second(self) -> Option<DMatrix<f64>> {
        match self {
            ScoreValue::Second(m) => Some(m),
            _ => None,
        }
    }

    pub fn into_third(self) -> Option<Tensor3> {
        match self {
            ScoreValue::Third(t) => Some(t),
            _ => None,
        }
    }
}

/// An input law with pointwise density and score functions.
///
/// `density` may be unnormalized; score functions never depend on the
/// normalizing constant.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;

    fn density(&self, x: &[f64]) -> Result<f64>;

    fn score1(&self, x: &[f64]) -> Result<DVector<f64>>;

    fn score2(&self, x: &[f64]) -> Result<DMatrix<f64>>;

    fn score3(&self, x: &[f64]) -> Result<Tensor3>;

    fn score(&self, x: &[f64], order: usize) -> Result<ScoreValue> {
        match order {
            1 => self.score1(x).map(ScoreValue::First),
            2 => self.score2(x).map(ScoreValue::Second),
            3 => self.score3(x).map(ScoreValue::Third),
            m => Err(invalid(format!("score order must be 1, 2 or 3, got {m}"))),
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "point has length {}, density dimension is {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }
}

/// Isotropic Gaussian `N(0, sigma^2 I_d)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianDensity {
    dim: usize,
    variance: f64,
}

impl GaussianDensity {
    pub fn new(dim: usize, variance: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("density dimension must be positive"));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid(format!("variance must be positive, got {variance}")));
        }
        Ok(Self { dim, variance })
    }

    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(dim, 1.0)
    }

    pub fn from_std(dim: usize, sigma: f64) -> Result<Self> {
        Self::new(dim, sigma * sigma)
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    /// `n` draws, flattened row-major (`n x d`).
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let s = self.std_dev();
        (0..n * self.dim)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Closed-form score, same as the trait methods.
    pub fn score_gaussian(&self, x: &[f64], order: usize) -> Result<ScoreValue> {
        self.score(x, order)
    }
}

impl Density for GaussianDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let r2: f64 = x.iter().map(|v| v * v).sum();
        let norm = (2.0 * PI * self.variance).powf(-(self.dim as f64) / 2.0);
        Ok(norm * (-r2 / (2.0 * self.variance)).exp())
    }

    fn score1(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x)?;
        Ok(DVector::from_fn(self.dim, |i, _| x[i] / self.variance))
    }

    fn score2(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_point(x)?;
        let s2 = self.variance;
        let s4 = s2 * s2;
        Ok(DMatrix::from_fn(self.dim, self.dim, |i, j| {
            x[i] * x[j] / s4 - if i == j { 1.0 / s2 } else { 0.0 }
        }))
    }

    fn score3(&self, x: &[f64]) -> Result<Tensor3> {
        self.check_point(x)?;
        let s4 = self.variance * self.variance;
        let s6 = s4 * self.variance;
        let d = self.dim;
        Ok(Tensor3::from_fn([d, d, d], |i, j, l| {
            let mut v = x[i] * x[j] * x[l] / s6;
            if j == l {
                v -= x[i] / s4;
            }
            if i == l {
                v -= x[j] / s4;
            }
            if i == j {
                v -= x[l] / s4;
            }
            v
        }))
    }
}

type VecFn = Arc<dyn Fn(&[f64]) -> DVector<f64> + Send + Sync>;
type MatFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
type TenFn = Arc<dyn Fn(&[f64]) -> Tensor3 + Send + Sync>;
type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Finite-difference step rule `h_i = scale * (1 + |x_i|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FiniteDifference {
    pub scale: f64,
}

impl Default for FiniteDifference {
    fn default() -> Self {
        Self { scale: 1e-4 }
    }
}

impl FiniteDifference {
    fn step(&self, xi: f64) -> f64 {
        self.scale * (1.0 + xi.abs())
    }
}

/// Density given through `grad log p` with optional analytic higher
/// derivatives of `log p`. Missing derivatives are taken by central
/// differences when a step rule is configured.
///
/// Scores follow `S_1 = -grad log p` and
/// `S_m = -S_{m-1} (x) grad log p - grad S_{m-1}`, the new index last.
#[derive(Clone)]
pub struct GenericDensity {
    dim: usize,
    value: Option<ScalarFn>,
    grad_log: VecFn,
    hess_log: Option<MatFn>,
    third_log: Option<TenFn>,
    fd: Option<FiniteDifference>,
}

impl fmt::Debug for GenericDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericDensity")
            .field("dim", &self.dim)
            .field("has_value", &self.value.is_some())
            .field("has_hess_log", &self.hess_log.is_some())
            .field("has_third_log", &self.third_log.is_some())
            .field("fd", &self.fd)
            .finish()
    }
}

impl GenericDensity {
    /// Density with only `grad log p`; higher orders use the default
    /// finite-difference step.
    pub fn new(
        dim: usize,
        grad_log: impl Fn(&[f64]) -> DVector<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("density dimension must be positive"));
        }
        Ok(Self {
            dim,
            value: None,
            grad_log: Arc::new(grad_log),
            hess_log: None,
            third_log: None,
            fd: Some(FiniteDifference::default()),
        })
    }

    pub fn with_density(mut self, p: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.value = Some(Arc::new(p));
        self
    }

    pub fn with_hessian_log(
        mut self,
        h: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.hess_log = Some(Arc::new(h));
        self
    }

    pub fn with_third_log(mut self, t: impl Fn(&[f64]) -> Tensor3 + Send + Sync + 'static) -> Self {
        self.third_log = Some(Arc::new(t));
        self
    }

    /// `None` disables finite differences; higher orders then need analytic
    /// suppliers.
    pub fn with_finite_difference(mut self, fd: Option<FiniteDifference>) -> Self {
        self.fd = fd;
        self
    }

    /// Wrap an isotropic Gaussian. With `analytic` the Hessian and third
    /// derivative of `log p` are supplied in closed form.
    pub fn from_gaussian(g: &GaussianDensity, analytic: bool) -> Self {
        let d = g.dim();
        let var = g.variance();
        let gg = *g;
        let mut out = Self::new(d, move |x| DVector::from_fn(x.len(), |i, _| -x[i] / var))
            .expect("positive dim")
            .with_density(move |x| gg.density(x).unwrap_or(0.0));
        if analytic {
            out = out
                .with_hessian_log(move |_| DMatrix::from_diagonal_element(d, d, -1.0 / var))
                .with_third_log(move |_| Tensor3::zeros_cubic(d));
        }
        out
    }

    /// Mixture `sum_c w_c N(mu_c, s_c^2 I)` with analytic `grad log p`.
    pub fn gaussian_mixture(weights: &[f64], means: &[DVector<f64>], variances: &[f64]) -> Result<Self> {
        let m = weights.len();
        if m == 0 || means.len() != m || variances.len() != m {
            return Err(invalid("mixture needs matching nonempty weights, means, variances"));
        }
        let d = means[0].len();
        if d == 0 || means.iter().any(|mu| mu.len() != d) {
            return Err(invalid("mixture means must share a positive dimension"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || variances.iter().any(|&v| !(v > 0.0)) {
            return Err(invalid("mixture weights and variances must be positive"));
        }
        let comps: Arc<Vec<(f64, DVector<f64>, f64)>> = Arc::new(
            weights
                .iter()
                .zip(means)
                .zip(variances)
                .map(|((&w, mu), &v)| (w, mu.clone(), v))
                .collect(),
        );
        // log of each weighted component density, shifted for stability
        fn log_terms(comps: &[(f64, DVector<f64>, f64)], x: &[f64]) -> Vec<f64> {
            let d = x.len() as f64;
            comps
                .iter()
                .map(|(w, mu, v)| {
                    let r2: f64 = x.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    w.ln() - 0.5 * d * (2.0 * PI * v).ln() - r2 / (2.0 * v)
                })
                .collect()
        }
        let c1 = Arc::clone(&comps);
        let c2 = Arc::clone(&comps);
        let grad = move |x: &[f64]| {
            let lt = log_terms(&c1, x);
            let top = lt.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let ws: Vec<f64> = lt.iter().map(|l| (l - top).exp()).collect();
            let total: f64 = ws.iter().sum();
            let mut g = DVector::zeros(x.len());
            for ((_, mu, v), r) in c1.iter().zip(&ws) {
                for i in 0..x.len() {
                    g[i] -= r / total * (x[i] - mu[i]) / v;
                }
            }
            g
        };
        let value = move |x: &[f64]| log_terms(&c2, x).iter().map(|l| l.exp()).sum();
        Ok(Self::new(d, grad)?.with_density(value))
    }

    fn fd_or_err(&self, what: &str) -> Result<FiniteDifference> {
        self.fd.ok_or_else(|| {
            Error::Configuration(format!(
                "no analytic {what} supplier and no finite-difference step configured"
            ))
        })
    }

    fn grad(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let g = (self.grad_log)(x);
        if g.len() != self.dim {
            return Err(invalid(format!(
                "grad log p returned length {}, expected {}",
                g.len(),
                self.dim
            )));
        }
        Ok(g)
    }

    /// `grad S_1 = -Hess log p`, analytic or differenced.
    fn grad_s1(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim;
        if let Some(h) = &self.hess_log {
            let h = h(x);
            if h.shape() != (d, d) {
                return Err(invalid("Hessian supplier returned the wrong shape"));
            }
            return Ok(-h);
        }
        let fd = self.fd_or_err("Hessian")?;
        let mut out = DMatrix::zeros(d, d);
        let mut xp = x.to_vec();
        for l in 0..d {
            let h = fd.step(x[l]);
            xp[l] = x[l] + h;
            let plus = self.score1(&xp)?;
            xp[l] = x[l] - h;
            let minus = self.score1(&xp)?;
            xp[l] = x[l];
            for i in 0..d {
                out[(i, l)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    /// `grad S_2(i, j, l) = d_l S_2(i, j)`.
    fn grad_s2(&self, x: &[f64], g: &DVector<f64>) -> Result<Tensor3> {
        let d = self.dim;
        let analytic_h = self.hess_log.as_ref().map(|h| h(x));
        if let (Some(h), Some(t3)) = (analytic_h, &self.third_log) {
            let d3 = t3(x);
            if d3.dims() != [d, d, d] {
                return Err(invalid("third-derivative supplier returned the wrong shape"));
            }
            return Ok(Tensor3::from_fn([d, d, d], |i, j, l| {
                h[(i, l)] * g[j] + g[i] * h[(j, l)] + d3.get(i, j, l)
            }));
        }
        let fd = self.fd_or_err("third-derivative")?;
        let mut out = Tensor3::zeros_cubic(d);
        let mut xp = x.to_vec();
        for l in 0..d {
            let h = fd.step(x[l]);
            xp[l] = x[l] + h;
            let plus = self.score2(&xp)?;
            xp[l] = x[l] - h;
            let minus = self.score2(&xp)?;
            xp[l] = x[l];
            for i in 0..d {
                for j in 0..d {
                    out.set(i, j, l, (plus[(i, j)] - minus[(i, j)]) / (2.0 * h));
                }
            }
        }
        Ok(out)
    }

    /// Recursive score of order `m`.
    pub fn score_recursive(&self, x: &[f64], order: usize) -> Result<ScoreValue> {
        self.score(x, order)
    }
}

impl Density for GenericDensity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn density(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let p = self
            .value
            .as_ref()
            .ok_or_else(|| Error::Configuration("no pointwise density supplied".into()))?;
        Ok(p(x))
    }

    fn score1(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(-self.grad(x)?)
    }

    fn score2(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.grad(x)?;
        let s1 = -&g;
        let mut s2 = -(&s1 * g.transpose()) - self.grad_s1(x)?;
        // finite differences leave O(h^2) asymmetry
        let sym = (&s2 + s2.transpose()) * 0.5;
        s2.copy_from(&sym);
        Ok(s2)
    }

    fn score3(&self, x: &[f64]) -> Result<Tensor3> {
        let g = self.grad(x)?;
        let d = self.dim;
        let s2 = self.score2(x)?;
        let ds2 = self.grad_s2(x, &g)?;
        let raw = Tensor3::from_fn([d, d, d], |i, j, l| -s2[(i, j)] * g[l] - ds2.get(i, j, l));
        Ok(symmetrize(&raw))
    }
}

/// Average of a cubic tensor over all six index permutations.
pub fn symmetrize(t: &Tensor3) -> Tensor3 {
    let d = t.dims()[0];
    Tensor3::from_fn([d, d, d], |i, j, l| {
        (t.get(i, j, l)
            + t.get(i, l, j)
            + t.get(j, i, l)
            + t.get(j, l, i)
            + t.get(l, i, j)
            + t.get(l, j, i))
            / 6.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_point(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.5..1.5)).collect()
    }

    #[test]
    fn density_values() {
        let g = GaussianDensity::standard(1).unwrap();
        assert!((g.density(&[0.0]).unwrap() - 0.398_942_280_401_432_7).abs() < 1e-15);
        let g = GaussianDensity::standard(2).unwrap();
        assert!((g.density(&[0.0, 0.0]).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-15);

        // unnormalized kernel divided by its trapezoid integral
        let g = GaussianDensity::from_std(1, 2.0).unwrap();
        let kernel = |x: f64| (-x * x / 8.0).exp();
        let (lo, hi, m) = (-60.0, 60.0, 120_000);
        let h = (hi - lo) / m as f64;
        let mut z = 0.5 * (kernel(lo) + kernel(hi));
        for i in 1..m {
            z += kernel(lo + i as f64 * h);
        }
        z *= h;
        assert!((g.density(&[2.0]).unwrap() - kernel(2.0) / z).abs() < 1e-12);

        assert!(g.density(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_closed_forms() {
        let g = GaussianDensity::new(3, 2.0).unwrap();
        let x0 = [0.0; 3];
        assert_eq!(g.score1(&x0).unwrap().norm(), 0.0);
        assert!((g.score2(&x0).unwrap() + DMatrix::identity(3, 3) * 0.5).norm() < 1e-15);
        assert_eq!(g.score3(&x0).unwrap().frobenius_norm(), 0.0);

        let g = GaussianDensity::standard(1).unwrap();
        assert!((g.score2(&[2.0]).unwrap()[(0, 0)] - 3.0).abs() < 1e-14);
        assert!((g.score3(&[2.0]).unwrap().get(0, 0, 0) - 2.0).abs() < 1e-14);

        assert!(g.score(&[2.0], 4).is_err());
        assert!(g.score(&[2.0], 0).is_err());
    }

    /// `(-1)^m grad^m p / p` by central differences of the pdf.
    fn fd_score(g: &GaussianDensity, x: &[f64], order: usize) -> ScoreValue {
        let d = x.len();
        let h = 1e-3;
        let p = |y: &[f64]| g.density(y).unwrap();
        let p0 = p(x);
        let shift = |offs: &[(usize, f64)]| {
            let mut y = x.to_vec();
            for &(i, s) in offs {
                y[i] += s;
            }
            y
        };
        match order {
            1 => ScoreValue::First(DVector::from_fn(d, |i, _| {
                -(p(&shift(&[(i, h)])) - p(&shift(&[(i, -h)]))) / (2.0 * h) / p0
            })),
            2 => ScoreValue::Second(DMatrix::from_fn(d, d, |i, j| {
                let f = |a: f64, b: f64| p(&shift(&[(i, a), (j, b)]));
                (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h) / p0
            })),
            _ => ScoreValue::Third(Tensor3::from_fn([d, d, d], |i, j, l| {
                let f = |a: f64, b: f64, c: f64| p(&shift(&[(i, a), (j, b), (l, c)]));
                let mut acc = 0.0;
                for (sa, a) in [(1.0, h), (-1.0, -h)] {
                    for (sb, b) in [(1.0, h), (-1.0, -h)] {
                        for (sc, c) in [(1.0, h), (-1.0, -h)] {
                            acc += sa * sb * sc * f(a, b, c);
                        }
                    }
                }
                -acc / (8.0 * h * h * h) / p0
            })),
        }
    }

    #[test]
    fn gaussian_matches_pdf_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = GaussianDensity::standard(3).unwrap();
        for _ in 0..5 {
            let x = rand_point(3, &mut rng);
            for m in 1..=3 {
                let exact = g.score(&x, m).unwrap();
                let fd = fd_score(&g, &x, m);
                let err = match (exact, fd) {
                    (ScoreValue::First(a), ScoreValue::First(b)) => (a - b).amax(),
                    (ScoreValue::Second(a), ScoreValue::Second(b)) => (a - b).amax(),
                    (ScoreValue::Third(a), ScoreValue::Third(b)) => {
                        a.axpy(-1.0, &b).unwrap().data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
                    }
                    _ => unreachable!(),
                };
                assert!(err < 1e-5, "order {m} err {err}");
            }
        }
    }

    #[test]
    fn wrapped_gaussian_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = GaussianDensity::standard(2).unwrap();
        let fd = GenericDensity::from_gaussian(&g, false);
        let an = GenericDensity::from_gaussian(&g, true);
        for _ in 0..10 {
            let x = rand_point(2, &mut rng);
            let e2 = g.score2(&x).unwrap();
            let e3 = g.score3(&x).unwrap();
            assert!((fd.score2(&x).unwrap() - &e2).amax() < 1e-6);
            assert!((an.score2(&x).unwrap() - &e2).amax() < 1e-12);
            let d3 = |t: Tensor3| {
                t.axpy(-1.0, &e3).unwrap().data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
            };
            assert!(d3(fd.score3(&x).unwrap()) < 1e-6);
            assert!(d3(an.score3(&x).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn quartic_density_recursion() {
        // p ~ exp(-x^4 / 4): S1 = x^3, S2 = x^6 - 3x^2
        let p = GenericDensity::new(1, |x| DVector::from_element(1, -x[0].powi(3))).unwrap();
        for &x in &[-1.3, -0.2, 0.7, 1.9] {
            let s1 = p.score1(&[x]).unwrap()[0];
            let s2 = p.score2(&[x]).unwrap()[(0, 0)];
            assert!((s1 - x.powi(3)).abs() < 1e-12);
            let want = x.powi(6) - 3.0 * x * x;
            assert!((s2 - want).abs() < 1e-6 * (1.0 + want.abs()), "x={x}");
        }
        let analytic = GenericDensity::new(1, |x| DVector::from_element(1, -x[0].powi(3)))
            .unwrap()
            .with_hessian_log(|x| DMatrix::from_element(1, 1, -3.0 * x[0] * x[0]));
        let s2 = analytic.score2(&[1.1]).unwrap()[(0, 0)];
        assert!((s2 - (1.1f64.powi(6) - 3.0 * 1.21)).abs() < 1e-12);
    }

    #[test]
    fn even_density_at_origin() {
        let g = GaussianDensity::standard(2).unwrap();
        let p = GenericDensity::gaussian_mixture(
            &[0.5, 0.5],
            &[DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![-1.0, 0.0])],
            &[1.0, 1.0],
        )
        .unwrap();
        for dens in [&GenericDensity::from_gaussian(&g, false), &p] {
            assert!(dens.score1(&[0.0, 0.0]).unwrap().amax() < 1e-14);
            assert!(dens.score3(&[0.0, 0.0]).unwrap().frobenius_norm() < 1e-6);
        }
        let quartic = GenericDensity::new(1, |x| DVector::from_element(1, -x[0].powi(3))).unwrap();
        assert!(quartic.score3(&[0.0]).unwrap().frobenius_norm() < 1e-8);
    }

    #[test]
    fn missing_supplier_is_configuration_error() {
        let p = GenericDensity::new(2, |x| DVector::from_fn(2, |i, _| -x[i]))
            .unwrap()
            .with_finite_difference(None);
        assert!(p.score1(&[0.1, 0.2]).is_ok());
        assert!(matches!(p.score2(&[0.1, 0.2]), Err(Error::Configuration(_))));
        assert!(matches!(p.density(&[0.1, 0.2]), Err(Error::Configuration(_))));
    }

    #[test]
    fn mixture_density_and_gradient_agree() {
        let p = GenericDensity::gaussian_mixture(
            &[0.3, 0.7],
            &[DVector::from_vec(vec![0.5, -0.2]), DVector::from_vec(vec![-1.0, 0.4])],
            &[0.8, 1.5],
        )
        .unwrap();
        let x = [0.3, 0.9];
        let h = 1e-5;
        let s1 = p.score1(&x).unwrap();
        for i in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let dlog = (p.density(&xp).unwrap().ln() - p.density(&xm).unwrap().ln()) / (2.0 * h);
            assert!((s1[i] + dlog).abs() < 1e-8);
        }
    }

    /// Monte-Carlo Stein identity `E[g S_m] = E[grad^m g]` for
    /// `g(x) = cos(<w, x>)` with `grad^m g = Re(j^m e^{j<w,x>}) w^{(x)m}`.
    #[test]
    fn stein_identity_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 3;
        let n = 1_000_000;
        let dens = GaussianDensity::standard(d).unwrap();
        let w = DVector::from_vec(vec![0.6, -0.3, 0.4]);
        let xs = dens.sample(n, &mut rng);
        for m in 1..=3usize {
            let size = d.pow(m as u32);
            let mut lhs = vec![0.0; size];
            let mut lhs2 = vec![0.0; size];
            let mut rhs = vec![0.0; size];
            let mut rhs2 = vec![0.0; size];
            for row in xs.chunks_exact(d) {
                let t: f64 = row.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                let (c, s) = (t.cos(), t.sin());
                let deriv = match m {
                    1 => -s,
                    2 => -c,
                    _ => s,
                };
                let sv: Vec<f64> = match dens.score(row, m).unwrap() {
                    ScoreValue::First(v) => v.iter().copied().collect(),
                    ScoreValue::Second(mm) => mm.transpose().iter().copied().collect(),
                    ScoreValue::Third(tt) => tt.into_data(),
                };
                for k in 0..size {
                    let mut wk = 1.0;
                    let mut r = k;
                    for _ in 0..m {
                        wk *= w[r % d];
                        r /= d;
                    }
                    let a = c * sv[k];
                    let b = deriv * wk;
                    lhs[k] += a;
                    lhs2[k] += a * a;
                    rhs[k] += b;
                    rhs2[k] += b * b;
                }
            }
            let nf = n as f64;
            for k in 0..size {
                let (ml, mr) = (lhs[k] / nf, rhs[k] / nf);
                let vl = lhs2[k] / nf - ml * ml;
                let vr = rhs2[k] / nf - mr * mr;
                let se = ((vl + vr) / nf).sqrt();
                assert!((ml - mr).abs() <= 4.0 * se + 1e-12, "m={m} k={k} {ml} vs {mr} se {se}");
            }
        }
    }

    proptest! {
        #[test]
        fn scores_are_symmetric(seed in any::<u64>(), d in 1usize..6, var in 0.3f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GaussianDensity::new(d, var).unwrap();
            let x = rand_point(d, &mut rng);
            for m in 1..=3 {
                prop_assert!(g.score(&x, m).unwrap().symmetry_defect() <= 1e-12);
            }
            let gen = GenericDensity::from_gaussian(&g, false);
            prop_assert!(ScoreValue::Third(gen.score3(&x).unwrap()).symmetry_defect() <= 1e-12);
        }

        #[test]
        fn first_score_scales_with_variance(seed in any::<u64>(), d in 1usize..5, s in 0.2f64..4.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = rand_point(d, &mut rng);
            let unit = GaussianDensity::standard(d).unwrap().score1(&x).unwrap();
            let scaled = GaussianDensity::from_std(d, s).unwrap().score1(&x).unwrap();
            prop_assert!((scaled - unit / (s * s)).amax() <= 1e-12);
        }
    }
}
