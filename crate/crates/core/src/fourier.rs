//! First-layer bias recovery from the phase of a Fourier statistic.
//!
//! For each recovered direction `a`, frequencies `omega` are drawn from a
//! spherical cap of radius 1/2 around `a` and
//!
//! ```text
//! v = (1/n) sum_i y_i w(x_i) e^{-j 2 pi <omega_i, x_i>}
//! ```
//!
//! is formed with a weight `w` that divides out the input density. The
//! component `a2 sigma(<a, x> + b)` then contributes `a2 Sigma(1/2) e^{j pi b}`
//! up to a positive factor, so `b = (arg v - arg Sigma(1/2)) / pi`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::gamma;

use crate::activation::Activation;
use crate::error::{invalid, Error, Result};
use crate::score::Density;

/// Frequencies `omega` with `|omega| = 1/2` and
/// `<omega, axis> >= (1 - eps^2/2) / 2` (or `|<omega, axis>|` when two-sided).
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalCap {
    axis: DVector<f64>,
    eps: f64,
    two_sided: bool,
}

pub const CAP_RADIUS: f64 = 0.5;

impl SphericalCap {
    pub fn new(axis: &DVector<f64>, eps: f64, two_sided: bool) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(invalid("cap axis must be a nonzero finite vector"));
        }
        if !(eps > 0.0 && eps <= std::f64::consts::SQRT_2) {
            return Err(invalid(format!("cap parameter must lie in (0, sqrt 2], got {eps}")));
        }
        Ok(Self {
            axis: axis / n,
            eps,
            two_sided,
        })
    }

    pub fn axis(&self) -> &DVector<f64> {
        &self.axis
    }

    pub fn dim(&self) -> usize {
        self.axis.len()
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn two_sided(&self) -> bool {
        self.two_sided
    }

    /// Cosine bound `1 - eps^2/2` on the angle to the axis.
    pub fn cos_bound(&self) -> f64 {
        1.0 - self.eps * self.eps / 2.0
    }

    pub fn half_angle(&self) -> f64 {
        self.cos_bound().clamp(-1.0, 1.0).acos()
    }

    pub fn contains(&self, omega: &DVector<f64>, tol: f64) -> bool {
        let proj = omega.dot(&self.axis);
        let proj = if self.two_sided { proj.abs() } else { proj };
        (omega.norm() - CAP_RADIUS).abs() <= tol && proj >= CAP_RADIUS * self.cos_bound() - tol
    }

    /// Surface measure of the sampled set.
    pub fn area(&self) -> Result<f64> {
        let both = surface_area_cap(self.dim(), self.eps)?;
        Ok(if self.two_sided { both } else { both / 2.0 })
    }

    /// One uniform draw from the cap surface.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        if d == 1 {
            let s = if self.two_sided && rng.random_bool(0.5) { -1.0 } else { 1.0 };
            return &self.axis * (s * CAP_RADIUS);
        }
        let phi_max = self.half_angle();
        let mut w = if phi_max >= PI / 2.0 - 1e-12 {
            // hemisphere or larger: fold a uniform sphere draw
            let g = gaussian_unit(d, rng);
            if g.dot(&self.axis) < 0.0 {
                -g
            } else {
                g
            }
        } else {
            let phi = loop {
                let u: f64 = rng.random();
                let phi = phi_max * u.powf(1.0 / (d - 1) as f64);
                let accept = if phi > 0.0 {
                    (phi.sin() / phi).powi(d as i32 - 2)
                } else {
                    1.0
                };
                if rng.random::<f64>() < accept {
                    break phi;
                }
            };
            let perp = loop {
                let g = gaussian_unit(d, rng);
                let p = &g - &self.axis * g.dot(&self.axis);
                let n = p.norm();
                if n > 1e-8 {
                    break p / n;
                }
            };
            &self.axis * phi.cos() + perp * phi.sin()
        };
        if self.two_sided && rng.random_bool(0.5) {
            w = -w;
        }
        let n = w.norm();
        w * (CAP_RADIUS / n)
    }
}

fn gaussian_unit<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = g.norm();
        if n > 1e-12 {
            return g / n;
        }
    }
}

/// `count` draws from the cap for a given seed.
pub fn sample_cap(cap: &SphericalCap, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if cap.dim() < 2 {
        return Err(Error::DegenerateDimension(
            "a cap in one dimension is the pair of points +-axis/2".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| cap.draw(&mut rng)).collect())
}

/// Total area of both caps on the radius-1/2 sphere in `R^d`:
/// `r^{d-1} |S^{d-1}| I_{sin^2 phi}((d-1)/2, 1/2)`.
pub fn surface_area_cap(d: usize, eps: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::DegenerateDimension(format!("cap area needs d >= 2, got {d}")));
    }
    if !(eps > 0.0) {
        return Err(invalid("cap parameter must be positive"));
    }
    let c = 1.0 - eps * eps / 2.0;
    let sphere = 2.0 * PI.powf(d as f64 / 2.0) / gamma(d as f64 / 2.0);
    let full = CAP_RADIUS.powi(d as i32 - 1) * sphere;
    if c <= 0.0 {
        return Ok(full);
    }
    let s2 = (1.0 - c * c).max(0.0);
    Ok(full * beta_reg((d as f64 - 1.0) / 2.0, 0.5, s2))
}

/// `Sigma(1/2)` for an activation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationSpectrum {
    pub activation: Activation,
    pub value: Complex64,
}

impl ActivationSpectrum {
    pub fn for_activation(activation: Activation) -> Result<Self> {
        let value = activation.spectrum_half()?;
        if !(value.norm() > 0.0) {
            return Err(invalid("activation spectrum vanishes at 1/2"));
        }
        Ok(Self { activation, value })
    }
}

/// Sample weighting that cancels the input density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BiasWindow {
    /// `h(x) / p(x)` with `h = h_par(<a, x>) exp(-|x_perp|^2 / (2 s^2))`.
    /// `h_par` is 1 on `|t| <= flat` and falls to 0 by a raised cosine over
    /// `taper`; an odd integer `taper` cancels leakage at frequency 1/2.
    AlignedTaper {
        flat: f64,
        taper: f64,
        transverse_scale: f64,
    },
    /// `1 / p(x)` on `{p(x) >= psi * max_i p(x_i)}`, zero elsewhere.
    DensityFloor,
}

impl Default for BiasWindow {
    fn default() -> Self {
        BiasWindow::AlignedTaper {
            flat: 1.0,
            taper: 3.0,
            transverse_scale: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierConfig {
    /// Cap parameter; `None` means `max(1/sqrt(n), 1e-3)`.
    pub eps: Option<f64>,
    /// Relative density floor.
    pub psi: f64,
    pub window: BiasWindow,
    pub two_sided: bool,
    /// `|v|` below this marks the phase unreliable.
    pub phase_floor: f64,
    pub seed: u64,
}

impl Default for FourierConfig {
    fn default() -> Self {
        Self {
            eps: None,
            psi: 1e-6,
            window: BiasWindow::default(),
            two_sided: false,
            phase_floor: 1e-12,
            seed: 0,
        }
    }
}

impl FourierConfig {
    pub fn eps_for(&self, n: usize) -> f64 {
        self.eps
            .unwrap_or_else(|| (1.0 / (n.max(1) as f64).sqrt()).max(1e-3))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComplexStat {
    pub v: Complex64,
    /// Samples with nonzero weight.
    pub used: usize,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FourierWarning {
    PhaseUnreliable { column: usize, magnitude: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasEstimate {
    pub b1: DVector<f64>,
    pub a2_magnitude: DVector<f64>,
    pub stats: Vec<ComplexStat>,
    pub warnings: Vec<FourierWarning>,
    pub eps: f64,
}

/// Map to `(-1, 1]`.
pub fn wrap_bias(b: f64) -> f64 {
    let r = (b + 1.0).rem_euclid(2.0) - 1.0;
    if r <= -1.0 {
        1.0
    } else {
        r
    }
}

/// Bias read along `-a` given the reading `b` along `a`: negating the
/// axis conjugates `v`.
pub fn flipped_bias(b: f64, spectrum: &ActivationSpectrum) -> f64 {
    wrap_bias(-b - 2.0 * spectrum.value.arg() / PI)
}

fn h_parallel(t: f64, flat: f64, taper: f64) -> f64 {
    let a = t.abs();
    if a <= flat {
        1.0
    } else if a <= flat + taper {
        0.5 * (1.0 + (PI * (a - flat) / taper).cos())
    } else {
        0.0
    }
}

/// Bias and magnitude estimates for every column of `a1_hat`.
pub fn estimate_bias(
    xs: &[f64],
    ys: &[f64],
    density: &dyn Density,
    a1_hat: &DMatrix<f64>,
    spectrum: &ActivationSpectrum,
    cfg: &FourierConfig,
) -> Result<BiasEstimate> {
    let d = density.dim();
    let n = ys.len();
    if n == 0 || xs.len() != n * d {
        return Err(invalid(format!(
            "expected {} input values for {} labels, got {}",
            n * d,
            n,
            xs.len()
        )));
    }
    if a1_hat.nrows() != d {
        return Err(invalid("weight matrix rows do not match the input dimension"));
    }
    if !(cfg.psi >= 0.0) {
        return Err(invalid("density floor must be nonnegative"));
    }
    let eps = cfg.eps_for(n);
    let dens: Vec<f64> = xs
        .par_chunks(d)
        .map(|x| density.density(x))
        .collect::<Result<_>>()?;
    let peak = dens.iter().cloned().fold(0.0f64, f64::max);
    let floor = cfg.psi * peak;
    let keep: Vec<bool> = dens.iter().map(|&p| p > 0.0 && p >= floor).collect();
    if !keep.iter().any(|&k| k) {
        return Err(Error::InsufficientData(
            "every sample falls below the density floor".into(),
        ));
    }
    let k = a1_hat.ncols();
    let columns: Vec<Result<(ComplexStat, f64, f64)>> = (0..k)
        .into_par_iter()
        .map(|l| {
            let cap = SphericalCap::new(&a1_hat.column(l).into_owned(), eps, cfg.two_sided)?;
            let axis = cap.axis().clone();
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(l as u64);
            let mut acc = Complex64::new(0.0, 0.0);
            let mut used = 0usize;
            for (i, x) in xs.chunks_exact(d).enumerate() {
                let omega = cap.draw(&mut rng);
                if !keep[i] {
                    continue;
                }
                let w = match cfg.window {
                    BiasWindow::DensityFloor => 1.0 / dens[i],
                    BiasWindow::AlignedTaper {
                        flat,
                        taper,
                        transverse_scale,
                    } => {
                        let t: f64 = x.iter().zip(axis.iter()).map(|(a, b)| a * b).sum();
                        let hp = h_parallel(t, flat, taper);
                        if hp == 0.0 {
                            continue;
                        }
                        let r2: f64 = x.iter().map(|v| v * v).sum();
                        let u2 = (r2 - t * t).max(0.0);
                        hp * (-u2 / (2.0 * transverse_scale * transverse_scale)).exp() / dens[i]
                    }
                };
                if w == 0.0 || !w.is_finite() {
                    continue;
                }
                used += 1;
                let phase: f64 = -2.0 * PI * x.iter().zip(omega.iter()).map(|(a, b)| a * b).sum::<f64>();
                acc += Complex64::from_polar(ys[i] * w, phase);
            }
            let v = acc / n as f64;
            let mag = v.norm() / spectrum.value.norm();
            let a2 = match cfg.window {
                BiasWindow::DensityFloor => mag * cap.area()?,
                BiasWindow::AlignedTaper { transverse_scale, .. } => {
                    mag / (2.0 * PI * transverse_scale * transverse_scale).powf((d as f64 - 1.0) / 2.0)
                }
            };
            let b = wrap_bias((v.arg() - spectrum.value.arg()) / PI);
            Ok((ComplexStat { v, used, n }, b, a2))
        })
        .collect();
    let mut b1 = DVector::zeros(k);
    let mut a2 = DVector::zeros(k);
    let mut stats = Vec::with_capacity(k);
    let mut warnings = Vec::new();
    for (l, res) in columns.into_iter().enumerate() {
        let (stat, b, mag) = res.map_err(|e| Error::Component {
            index: l,
            source: Box::new(e),
        })?;
        if !(stat.v.norm() >= cfg.phase_floor) {
            warnings.push(FourierWarning::PhaseUnreliable {
                column: l,
                magnitude: stat.v.norm(),
            });
            b1[l] = 0.0;
        } else {
            b1[l] = b;
        }
        a2[l] = mag;
        stats.push(stat);
    }
    Ok(BiasEstimate {
        b1,
        a2_magnitude: a2,
        stats,
        warnings,
        eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::GaussianDensity;
    use proptest::prelude::*;

    fn unit(v: &[f64]) -> DVector<f64> {
        let v = DVector::from_column_slice(v);
        let n = v.norm();
        v / n
    }

    #[test]
    fn cap_draws_satisfy_constraints() {
        for two in [false, true] {
            let cap = SphericalCap::new(&unit(&[1.0, -2.0, 0.5, 0.3]), 0.4, two).unwrap();
            for w in sample_cap(&cap, 2000, 1).unwrap() {
                assert!(cap.contains(&w, 1e-12));
            }
        }
        let cap = SphericalCap::new(&unit(&[1.0, 0.0, 0.0]), 1e-3, true).unwrap();
        for w in sample_cap(&cap, 1000, 2).unwrap() {
            let c = (w.dot(cap.axis()).abs() / w.norm()).min(1.0);
            assert!(c.acos() <= 1e-3 + 1e-12);
        }
        let one = SphericalCap::new(&unit(&[1.0]), 0.1, false).unwrap();
        assert!(matches!(sample_cap(&one, 3, 0), Err(Error::DegenerateDimension(_))));
        assert!(SphericalCap::new(&unit(&[1.0, 0.0]), 1.5, false).is_err());
    }

    #[test]
    fn cap_sampling_is_deterministic() {
        let cap = SphericalCap::new(&unit(&[0.3, 0.4, 0.5]), 0.2, true).unwrap();
        assert_eq!(sample_cap(&cap, 50, 9).unwrap(), sample_cap(&cap, 50, 9).unwrap());
        assert_ne!(sample_cap(&cap, 50, 9).unwrap(), sample_cap(&cap, 50, 10).unwrap());
    }

    #[test]
    fn full_sphere_moments() {
        let cap = SphericalCap::new(&unit(&[0.0, 0.0, 1.0]), std::f64::consts::SQRT_2, true).unwrap();
        let n = 100_000;
        let draws = sample_cap(&cap, n, 3).unwrap();
        let nf = n as f64;
        for i in 0..3 {
            let vals: Vec<f64> = draws.iter().map(|w| w[i]).collect();
            let mean = vals.iter().sum::<f64>() / nf;
            let var = vals.iter().map(|v| v * v).sum::<f64>() / nf;
            // entry variance 1/12; for squares E[w^4] = 1/80
            let se_mean = (1.0f64 / 12.0 / nf).sqrt();
            let se_var = ((1.0 / 80.0 - 1.0 / 144.0) / nf).sqrt();
            assert!(mean.abs() < 4.0 * se_mean);
            assert!((var - 1.0 / 12.0).abs() < 4.0 * se_var);
            for j in 0..i {
                let cov = draws.iter().map(|w| w[i] * w[j]).sum::<f64>() / nf;
                // E[w_i^2 w_j^2] = 1/240
                assert!(cov.abs() < 4.0 * (1.0f64 / 240.0 / nf).sqrt());
            }
        }
    }

    /// `2 r^{d-1} |S^{d-2}| int_0^phi sin^{d-2}` by Simpson's rule.
    fn cap_area_quadrature(d: usize, eps: f64) -> f64 {
        let phi = (1.0 - eps * eps / 2.0).clamp(-1.0, 1.0).acos().min(PI / 2.0);
        let m = 20_000;
        let h = phi / m as f64;
        let mut acc = 0.0;
        for i in 0..=m {
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * (i as f64 * h).sin().powi(d as i32 - 2);
        }
        let integral = acc * h / 3.0;
        let sphere_lower = 2.0 * PI.powf((d as f64 - 1.0) / 2.0) / gamma((d as f64 - 1.0) / 2.0);
        2.0 * 0.5f64.powi(d as i32 - 1) * sphere_lower * integral
    }

    #[test]
    fn cap_area_closed_form() {
        assert!((surface_area_cap(3, std::f64::consts::SQRT_2).unwrap() - PI).abs() < 1e-12);
        for eps in [0.05, 0.3, 0.9, 1.3] {
            let arcs = 2.0 * (1.0 - eps * eps / 2.0f64).acos();
            assert!((surface_area_cap(2, eps).unwrap() - arcs).abs() < 1e-10);
            for d in 2..7 {
                let q = cap_area_quadrature(d, eps);
                assert!((surface_area_cap(d, eps).unwrap() - q).abs() < 1e-10, "d={d} eps={eps}");
            }
        }
        assert!(surface_area_cap(1, 0.5).is_err());
    }

    #[test]
    fn cap_area_rejection_check() {
        let d = 4;
        let eps = 0.8;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let axis = unit(&[1.0, 1.0, 0.0, -1.0]);
        let c = 1.0 - eps * eps / 2.0;
        let n = 200_000;
        let hits = (0..n)
            .filter(|_| gaussian_unit(d, &mut rng).dot(&axis).abs() >= c)
            .count();
        let frac = hits as f64 / n as f64;
        let full = surface_area_cap(d, std::f64::consts::SQRT_2).unwrap();
        let se = (frac * (1.0 - frac) / n as f64).sqrt() * full;
        assert!((frac * full - surface_area_cap(d, eps).unwrap()).abs() < 4.0 * se);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_bias(0.25), 0.25);
        assert_eq!(wrap_bias(1.0), 1.0);
        assert_eq!(wrap_bias(-1.0), 1.0);
        assert!((wrap_bias(1.5) + 0.5).abs() < 1e-15);
        assert!((wrap_bias(-2.25) + 0.25).abs() < 1e-15);
        let s = ActivationSpectrum::for_activation(Activation::Step).unwrap();
        assert!((flipped_bias(0.3, &s) - 0.7).abs() < 1e-12);
        assert!((flipped_bias(-0.4, &s) + 0.6).abs() < 1e-12);
    }

    #[test]
    fn taper_has_no_leakage_at_half() {
        // int h_par(t) e^{-j pi t} dt vanishes for flat 1, taper 3
        let m = 400_000;
        let h = 10.0 / m as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..=m {
            let t = -5.0 + i as f64 * h;
            acc += Complex64::from_polar(h_parallel(t, 1.0, 3.0), -PI * t) * h;
        }
        assert!(acc.norm() < 1e-6);
    }

    fn step_data(
        n: usize,
        a: &DMatrix<f64>,
        b1: &[f64],
        a2: &[f64],
        b2: f64,
        seed: u64,
    ) -> (Vec<f64>, Vec<f64>) {
        let d = a.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = GaussianDensity::standard(d).unwrap();
        let xs = g.sample(n, &mut rng);
        let ys = xs
            .chunks_exact(d)
            .map(|x| {
                let x = DVector::from_column_slice(x);
                b2 + (0..a.ncols())
                    .map(|j| a2[j] * Activation::Step.eval(a.column(j).dot(&x) + b1[j]))
                    .sum::<f64>()
            })
            .collect();
        (xs, ys)
    }

    #[test]
    fn zero_labels_warn() {
        let g = GaussianDensity::standard(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs = g.sample(100, &mut rng);
        let a = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        let s = ActivationSpectrum::for_activation(Activation::Step).unwrap();
        let est = estimate_bias(&xs, &[0.0; 100], &g, &a, &s, &FourierConfig::default()).unwrap();
        assert_eq!(est.b1[0], 0.0);
        assert!(matches!(est.warnings[0], FourierWarning::PhaseUnreliable { column: 0, .. }));
    }

    #[test]
    fn floor_rejecting_everything_is_an_error() {
        let g = GaussianDensity::standard(2).unwrap();
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let s = ActivationSpectrum::for_activation(Activation::Step).unwrap();
        let cfg = FourierConfig {
            psi: 2.0,
            ..Default::default()
        };
        let res = estimate_bias(&[0.1, 0.2, 0.3, 0.4], &[1.0, 1.0], &g, &a, &s, &cfg);
        assert!(matches!(res, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn zero_bias_reads_zero() {
        let a = DMatrix::from_column_slice(4, 1, unit(&[0.5, -0.5, 0.5, 0.5]).as_slice());
        let (xs, ys) = step_data(400_000, &a, &[0.0], &[0.8], 0.1, 4);
        let g = GaussianDensity::standard(4).unwrap();
        let s = ActivationSpectrum::for_activation(Activation::Step).unwrap();
        let est = estimate_bias(&xs, &ys, &g, &a, &s, &FourierConfig::default()).unwrap();
        assert!(est.b1[0].abs() <= 0.05, "{}", est.b1[0]);
        assert!((est.a2_magnitude[0] / 0.8 - 1.0).abs() < 0.1);
    }

    #[test]
    fn bias_shift_moves_phase() {
        let a = DMatrix::from_column_slice(4, 1, unit(&[0.2, 0.9, -0.3, 0.1]).as_slice());
        let g = GaussianDensity::standard(4).unwrap();
        let s = ActivationSpectrum::for_activation(Activation::Step).unwrap();
        let cfg = FourierConfig::default();
        let (xs, y0) = step_data(400_000, &a, &[0.0], &[1.0], 0.0, 5);
        let (_, y5) = step_data(400_000, &a, &[0.5], &[1.0], 0.0, 5);
        let v0 = estimate_bias(&xs, &y0, &g, &a, &s, &cfg).unwrap().stats[0].v;
        let v5 = estimate_bias(&xs, &y5, &g, &a, &s, &cfg).unwrap().stats[0].v;
        let shift = (v5 / v0).arg();
        assert!((shift - PI * 0.5).abs() <= PI * 0.05, "shift {shift}");
    }

    struct Scaled<D: Density>(D, f64);

    impl<D: Density> Density for Scaled<D> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn density(&self, x: &[f64]) -> Result<f64> {
            Ok(self.1 * self.0.density(x)?)
        }
        fn score1(&self, x: &[f64]) -> Result<DVector<f64>> {
            self.0.score1(x)
        }
        fn score2(&self, x: &[f64]) -> Result<DMatrix<f64>> {
            self.0.score2(x)
        }
        fn score3(&self, x: &[f64]) -> Result<crate::tensor::Tensor3> {
            self.0.score3(x)
        }
    }

    #[test]
    fn normalization_invariance() {
        let a = DMatrix::from_column_slice(3, 2, &[0.6, 0.8, 0.0, 0.0, 0.6, 0.8]);
        let (xs, ys) = step_data(20_000, &a, &[0.3, -0.6], &[0.7, 0.9], 0.05, 6);
        let g = GaussianDensity::standard(3).unwrap();
        let s = ActivationSpectrum::for_activation(Activation::Step).unwrap();
        for window in [BiasWindow::default(), BiasWindow::DensityFloor] {
            let cfg = FourierConfig {
                window,
                ..Default::default()
            };
            let base = estimate_bias(&xs, &ys, &g, &a, &s, &cfg).unwrap();
            for c in [0.25, 8.0, 1024.0] {
                let scaled = estimate_bias(&xs, &ys, &Scaled(g, c), &a, &s, &cfg).unwrap();
                assert_eq!(scaled.b1, base.b1);
            }
            let odd = estimate_bias(&xs, &ys, &Scaled(g, 3.7), &a, &s, &cfg).unwrap();
            assert!((odd.b1 - &base.b1).amax() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bias_always_wrapped(seed in any::<u64>(), scale in -5.0f64..5.0) {
            let g = GaussianDensity::standard(2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs = g.sample(50, &mut rng);
            let ys: Vec<f64> = (0..50).map(|i| scale * ((i as f64).sin())).collect();
            let a = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.6, 0.8]);
            let s = ActivationSpectrum::for_activation(Activation::Sigmoid).unwrap();
            let est = estimate_bias(&xs, &ys, &g, &a, &s, &FourierConfig { seed, ..Default::default() }).unwrap();
            for b in est.b1.iter() {
                prop_assert!(*b > -1.0 && *b <= 1.0);
            }
        }

        #[test]
        fn wrap_is_idempotent(b in -10.0f64..10.0) {
            let w = wrap_bias(b);
            prop_assert!(w > -1.0 && w <= 1.0);
            prop_assert_eq!(wrap_bias(w), w);
            let k = ((b - w) / 2.0).round();
            prop_assert!((b - w - 2.0 * k).abs() < 1e-12);
        }
    }
}
