//! Hidden-unit activations.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    /// Heaviside step, `1/2` at the origin.
    Step,
    /// Logistic sigmoid `1 / (1 + e^{-z})`.
    Sigmoid,
    /// `(1 + tanh z) / 2`.
    TanhRescaled,
    /// Identity, for sanity checks only.
    Linear,
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Step => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Activation::Sigmoid => logistic(z),
            Activation::TanhRescaled => logistic(2.0 * z),
            Activation::Linear => z,
        }
    }

    /// `m`-th derivative for `m <= 3`. The step has no pointwise
    /// derivatives and returns an error.
    pub fn derivative(self, z: f64, m: usize) -> Result<f64> {
        let logistic_deriv = |s: f64, m: usize| match m {
            0 => s,
            1 => s * (1.0 - s),
            2 => s * (1.0 - s) * (1.0 - 2.0 * s),
            3 => s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s),
            _ => f64::NAN,
        };
        if m > 3 {
            return Err(invalid(format!("derivative order {m} is not supported")));
        }
        match self {
            Activation::Step => {
                if m == 0 {
                    Ok(self.eval(z))
                } else {
                    Err(invalid("the step activation has only distributional derivatives"))
                }
            }
            Activation::Sigmoid => Ok(logistic_deriv(logistic(z), m)),
            Activation::TanhRescaled => Ok(2f64.powi(m as i32) * logistic_deriv(logistic(2.0 * z), m)),
            Activation::Linear => Ok(match m {
                0 => z,
                1 => 1.0,
                _ => 0.0,
            }),
        }
    }

    /// `E[sigma^{(m)}(z)]` for `z ~ N(mean, sd^2)`, `m in {2, 3}`.
    ///
    /// Closed form for the step (derivatives of the Gaussian density at the
    /// jump), composite Simpson quadrature otherwise.
    pub fn gaussian_derivative_mean(self, mean: f64, sd: f64, m: usize) -> Result<f64> {
        if !(sd > 0.0) {
            return Err(invalid("standard deviation must be positive"));
        }
        match self {
            Activation::Step => {
                let phi0 = (-mean * mean / (2.0 * sd * sd)).exp() / ((2.0 * PI).sqrt() * sd);
                match m {
                    1 => Ok(phi0),
                    2 => Ok(-mean / (sd * sd) * phi0),
                    3 => Ok((mean * mean / (sd * sd) - 1.0) / (sd * sd) * phi0),
                    _ => Err(invalid(format!("derivative order {m} is not supported"))),
                }
            }
            _ => {
                let steps = 4000;
                let (lo, hi) = (mean - 12.0 * sd, mean + 12.0 * sd);
                let h = (hi - lo) / steps as f64;
                let mut acc = 0.0;
                for i in 0..=steps {
                    let z = lo + i as f64 * h;
                    let w = if i == 0 || i == steps {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    let dens = (-(z - mean).powi(2) / (2.0 * sd * sd)).exp() / ((2.0 * PI).sqrt() * sd);
                    acc += w * self.derivative(z, m)? * dens;
                }
                Ok(acc * h / 3.0)
            }
        }
    }

    /// Whether `sigma(z) = 1 - sigma(-z)`.
    pub fn is_symmetric(self) -> bool {
        !matches!(self, Activation::Linear)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Step => "step",
            Activation::Sigmoid => "sigmoid",
            Activation::TanhRescaled => "tanh-rescaled",
            Activation::Linear => "linear",
        }
    }

    /// Fourier transform at frequency `1/2` under the kernel
    /// `e^{-j 2 pi nu x}`.
    pub fn spectrum_half(self) -> Result<Complex64> {
        match self {
            Activation::Step => Ok(Complex64::new(0.0, -1.0 / PI)),
            Activation::Sigmoid => Ok(Complex64::new(0.0, -PI / (PI * PI).sinh())),
            Activation::TanhRescaled => Ok(Complex64::new(0.0, -(PI / 2.0) / (PI * PI / 2.0).sinh())),
            Activation::Linear => Err(invalid("the linear activation has no usable spectrum")),
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Activation::Step),
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh-rescaled" | "tanh" => Ok(Activation::TanhRescaled),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::Configuration(format!("unknown activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn symmetry_identity() {
        for act in [Activation::Step, Activation::Sigmoid, Activation::TanhRescaled] {
            for &z in &[-3.0, -0.4, 0.0, 0.2, 5.0] {
                assert!((act.eval(z) + act.eval(-z) - 1.0).abs() < 1e-15);
            }
        }
        assert_eq!(Activation::Sigmoid.eval(0.0), 0.5);
        assert!((Activation::TanhRescaled.eval(0.3) - (1.0 + 0.3f64.tanh()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_differences() {
        let h = 1e-3;
        for act in [Activation::Sigmoid, Activation::TanhRescaled] {
            for &z in &[-1.2, 0.0, 0.7] {
                for m in 1..=3 {
                    let fd = (act.derivative(z + h, m - 1).unwrap() - act.derivative(z - h, m - 1).unwrap())
                        / (2.0 * h);
                    assert!((fd - act.derivative(z, m).unwrap()).abs() < 1e-5);
                }
            }
        }
        assert!(Activation::Step.derivative(0.1, 1).is_err());
    }

    /// Stein form `E[sigma^{(m)}(z)] = E[sigma(z) He_m((z - b)/s)] / s^m`.
    #[test]
    fn derivative_means_match_stein_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 400_000;
        for act in [Activation::Step, Activation::Sigmoid] {
            for &(b, s) in &[(0.3, 1.0), (-0.8, 1.0), (0.5, 0.7)] {
                let normal = Normal::new(b, s).unwrap();
                let (mut m2, mut m3, mut q2, mut q3) = (0.0, 0.0, 0.0, 0.0);
                for _ in 0..n {
                    let z: f64 = normal.sample(&mut rng);
                    let u = (z - b) / s;
                    let f = act.eval(z);
                    let a = f * (u * u - 1.0) / (s * s);
                    let c = f * (u * u * u - 3.0 * u) / (s * s * s);
                    m2 += a;
                    m3 += c;
                    q2 += a * a;
                    q3 += c * c;
                }
                let nf = n as f64;
                let (m2, m3) = (m2 / nf, m3 / nf);
                let se2 = ((q2 / nf - m2 * m2) / nf).sqrt();
                let se3 = ((q3 / nf - m3 * m3) / nf).sqrt();
                let e2 = act.gaussian_derivative_mean(b, s, 2).unwrap();
                let e3 = act.gaussian_derivative_mean(b, s, 3).unwrap();
                assert!((e2 - m2).abs() < 5.0 * se2, "{act} b={b}: {e2} vs {m2}");
                assert!((e3 - m3).abs() < 5.0 * se3, "{act} b={b}: {e3} vs {m3}");
            }
        }
    }

    /// Regularized transform `int sigma(x) e^{-j 2 pi x / 2} e^{-rho x^2} dx`
    /// extrapolated to `rho = 0` through `rho in {1e-2, 1e-3, 1e-4}`.
    fn spectrum_oracle(act: Activation) -> Complex64 {
        let rhos: [f64; 3] = [1e-2, 1e-3, 1e-4];
        let vals: Vec<Complex64> = rhos
            .iter()
            .map(|&rho| {
                let lim = (60.0 / rho).sqrt();
                let h = 2e-3;
                let m = (lim / h) as i64;
                let mut acc = Complex64::new(0.0, 0.0);
                // grid through the origin so the step jump sits on a node
                for i in -m..=m {
                    let x = i as f64 * h;
                    let g = act.eval(x) * (-rho * x * x).exp();
                    acc += Complex64::from_polar(g, -PI * x);
                }
                acc * h
            })
            .collect();
        // quadratic Lagrange extrapolation to rho = 0
        let mut out = Complex64::new(0.0, 0.0);
        for i in 0..3 {
            let mut l = 1.0;
            for j in 0..3 {
                if i != j {
                    l *= (0.0 - rhos[j]) / (rhos[i] - rhos[j]);
                }
            }
            out += vals[i] * l;
        }
        out
    }

    #[test]
    fn spectrum_constants_match_oracle() {
        for act in [Activation::Step, Activation::Sigmoid, Activation::TanhRescaled] {
            let exact = act.spectrum_half().unwrap();
            let oracle = spectrum_oracle(act);
            let rel = (exact - oracle).norm() / exact.norm();
            assert!(rel < 1e-3, "{act}: {exact} vs {oracle}");
        }
        assert!(Activation::Linear.spectrum_half().is_err());
    }

    #[test]
    fn parse_round_trip() {
        for act in [Activation::Step, Activation::Sigmoid, Activation::TanhRescaled, Activation::Linear] {
            assert_eq!(act.name().parse::<Activation>().unwrap(), act);
        }
        assert!("relu".parse::<Activation>().is_err());
    }
}
