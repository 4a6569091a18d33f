use std::f64::consts::{PI, SQRT_2};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Stream, StreamRng};

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Zero-mean, unit-variance distributions used by the order-statistic checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Standardized {
    Normal,
    /// Uniform on `[-√3, √3]`.
    Uniform,
    /// `±1` with equal probability.
    Rademacher,
}

impl Standardized {
    pub fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            Standardized::Normal => rng.normal(),
            Standardized::Uniform => rng.uniform(-3f64.sqrt(), 3f64.sqrt()),
            Standardized::Rademacher => {
                if rng.coin() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Density; `None` for the discrete case.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match self {
            Standardized::Normal => Some(normal_pdf(x)),
            Standardized::Uniform => {
                let r = 3f64.sqrt();
                Some(if (-r..=r).contains(&x) { 1.0 / (2.0 * r) } else { 0.0 })
            }
            Standardized::Rademacher => None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Standardized::Normal => normal_cdf(x),
            Standardized::Uniform => {
                let r = 3f64.sqrt();
                ((x + r) / (2.0 * r)).clamp(0.0, 1.0)
            }
            Standardized::Rademacher => {
                if x < -1.0 {
                    0.0
                } else if x < 1.0 {
                    0.5
                } else {
                    1.0
                }
            }
        }
    }

    /// Interval outside which the density vanishes (or is negligible).
    pub fn support(&self) -> (f64, f64) {
        match self {
            Standardized::Normal => (-10.0, 10.0),
            Standardized::Uniform => (-3f64.sqrt(), 3f64.sqrt()),
            Standardized::Rademacher => (-1.0, 1.0),
        }
    }

    /// Finite outcome table for discrete distributions.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Standardized::Rademacher => Some(vec![(-1.0, 0.5), (1.0, 0.5)]),
            _ => None,
        }
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::Invalid(format!("an estimate needs at least 2 samples, got {n}")));
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Ok(Self { mean, stderr: (var / n as f64).sqrt(), samples: n })
    }

    /// `|mean − value|` in units of standard error (infinite when the
    /// estimate is exact but wrong).
    pub fn z_score(&self, value: f64) -> f64 {
        let d = (self.mean - value).abs();
        if self.stderr == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / self.stderr
        }
    }
}

/// Runs `trials` independent trials in parallel, each with its own substream
/// of `seed`, and returns their results in trial order.
pub fn monte_carlo<R, F>(seed: u64, trials: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(&mut StreamRng) -> R + Sync,
{
    (0..trials).into_par_iter().map(|t| f(&mut StreamRng::substream(seed, Stream::MonteCarlo, t as u64))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.96) - 0.975_002_104_851_780).abs() < 1e-12);
        assert!((normal_pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn standardized_moments() {
        for d in [Standardized::Normal, Standardized::Uniform, Standardized::Rademacher] {
            let xs = monte_carlo(5, 40_000, |r| d.sample(r));
            let m = Estimate::from_samples(&xs).unwrap();
            assert!(m.z_score(0.0) < 4.0, "{d:?} mean {m:?}");
            let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
            let v = Estimate::from_samples(&sq).unwrap();
            assert!(v.z_score(1.0) < 4.0, "{d:?} variance {v:?}");
        }
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let a = monte_carlo(9, 100, |r| r.normal());
        let b = monte_carlo(9, 100, |r| r.normal());
        assert_eq!(a, b);
    }
}
