//! How many natural samples an attacker must draw before one lands within
//! `ε` of a target gradient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::dist::{monte_carlo, normal_cdf, normal_pdf, Estimate};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    OnedExact,
    OnedSmalleps,
    Multivariate,
}

/// Inputs of the sample-size bound. Scalar modes read `mu`, `sigma` and
/// `target` from the first coordinate; the multivariate mode uses the
/// vectors and the covariance factor `a` (row-major, `AAᵀ = Σ`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub eps: f64,
    pub p_conf: f64,
    pub target: Vec<f64>,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
}

impl BoundInputs {
    pub fn scalar(mu: f64, sigma: f64, eps: f64, p_conf: f64, target: f64) -> Self {
        Self { mu: vec![mu], sigma, eps, p_conf, target: vec![target], a: None }
    }

    fn check(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.eps > 0.0) {
            bad.push(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.p_conf > 0.0 && self.p_conf < 1.0) {
            bad.push(format!("p_conf must lie in (0, 1), got {}", self.p_conf));
        }
        if self.mu.is_empty() || self.mu.len() != self.target.len() {
            bad.push(format!("mu has {} entries, target {}", self.mu.len(), self.target.len()));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Domain(bad.join("; ")))
        }
    }
}

/// `P(|target − Y| ≤ ε)` for `Y ~ N(μ, σ²)`.
pub fn hit_probability(mu: f64, sigma: f64, eps: f64, target: f64) -> f64 {
    normal_cdf((eps - mu + target) / sigma) - normal_cdf((-eps - mu + target) / sigma)
}

fn samples_for(log_miss_budget: f64, hit: f64) -> Result<f64> {
    if hit >= 1.0 {
        return Ok(1.0);
    }
    if hit <= 0.0 {
        return Err(Error::Domain("target is unreachable: hit probability underflows to 0".into()));
    }
    Ok((log_miss_budget / (1.0 - hit).ln()).max(1.0))
}

/// Sample count `n` (not rounded) such that the best of `n` draws is within
/// `ε` of the target with probability `1 − p_conf`.
pub fn sample_size_bound(inputs: &BoundInputs, mode: BoundMode) -> Result<f64> {
    inputs.check()?;
    match mode {
        BoundMode::OnedExact | BoundMode::OnedSmalleps => {
            if !(inputs.sigma > 0.0) {
                return Err(Error::Domain(format!("sigma must be positive, got {}", inputs.sigma)));
            }
            let (mu, t, s, e) = (inputs.mu[0], inputs.target[0], inputs.sigma, inputs.eps);
            let hit = match mode {
                BoundMode::OnedExact => hit_probability(mu, s, e, t),
                _ => 2.0 * e / s * normal_pdf((t - mu) / s),
            };
            samples_for(inputs.p_conf.ln(), hit)
        }
        BoundMode::Multivariate => multivariate(inputs),
    }
}

fn multivariate(inputs: &BoundInputs) -> Result<f64> {
    let k = inputs.mu.len();
    let a =
        inputs.a.as_ref().ok_or_else(|| Error::Domain("multivariate bound needs the covariance factor A".into()))?;
    if a.len() != k * k {
        return Err(Error::Dimension(format!("A has {} entries, expected {}", a.len(), k * k)));
    }
    let a = DMatrix::from_row_slice(k, k, a);
    let svd = a.clone().svd(false, false);
    let norm = svd.singular_values.max();
    if svd.singular_values.min() <= norm * 1e-12 {
        return Err(Error::Singular);
    }
    let shift = DVector::from_iterator(k, inputs.target.iter().zip(&inputs.mu).map(|(t, m)| t - m));
    let c = a.lu().solve(&shift).ok_or(Error::Singular)?;
    let budget = (1.0 - (1.0 - inputs.p_conf).powf(1.0 / k as f64)).ln();
    let r = inputs.eps / norm;
    c.iter()
        .map(|&ci| samples_for(budget, normal_cdf(r + ci) - normal_cdf(-r + ci)))
        .try_fold(1.0f64, |acc, n| Ok(acc.max(n?)))
}

/// Fraction of `trials` in which the best of `n` draws from `N(μ, σ²)` lands
/// within `ε` of the (scalar) target.
pub fn empirical_hit_rate(inputs: &BoundInputs, n: usize, trials: usize, seed: u64) -> Result<Estimate> {
    inputs.check()?;
    let (mu, sigma, eps, t) = (inputs.mu[0], inputs.sigma, inputs.eps, inputs.target[0]);
    let hits = monte_carlo(seed, trials, |rng| {
        let best = (0..n).map(|_| (t - (mu + sigma * rng.normal())).abs()).fold(f64::INFINITY, f64::min);
        if best <= eps {
            1.0
        } else {
            0.0
        }
    });
    Estimate::from_samples(&hits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_hit_rate_needs_two_samples() {
        assert!((samples_for(0.25f64.ln(), 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(samples_for(0.25f64.ln(), 1.0).unwrap(), 1.0);
    }

    #[test]
    fn standard_normal_target_zero() {
        let inp = BoundInputs::scalar(0.0, 1.0, 0.1, 0.05, 0.0);
        let n = sample_size_bound(&inp, BoundMode::OnedExact).unwrap();
        assert!((n - 36.1).abs() < 0.05, "{n}");
        assert_eq!(n.ceil(), 37.0);
        let approx = sample_size_bound(&inp, BoundMode::OnedSmalleps).unwrap();
        assert!((approx - n).abs() / n < 0.01);
    }

    #[test]
    fn monotone_in_eps_and_p() {
        let n = |eps: f64, p: f64| {
            sample_size_bound(&BoundInputs::scalar(0.3, 1.2, eps, p, -0.4), BoundMode::OnedExact).unwrap()
        };
        assert!(n(0.05, 0.05) > n(0.1, 0.05));
        assert!(n(0.1, 0.01) > n(0.1, 0.05));
        assert!(n(100.0, 0.05) >= 1.0);
    }

    #[test]
    fn identity_factor_matches_one_dimension() {
        let mut inp = BoundInputs::scalar(0.0, 1.0, 0.1, 0.05, 0.0);
        inp.a = Some(vec![1.0]);
        let multi = sample_size_bound(&inp, BoundMode::Multivariate).unwrap();
        let one = sample_size_bound(&inp, BoundMode::OnedExact).unwrap();
        assert!((multi - one).abs() < 1e-12);
    }

    #[test]
    fn singular_factor_is_refused() {
        let inp = BoundInputs {
            mu: vec![0.0, 0.0],
            sigma: 1.0,
            eps: 0.1,
            p_conf: 0.05,
            target: vec![1.0, 1.0],
            a: Some(vec![1.0, 0.0, 2.0, 0.0]),
        };
        assert!(matches!(sample_size_bound(&inp, BoundMode::Multivariate), Err(Error::Singular)));
    }

    #[test]
    fn bound_is_conservative_in_simulation() {
        let inp = BoundInputs::scalar(0.2, 1.0, 0.1, 0.05, -0.3);
        let n = sample_size_bound(&inp, BoundMode::OnedExact).unwrap().ceil() as usize;
        let rate = empirical_hit_rate(&inp, n, 4000, 9).unwrap();
        assert!(rate.mean >= 0.95 - 3.0 * rate.stderr, "{rate:?}");
    }

    #[test]
    fn bad_inputs() {
        let inp = BoundInputs::scalar(0.0, 1.0, 0.1, 1.0, 0.0);
        assert!(matches!(sample_size_bound(&inp, BoundMode::OnedExact), Err(Error::Domain(_))));
    }
}
