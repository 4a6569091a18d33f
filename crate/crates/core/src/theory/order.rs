//! The order-dependent second-order SGD term and the order-statistic
//! constants that govern when a high-to-low ordering inflates it.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::dist::{monte_carlo, Estimate, Standardized};
use super::quad::integrate;
use crate::error::{Error, Result};

/// `ξ = 2/(N(N−1)) Σ_j Σ_{k<j} g(X_j) X_k` in the order given.
pub fn xi_term(xs: &[f64], g: impl Fn(f64) -> f64) -> Result<f64> {
    let n = xs.len();
    if n < 2 {
        return Err(Error::Invalid(format!("the ordering term needs N ≥ 2, got {n}")));
    }
    let mut prefix = 0.0;
    let mut total = 0.0;
    for &x in xs {
        total += g(x) * prefix;
        prefix += x;
    }
    Ok(2.0 * total / (n * (n - 1)) as f64)
}

/// `ξ` with the default curvature surrogate `g ≡ 1`.
pub fn xi_term_unit(xs: &[f64]) -> Result<f64> {
    xi_term(xs, |_| 1.0)
}

fn descending(xs: &mut [f64]) {
    xs.sort_by(|a, b| b.total_cmp(a));
}

/// Monte Carlo expectations of the ordering term for iid draws: `dagger`
/// after a descending sort, `bar` in draw order, and their paired difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XiGap {
    pub dagger: Estimate,
    pub bar: Estimate,
    pub gap: Estimate,
}

/// Draws `X = mu + sigma·Z` for `Z` from `dist`.
pub fn xi_order_gap(
    dist: Standardized,
    mu: f64,
    sigma: f64,
    n: usize,
    trials: usize,
    seed: u64,
    g: impl Fn(f64) -> f64 + Sync,
) -> Result<XiGap> {
    if n < 2 {
        return Err(Error::Invalid(format!("the ordering term needs N ≥ 2, got {n}")));
    }
    let rows = monte_carlo(seed, trials, |rng| {
        let mut xs: Vec<f64> = (0..n).map(|_| mu + sigma * dist.sample(rng)).collect();
        let bar = xi_term(&xs, &g).expect("n ≥ 2");
        descending(&mut xs);
        let dagger = xi_term(&xs, &g).expect("n ≥ 2");
        (dagger, bar)
    });
    let dagger: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let bar: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let gap: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();
    Ok(XiGap {
        dagger: Estimate::from_samples(&dagger)?,
        bar: Estimate::from_samples(&bar)?,
        gap: Estimate::from_samples(&gap)?,
    })
}

/// Exact `(E[ξ†], E[ξ̄])` for a discrete distribution by enumerating all
/// `atoms.len()^n` outcomes.
pub fn xi_expectations_exact(atoms: &[(f64, f64)], n: usize, g: impl Fn(f64) -> f64) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::Invalid(format!("the ordering term needs N ≥ 2, got {n}")));
    }
    let outcomes = (atoms.len() as f64).powi(n as i32);
    if atoms.is_empty() || outcomes > 1e7 {
        return Err(Error::Refused(format!("{outcomes} outcomes is too many to enumerate")));
    }
    let mut idx = vec![0usize; n];
    let (mut dagger, mut bar) = (0.0, 0.0);
    loop {
        let mut xs: Vec<f64> = idx.iter().map(|&i| atoms[i].0).collect();
        let p: f64 = idx.iter().map(|&i| atoms[i].1).product();
        bar += p * xi_term(&xs, &g)?;
        descending(&mut xs);
        dagger += p * xi_term(&xs, &g)?;
        let mut d = 0;
        loop {
            if d == n {
                return Ok((dagger, bar));
            }
            idx[d] += 1;
            if idx[d] < atoms.len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

/// One draw of `2/(N(N−1)) Σ_i Σ_{j<i} Z_(j)` with `Z_(1)` the largest.
fn kn_sample(zs: &mut [f64]) -> f64 {
    let n = zs.len();
    descending(zs);
    let weighted: f64 = zs.iter().enumerate().map(|(j, z)| (n - 1 - j) as f64 * z).sum();
    2.0 * weighted / (n * (n - 1)) as f64
}

/// Monte Carlo estimate of `K_N` for a standardized distribution.
pub fn estimate_kn(n: usize, dist: Standardized, trials: usize, seed: u64) -> Result<Estimate> {
    if n < 2 {
        return Err(Error::Invalid(format!("K_N needs N ≥ 2, got {n}")));
    }
    let draws = monte_carlo(seed, trials, |rng| {
        let mut zs: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
        kn_sample(&mut zs)
    });
    Estimate::from_samples(&draws)
}

const NORMALIZATION_TOL: f64 = 1e-6;

/// `K∞ = 2 ∫∫_{v ≥ u} v φ(u) φ(v)` for a density supported on `[lo, hi]`,
/// to absolute tolerance `tol`.
pub fn k_infinity_with(pdf: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let mass = integrate(&pdf, lo, hi, tol * 1e-2)?;
    if (mass - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::Invalid(format!("density integrates to {mass}, not 1")));
    }
    let inner_tol = tol / (4.0 * (hi - lo));
    let inner = |u: f64| integrate(|v| v * pdf(v), u, hi, inner_tol);
    let failed = std::cell::Cell::new(None);
    let outer = integrate(
        |u| {
            let p = pdf(u);
            if p == 0.0 {
                return 0.0;
            }
            match inner(u) {
                Ok(i) => p * i,
                Err(e) => {
                    failed.set(Some(e.to_string()));
                    0.0
                }
            }
        },
        lo,
        hi,
        tol / 2.0,
    )?;
    if let Some(msg) = failed.take() {
        return Err(Error::Invalid(msg));
    }
    Ok(2.0 * outer)
}

/// `K∞` of a continuous standardized distribution at tolerance 1e-6.
pub fn k_infinity(dist: Standardized) -> Result<f64> {
    let (lo, hi) = dist.support();
    if dist.pdf(0.0).is_none() {
        return Err(Error::Invalid(format!("{dist:?} has no density")));
    }
    k_infinity_with(|x| dist.pdf(x).unwrap_or(0.0), lo, hi, 1e-6)
}

/// `1/√π`, the normal-distribution value of `K∞`.
pub fn k_infinity_normal_exact() -> f64 {
    1.0 / PI.sqrt()
}

/// Both readings of the attack-success inequality `σ/μ ≥ K·(M/m − 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCondition {
    pub ratio: f64,
    /// Right-hand side with the supplied `K∞`.
    pub threshold: f64,
    pub holds: bool,
    /// Right-hand side with `√π` in place of `K∞`.
    pub threshold_sqrt_pi: f64,
    pub holds_sqrt_pi: bool,
}

pub fn success_condition(mu: f64, sigma: f64, m: f64, big_m: f64, k_inf: f64) -> Result<SuccessCondition> {
    if mu <= 0.0 {
        return Err(Error::Domain(format!("gradient mean must be positive, got {mu}")));
    }
    if m <= 0.0 || big_m < m {
        return Err(Error::Domain(format!("curvature bounds need 0 < m ≤ M, got m={m}, M={big_m}")));
    }
    if sigma < 0.0 {
        return Err(Error::Domain(format!("negative standard deviation {sigma}")));
    }
    let ratio = sigma / mu;
    let spread = big_m / m - 1.0;
    let threshold = k_inf * spread;
    let threshold_sqrt_pi = PI.sqrt() * spread;
    Ok(SuccessCondition {
        ratio,
        threshold,
        holds: ratio >= threshold,
        threshold_sqrt_pi,
        holds_sqrt_pi: ratio >= threshold_sqrt_pi,
    })
}

/// `σ/μ ≥ K∞(M/m − 1)`.
pub fn attack_success_condition(mu: f64, sigma: f64, m: f64, big_m: f64, k_inf: f64) -> Result<bool> {
    success_condition(mu, sigma, m, big_m, k_inf).map(|c| c.holds)
}
