use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::fmt_f64;
use crate::theory::{
    empirical_hit_rate, estimate_kn, k_infinity, k_infinity_normal_exact, sample_size_bound, xi_expectations_exact,
    xi_order_gap, BoundInputs, BoundMode, Standardized,
};

/// Sizes of the numerical theory checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryConfig {
    pub seed: u64,
    pub kn_n: usize,
    pub kn_trials: usize,
    pub gap_n: usize,
    pub gap_trials: usize,
    pub gap_mu: f64,
    pub gap_sigma: f64,
    pub bound: BoundInputs,
    pub bound_trials: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kn_n: 1000,
            kn_trials: 100_000,
            gap_n: 32,
            gap_trials: 20_000,
            gap_mu: 1.0,
            gap_sigma: 1.0,
            bound: BoundInputs::scalar(0.0, 1.0, 0.1, 0.05, 0.0),
            bound_trials: 10_000,
        }
    }
}

impl TheoryConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.kn_n < 2 {
            bad.push("kn_n".to_string());
        }
        for (k, v) in
            [("kn_trials", self.kn_trials), ("gap_trials", self.gap_trials), ("bound_trials", self.bound_trials)]
        {
            if v < 2 {
                bad.push(k.into());
            }
        }
        if self.gap_n < 2 {
            bad.push("gap_n".into());
        }
        if !(self.gap_sigma >= 0.0) {
            bad.push("gap_sigma".into());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub quantity: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub reference_value: Option<f64>,
}

fn row(quantity: &str, estimate: f64, stderr: Option<f64>, reference_value: Option<f64>) -> TheoryRow {
    TheoryRow { quantity: quantity.into(), estimate, stderr, reference_value }
}

pub fn run_theory(cfg: &TheoryConfig) -> Result<Vec<TheoryRow>> {
    cfg.validate()?;
    let root_pi = k_infinity_normal_exact();
    let mut rows = vec![
        row("k_inf_quadrature_normal", k_infinity(Standardized::Normal)?, None, Some(root_pi)),
        row("k_inf_quadrature_uniform", k_infinity(Standardized::Uniform)?, None, Some(3f64.sqrt() / 3.0)),
    ];
    let kn = estimate_kn(cfg.kn_n, Standardized::Normal, cfg.kn_trials, cfg.seed)?;
    rows.push(row(&format!("k_n_normal_n{}", cfg.kn_n), kn.mean, Some(kn.stderr), Some(root_pi)));
    let rad = estimate_kn(2, Standardized::Rademacher, cfg.kn_trials, cfg.seed)?;
    rows.push(row("k_n_rademacher_n2", rad.mean, Some(rad.stderr), Some(0.5)));
    let atoms = Standardized::Rademacher.atoms().expect("discrete");
    let (dagger, bar) = xi_expectations_exact(&atoms, 2, |_| 1.0)?;
    rows.push(row("xi_dagger_rademacher_n2_exact", dagger, Some(0.0), Some(0.5)));
    rows.push(row("xi_bar_rademacher_n2_exact", bar, Some(0.0), Some(0.0)));
    let gap =
        xi_order_gap(Standardized::Normal, cfg.gap_mu, cfg.gap_sigma, cfg.gap_n, cfg.gap_trials, cfg.seed, |_| 1.0)?;
    rows.push(row("xi_dagger_normal", gap.dagger.mean, Some(gap.dagger.stderr), None));
    rows.push(row("xi_bar_normal", gap.bar.mean, Some(gap.bar.stderr), None));
    rows.push(row("xi_gap_normal", gap.gap.mean, Some(gap.gap.stderr), None));
    for (name, mode) in
        [("sample_size_oned_exact", BoundMode::OnedExact), ("sample_size_oned_smalleps", BoundMode::OnedSmalleps)]
    {
        rows.push(row(name, sample_size_bound(&cfg.bound, mode)?, None, None));
    }
    let n = sample_size_bound(&cfg.bound, BoundMode::OnedExact)?.ceil() as usize;
    let hit = empirical_hit_rate(&cfg.bound, n, cfg.bound_trials, cfg.seed)?;
    rows.push(row("sample_size_hit_rate", hit.mean, Some(hit.stderr), Some(1.0 - cfg.bound.p_conf)));
    Ok(rows)
}

pub const THEORY_HEADER: &str = "quantity,estimate,stderr,reference_value";

pub fn theory_csv(rows: &[TheoryRow]) -> String {
    let mut s = String::from(THEORY_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.quantity,
            fmt_f64(r.estimate),
            r.stderr.map(fmt_f64).unwrap_or_default(),
            r.reference_value.map(fmt_f64).unwrap_or_default()
        );
    }
    s
}
