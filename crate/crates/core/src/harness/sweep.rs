use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackSpec, ReorderPolicy};
use crate::error::{Error, Result};
use crate::metrics::{fmt_f64, MetricsLog};
use crate::optim::OptimizerSpec;

use super::compare::{compare_arms, DeltaReport};
use super::config::ExperimentConfig;
use super::run::run_paired;

/// Axes of a sweep. An absent axis keeps the base value; a present axis
/// must list at least one value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default)]
    pub policy: Option<Vec<ReorderPolicy>>,
    #[serde(default)]
    pub batch_size: Option<Vec<usize>>,
    #[serde(default)]
    pub optimizer: Option<Vec<OptimizerSpec>>,
    #[serde(default)]
    pub surrogate_optimizer: Option<Vec<OptimizerSpec>>,
    #[serde(default)]
    pub lr: Option<Vec<f64>>,
    #[serde(default)]
    pub momentum: Option<Vec<f64>>,
    #[serde(default)]
    pub surrogate_lr: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: ExperimentConfig,
    pub axes: SweepAxes,
}

/// One grid cell: its coordinates and the resulting config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub index: usize,
    pub config: ExperimentConfig,
}

fn axis<T: Clone>(name: &str, values: &Option<Vec<T>>, bad: &mut Vec<String>) -> Vec<Option<T>> {
    match values {
        None => vec![None],
        Some(v) if v.is_empty() => {
            bad.push(format!("axes.{name}"));
            vec![None]
        }
        Some(v) => v.iter().cloned().map(Some).collect(),
    }
}

impl SweepGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("json: {e}")]))
    }

    /// Cartesian product in axis declaration order, last axis fastest.
    pub fn expand(&self) -> Result<Vec<SweepCell>> {
        let a = &self.axes;
        let mut bad = Vec::new();
        let policies = axis("policy", &a.policy, &mut bad);
        let batch_sizes = axis("batch_size", &a.batch_size, &mut bad);
        let optimizers = axis("optimizer", &a.optimizer, &mut bad);
        let surrogate_optimizers = axis("surrogate_optimizer", &a.surrogate_optimizer, &mut bad);
        let lrs = axis("lr", &a.lr, &mut bad);
        let momenta = axis("momentum", &a.momentum, &mut bad);
        let surrogate_lrs = axis("surrogate_lr", &a.surrogate_lr, &mut bad);
        if *a == SweepAxes::default() {
            bad.push("axes".into());
        }
        if a.policy.is_some() && self.base.attack.is_none() {
            bad.push("base.attack".into());
        }
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        let mut cells = Vec::new();
        for p in &policies {
            for b in &batch_sizes {
                for o in &optimizers {
                    for so in &surrogate_optimizers {
                        for lr in &lrs {
                            for m in &momenta {
                                for slr in &surrogate_lrs {
                                    let mut c = self.base.clone();
                                    if let (Some(p), Some(att)) = (p, c.attack.as_mut()) {
                                        att.policy = *p;
                                    }
                                    if let Some(b) = b {
                                        c.batch_size = *b;
                                    }
                                    if let Some(o) = o {
                                        c.optimizer = *o;
                                    }
                                    if let Some(so) = so {
                                        c.surrogate_optimizer = Some(*so);
                                    }
                                    if let Some(lr) = lr {
                                        c.optimizer = c.optimizer.with_lr(*lr);
                                    }
                                    if let Some(m) = m {
                                        c.optimizer = OptimizerSpec::Momentum { lr: c.optimizer.lr(), momentum: *m };
                                    }
                                    if let Some(slr) = slr {
                                        let so = c.surrogate_optimizer.unwrap_or(OptimizerSpec::adam(0.001));
                                        c.surrogate_optimizer = Some(so.with_lr(*slr));
                                    }
                                    let index = cells.len();
                                    c.name = format!("{}-cell{index:04}", self.base.name);
                                    cells.push(SweepCell { index, config: c });
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// Summary of one paired (baseline, attacked) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub index: usize,
    pub policy: String,
    pub mode: String,
    pub batch_size: usize,
    pub optimizer: String,
    pub lr: f64,
    pub surrogate_lr: Option<f64>,
    pub delta: DeltaReport,
}

pub const SUMMARY_HEADER: &str = "cell,policy,mode,batch_size,optimizer,lr,surrogate_lr,baseline_epoch,baseline_accuracy,attacked_epoch,attacked_accuracy,delta_relative_pct,delta_points";

pub struct SweepOutput {
    pub cells: Vec<CellResult>,
    pub logs: Vec<(MetricsLog, MetricsLog)>,
}

fn run_cell(cell: &SweepCell) -> Result<(CellResult, (MetricsLog, MetricsLog))> {
    let c = &cell.config;
    let (base, att) = run_paired(c)?;
    let (policy, mode) = c.attack.as_ref().map_or(("none".into(), "none".into()), |a: &AttackSpec| {
        (a.policy.as_str().to_string(), a.mode.as_str().to_string())
    });
    let result = CellResult {
        index: cell.index,
        policy,
        mode,
        batch_size: c.batch_size,
        optimizer: c.optimizer.name().into(),
        lr: c.optimizer.lr(),
        surrogate_lr: c.surrogate_optimizer.map(|o| o.lr()),
        delta: compare_arms(&base, &att)?,
    };
    Ok((result, (base, att)))
}

/// Runs every cell as an independent paired experiment on up to `workers`
/// threads. Cell configs are written to `<out>/cells/` and the summary to
/// `<out>/summary.csv` when the base config has an output directory.
pub fn run_sweep(grid: &SweepGrid, workers: usize) -> Result<SweepOutput> {
    let cells = grid.expand()?;
    for c in &cells {
        c.config.validate()?;
    }
    let out_dir = grid.base.out_dir.clone();
    if let Some(dir) = &out_dir {
        let cell_dir = dir.join("cells");
        std::fs::create_dir_all(&cell_dir)?;
        for c in &cells {
            std::fs::write(cell_dir.join(format!("cell_{:04}.json", c.index)), c.config.to_json())?;
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("worker pool: {e}")))?;
    let results: Vec<Result<(CellResult, (MetricsLog, MetricsLog))>> =
        pool.install(|| cells.par_iter().map(run_cell).collect());
    let mut out = SweepOutput { cells: Vec::new(), logs: Vec::new() };
    for r in results {
        let (cell, logs) = r?;
        out.cells.push(cell);
        out.logs.push(logs);
    }
    if let Some(dir) = &out_dir {
        write_summary(&out.cells, &dir.join("summary.csv"))?;
    }
    Ok(out)
}

pub fn summary_csv(cells: &[CellResult]) -> String {
    let mut s = String::from(SUMMARY_HEADER);
    s.push('\n');
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.index,
            c.policy,
            c.mode,
            c.batch_size,
            c.optimizer,
            fmt_f64(c.lr),
            c.surrogate_lr.map(fmt_f64).unwrap_or_default(),
            c.delta.baseline.epoch,
            fmt_f64(c.delta.baseline.accuracy),
            c.delta.attacked.epoch,
            fmt_f64(c.delta.attacked.accuracy),
            fmt_f64(c.delta.delta_relative_pct),
            fmt_f64(c.delta.delta_points)
        );
    }
    s
}

fn write_summary(cells: &[CellResult], path: &Path) -> Result<()> {
    std::fs::write(path, summary_csv(cells))?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    NonDecreasing,
    NonIncreasing,
    Constant,
    Mixed,
}

/// Monotonicity of `ys` taken in order of ascending `xs`.
pub fn trend(xs: &[f64], ys: &[f64]) -> Result<Trend> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Invalid("a trend needs at least two paired values".into()));
    }
    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let steps: Vec<f64> = pairs.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let up = steps.iter().all(|&d| d >= 0.0);
    let down = steps.iter().all(|&d| d <= 0.0);
    Ok(match (up, down) {
        (true, true) => Trend::Constant,
        (true, false) => Trend::NonDecreasing,
        (false, true) => Trend::NonIncreasing,
        _ => Trend::Mixed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(axes: &str) -> SweepGrid {
        SweepGrid::from_json(&format!(
            r#"{{
                "base": {{
                    "dataset": {{"kind": "blobs", "n_train": 64, "n_test": 32, "classes": 4, "separation": 3.0}},
                    "model": {{"kind": "mlp", "inputs": 2, "hidden": 4, "classes": 4}},
                    "surrogate": {{"kind": "logreg", "inputs": 2, "classes": 4}},
                    "optimizer": {{"kind": "sgd", "lr": 0.1}},
                    "attack": {{"mode": "reshuffle", "policy": "high_low"}},
                    "epochs": 2,
                    "batch_size": 8
                }},
                "axes": {axes}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn counting() {
        let g = grid(
            r#"{"policy": ["low_high", "high_low", "oscillation_inward", "oscillation_outward"], "batch_size": [4, 8, 16]}"#,
        );
        let cells = g.expand().unwrap();
        assert_eq!(cells.len(), 12);
        assert_eq!(cells[1].config.batch_size, 8);
        assert_eq!(cells[3].config.attack.as_ref().unwrap().policy, ReorderPolicy::HighLow);
    }

    #[test]
    fn empty_axes() {
        assert!(matches!(grid("{}").expand(), Err(Error::Validation(_))));
        assert!(matches!(grid(r#"{"lr": []}"#).expand(), Err(Error::Validation(k)) if k == vec!["axes.lr"]));
    }

    #[test]
    fn optimizer_axes_compose() {
        let g = grid(r#"{"lr": [0.5], "momentum": [0.9], "surrogate_lr": [0.01]}"#);
        let c = &g.expand().unwrap()[0].config;
        assert_eq!(c.optimizer, OptimizerSpec::Momentum { lr: 0.5, momentum: 0.9 });
        assert_eq!(c.surrogate_optimizer.unwrap().lr(), 0.01);
    }

    #[test]
    fn trends() {
        assert_eq!(trend(&[3.0, 1.0, 2.0], &[0.9, 0.1, 0.5]).unwrap(), Trend::NonDecreasing);
        assert_eq!(trend(&[1.0, 2.0], &[0.5, 0.5]).unwrap(), Trend::Constant);
        assert_eq!(trend(&[1.0, 2.0, 3.0], &[0.5, 0.1, 0.7]).unwrap(), Trend::Mixed);
        assert!(trend(&[1.0], &[1.0]).is_err());
    }
}
