//! Per-epoch metric rows and their CSV encoding.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
    Trigger,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Trigger => "trigger",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "trigger" => Ok(Split::Trigger),
            other => Err(Error::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub epoch: usize,
    pub split: Split,
    pub loss: Option<f64>,
    pub accuracy: Option<f64>,
    pub trigger_accuracy: Option<f64>,
    pub error_with_trigger: Option<f64>,
    pub epoch_mean_bias_term: Option<f64>,
    pub policy: String,
    pub mode: String,
    pub seed: u64,
}

pub const CSV_HEADER: &str =
    "run_id,epoch,split,loss,accuracy,trigger_accuracy,error_with_trigger,epoch_mean_bias_term,policy,mode,seed";

/// Round-trip exact float formatting: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse::<f64>().map(Some).map_err(|e| Error::Invalid(format!("bad float {s:?}: {e}")))
}

/// Ordered metric rows of one or more runs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, row: MetricsRow) -> Result<()> {
        if let Some(a) = row.accuracy {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Invalid(format!("accuracy {a} outside [0, 1]")));
            }
        }
        if self.rows.iter().any(|r| r.run_id == row.run_id && r.epoch == row.epoch && r.split == row.split) {
            return Err(Error::Invalid(format!(
                "duplicate row for run {} epoch {} split {}",
                row.run_id,
                row.epoch,
                row.split.as_str()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn extend(&mut self, other: MetricsLog) -> Result<()> {
        for r in other.rows {
            self.push(r)?;
        }
        Ok(())
    }

    /// Rows of one split in epoch order.
    pub fn split(&self, split: Split) -> Vec<&MetricsRow> {
        let mut rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| r.split == split).collect();
        rows.sort_by_key(|r| r.epoch);
        rows
    }

    pub fn last(&self, split: Split) -> Option<&MetricsRow> {
        self.split(split).last().copied()
    }

    pub fn at(&self, split: Split, epoch: usize) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| r.split == split && r.epoch == epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.run_id,
                r.epoch,
                r.split.as_str(),
                fmt_opt(r.loss),
                fmt_opt(r.accuracy),
                fmt_opt(r.trigger_accuracy),
                fmt_opt(r.error_with_trigger),
                fmt_opt(r.epoch_mean_bias_term),
                r.policy,
                r.mode,
                r.seed
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CSV_HEADER => {}
            _ => return Err(Error::Invalid("metrics CSV header missing or unexpected".into())),
        }
        let mut log = MetricsLog::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 11 {
                return Err(Error::Invalid(format!("row {} has {} fields, expected 11", i + 2, f.len())));
            }
            let bad = |what: &str| Error::Invalid(format!("row {}: bad {what}", i + 2));
            log.rows.push(MetricsRow {
                run_id: f[0].to_string(),
                epoch: f[1].parse().map_err(|_| bad("epoch"))?,
                split: Split::parse(f[2])?,
                loss: parse_opt(f[3])?,
                accuracy: parse_opt(f[4])?,
                trigger_accuracy: parse_opt(f[5])?,
                error_with_trigger: parse_opt(f[6])?,
                epoch_mean_bias_term: parse_opt(f[7])?,
                policy: f[8].to_string(),
                mode: f[9].to_string(),
                seed: f[10].parse().map_err(|_| bad("seed"))?,
            });
        }
        Ok(log)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(epoch: usize, split: Split, acc: f64) -> MetricsRow {
        MetricsRow {
            run_id: "r".into(),
            epoch,
            split,
            loss: Some(0.1 + acc),
            accuracy: Some(acc),
            trigger_accuracy: None,
            error_with_trigger: None,
            epoch_mean_bias_term: Some(-1e-3),
            policy: "high_low".into(),
            mode: "reshuffle".into(),
            seed: 7,
        }
    }

    #[test]
    fn one_row_per_epoch_and_split() {
        let mut log = MetricsLog::new();
        log.push(row(1, Split::Train, 0.5)).unwrap();
        log.push(row(1, Split::Test, 0.5)).unwrap();
        assert!(log.push(row(1, Split::Test, 0.6)).is_err());
        assert!(log.push(row(2, Split::Test, 1.5)).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(acc in 0.0f64..=1.0, bias in -1e6f64..1e6, epoch in 0usize..1000) {
            let mut r = row(epoch, Split::Test, acc);
            r.epoch_mean_bias_term = Some(bias);
            let log = MetricsLog { rows: vec![r] };
            let back = MetricsLog::from_csv(&log.to_csv()).unwrap();
            prop_assert_eq!(back, log);
        }
    }
}
