use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, MetricsRow, Split};

/// Test metrics of one arm at its best (lowest) test-loss epoch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestEpoch {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Lowest test loss among epochs `≥ from_epoch`; the earliest epoch wins ties.
pub fn best_test_loss_epoch(log: &MetricsLog, from_epoch: usize) -> Result<BestEpoch> {
    let mut best: Option<BestEpoch> = None;
    for r in log.split(Split::Test).into_iter().filter(|r| r.epoch >= from_epoch) {
        let (Some(loss), Some(accuracy)) = (r.loss, r.accuracy) else { continue };
        if best.is_none_or(|b| loss < b.loss) {
            best = Some(BestEpoch { epoch: r.epoch, loss, accuracy });
        }
    }
    best.ok_or_else(|| Error::Empty(format!("no test rows with loss and accuracy from epoch {from_epoch}")))
}

/// `(attacked − baseline) / baseline · 100`.
pub fn relative_delta(baseline: f64, attacked: f64) -> f64 {
    if baseline == attacked {
        return 0.0;
    }
    (attacked - baseline) / baseline * 100.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub baseline: BestEpoch,
    pub attacked: BestEpoch,
    /// Relative change of test accuracy, in percent.
    pub delta_relative_pct: f64,
    /// Absolute change of test accuracy, in percentage points.
    pub delta_points: f64,
}

fn test_epochs(log: &MetricsLog) -> Vec<usize> {
    log.split(Split::Test).iter().map(|r| r.epoch).collect()
}

/// Relative test-accuracy change at each arm's best test-loss epoch.
pub fn compare_arms(baseline: &MetricsLog, attacked: &MetricsLog) -> Result<DeltaReport> {
    compare_arms_from(baseline, attacked, 1)
}

/// [`compare_arms`] restricted to epochs `≥ from_epoch` in both arms.
pub fn compare_arms_from(baseline: &MetricsLog, attacked: &MetricsLog, from_epoch: usize) -> Result<DeltaReport> {
    let (eb, ea) = (test_epochs(baseline), test_epochs(attacked));
    if eb != ea {
        return Err(Error::Invalid(format!("mismatched epochs: baseline {eb:?}, attacked {ea:?}")));
    }
    let b = best_test_loss_epoch(baseline, from_epoch)?;
    let a = best_test_loss_epoch(attacked, from_epoch)?;
    Ok(DeltaReport {
        baseline: b,
        attacked: a,
        delta_relative_pct: relative_delta(b.accuracy, a.accuracy),
        delta_points: (a.accuracy - b.accuracy) * 100.0,
    })
}

/// Epochs after `attack_epoch` until attacked test accuracy first comes
/// within `tolerance` (a fraction, e.g. 0.01) of the baseline at the same
/// epoch; `None` if it never does.
pub fn recovery_time(
    baseline: &MetricsLog,
    attacked: &MetricsLog,
    attack_epoch: usize,
    tolerance: f64,
) -> Result<Option<usize>> {
    let (eb, ea) = (test_epochs(baseline), test_epochs(attacked));
    if eb != ea {
        return Err(Error::Invalid(format!("mismatched epochs: baseline {eb:?}, attacked {ea:?}")));
    }
    for (b, a) in baseline.split(Split::Test).iter().zip(attacked.split(Split::Test)) {
        if b.epoch <= attack_epoch {
            continue;
        }
        let (Some(x), Some(y)) = (b.accuracy, a.accuracy) else { continue };
        if y >= x - tolerance {
            return Ok(Some(b.epoch - attack_epoch));
        }
    }
    Ok(None)
}

fn mean(xs: &[Option<f64>]) -> Option<f64> {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    (v.len() == xs.len() && !v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Per-(epoch, split) mean of several seed runs of one arm. Fields missing
/// in any run are left empty.
pub fn average_logs(logs: &[MetricsLog], run_id: &str) -> Result<MetricsLog> {
    let first = logs.first().ok_or_else(|| Error::Empty("no logs to average".into()))?;
    let mut groups: BTreeMap<(usize, &'static str), Vec<&MetricsRow>> = BTreeMap::new();
    for log in logs {
        for r in &log.rows {
            groups.entry((r.epoch, r.split.as_str())).or_default().push(r);
        }
    }
    let mut out = MetricsLog::new();
    for rows in groups.values() {
        if rows.len() != logs.len() {
            return Err(Error::Invalid(format!(
                "epoch {} split {} present in {} of {} logs",
                rows[0].epoch,
                rows[0].split.as_str(),
                rows.len(),
                logs.len()
            )));
        }
        let field = |f: fn(&MetricsRow) -> Option<f64>| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
        out.push(MetricsRow {
            run_id: run_id.to_string(),
            epoch: rows[0].epoch,
            split: rows[0].split,
            loss: field(|r| r.loss),
            accuracy: field(|r| r.accuracy),
            trigger_accuracy: field(|r| r.trigger_accuracy),
            error_with_trigger: field(|r| r.error_with_trigger),
            epoch_mean_bias_term: field(|r| r.epoch_mean_bias_term),
            policy: rows[0].policy.clone(),
            mode: rows[0].mode.clone(),
            seed: first.rows.first().map_or(0, |r| r.seed),
        })?;
    }
    Ok(out)
}

/// Mean and both standard-deviation poolings of a per-(class, seed) metric.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PooledStats {
    pub mean: f64,
    /// Std of the per-class means (seeds averaged first).
    pub std_over_classes: f64,
    /// Std over every (class, seed) value.
    pub std_over_all: f64,
}

fn std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// `values[c][s]` is the metric for target class `c` and seed `s`.
pub fn pooled_stats(values: &[Vec<f64>]) -> Result<PooledStats> {
    let all: Vec<f64> = values.iter().flatten().copied().collect();
    if all.is_empty() || values.iter().any(|v| v.is_empty()) {
        return Err(Error::Empty("pooling needs at least one value per class".into()));
    }
    let per_class: Vec<f64> = values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    Ok(PooledStats {
        mean: all.iter().sum::<f64>() / all.len() as f64,
        std_over_classes: std(&per_class),
        std_over_all: std(&all),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn curve(accs: &[f64], losses: &[f64]) -> MetricsLog {
        let mut log = MetricsLog::new();
        for (i, (&a, &l)) in accs.iter().zip(losses).enumerate() {
            log.push(MetricsRow {
                run_id: "r".into(),
                epoch: i + 1,
                split: Split::Test,
                loss: Some(l),
                accuracy: Some(a),
                trigger_accuracy: None,
                error_with_trigger: None,
                epoch_mean_bias_term: None,
                policy: "none".into(),
                mode: "none".into(),
                seed: 0,
            })
            .unwrap();
        }
        log
    }

    #[test]
    fn identical_logs_have_zero_delta() {
        let a = curve(&[0.5, 0.7, 0.6], &[1.0, 0.5, 0.6]);
        let d = compare_arms(&a, &a).unwrap();
        assert_eq!(d.delta_relative_pct, 0.0);
        assert_eq!(d.baseline.epoch, 2);
    }

    #[test]
    fn ninety_to_thirty() {
        let b = curve(&[0.9], &[0.3]);
        let a = curve(&[0.3], &[1.3]);
        let d = compare_arms(&b, &a).unwrap();
        assert!((d.delta_relative_pct + 66.666_666_666_666_67).abs() < 1e-9);
        assert!((d.delta_points + 60.0).abs() < 1e-9);
    }

    #[test]
    fn best_epoch_uses_loss_not_accuracy() {
        let a = curve(&[0.9, 0.5], &[0.4, 0.3]);
        let best = best_test_loss_epoch(&a, 1).unwrap();
        assert_eq!((best.epoch, best.accuracy), (2, 0.5));
        assert_eq!(best_test_loss_epoch(&a, 2).unwrap().epoch, 2);
        assert!(best_test_loss_epoch(&a, 3).is_err());
    }

    #[test]
    fn mismatched_epochs() {
        let a = curve(&[0.5, 0.6], &[1.0, 0.9]);
        let b = curve(&[0.5], &[1.0]);
        assert!(matches!(compare_arms(&a, &b), Err(Error::Invalid(_))));
    }

    #[test]
    fn recovery_scan() {
        let base = curve(&[0.8, 0.8, 0.8, 0.8, 0.8], &[1.0; 5]);
        let att = curve(&[0.8, 0.3, 0.6, 0.795, 0.8], &[1.0; 5]);
        assert_eq!(recovery_time(&base, &att, 2, 0.01).unwrap(), Some(2));
        assert_eq!(recovery_time(&base, &att, 4, 0.01).unwrap(), Some(1));
        let never = curve(&[0.8, 0.3, 0.3, 0.3, 0.3], &[1.0; 5]);
        assert_eq!(recovery_time(&base, &never, 2, 0.01).unwrap(), None);
    }

    #[test]
    fn averaging() {
        let a = curve(&[0.2, 0.4], &[1.0, 2.0]);
        let b = curve(&[0.4, 0.8], &[3.0, 4.0]);
        let m = average_logs(&[a.clone(), b], "mean").unwrap();
        let rows = m.split(Split::Test);
        assert!((rows[0].accuracy.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(rows[1].loss, Some(3.0));
        assert!(average_logs(&[a, curve(&[0.1], &[1.0])], "x").is_err());
    }

    #[test]
    fn pooling() {
        let p = pooled_stats(&[vec![1.0, 3.0], vec![5.0, 7.0]]).unwrap();
        assert_eq!(p.mean, 4.0);
        assert!((p.std_over_classes - 8f64.sqrt()).abs() < 1e-12);
        assert!(p.std_over_all > 0.0 && p.std_over_all < p.std_over_classes);
    }
}
