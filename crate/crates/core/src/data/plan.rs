use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// One epoch's ordering of dataset ids into batches.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub epoch: usize,
    pub batch_size: usize,
    pub batches: Vec<Vec<usize>>,
    /// Set for replacement plans, where ids may repeat or be missing.
    pub multiset_ok: bool,
}

impl BatchPlan {
    /// Chunks an id sequence into consecutive batches of `batch_size`.
    pub fn chunked(epoch: usize, batch_size: usize, order: &[usize]) -> Self {
        let batches = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
        Self { epoch, batch_size, batches, multiset_ok: false }
    }

    pub fn flatten(&self) -> Vec<usize> {
        self.batches.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    /// Every id of `0..n` appears exactly once. O(n).
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        let mut count = 0usize;
        for &id in self.batches.iter().flatten() {
            if id >= n {
                return Err(Error::Plan(format!("id {id} outside dataset of {n}")));
            }
            if seen[id] {
                return Err(Error::Plan(format!("id {id} repeats in a partition plan")));
            }
            seen[id] = true;
            count += 1;
        }
        if count != n {
            return Err(Error::Plan(format!("{} of {n} ids missing from the plan", n - count)));
        }
        Ok(())
    }

    /// Full invariant check against a dataset of `n` examples.
    ///
    /// Batches hold at most `batch_size` ids and at most one batch is short;
    /// partition plans must cover every id exactly once.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Plan("batch size must be positive".into()));
        }
        let mut short = 0;
        for b in &self.batches {
            if b.is_empty() || b.len() > self.batch_size {
                return Err(Error::Plan(format!("batch of {} ids with B = {}", b.len(), self.batch_size)));
            }
            if b.len() < self.batch_size {
                short += 1;
            }
        }
        if short > 1 {
            return Err(Error::Plan(format!("{short} short batches; at most one allowed")));
        }
        if self.multiset_ok {
            if let Some(&id) = self.batches.iter().flatten().find(|&&id| id >= n) {
                return Err(Error::Plan(format!("id {id} outside dataset of {n}")));
            }
            Ok(())
        } else {
            self.check_partition(n)
        }
    }
}

/// Uniform random permutation of `0..n` chunked into batches of `batch_size`.
/// The remainder batch is kept.
pub fn random_plan(n: usize, batch_size: usize, epoch: usize, rng: &mut StreamRng) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let order = rng.permutation(n);
    Ok(BatchPlan::chunked(epoch, batch_size, &order))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_ids_two_batches() {
        let p = random_plan(4, 2, 1, &mut StreamRng::new(1, 3)).unwrap();
        assert_eq!(p.len(), 2);
        p.validate(4).unwrap();
        let mut all = p.flatten();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
    }

    #[test]
    fn remainder_batch_kept() {
        let p = random_plan(5, 2, 1, &mut StreamRng::new(1, 3)).unwrap();
        let sizes: Vec<usize> = p.batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        p.validate(5).unwrap();
    }

    #[test]
    fn repeats_rejected_unless_multiset() {
        let mut p = BatchPlan { epoch: 1, batch_size: 2, batches: vec![vec![0, 0], vec![1, 1]], multiset_ok: false };
        assert!(matches!(p.validate(2), Err(Error::Plan(_))));
        p.multiset_ok = true;
        p.validate(2).unwrap();
    }

    #[test]
    fn missing_ids_rejected() {
        let p = BatchPlan::chunked(1, 2, &[0, 1, 2]);
        assert!(p.validate(4).is_err());
        assert!(random_plan(3, 0, 1, &mut StreamRng::new(0, 0)).is_err());
    }

    #[test]
    fn first_position_is_uniform() {
        // binomial oracle: each id leads with p = 1/6
        let trials = 10_000;
        let mut counts = [0usize; 6];
        let mut rng = StreamRng::new(77, 3);
        for _ in 0..trials {
            let p = random_plan(6, 2, 1, &mut rng).unwrap();
            counts[p.batches[0][0]] += 1;
        }
        let p = 1.0 / 6.0;
        let mean = trials as f64 * p;
        let sd = (trials as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() <= 3.0 * sd, "count {c} vs {mean}±{}", 3.0 * sd);
        }
    }
}
