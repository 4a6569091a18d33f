use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::plan::{random_plan, BatchPlan};
use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{Stream, StreamRng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A batch as delivered to a trainer.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T: Scalar> {
    pub inputs: Tensor<T>,
    pub targets: Tensor<T>,
    pub ids: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Supplier of training batches. Trainers see nothing but this contract, so
/// a benign shuffler and an attacker are interchangeable.
pub trait BatchSource<T: Scalar> {
    /// Begins epoch `epoch` (1-based).
    fn reset(&mut self, epoch: usize) -> Result<()>;

    /// Next batch of the current epoch, `None` at epoch end.
    fn next_batch(&mut self) -> Result<Option<Batch<T>>>;
}

/// When per-fetch augmentation noise is redrawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMode {
    /// Fresh noise every epoch.
    #[default]
    ResampleEachEpoch,
    /// The epoch-1 transform of each example is replayed in every epoch.
    FirstEpochOnly,
}

/// Optional input transform keyed by `(seed, epoch, id)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Augment {
    /// Additive Gaussian noise on every feature.
    Jitter {
        sigma: f64,
        #[serde(default)]
        mode: AugmentMode,
    },
    /// Random translation of a square image by up to `max_shift` pixels, zero fill.
    Shift {
        side: usize,
        max_shift: usize,
        #[serde(default)]
        mode: AugmentMode,
    },
}

impl Augment {
    fn mode(&self) -> AugmentMode {
        match *self {
            Augment::Jitter { mode, .. } | Augment::Shift { mode, .. } => mode,
        }
    }

    pub fn apply<T: Scalar>(&self, seed: u64, epoch: usize, id: usize, row: &mut [T]) {
        let epoch_key = match self.mode() {
            AugmentMode::ResampleEachEpoch => epoch as u64,
            AugmentMode::FirstEpochOnly => 1,
        };
        let mut rng = StreamRng::substream(seed, Stream::Augment, (epoch_key << 24) ^ id as u64);
        match *self {
            Augment::Jitter { sigma, .. } => {
                for v in row.iter_mut() {
                    *v += T::of(sigma * rng.normal());
                }
            }
            Augment::Shift { side, max_shift, .. } => {
                let span = 2 * max_shift + 1;
                let dx = rng.below(span) as isize - max_shift as isize;
                let dy = rng.below(span) as isize - max_shift as isize;
                let src = row.to_vec();
                for y in 0..side as isize {
                    for x in 0..side as isize {
                        let (sx, sy) = (x - dx, y - dy);
                        let inside = sx >= 0 && sy >= 0 && sx < side as isize && sy < side as isize;
                        row[(y * side as isize + x) as usize] =
                            if inside { src[(sy * side as isize + sx) as usize] } else { T::zero() };
                    }
                }
            }
        }
    }
}

/// Gathers `ids` from `dataset`, applying augmentation when configured.
pub fn materialize<T: Scalar>(
    dataset: &Dataset<T>,
    ids: &[usize],
    augment: Option<(&Augment, u64, usize)>,
) -> Result<Batch<T>> {
    if ids.is_empty() {
        return Err(Error::Empty("batch with no ids".into()));
    }
    let (mut inputs, targets) = dataset.gather(ids)?;
    if let Some((aug, seed, epoch)) = augment {
        for (r, &id) in ids.iter().enumerate() {
            aug.apply(seed, epoch, id, inputs.row_mut(r));
        }
    }
    Ok(Batch { inputs, targets, ids: ids.to_vec() })
}

/// The benign loader: a fresh uniform permutation every epoch.
#[derive(Clone, Debug)]
pub struct ShuffledSource<T: Scalar> {
    dataset: Arc<Dataset<T>>,
    batch_size: usize,
    seed: u64,
    augment: Option<Augment>,
    plan: Option<BatchPlan>,
    cursor: usize,
}

impl<T: Scalar> ShuffledSource<T> {
    pub fn new(dataset: Arc<Dataset<T>>, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Invalid("batch size must be at least 1".into()));
        }
        Ok(Self { dataset, batch_size, seed, augment: None, plan: None, cursor: 0 })
    }

    pub fn with_augment(mut self, augment: Option<Augment>) -> Self {
        self.augment = augment;
        self
    }

    pub fn dataset(&self) -> &Arc<Dataset<T>> {
        &self.dataset
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn augment(&self) -> Option<&Augment> {
        self.augment.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Plan of the current epoch.
    pub fn plan(&self) -> Option<&BatchPlan> {
        self.plan.as_ref()
    }

    /// The benign plan of `epoch`, independent of the cursor.
    pub fn plan_for(&self, epoch: usize) -> Result<BatchPlan> {
        let mut rng = StreamRng::substream(self.seed, Stream::Order, epoch as u64);
        random_plan(self.dataset.len(), self.batch_size, epoch, &mut rng)
    }
}

impl<T: Scalar> BatchSource<T> for ShuffledSource<T> {
    fn reset(&mut self, epoch: usize) -> Result<()> {
        self.plan = Some(self.plan_for(epoch)?);
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self) -> Result<Option<Batch<T>>> {
        let plan = self.plan.as_ref().ok_or_else(|| Error::Invalid("next_batch before reset".into()))?;
        let Some(ids) = plan.batches.get(self.cursor) else {
            return Ok(None);
        };
        self.cursor += 1;
        let aug = self.augment.as_ref().map(|a| (a, self.seed, plan.epoch));
        materialize(&self.dataset, ids, aug).map(Some)
    }
}

/// Replays explicit plans; `reset` keeps the installed plan and rewinds it.
#[derive(Clone, Debug)]
pub struct PlanSource<T: Scalar> {
    dataset: Arc<Dataset<T>>,
    plan: BatchPlan,
    cursor: usize,
}

impl<T: Scalar> PlanSource<T> {
    pub fn new(dataset: Arc<Dataset<T>>, plan: BatchPlan) -> Result<Self> {
        plan.validate(dataset.len())?;
        Ok(Self { dataset, plan, cursor: 0 })
    }

    pub fn set_plan(&mut self, plan: BatchPlan) -> Result<()> {
        plan.validate(self.dataset.len())?;
        self.plan = plan;
        self.cursor = 0;
        Ok(())
    }
}

impl<T: Scalar> BatchSource<T> for PlanSource<T> {
    fn reset(&mut self, epoch: usize) -> Result<()> {
        self.plan.epoch = epoch;
        self.cursor = 0;
        Ok(())
    }

    fn next_batch(&mut self) -> Result<Option<Batch<T>>> {
        let Some(ids) = self.plan.batches.get(self.cursor) else {
            return Ok(None);
        };
        self.cursor += 1;
        materialize(&self.dataset, ids, None).map(Some)
    }
}
