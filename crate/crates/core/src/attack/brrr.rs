//! Batch reordering, reshuffling and replacement (BRRR).
//!
//! The controller sits where the data loader would. During epoch 1 it passes
//! the benign stream through, records every delivered example or batch, and
//! co-trains a surrogate on exactly that stream. In every attacked epoch it
//! re-scores the recorded items once, ranks them by loss and emits a plan
//! shaped by one of four policies.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{materialize, Augment, Batch, BatchPlan, BatchSource, Dataset, ShuffledSource};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, MetricsRow, Split};
use crate::model::DifferentiableModel;
use crate::rng::{Stream, StreamRng};
use crate::scalar::Scalar;
use crate::theory::BiasTrace;
use crate::train::{evaluate, Trainer};

/// How a ranked sequence is turned into a delivery order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReorderPolicy {
    LowHigh,
    HighLow,
    OscillationInward,
    OscillationOutward,
}

impl ReorderPolicy {
    pub const ALL: [ReorderPolicy; 4] = [
        ReorderPolicy::LowHigh,
        ReorderPolicy::HighLow,
        ReorderPolicy::OscillationInward,
        ReorderPolicy::OscillationOutward,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReorderPolicy::LowHigh => "low_high",
            ReorderPolicy::HighLow => "high_low",
            ReorderPolicy::OscillationInward => "oscillation_inward",
            ReorderPolicy::OscillationOutward => "oscillation_outward",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    /// Whole batches change position; contents stay.
    Reorder,
    /// Individual points move across batches; each appears once.
    Reshuffle,
    /// Points may repeat or be left out.
    Replace,
}

impl AttackMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackMode::Reorder => "reorder",
            AttackMode::Reshuffle => "reshuffle",
            AttackMode::Replace => "replace",
        }
    }
}

/// Where loss scores come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossOracle {
    /// Blackbox: a co-trained surrogate.
    #[default]
    Surrogate,
    /// Whitebox: the source model's own loss.
    SourceLoss,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplaceStrategy {
    SingleClassBatches,
}

/// Epochs in which the attacker intervenes. Epoch 1 is always benign.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochSchedule {
    #[default]
    AllAfterFirst,
    Only(BTreeSet<usize>),
}

impl EpochSchedule {
    pub fn is_active(&self, epoch: usize) -> bool {
        epoch >= 2
            && match self {
                EpochSchedule::AllAfterFirst => true,
                EpochSchedule::Only(set) => set.contains(&epoch),
            }
    }

    pub fn never() -> Self {
        EpochSchedule::Only(BTreeSet::new())
    }

    pub fn single(epoch: usize) -> Self {
        EpochSchedule::Only([epoch].into_iter().collect())
    }
}

/// Full configuration of a BRRR attack.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub mode: AttackMode,
    pub policy: ReorderPolicy,
    #[serde(default)]
    pub oracle: LossOracle,
    #[serde(default)]
    pub epochs_active: EpochSchedule,
    /// Re-chunk batches (reorder) and redraw augmentation every epoch instead
    /// of replaying the epoch-1 data.
    #[serde(default)]
    pub resample_each_epoch: bool,
    #[serde(default)]
    pub replace_strategy: Option<ReplaceStrategy>,
}

impl AttackSpec {
    pub fn new(mode: AttackMode, policy: ReorderPolicy) -> Self {
        Self {
            mode,
            policy,
            oracle: LossOracle::Surrogate,
            epochs_active: EpochSchedule::AllAfterFirst,
            resample_each_epoch: false,
            replace_strategy: (mode == AttackMode::Replace).then_some(ReplaceStrategy::SingleClassBatches),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mode == AttackMode::Replace && self.replace_strategy.is_none() {
            return Err(Error::Validation(vec!["attack.replace_strategy".into()]));
        }
        Ok(())
    }

    pub fn needs_surrogate(&self) -> bool {
        self.oracle == LossOracle::Surrogate && self.mode != AttackMode::Replace
    }
}

/// Ids sorted by ascending loss, ties by ascending id.
pub fn rank_items(losses: &[(usize, f64)]) -> Result<Vec<usize>> {
    if let Some((id, l)) = losses.iter().find(|(_, l)| !l.is_finite()) {
        return Err(Error::NonFinite(format!("loss {l} for item {id}")));
    }
    let mut v = losses.to_vec();
    v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(v.into_iter().map(|(id, _)| id).collect())
}

/// Permutes an ascending-loss sequence according to `policy`.
///
/// The oscillating policies alternate between taking `unit` items from the
/// high end and `unit` items from the low end, starting high; the outward
/// variant first reverses each half of the sequence. A short final take
/// covers odd remainders.
pub fn apply_policy<I: Copy>(ranked: &[I], policy: ReorderPolicy, unit: usize) -> Result<Vec<I>> {
    if ranked.is_empty() {
        return Err(Error::Empty("nothing to order".into()));
    }
    let unit = unit.max(1);
    let out = match policy {
        ReorderPolicy::LowHigh => ranked.to_vec(),
        ReorderPolicy::HighLow => ranked.iter().rev().copied().collect(),
        ReorderPolicy::OscillationInward => oscillate(ranked.to_vec(), unit),
        ReorderPolicy::OscillationOutward => {
            let half = ranked.len() / 2;
            let mut seq: Vec<I> = ranked[..half].iter().rev().copied().collect();
            seq.extend(ranked[half..].iter().rev().copied());
            oscillate(seq, unit)
        }
    };
    Ok(out)
}

fn oscillate<I: Copy>(seq: Vec<I>, unit: usize) -> Vec<I> {
    let mut out = Vec::with_capacity(seq.len());
    let (mut lo, mut hi) = (0usize, seq.len());
    let mut from_high = false;
    while lo < hi {
        from_high = !from_high;
        let take = unit.min(hi - lo);
        if from_high {
            out.extend_from_slice(&seq[hi - take..hi]);
            hi -= take;
        } else {
            out.extend_from_slice(&seq[lo..lo + take]);
            lo += take;
        }
    }
    out
}

/// Point-level plan: rank every id, apply the policy in units of whole
/// batches, chunk into batches of `batch_size`.
pub fn plan_reshuffle(
    losses: &[(usize, f64)],
    policy: ReorderPolicy,
    batch_size: usize,
    epoch: usize,
) -> Result<BatchPlan> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let ranked = rank_items(losses)?;
    let order = apply_policy(&ranked, policy, batch_size)?;
    Ok(BatchPlan::chunked(epoch, batch_size, &order))
}

/// Batch-level plan: batches keep their contents and move by mean loss.
pub fn plan_reorder(
    batches: &[Vec<usize>],
    batch_losses: &[(usize, f64)],
    policy: ReorderPolicy,
    batch_size: usize,
    epoch: usize,
) -> Result<BatchPlan> {
    if batch_losses.len() != batches.len() {
        return Err(Error::Invalid(format!("{} batch losses for {} batches", batch_losses.len(), batches.len())));
    }
    let ranked = rank_items(batch_losses)?;
    let order = apply_policy(&ranked, policy, 1)?;
    let batches = order
        .into_iter()
        .map(|b| batches.get(b).cloned().ok_or_else(|| Error::Invalid(format!("no batch {b}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok(BatchPlan { epoch, batch_size, batches, multiset_ok: false })
}

/// Replacement plan of full batches, each drawn from a single class. Classes
/// come in contiguous blocks, in random order, of `⌈n_c/B⌉` batches each; the
/// last batch of a block wraps around its class pool.
pub fn plan_replace_single_class<T: Scalar>(
    dataset: &Dataset<T>,
    batch_size: usize,
    epoch: usize,
    rng: &mut StreamRng,
) -> Result<BatchPlan> {
    let k = dataset.classes().ok_or_else(|| Error::Invalid("single-class replacement needs labelled data".into()))?;
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be at least 1".into()));
    }
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); k];
    for id in 0..dataset.len() {
        pools[dataset.label(id)?].push(id);
    }
    let mut classes: Vec<usize> = (0..k).filter(|&c| !pools[c].is_empty()).collect();
    rng.shuffle(&mut classes);
    let mut batches = Vec::with_capacity(dataset.len().div_ceil(batch_size) + k);
    for &c in &classes {
        let pool = &mut pools[c];
        rng.shuffle(pool);
        for j in 0..pool.len().div_ceil(batch_size) {
            batches.push((0..batch_size).map(|i| pool[(j * batch_size + i) % pool.len()]).collect());
        }
    }
    Ok(BatchPlan { epoch, batch_size, batches, multiset_ok: true })
}

/// Per-example losses of `ids` under `model`, in id order.
pub fn score_points<T: Scalar>(
    model: &DifferentiableModel<T>,
    dataset: &Dataset<T>,
    ids: &[usize],
    augment: Option<(&Augment, u64, usize)>,
) -> Result<Vec<(usize, f64)>> {
    let mut out = Vec::with_capacity(ids.len());
    for chunk in ids.chunks(1024) {
        let b = materialize(dataset, chunk, augment)?;
        let r = model.forward_loss(&b.inputs, &b.targets)?;
        out.extend(chunk.iter().zip(r.per_example).map(|(&id, l)| (id, l.as_f64())));
    }
    Ok(out)
}

/// Mean loss of each batch, keyed by batch index.
pub fn score_batches<T: Scalar>(
    model: &DifferentiableModel<T>,
    dataset: &Dataset<T>,
    batches: &[Vec<usize>],
    augment: Option<(&Augment, u64, usize)>,
) -> Result<Vec<(usize, f64)>> {
    batches
        .iter()
        .enumerate()
        .map(|(i, ids)| {
            let b = materialize(dataset, ids, augment)?;
            Ok((i, model.forward_loss(&b.inputs, &b.targets)?.mean.as_f64()))
        })
        .collect()
}

enum Delivery {
    Passthrough,
    Planned { plan: BatchPlan, cursor: usize, augment_epoch: usize },
}

/// The attacker in the loader's seat.
pub struct BrrrController<T: Scalar> {
    benign: ShuffledSource<T>,
    spec: AttackSpec,
    surrogate: Option<Trainer<T>>,
    source_snapshot: Option<DifferentiableModel<T>>,
    seen_points: Vec<usize>,
    seen_batches: Vec<Vec<usize>>,
    epoch: usize,
    delivery: Delivery,
    attack_seed: u64,
    delivered: Vec<Vec<usize>>,
    last_plan: Option<BatchPlan>,
}

impl<T: Scalar> BrrrController<T> {
    pub fn new(
        benign: ShuffledSource<T>,
        spec: AttackSpec,
        surrogate: Option<Trainer<T>>,
        attack_seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        if spec.needs_surrogate() && surrogate.is_none() {
            return Err(Error::Invalid("blackbox attack needs a surrogate model".into()));
        }
        Ok(Self {
            benign,
            spec,
            surrogate,
            source_snapshot: None,
            seen_points: Vec::new(),
            seen_batches: Vec::new(),
            epoch: 0,
            delivery: Delivery::Passthrough,
            attack_seed,
            delivered: Vec::new(),
            last_plan: None,
        })
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    pub fn surrogate(&self) -> Option<&Trainer<T>> {
        self.surrogate.as_ref()
    }

    /// Whitebox oracle: the source parameters to score with at the next reset.
    pub fn set_source_snapshot(&mut self, model: DifferentiableModel<T>) {
        self.source_snapshot = Some(model);
    }

    /// Ids delivered so far in the current epoch, batch by batch.
    pub fn delivered(&self) -> &[Vec<usize>] {
        &self.delivered
    }

    pub fn last_plan(&self) -> Option<&BatchPlan> {
        self.last_plan.as_ref()
    }

    pub fn seen_points(&self) -> &[usize] {
        &self.seen_points
    }

    fn augment_for(&self, epoch: usize) -> Option<(&Augment, u64, usize)> {
        self.benign.augment().map(|a| (a, self.benign.seed(), epoch))
    }

    fn build_plan(&self, epoch: usize) -> Result<(BatchPlan, usize)> {
        let dataset = self.benign.dataset().clone();
        let augment_epoch = if self.spec.resample_each_epoch { epoch } else { 1 };
        let b = self.benign.batch_size();
        if self.spec.mode == AttackMode::Replace {
            let mut rng = StreamRng::substream(self.attack_seed, Stream::Attack, epoch as u64);
            return Ok((plan_replace_single_class(&dataset, b, epoch, &mut rng)?, augment_epoch));
        }
        let scorer = match self.spec.oracle {
            LossOracle::Surrogate => self.surrogate.as_ref().map(Trainer::model),
            LossOracle::SourceLoss => self.source_snapshot.as_ref(),
        }
        .ok_or_else(|| Error::Invalid("loss oracle unavailable".into()))?;
        let aug = self.augment_for(augment_epoch);
        let plan = match self.spec.mode {
            AttackMode::Reshuffle => {
                let losses = score_points(scorer, &dataset, &self.seen_points, aug)?;
                plan_reshuffle(&losses, self.spec.policy, b, epoch)?
            }
            AttackMode::Reorder => {
                let batches = if self.spec.resample_each_epoch {
                    self.benign.plan_for(epoch)?.batches
                } else {
                    self.seen_batches.clone()
                };
                let losses = score_batches(scorer, &dataset, &batches, aug)?;
                plan_reorder(&batches, &losses, self.spec.policy, b, epoch)?
            }
            AttackMode::Replace => unreachable!(),
        };
        Ok((plan, augment_epoch))
    }

    fn cotrain(&mut self, batch: &Batch<T>) -> Result<()> {
        if let Some(s) = self.surrogate.as_mut() {
            s.train_batch(batch)?;
        }
        Ok(())
    }
}

impl<T: Scalar> BatchSource<T> for BrrrController<T> {
    fn reset(&mut self, epoch: usize) -> Result<()> {
        self.epoch = epoch;
        self.delivered.clear();
        if epoch <= 1 || !self.spec.epochs_active.is_active(epoch) || self.seen_points.is_empty() {
            self.benign.reset(epoch)?;
            self.delivery = Delivery::Passthrough;
            self.last_plan = self.benign.plan().cloned();
            return Ok(());
        }
        // The genuine stream for this epoch is never read.
        let (plan, augment_epoch) = self.build_plan(epoch)?;
        plan.validate(self.benign.dataset().len())?;
        self.last_plan = Some(plan.clone());
        self.delivery = Delivery::Planned { plan, cursor: 0, augment_epoch };
        Ok(())
    }

    fn next_batch(&mut self) -> Result<Option<Batch<T>>> {
        let batch = match &mut self.delivery {
            Delivery::Passthrough => self.benign.next_batch()?,
            Delivery::Planned { plan, cursor, augment_epoch } => match plan.batches.get(*cursor) {
                None => None,
                Some(ids) => {
                    *cursor += 1;
                    let aug = self.benign.augment().map(|a| (a, self.benign.seed(), *augment_epoch));
                    Some(materialize(self.benign.dataset(), ids, aug)?)
                }
            },
        };
        let Some(batch) = batch else {
            return Ok(None);
        };
        if self.epoch == 1 {
            self.seen_points.extend_from_slice(&batch.ids);
            self.seen_batches.push(batch.ids.clone());
        }
        self.delivered.push(batch.ids.clone());
        self.cotrain(&batch)?;
        Ok(Some(batch))
    }
}

/// Shared inputs of a BRRR training run.
pub struct BrrrSetup<T: Scalar> {
    pub train: Arc<Dataset<T>>,
    pub test: Arc<Dataset<T>>,
    pub batch_size: usize,
    /// Seed of the benign ordering stream.
    pub order_seed: u64,
    pub augment: Option<Augment>,
    /// Required for blackbox attacks; ignored otherwise.
    pub surrogate: Option<Trainer<T>>,
    /// Record the convergence-bound bias term each step.
    pub track_bias: bool,
    pub run_id: String,
    pub seed: u64,
}

/// Trains `source` for `epochs` epochs, attacked by `spec` (or benign when
/// `None`), logging train and test metrics after every epoch.
pub fn run_brrr<T: Scalar>(
    source: &mut Trainer<T>,
    setup: BrrrSetup<T>,
    spec: Option<&AttackSpec>,
    epochs: usize,
) -> Result<MetricsLog> {
    let benign =
        ShuffledSource::new(setup.train.clone(), setup.batch_size, setup.order_seed)?.with_augment(setup.augment);
    let (policy, mode) = spec.map_or(("none".to_string(), "none".to_string()), |s| {
        (s.policy.as_str().to_string(), s.mode.as_str().to_string())
    });
    let mut controller = match spec {
        Some(s) => {
            let surrogate = if s.needs_surrogate() { setup.surrogate } else { None };
            Some(BrrrController::new(benign.clone(), s.clone(), surrogate, setup.seed)?)
        }
        None => None,
    };
    let mut plain = benign;
    let mut bias = setup.track_bias.then(|| BiasTrace::new(setup.train.clone())).transpose()?;
    let mut log = MetricsLog::new();
    for epoch in 1..=epochs {
        let source_dyn: &mut dyn BatchSource<T> = match controller.as_mut() {
            Some(c) => {
                if c.spec().oracle == LossOracle::SourceLoss {
                    c.set_source_snapshot(source.model().clone());
                }
                c
            }
            None => &mut plain,
        };
        match bias.as_mut() {
            Some(b) => {
                b.begin_epoch(epoch);
                source.train_epoch_observed(source_dyn, epoch, b)?;
            }
            None => {
                source.train_epoch(source_dyn, epoch)?;
            }
        }
        let bias_mean = bias.as_ref().and_then(|b| b.epoch_mean(epoch));
        for (split, data) in [(Split::Train, &setup.train), (Split::Test, &setup.test)] {
            let stats = evaluate(source.model(), data)?;
            log.push(MetricsRow {
                run_id: setup.run_id.clone(),
                epoch,
                split,
                loss: Some(stats.loss),
                accuracy: stats.accuracy,
                trigger_accuracy: None,
                error_with_trigger: None,
                epoch_mean_bias_term: if split == Split::Train { bias_mean } else { None },
                policy: policy.clone(),
                mode: mode.clone(),
                seed: setup.seed,
            })?;
        }
    }
    Ok(log)
}
