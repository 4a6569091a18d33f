//! Batch-order poisoning (BOP) and backdoors (BOB).
//!
//! The attacker computes the gradient a poisoned batch would produce, then
//! searches random batches of natural examples for one whose gradient comes
//! closest. Only natural ids with natural labels are ever delivered, except
//! in the explicit-perturbation arm that serves as the ceiling.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{materialize, Batch, BatchSource, Dataset, ShuffledSource};
use crate::error::{Error, Result};
use crate::metrics::{MetricsLog, MetricsRow, Split};
use crate::model::DifferentiableModel;
use crate::rng::{Stream, StreamRng};
use crate::scalar::Scalar;
use crate::tensor::{GradientVector, Norm, Tensor};
use crate::train::{evaluate, Trainer};

/// Fraction of the image a trigger must cover.
pub const TRIGGER_COVERAGE: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerKind {
    WhiteLines,
    FlagLike,
    CustomMask,
}

/// A square overlay and the label it should map to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerPattern {
    pub kind: TriggerKind,
    pub side: usize,
    pub mask: Vec<bool>,
    pub overlay: Vec<f64>,
    pub target_class: usize,
}

fn coverage_target(side: usize) -> usize {
    (TRIGGER_COVERAGE * (side * side) as f64).ceil() as usize
}

impl TriggerPattern {
    /// Solid white from the top, row-major, until 30% of pixels are covered.
    pub fn white_lines(side: usize, target_class: usize) -> Self {
        let n = side * side;
        let on = coverage_target(side);
        let mask = (0..n).map(|i| i < on).collect();
        Self { kind: TriggerKind::WhiteLines, side, mask, overlay: vec![1.0; n], target_class }
    }

    /// Every fourth row in white, topped up from the bottom-right corner to
    /// 30% coverage.
    pub fn flag_like(side: usize, target_class: usize) -> Self {
        let n = side * side;
        let mut mask: Vec<bool> = (0..n).map(|i| (i / side).is_multiple_of(4)).collect();
        let mut count = mask.iter().filter(|&&m| m).count();
        let want = coverage_target(side);
        for i in (0..n).rev() {
            if count >= want {
                break;
            }
            if !mask[i] {
                mask[i] = true;
                count += 1;
            }
        }
        Self { kind: TriggerKind::FlagLike, side, mask, overlay: vec![1.0; n], target_class }
    }

    pub fn custom(side: usize, mask: Vec<bool>, overlay: Vec<f64>, target_class: usize) -> Result<Self> {
        let t = Self { kind: TriggerKind::CustomMask, side, mask, overlay, target_class };
        t.validate()?;
        Ok(t)
    }

    pub fn covered(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn coverage(&self) -> f64 {
        self.covered() as f64 / self.mask.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.side * self.side;
        if self.mask.len() != n || self.overlay.len() != n {
            return Err(Error::Dimension(format!(
                "trigger of side {} needs {n} mask and overlay entries, has {} and {}",
                self.side,
                self.mask.len(),
                self.overlay.len()
            )));
        }
        let want = TRIGGER_COVERAGE * n as f64;
        if (self.covered() as f64 - want).abs() > self.side as f64 {
            return Err(Error::Invalid(format!(
                "trigger covers {} of {n} pixels; expected {want:.0} within one row",
                self.covered()
            )));
        }
        Ok(())
    }

    /// Binary PPM rendering: trigger pixels in their overlay shade, the rest
    /// dark red.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.side, self.side).into_bytes();
        for (m, v) in self.mask.iter().zip(&self.overlay) {
            if *m {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                out.extend_from_slice(&[g, g, g]);
            } else {
                out.extend_from_slice(&[64, 0, 0]);
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_ppm())?;
        Ok(())
    }
}

/// Overlays `trigger` onto one flattened image.
pub fn apply_trigger<T: Scalar>(image: &[T], trigger: &TriggerPattern) -> Result<Vec<T>> {
    if image.len() != trigger.mask.len() {
        return Err(Error::Dimension(format!("image has {} pixels, trigger {}", image.len(), trigger.mask.len())));
    }
    Ok(image
        .iter()
        .zip(trigger.mask.iter().zip(&trigger.overlay))
        .map(|(&x, (&m, &o))| if m { T::of(o.clamp(0.0, 1.0)) } else { x.max(T::zero()).min(T::one()) })
        .collect())
}

/// Triggered copies of `ids`, every one labelled with the target class.
pub fn triggered_batch<T: Scalar>(dataset: &Dataset<T>, ids: &[usize], trigger: &TriggerPattern) -> Result<Batch<T>> {
    let (inputs, _) = dataset.gather(ids)?;
    let mut shape = inputs.shape().to_vec();
    let mut data = Vec::with_capacity(inputs.len());
    for r in 0..inputs.rows() {
        data.extend(apply_trigger(inputs.row(r), trigger)?);
    }
    shape[0] = ids.len();
    let targets = Tensor::vector(vec![T::of(trigger.target_class as f64); ids.len()]);
    Ok(Batch { inputs: Tensor::from_parts(shape, data)?, targets, ids: ids.to_vec() })
}

/// Ids whose label differs from the trigger's target.
pub fn eligible_ids<T: Scalar>(dataset: &Dataset<T>, target_class: usize) -> Result<Vec<usize>> {
    Ok(dataset.labels()?.into_iter().enumerate().filter(|&(_, l)| l != target_class).map(|(i, _)| i).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriggerStats {
    /// Fraction of triggered eligible images predicted as the target class.
    pub trigger_accuracy: f64,
    /// Fraction of triggered eligible images predicted as anything other
    /// than their true label.
    pub error_with_trigger: f64,
    pub eligible: usize,
}

/// Trigger metrics over the test examples whose label is not the target.
pub fn trigger_metrics<T: Scalar>(
    model: &DifferentiableModel<T>,
    test: &Dataset<T>,
    trigger: &TriggerPattern,
) -> Result<TriggerStats> {
    let ids = eligible_ids(test, trigger.target_class)?;
    if ids.is_empty() {
        return Err(Error::Empty("no test example outside the target class".into()));
    }
    let batch = triggered_batch(test, &ids, trigger)?;
    let pred = model.predict_classes(&batch.inputs)?;
    let labels = test.labels()?;
    let hits = pred.iter().filter(|&&p| p == trigger.target_class).count();
    let wrong = pred.iter().zip(&ids).filter(|&(&p, &id)| p != labels[id]).count();
    let n = ids.len() as f64;
    Ok(TriggerStats { trigger_accuracy: hits as f64 / n, error_with_trigger: wrong as f64 / n, eligible: ids.len() })
}

/// How natural batches are searched for a gradient match.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchSpec {
    /// Norm order of the reconstruction error.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_candidates")]
    pub candidate_count: usize,
    /// Share of batch slots filled by matched points; the rest are random.
    #[serde(default = "default_v_fraction")]
    pub v_fraction: f64,
}

fn default_p() -> f64 {
    2.0
}

fn default_candidates() -> usize {
    300
}

fn default_v_fraction() -> f64 {
    0.7
}

impl Default for MatchSpec {
    fn default() -> Self {
        Self { p: default_p(), candidate_count: default_candidates(), v_fraction: default_v_fraction() }
    }
}

impl MatchSpec {
    pub fn matched_slots(&self, batch_size: usize) -> Result<usize> {
        if !(0.0..=1.0).contains(&self.v_fraction) {
            return Err(Error::Invalid(format!("v_fraction {} outside [0, 1]", self.v_fraction)));
        }
        Ok((self.v_fraction * batch_size as f64).round() as usize)
    }

    pub fn problems(&self, prefix: &str) -> Vec<String> {
        let mut bad = Vec::new();
        if Norm::from_order(self.p).is_err() {
            bad.push(format!("{prefix}.p"));
        }
        if self.candidate_count == 0 {
            bad.push(format!("{prefix}.candidate_count"));
        }
        if !(0.0..=1.0).contains(&self.v_fraction) {
            bad.push(format!("{prefix}.v_fraction"));
        }
        bad
    }
}

/// The poisoned batch whose update the attacker imitates.
#[derive(Clone, Debug)]
pub struct PoisonObjective<T: Scalar> {
    pub adversarial: Batch<T>,
    pub matching: MatchSpec,
}

/// Gradient of the mean loss over the adversarial batch.
pub fn poison_gradient<T: Scalar>(
    model: &DifferentiableModel<T>,
    objective: &PoisonObjective<T>,
) -> Result<GradientVector<T>> {
    model.backward(&objective.adversarial.inputs, &objective.adversarial.targets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub ids: Vec<usize>,
    pub distance: f64,
    /// Index of the winning candidate in sampling order.
    pub candidate: usize,
}

/// Draws `count` random candidate batches of `slots` distinct ids.
pub fn sample_candidates(n: usize, slots: usize, count: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    (0..count).map(|_| rng.sample_distinct(n, slots)).collect()
}

/// `‖target − ∇L̂(candidate)‖_p` for every candidate, in order.
pub fn score_candidates<T: Scalar>(
    model: &DifferentiableModel<T>,
    target: &GradientVector<T>,
    dataset: &Dataset<T>,
    candidates: &[Vec<usize>],
    norm: Norm,
) -> Result<Vec<f64>> {
    candidates
        .par_iter()
        .map(|ids| {
            let (x, y) = dataset.gather(ids)?;
            let g = model.backward(&x, &y)?;
            Ok(target.sub(&g)?.norm(norm)?.as_f64())
        })
        .collect()
}

/// Index of the smallest distance; the earliest wins ties.
fn stable_argmin(ds: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, d) in ds.iter().enumerate() {
        if best.is_none_or(|b| *d < ds[b]) {
            best = Some(i);
        }
    }
    best
}

/// Best gradient match among pre-drawn candidates.
pub fn best_candidate<T: Scalar>(
    model: &DifferentiableModel<T>,
    target: &GradientVector<T>,
    dataset: &Dataset<T>,
    candidates: Vec<Vec<usize>>,
    norm: Norm,
) -> Result<MatchResult> {
    let ds = score_candidates(model, target, dataset, &candidates, norm)?;
    if let Some(bad) = ds.iter().find(|d| !d.is_finite()) {
        return Err(Error::NonFinite(format!("matching distance {bad}")));
    }
    let i = stable_argmin(&ds).ok_or_else(|| Error::Invalid("no candidate batches".into()))?;
    Ok(MatchResult { ids: candidates.into_iter().nth(i).expect("index in range"), distance: ds[i], candidate: i })
}

/// Samples `spec.candidate_count` natural batches of `slots` ids and returns
/// the one whose gradient is closest to `target`.
pub fn find_matching_batch<T: Scalar>(
    model: &DifferentiableModel<T>,
    target: &GradientVector<T>,
    dataset: &Dataset<T>,
    slots: usize,
    spec: &MatchSpec,
    rng: &mut StreamRng,
) -> Result<MatchResult> {
    if spec.candidate_count == 0 {
        return Err(Error::Invalid("candidate_count must be at least 1".into()));
    }
    if slots == 0 {
        return Ok(MatchResult {
            ids: Vec::new(),
            distance: target.norm(Norm::from_order(spec.p)?)?.as_f64(),
            candidate: 0,
        });
    }
    if slots > dataset.len() {
        return Err(Error::Invalid(format!("{slots} slots but only {} examples", dataset.len())));
    }
    let candidates = sample_candidates(dataset.len(), slots, spec.candidate_count, rng);
    best_candidate(model, target, dataset, candidates, Norm::from_order(spec.p)?)
}

/// `B − V` random natural ids plus `V` matched ids, shuffled together.
pub fn compose_bop_batch(
    fill: &[usize],
    matched: &[usize],
    batch_size: usize,
    rng: &mut StreamRng,
) -> Result<Vec<usize>> {
    if matched.len() > batch_size {
        return Err(Error::Invalid(format!("{} matched ids exceed batch size {batch_size}", matched.len())));
    }
    if fill.len() + matched.len() != batch_size {
        return Err(Error::Invalid(format!(
            "{} fill + {} matched ids do not make a batch of {batch_size}",
            fill.len(),
            matched.len()
        )));
    }
    let mut ids: Vec<usize> = fill.iter().chain(matched).copied().collect();
    rng.shuffle(&mut ids);
    Ok(ids)
}

/// One complete BOP batch of natural ids against `target`, scored on `oracle`.
pub fn bop_batch<T: Scalar>(
    oracle: &DifferentiableModel<T>,
    target: &GradientVector<T>,
    dataset: &Dataset<T>,
    batch_size: usize,
    spec: &MatchSpec,
    rng: &mut StreamRng,
) -> Result<(Vec<usize>, MatchResult)> {
    let v = spec.matched_slots(batch_size)?;
    let fill = rng.sample_distinct(dataset.len(), batch_size - v);
    let m = find_matching_batch(oracle, target, dataset, v, spec, rng)?;
    Ok((compose_bop_batch(&fill, &m.ids, batch_size, rng)?, m))
}

/// Which batches are delivered at the injection points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BobArm {
    /// Random natural batches: the no-attack baseline.
    RandomNatural,
    /// Gradient matching against the source model.
    Whitebox,
    /// Gradient matching against a co-trained surrogate.
    Blackbox,
    /// The triggered examples themselves: an upper bound, not a clean attack.
    TriggerPerturbation,
}

impl BobArm {
    pub const ALL: [BobArm; 4] =
        [BobArm::RandomNatural, BobArm::Whitebox, BobArm::Blackbox, BobArm::TriggerPerturbation];

    pub fn as_str(&self) -> &'static str {
        match self {
            BobArm::RandomNatural => "random_natural",
            BobArm::Whitebox => "whitebox",
            BobArm::Blackbox => "blackbox",
            BobArm::TriggerPerturbation => "trigger_perturbation",
        }
    }
}

/// Benign warm-up, then epochs with interleaved attack batches, then a run
/// of attack batches that replace natural data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BobSchedule {
    pub pretrain_epochs: usize,
    pub attack_epochs: usize,
    pub injections_per_epoch: usize,
    pub final_batches: usize,
}

impl BobSchedule {
    pub fn total_injections(&self) -> usize {
        self.attack_epochs * self.injections_per_epoch + self.final_batches
    }
}

pub struct BobSetup<T: Scalar> {
    pub train: Arc<Dataset<T>>,
    pub test: Arc<Dataset<T>>,
    pub batch_size: usize,
    pub order_seed: u64,
    pub trigger: TriggerPattern,
    pub schedule: BobSchedule,
    pub matching: MatchSpec,
    /// Co-trained on everything delivered; required for the blackbox arm.
    pub surrogate: Option<Trainer<T>>,
    pub run_id: String,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BobOutcome {
    pub log: MetricsLog,
    /// Ids of every attack batch delivered, in order.
    pub injected: Vec<Vec<usize>>,
    pub match_distances: Vec<f64>,
    pub final_trigger: TriggerStats,
    pub final_test_accuracy: f64,
}

struct BobRun<'a, T: Scalar> {
    setup: &'a mut BobSetup<T>,
    arm: BobArm,
    rng: StreamRng,
    eligible: Vec<usize>,
    injected: Vec<Vec<usize>>,
    distances: Vec<f64>,
}

impl<T: Scalar> BobRun<'_, T> {
    fn deliver(&mut self, source: &mut Trainer<T>, batch: &Batch<T>) -> Result<()> {
        source.train_batch(batch)?;
        if let Some(s) = self.setup.surrogate.as_mut() {
            s.train_batch(batch)?;
        }
        Ok(())
    }

    fn attack_batch(&mut self, source: &Trainer<T>) -> Result<Batch<T>> {
        let b = self.setup.batch_size;
        let train = self.setup.train.clone();
        let ids = match self.arm {
            BobArm::RandomNatural => self.rng.sample_distinct(train.len(), b),
            BobArm::TriggerPerturbation => {
                let v = self.setup.matching.matched_slots(b)?;
                let fill = self.rng.sample_distinct(train.len(), b - v);
                let poisoned: Vec<usize> =
                    self.rng.sample_distinct(self.eligible.len(), v).into_iter().map(|i| self.eligible[i]).collect();
                let natural = materialize(&train, &fill, None)?;
                let bad = triggered_batch(&train, &poisoned, &self.setup.trigger)?;
                self.injected.push(fill.iter().chain(&poisoned).copied().collect());
                return concat(natural, bad);
            }
            BobArm::Whitebox | BobArm::Blackbox => {
                let adv_ids: Vec<usize> =
                    self.rng.sample_distinct(self.eligible.len(), b).into_iter().map(|i| self.eligible[i]).collect();
                let objective = PoisonObjective {
                    adversarial: triggered_batch(&train, &adv_ids, &self.setup.trigger)?,
                    matching: self.setup.matching,
                };
                let oracle = match self.arm {
                    BobArm::Whitebox => source.model(),
                    _ => self
                        .setup
                        .surrogate
                        .as_ref()
                        .ok_or_else(|| Error::Invalid("blackbox arm needs a surrogate".into()))?
                        .model(),
                };
                let target = poison_gradient(oracle, &objective)?;
                let (ids, m) = bop_batch(oracle, &target, &train, b, &objective.matching, &mut self.rng)?;
                self.distances.push(m.distance);
                ids
            }
        };
        self.injected.push(ids.clone());
        materialize(&train, &ids, None)
    }

    fn log_epoch(&self, log: &mut MetricsLog, model: &DifferentiableModel<T>, epoch: usize) -> Result<TriggerStats> {
        let ts = trigger_metrics(model, &self.setup.test, &self.setup.trigger)?;
        for (split, data) in [(Split::Train, &self.setup.train), (Split::Test, &self.setup.test)] {
            let s = evaluate(model, data)?;
            log.push(self.row(epoch, split, Some(s.loss), s.accuracy, None))?;
        }
        log.push(self.row(epoch, Split::Trigger, None, None, Some(ts)))?;
        Ok(ts)
    }

    fn row(
        &self,
        epoch: usize,
        split: Split,
        loss: Option<f64>,
        accuracy: Option<f64>,
        ts: Option<TriggerStats>,
    ) -> MetricsRow {
        MetricsRow {
            run_id: self.setup.run_id.clone(),
            epoch,
            split,
            loss,
            accuracy,
            trigger_accuracy: ts.map(|t| t.trigger_accuracy),
            error_with_trigger: ts.map(|t| t.error_with_trigger),
            epoch_mean_bias_term: None,
            policy: self.arm.as_str().into(),
            mode: "bob".into(),
            seed: self.setup.seed,
        }
    }
}

fn concat<T: Scalar>(a: Batch<T>, b: Batch<T>) -> Result<Batch<T>> {
    let mut shape = a.inputs.shape().to_vec();
    shape[0] += b.inputs.rows();
    let mut x = a.inputs.into_data();
    x.extend(b.inputs.into_data());
    let mut y = a.targets.into_data();
    y.extend(b.targets.into_data());
    let mut ids = a.ids;
    ids.extend(b.ids);
    Ok(Batch { inputs: Tensor::from_parts(shape, x)?, targets: Tensor::vector(y), ids })
}

/// Positions (batch indices) at which `k` injections are spread over an
/// epoch of `n` natural batches.
fn injection_points(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| (j + 1) * n / (k + 1)).collect()
}

/// Trains `source` under the BOB schedule with the given arm. One metrics
/// triple (train, test, trigger) is logged per epoch; the final attack run is
/// logged as the epoch after the last attack epoch.
pub fn run_bob<T: Scalar>(source: &mut Trainer<T>, mut setup: BobSetup<T>, arm: BobArm) -> Result<BobOutcome> {
    setup.trigger.validate()?;
    if setup.schedule.total_injections() == 0 {
        return Err(Error::Invalid("BOB schedule injects no batches".into()));
    }
    if arm == BobArm::Blackbox && setup.surrogate.is_none() {
        return Err(Error::Invalid("blackbox arm needs a surrogate".into()));
    }
    if arm != BobArm::Blackbox {
        setup.surrogate = None;
    }
    let eligible = eligible_ids(&setup.train, setup.trigger.target_class)?;
    let mut benign = ShuffledSource::new(setup.train.clone(), setup.batch_size, setup.order_seed)?;
    let schedule = setup.schedule;
    let rng = StreamRng::for_stream(setup.seed, Stream::Attack);
    let mut run = BobRun { setup: &mut setup, arm, rng, eligible, injected: Vec::new(), distances: Vec::new() };
    let mut log = MetricsLog::new();

    let epochs = schedule.pretrain_epochs + schedule.attack_epochs;
    for epoch in 1..=epochs {
        let attacking = epoch > schedule.pretrain_epochs;
        benign.reset(epoch)?;
        let n_batches = benign.plan().map_or(0, |p| p.len());
        let points = if attacking { injection_points(n_batches, schedule.injections_per_epoch) } else { Vec::new() };
        let mut index = 0;
        while let Some(batch) = benign.next_batch()? {
            for _ in points.iter().filter(|&&p| p == index) {
                let bad = run.attack_batch(source)?;
                run.deliver(source, &bad)?;
            }
            run.deliver(source, &batch)?;
            index += 1;
        }
        run.log_epoch(&mut log, source.model(), epoch)?;
    }
    let mut final_trigger = trigger_metrics(source.model(), &run.setup.test, &run.setup.trigger)?;
    if schedule.final_batches > 0 {
        for _ in 0..schedule.final_batches {
            let bad = run.attack_batch(source)?;
            run.deliver(source, &bad)?;
        }
        final_trigger = run.log_epoch(&mut log, source.model(), epochs + 1)?;
    }
    let final_test_accuracy = evaluate(source.model(), &run.setup.test)?.accuracy.unwrap_or(0.0);
    Ok(BobOutcome { log, injected: run.injected, match_distances: run.distances, final_trigger, final_test_accuracy })
}

/// One BOP step as seen from the poisoned point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BopStep {
    pub batches: usize,
    pub predicted: usize,
    pub target_logit: f64,
    pub distance: f64,
}

pub struct BopSetup<T: Scalar> {
    pub train: Arc<Dataset<T>>,
    pub test: Arc<Dataset<T>>,
    pub batch_size: usize,
    pub order_seed: u64,
    pub pretrain_epochs: usize,
    /// The point to poison and the label it should receive.
    pub target_input: Vec<T>,
    pub target_label: usize,
    pub max_batches: usize,
    pub matching: MatchSpec,
    pub run_id: String,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct BopOutcome {
    pub log: MetricsLog,
    /// BOP batches delivered before the prediction flipped; `None` if it
    /// never did within the budget.
    pub flipped_after: Option<usize>,
    pub trajectory: Vec<BopStep>,
    pub injected: Vec<Vec<usize>>,
    pub test_accuracy_before: f64,
    pub test_accuracy_after: f64,
}

fn probe<T: Scalar>(model: &DifferentiableModel<T>, x: &Tensor<T>, label: usize) -> Result<(usize, f64)> {
    let z = model.outputs(x)?;
    Ok((crate::model::argmax(z.row(0)), z.row(0)[label].as_f64()))
}

/// Benign pre-training, then consecutive BOP batches that imitate the
/// gradient of (target input, target label) until the prediction flips.
pub fn run_bop_single_point<T: Scalar>(source: &mut Trainer<T>, setup: BopSetup<T>) -> Result<BopOutcome> {
    let mut shape = vec![1];
    shape.extend_from_slice(setup.train.feature_shape());
    let x = Tensor::from_parts(shape, setup.target_input.clone())?;
    let y = Tensor::vector(vec![T::of(setup.target_label as f64)]);
    let adversarial = Batch { inputs: x.clone(), targets: y, ids: vec![] };
    let objective = PoisonObjective { adversarial, matching: setup.matching };

    let mut benign = ShuffledSource::new(setup.train.clone(), setup.batch_size, setup.order_seed)?;
    let mut log = MetricsLog::new();
    let row = |epoch: usize, split: Split, s: crate::train::EvalStats| MetricsRow {
        run_id: setup.run_id.clone(),
        epoch,
        split,
        loss: Some(s.loss),
        accuracy: s.accuracy,
        trigger_accuracy: None,
        error_with_trigger: None,
        epoch_mean_bias_term: None,
        policy: "single_point".into(),
        mode: "bop".into(),
        seed: setup.seed,
    };
    for epoch in 1..=setup.pretrain_epochs {
        source.train_epoch(&mut benign, epoch)?;
        log.push(row(epoch, Split::Train, evaluate(source.model(), &setup.train)?))?;
        log.push(row(epoch, Split::Test, evaluate(source.model(), &setup.test)?))?;
    }
    let test_accuracy_before = evaluate(source.model(), &setup.test)?.accuracy.unwrap_or(0.0);

    let mut rng = StreamRng::for_stream(setup.seed, Stream::Attack);
    let mut trajectory = Vec::new();
    let mut injected = Vec::new();
    let mut flipped_after = None;
    let (p, z) = probe(source.model(), &x, setup.target_label)?;
    trajectory.push(BopStep { batches: 0, predicted: p, target_logit: z, distance: 0.0 });
    if p == setup.target_label {
        flipped_after = Some(0);
    }
    while flipped_after.is_none() && injected.len() < setup.max_batches {
        let target = poison_gradient(source.model(), &objective)?;
        let (ids, m) = bop_batch(source.model(), &target, &setup.train, setup.batch_size, &setup.matching, &mut rng)?;
        source.train_batch(&materialize(&setup.train, &ids, None)?)?;
        injected.push(ids);
        let (p, z) = probe(source.model(), &x, setup.target_label)?;
        trajectory.push(BopStep { batches: injected.len(), predicted: p, target_logit: z, distance: m.distance });
        if p == setup.target_label {
            flipped_after = Some(injected.len());
        }
    }
    let after_epoch = setup.pretrain_epochs + 1;
    let test_after = evaluate(source.model(), &setup.test)?;
    log.push(row(after_epoch, Split::Train, evaluate(source.model(), &setup.train)?))?;
    log.push(row(after_epoch, Split::Test, test_after))?;
    Ok(BopOutcome {
        log,
        flipped_after,
        trajectory,
        injected,
        test_accuracy_before,
        test_accuracy_after: test_after.accuracy.unwrap_or(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Architecture;

    #[test]
    fn white_lines_geometry() {
        let t = TriggerPattern::white_lines(28, 0);
        assert_eq!(t.covered(), 236);
        assert!(t.mask[..8 * 28 + 12].iter().all(|&m| m));
        assert!(!t.mask[8 * 28 + 12]);
        t.validate().unwrap();
        let img = vec![0.0f64; 784];
        let out = apply_trigger(&img, &t).unwrap();
        assert!(out[..224].iter().all(|&v| v == 1.0));
        assert_eq!(apply_trigger(&out, &t).unwrap(), out);
    }

    #[test]
    fn flag_like_coverage() {
        let t = TriggerPattern::flag_like(28, 3);
        assert_eq!(t.covered(), 236);
        assert!(t.mask[4 * 28..5 * 28].iter().all(|&m| m));
        assert!(t.mask[783]);
        t.validate().unwrap();
    }

    #[test]
    fn empty_mask_is_identity_but_invalid() {
        let img: Vec<f64> = (0..16).map(|i| i as f64 / 16.0).collect();
        let t = TriggerPattern {
            kind: TriggerKind::CustomMask,
            side: 4,
            mask: vec![false; 16],
            overlay: vec![1.0; 16],
            target_class: 0,
        };
        assert_eq!(apply_trigger(&img, &t).unwrap(), img);
        assert!(t.validate().is_err());
        assert!(matches!(apply_trigger(&img[..15], &t), Err(Error::Dimension(_))));
    }

    #[test]
    fn ppm_header_and_size() {
        let t = TriggerPattern::white_lines(28, 0);
        let ppm = t.to_ppm();
        assert!(ppm.starts_with(b"P6\n28 28\n255\n"));
        assert_eq!(ppm.len(), "P6\n28 28\n255\n".len() + 3 * 784);
    }

    #[test]
    fn compose_counts() {
        let mut rng = StreamRng::new(1, 1);
        let spec = MatchSpec::default();
        assert_eq!(spec.matched_slots(32).unwrap(), 22);
        let fill: Vec<usize> = (0..10).collect();
        let matched: Vec<usize> = (100..122).collect();
        let mut b = compose_bop_batch(&fill, &matched, 32, &mut rng).unwrap();
        b.sort_unstable();
        let mut expect = fill.clone();
        expect.extend(&matched);
        assert_eq!(b, expect);
        assert!(compose_bop_batch(&fill, &(0..40).collect::<Vec<_>>(), 32, &mut rng).is_err());
        let zero = MatchSpec { v_fraction: 0.0, ..spec };
        assert_eq!(zero.matched_slots(32).unwrap(), 0);
        let all = MatchSpec { v_fraction: 1.0, ..spec };
        assert_eq!(all.matched_slots(32).unwrap(), 32);
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(stable_argmin(&[3.0, 1.0, 1.0, 2.0]), Some(1));
        assert_eq!(stable_argmin(&[]), None);
    }

    #[test]
    fn trigger_metrics_extremes() {
        let x = Tensor::from_parts(vec![4, 2, 2], vec![0.0; 16]).unwrap();
        let test = Dataset::new(x, Tensor::vector(vec![0.0, 1.0, 1.0, 0.0]), Some(2)).unwrap();
        let t = TriggerPattern::custom(2, vec![true, false, false, false], vec![1.0; 4], 1).unwrap();
        // Logistic model biased hard towards class 1.
        let arch = Architecture::Logreg { inputs: 4, classes: 2 };
        let mut p = vec![0.0; 10];
        p[9] = 5.0;
        let always_one = DifferentiableModel::<f64>::from_params(arch, p).unwrap();
        let s = trigger_metrics(&always_one, &test, &t).unwrap();
        assert_eq!((s.trigger_accuracy, s.error_with_trigger, s.eligible), (1.0, 1.0, 2));
        let mut p = vec![0.0; 10];
        p[8] = 5.0;
        let always_zero = DifferentiableModel::<f64>::from_params(arch, p).unwrap();
        let s = trigger_metrics(&always_zero, &test, &t).unwrap();
        assert_eq!((s.trigger_accuracy, s.error_with_trigger), (0.0, 0.0));
    }
}
