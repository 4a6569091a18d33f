use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize};

use crate::attack::{AttackMode, AttackSpec, BobArm, BobSchedule, MatchSpec, TriggerKind, TriggerPattern};
use crate::data::{generate_blobs, generate_digits, generate_linreg_data, load_or_generate_digits, Augment, Dataset};
use crate::error::{Error, Result};
use crate::model::Architecture;
use crate::optim::OptimizerSpec;
use crate::rng::{Stream, StreamRng};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// `y = 2x + 17 + N(0, 1)`; the training set doubles as the test set.
    Linreg {
        n: usize,
    },
    Blobs {
        n_train: usize,
        n_test: usize,
        classes: usize,
        separation: f64,
    },
    /// 28×28 digits. With `dir`, MNIST files there are used if present and
    /// generated digits are cached there otherwise.
    Digits {
        n_train: usize,
        n_test: usize,
        #[serde(default)]
        dir: Option<PathBuf>,
    },
}

impl DatasetSpec {
    fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        match *self {
            DatasetSpec::Linreg { n } => {
                if n < 2 {
                    bad.push("dataset.n".into());
                }
            }
            DatasetSpec::Blobs { n_train, n_test, classes, separation } => {
                if n_train == 0 {
                    bad.push("dataset.n_train".into());
                }
                if n_test == 0 {
                    bad.push("dataset.n_test".into());
                }
                if classes < 2 {
                    bad.push("dataset.classes".into());
                }
                if !(separation.is_finite() && separation > 0.0) {
                    bad.push("dataset.separation".into());
                }
            }
            DatasetSpec::Digits { n_train, n_test, .. } => {
                if n_train == 0 {
                    bad.push("dataset.n_train".into());
                }
                if n_test == 0 {
                    bad.push("dataset.n_test".into());
                }
            }
        }
        bad
    }

    pub fn n_train(&self) -> usize {
        match *self {
            DatasetSpec::Linreg { n } => n,
            DatasetSpec::Blobs { n_train, .. } | DatasetSpec::Digits { n_train, .. } => n_train,
        }
    }

    pub fn n_test(&self) -> usize {
        match *self {
            DatasetSpec::Linreg { n } => n,
            DatasetSpec::Blobs { n_test, .. } | DatasetSpec::Digits { n_test, .. } => n_test,
        }
    }

    pub fn feature_len(&self) -> usize {
        match self {
            DatasetSpec::Linreg { .. } => 1,
            DatasetSpec::Blobs { .. } => 2,
            DatasetSpec::Digits { .. } => 28 * 28,
        }
    }

    pub fn classes(&self) -> Option<usize> {
        match *self {
            DatasetSpec::Linreg { .. } => None,
            DatasetSpec::Blobs { classes, .. } => Some(classes),
            DatasetSpec::Digits { .. } => Some(10),
        }
    }

    /// Train and test sets drawn from the data stream of `seed`.
    pub fn build<T: Scalar>(&self, seed: u64) -> Result<(Arc<Dataset<T>>, Arc<Dataset<T>>)> {
        let mut rng = StreamRng::for_stream(seed, Stream::Data);
        let (train, test) = match self {
            DatasetSpec::Linreg { n } => {
                let d = generate_linreg_data(*n, &mut rng)?;
                (d.clone(), d)
            }
            DatasetSpec::Blobs { n_train, n_test, classes, separation } => {
                generate_blobs(n_train + n_test, *classes, *separation, &mut rng)?.split_at(*n_train)?
            }
            DatasetSpec::Digits { n_train, n_test, dir: Some(dir) } => {
                load_or_generate_digits(dir, *n_train, *n_test, seed)?
            }
            DatasetSpec::Digits { n_train, n_test, dir: None } => {
                generate_digits(n_train + n_test, &mut rng)?.split_at(*n_train)?
            }
        };
        Ok((Arc::new(train), Arc::new(test)))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BobConfig {
    pub arm: BobArm,
    #[serde(default = "default_trigger")]
    pub trigger: TriggerKind,
    #[serde(default)]
    pub target_class: usize,
    pub schedule: BobSchedule,
    #[serde(default)]
    pub matching: MatchSpec,
}

fn default_trigger() -> TriggerKind {
    TriggerKind::WhiteLines
}

impl BobConfig {
    pub fn trigger_pattern(&self, side: usize) -> Result<TriggerPattern> {
        match self.trigger {
            TriggerKind::WhiteLines => Ok(TriggerPattern::white_lines(side, self.target_class)),
            TriggerKind::FlagLike => Ok(TriggerPattern::flag_like(side, self.target_class)),
            TriggerKind::CustomMask => Err(Error::Validation(vec!["bob.trigger".into()])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BopConfig {
    /// Index of the poisoned point in the test set.
    pub target_index: usize,
    /// Defaults to the class after the point's own label.
    #[serde(default)]
    pub target_label: Option<usize>,
    pub pretrain_epochs: usize,
    pub max_batches: usize,
    #[serde(default)]
    pub matching: MatchSpec,
}

/// One experiment: a dataset, a source (and optional surrogate) model, the
/// optimizers, and at most one attack section.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub dataset: DatasetSpec,
    pub model: Architecture,
    #[serde(default)]
    pub surrogate: Option<Architecture>,
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub surrogate_optimizer: Option<OptimizerSpec>,
    /// A BRRR attack, or absent / `"none"` for the baseline.
    #[serde(default, deserialize_with = "attack_or_none")]
    pub attack: Option<AttackSpec>,
    #[serde(default)]
    pub bob: Option<BobConfig>,
    #[serde(default)]
    pub bop: Option<BopConfig>,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub augment: Option<Augment>,
    #[serde(default)]
    pub track_bias: bool,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "run".into()
}

fn attack_or_none<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<AttackSpec>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Field {
        Word(String),
        Spec(AttackSpec),
    }
    match Option::<Field>::deserialize(d)? {
        None => Ok(None),
        Some(Field::Word(w)) if w == "none" => Ok(None),
        Some(Field::Word(w)) => {
            Err(serde::de::Error::custom(format!("attack must be an object or \"none\", got {w:?}")))
        }
        Some(Field::Spec(s)) => Ok(Some(s)),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(vec![format!("json: {e}")]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// All offending keys at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = self.dataset.problems();
        if self.epochs == 0 {
            bad.push("epochs".into());
        }
        if self.batch_size == 0 || self.batch_size > self.dataset.n_train() {
            bad.push("batch_size".into());
        }
        let classes = self.dataset.classes();
        for (key, arch) in [("model", Some(self.model)), ("surrogate", self.surrogate)] {
            let Some(arch) = arch else { continue };
            if arch.validate().is_err() || arch.input_len() != self.dataset.feature_len() || arch.classes() != classes {
                bad.push(key.into());
            }
        }
        bad.extend(self.optimizer.problems("optimizer"));
        if let Some(o) = &self.surrogate_optimizer {
            bad.extend(o.problems("surrogate_optimizer"));
        }
        let sections = [self.attack.is_some(), self.bob.is_some(), self.bop.is_some()];
        if sections.iter().filter(|&&s| s).count() > 1 {
            bad.push("attack".into());
        }
        if let Some(a) = &self.attack {
            if let Err(Error::Validation(keys)) = a.validate() {
                bad.extend(keys);
            }
            if a.needs_surrogate() && self.surrogate.is_none() {
                bad.push("surrogate".into());
            }
            if a.mode == AttackMode::Replace && classes.is_none() {
                bad.push("attack.mode".into());
            }
        }
        if let Some(b) = &self.bob {
            bad.extend(b.matching.problems("bob.matching"));
            if !matches!(self.dataset, DatasetSpec::Digits { .. }) {
                bad.push("bob".into());
            }
            if b.trigger == TriggerKind::CustomMask {
                bad.push("bob.trigger".into());
            }
            if classes.is_some_and(|k| b.target_class >= k) {
                bad.push("bob.target_class".into());
            }
            if b.schedule.total_injections() == 0 {
                bad.push("bob.schedule".into());
            }
            if b.arm == BobArm::Blackbox && self.surrogate.is_none() {
                bad.push("surrogate".into());
            }
        }
        if let Some(p) = &self.bop {
            bad.extend(p.matching.problems("bop.matching"));
            if classes.is_none() {
                bad.push("bop".into());
            }
            if p.target_index >= self.dataset.n_test() {
                bad.push("bop.target_index".into());
            }
            if let (Some(l), Some(k)) = (p.target_label, classes) {
                if l >= k {
                    bad.push("bop.target_label".into());
                }
            }
            if p.max_batches == 0 {
                bad.push("bop.max_batches".into());
            }
        }
        if self.track_bias && self.dataset.n_train() > crate::theory::MAX_TRACE_EXAMPLES {
            bad.push("track_bias".into());
        }
        bad.dedup();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(bad))
        }
    }

    /// Identifier of the arm this config describes.
    pub fn run_id(&self) -> String {
        let arm = if let Some(a) = &self.attack {
            format!("{}-{}", a.mode.as_str(), a.policy.as_str())
        } else if let Some(b) = &self.bob {
            format!("bob-{}", b.arm.as_str())
        } else if self.bop.is_some() {
            "bop".to_string()
        } else {
            "baseline".to_string()
        };
        format!("{}-{arm}-s{}", self.name, self.seed)
    }

    /// The same config with the attack section removed.
    pub fn baseline(&self) -> Self {
        Self { attack: None, bob: None, bop: None, ..self.clone() }
    }
}
