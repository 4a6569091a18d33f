use std::path::PathBuf;

use crate::attack::{run_bob, run_bop_single_point, run_brrr, BobOutcome, BobSetup, BopOutcome, BopSetup, BrrrSetup};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsLog;
use crate::model::DifferentiableModel;
use crate::optim::OptimizerSpec;
use crate::rng::{Stream, StreamRng};
use crate::scalar::Scalar;
use crate::train::Trainer;

use super::config::{ExperimentConfig, Precision};

fn source_trainer<T: Scalar>(cfg: &ExperimentConfig) -> Result<Trainer<T>> {
    let model = DifferentiableModel::init(cfg.model, &mut StreamRng::for_stream(cfg.seed, Stream::Init))?;
    Ok(Trainer::new(model, cfg.optimizer))
}

fn surrogate_trainer<T: Scalar>(cfg: &ExperimentConfig) -> Result<Option<Trainer<T>>> {
    let Some(arch) = cfg.surrogate else { return Ok(None) };
    let model = DifferentiableModel::init(arch, &mut StreamRng::for_stream(cfg.seed, Stream::SurrogateInit))?;
    let opt = cfg.surrogate_optimizer.unwrap_or(OptimizerSpec::adam(0.001));
    Ok(Some(Trainer::new(model, opt)))
}

fn brrr<T: Scalar>(cfg: &ExperimentConfig) -> Result<MetricsLog> {
    let (train, test) = cfg.dataset.build::<T>(cfg.seed)?;
    let mut source = source_trainer::<T>(cfg)?;
    let setup = BrrrSetup {
        train,
        test,
        batch_size: cfg.batch_size,
        order_seed: cfg.seed,
        augment: cfg.augment,
        surrogate: surrogate_trainer(cfg)?,
        track_bias: cfg.track_bias,
        run_id: cfg.run_id(),
        seed: cfg.seed,
    };
    run_brrr(&mut source, setup, cfg.attack.as_ref(), cfg.epochs)
}

/// Runs the baseline or BRRR arm described by `cfg` and, when `out_dir` is
/// set, writes `<out_dir>/<run_id>.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricsLog> {
    cfg.validate()?;
    if cfg.bob.is_some() || cfg.bop.is_some() {
        return Err(Error::Validation(vec!["attack".into()]));
    }
    let log = match cfg.precision {
        Precision::F64 => brrr::<f64>(cfg)?,
        Precision::F32 => brrr::<f32>(cfg)?,
    };
    write_log(cfg, &log)?;
    Ok(log)
}

/// Baseline and attacked arms of the same config, seed-paired.
pub fn run_paired(cfg: &ExperimentConfig) -> Result<(MetricsLog, MetricsLog)> {
    Ok((run_experiment(&cfg.baseline())?, run_experiment(cfg)?))
}

fn write_log(cfg: &ExperimentConfig, log: &MetricsLog) -> Result<Option<PathBuf>> {
    let Some(dir) = &cfg.out_dir else { return Ok(None) };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.csv", cfg.run_id()));
    log.write_csv(&path)?;
    Ok(Some(path))
}

fn bob<T: Scalar>(cfg: &ExperimentConfig) -> Result<BobOutcome> {
    let b = cfg.bob.as_ref().ok_or_else(|| Error::Validation(vec!["bob".into()]))?;
    let (train, test) = cfg.dataset.build::<T>(cfg.seed)?;
    let side = side_of(&train)?;
    let trigger = b.trigger_pattern(side)?;
    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        trigger.write_ppm(&dir.join(format!("trigger-{}.ppm", trigger_name(b.trigger))))?;
    }
    let mut source = source_trainer::<T>(cfg)?;
    let setup = BobSetup {
        train,
        test,
        batch_size: cfg.batch_size,
        order_seed: cfg.seed,
        trigger,
        schedule: b.schedule,
        matching: b.matching,
        surrogate: surrogate_trainer(cfg)?,
        run_id: cfg.run_id(),
        seed: cfg.seed,
    };
    run_bob(&mut source, setup, b.arm)
}

fn trigger_name(kind: crate::attack::TriggerKind) -> &'static str {
    match kind {
        crate::attack::TriggerKind::WhiteLines => "white_lines",
        crate::attack::TriggerKind::FlagLike => "flag_like",
        crate::attack::TriggerKind::CustomMask => "custom",
    }
}

fn side_of<T: Scalar>(d: &Dataset<T>) -> Result<usize> {
    match d.feature_shape() {
        [h, w] if h == w => Ok(*h),
        [n] => {
            let s = (*n as f64).sqrt().round() as usize;
            if s * s == *n {
                Ok(s)
            } else {
                Err(Error::Dimension(format!("{n} features are not a square image")))
            }
        }
        other => Err(Error::Dimension(format!("feature shape {other:?} is not a square image"))),
    }
}

/// Runs the BOB arm of `cfg`; the log is also written under `out_dir`,
/// together with a PPM dump of the trigger.
pub fn run_bob_experiment(cfg: &ExperimentConfig) -> Result<BobOutcome> {
    cfg.validate()?;
    let out = match cfg.precision {
        Precision::F64 => bob::<f64>(cfg)?,
        Precision::F32 => bob::<f32>(cfg)?,
    };
    write_log(cfg, &out.log)?;
    Ok(out)
}

fn bop<T: Scalar>(cfg: &ExperimentConfig) -> Result<BopOutcome> {
    let p = cfg.bop.as_ref().ok_or_else(|| Error::Validation(vec!["bop".into()]))?;
    let (train, test) = cfg.dataset.build::<T>(cfg.seed)?;
    let own = test.label(p.target_index)?;
    let k = test.classes().unwrap_or(2);
    let target_label = p.target_label.unwrap_or((own + 1) % k);
    let mut source = source_trainer::<T>(cfg)?;
    let setup = BopSetup {
        target_input: test.example(p.target_index).to_vec(),
        train,
        test,
        batch_size: cfg.batch_size,
        order_seed: cfg.seed,
        pretrain_epochs: p.pretrain_epochs,
        target_label,
        max_batches: p.max_batches,
        matching: p.matching,
        run_id: cfg.run_id(),
        seed: cfg.seed,
    };
    run_bop_single_point(&mut source, setup)
}

pub fn run_bop_experiment(cfg: &ExperimentConfig) -> Result<BopOutcome> {
    cfg.validate()?;
    let out = match cfg.precision {
        Precision::F64 => bop::<f64>(cfg)?,
        Precision::F32 => bop::<f32>(cfg)?,
    };
    write_log(cfg, &out.log)?;
    Ok(out)
}
