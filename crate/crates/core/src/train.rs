//! Training loop and evaluation.

use crate::data::{Batch, BatchSource, Dataset};
use crate::error::{Error, Result};
use crate::model::{DifferentiableModel, Predictions};
use crate::optim::{OptimizerSpec, OptimizerState};
use crate::scalar::Scalar;
use crate::tensor::GradientVector;

/// Observes each optimizer step: called with the model *before* the update
/// and the gradient of the delivered batch.
pub trait StepObserver<T: Scalar> {
    fn observe(&mut self, model: &DifferentiableModel<T>, batch: &Batch<T>, grad: &GradientVector<T>) -> Result<()>;
}

impl<T: Scalar> StepObserver<T> for () {
    fn observe(&mut self, _: &DifferentiableModel<T>, _: &Batch<T>, _: &GradientVector<T>) -> Result<()> {
        Ok(())
    }
}

/// A model and the optimizer that owns its updates.
#[derive(Clone, Debug)]
pub struct Trainer<T: Scalar> {
    model: DifferentiableModel<T>,
    optimizer: OptimizerState<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochSummary {
    pub steps: usize,
    /// Mean of per-batch mean losses seen during the epoch.
    pub mean_batch_loss: f64,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: DifferentiableModel<T>, spec: OptimizerSpec) -> Self {
        let optimizer = OptimizerState::new(spec, model.param_count(), model.layout());
        Self { model, optimizer }
    }

    pub fn model(&self) -> &DifferentiableModel<T> {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut DifferentiableModel<T> {
        &mut self.model
    }

    pub fn optimizer(&self) -> &OptimizerState<T> {
        &self.optimizer
    }

    /// One optimizer step on a batch; returns the batch's mean loss.
    pub fn train_batch(&mut self, batch: &Batch<T>) -> Result<T> {
        self.train_batch_observed(batch, &mut ())
    }

    pub fn train_batch_observed(&mut self, batch: &Batch<T>, observer: &mut dyn StepObserver<T>) -> Result<T> {
        let (loss, grad) = self.model.loss_and_gradient(&batch.inputs, &batch.targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss diverged to {loss}")));
        }
        observer.observe(&self.model, batch, &grad)?;
        self.optimizer.step(self.model.params_mut(), &grad)?;
        Ok(loss)
    }

    /// Consumes one epoch from `source`.
    pub fn train_epoch(&mut self, source: &mut dyn BatchSource<T>, epoch: usize) -> Result<EpochSummary> {
        self.train_epoch_observed(source, epoch, &mut ())
    }

    pub fn train_epoch_observed(
        &mut self,
        source: &mut dyn BatchSource<T>,
        epoch: usize,
        observer: &mut dyn StepObserver<T>,
    ) -> Result<EpochSummary> {
        source.reset(epoch)?;
        let mut steps = 0;
        let mut total = 0.0;
        while let Some(batch) = source.next_batch()? {
            total += self.train_batch_observed(&batch, observer)?.as_f64();
            steps += 1;
        }
        let mean_batch_loss = if steps == 0 { 0.0 } else { total / steps as f64 };
        Ok(EpochSummary { steps, mean_batch_loss })
    }
}

/// Mean loss and (for classifiers) accuracy over a dataset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalStats {
    pub loss: f64,
    pub accuracy: Option<f64>,
}

pub fn evaluate<T: Scalar>(model: &DifferentiableModel<T>, dataset: &Dataset<T>) -> Result<EvalStats> {
    let report = model.forward_loss(dataset.inputs(), dataset.targets())?;
    let accuracy = match model.predict(dataset.inputs())? {
        Predictions::Classes(pred) => {
            let labels = dataset.labels()?;
            let hits = pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
            Some(hits as f64 / labels.len() as f64)
        }
        Predictions::Values(_) => None,
    };
    Ok(EvalStats { loss: report.mean.as_f64(), accuracy })
}
