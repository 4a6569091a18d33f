//! The bias term of the SGD convergence bound, traced during training.

use std::sync::Arc;

use crate::data::{Batch, Dataset};
use crate::error::{Error, Result};
use crate::model::DifferentiableModel;
use crate::scalar::Scalar;
use crate::tensor::GradientVector;
use crate::train::StepObserver;

use super::dist::Estimate;

/// Largest dataset whose full gradient is recomputed at every step.
pub const MAX_TRACE_EXAMPLES: usize = 10_000;

/// `⟨∇L̂, ĝ − ∇L̂⟩` for a full gradient and a batch gradient.
pub fn bias_term<T: Scalar>(full: &GradientVector<T>, batch: &GradientVector<T>) -> Result<f64> {
    Ok(full.dot(&batch.sub(full)?)?.as_f64())
}

/// Records `b_k = ⟨∇L̂(θ_k), ĝ_k − ∇L̂(θ_k)⟩` at every optimizer step.
#[derive(Clone, Debug)]
pub struct BiasTrace<T: Scalar> {
    dataset: Arc<Dataset<T>>,
    epoch: usize,
    steps: Vec<(usize, f64)>,
}

impl<T: Scalar> BiasTrace<T> {
    pub fn new(dataset: Arc<Dataset<T>>) -> Result<Self> {
        if dataset.len() > MAX_TRACE_EXAMPLES {
            return Err(Error::Refused(format!(
                "bias tracing needs a full gradient per step; {} examples exceeds the limit of {MAX_TRACE_EXAMPLES}",
                dataset.len()
            )));
        }
        Ok(Self { dataset, epoch: 0, steps: Vec::new() })
    }

    pub fn begin_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    /// `(epoch, b_k)` for every recorded step.
    pub fn steps(&self) -> &[(usize, f64)] {
        &self.steps
    }

    pub fn epoch_values(&self, epoch: usize) -> Vec<f64> {
        self.steps.iter().filter(|s| s.0 == epoch).map(|s| s.1).collect()
    }

    pub fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        let v = self.epoch_values(epoch);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn epoch_estimate(&self, epoch: usize) -> Result<Estimate> {
        Estimate::from_samples(&self.epoch_values(epoch))
    }
}

impl<T: Scalar> StepObserver<T> for BiasTrace<T> {
    fn observe(&mut self, model: &DifferentiableModel<T>, _batch: &Batch<T>, grad: &GradientVector<T>) -> Result<()> {
        let (_, full) = model.loss_and_gradient(self.dataset.inputs(), self.dataset.targets())?;
        self.steps.push((self.epoch, bias_term(&full, grad)?));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_linreg_data;
    use crate::model::Architecture;
    use crate::rng::StreamRng;

    #[test]
    fn full_batch_has_zero_bias() {
        let d: Dataset<f64> = generate_linreg_data(20, &mut StreamRng::new(1, 1)).unwrap();
        let d = Arc::new(d);
        let m = DifferentiableModel::<f64>::from_params(Architecture::Linreg2, vec![0.5, 3.0]).unwrap();
        let mut trace = BiasTrace::new(d.clone()).unwrap();
        trace.begin_epoch(1);
        let (_, g) = m.loss_and_gradient(d.inputs(), d.targets()).unwrap();
        let batch = Batch { inputs: d.inputs().clone(), targets: d.targets().clone(), ids: d.ids().to_vec() };
        trace.observe(&m, &batch, &g).unwrap();
        assert_eq!(trace.epoch_mean(1), Some(0.0));
    }

    #[test]
    fn refuses_large_datasets() {
        let d: Dataset<f64> = generate_linreg_data(MAX_TRACE_EXAMPLES + 1, &mut StreamRng::new(1, 1)).unwrap();
        assert!(matches!(BiasTrace::new(Arc::new(d)), Err(Error::Refused(_))));
    }
}
