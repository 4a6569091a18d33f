//! Datasets, batch plans and the batch-source interception point.

pub mod idx;
mod plan;
mod source;
pub mod synth;

pub use idx::{load_idx, load_or_generate_digits, read_idx, write_idx_images, write_idx_labels, IdxArray};
pub use plan::{random_plan, BatchPlan};
pub use source::{materialize, Augment, AugmentMode, Batch, BatchSource, PlanSource, ShuffledSource};
pub use synth::{generate_blobs, generate_digits, generate_linreg_data, generate_linreg_data_with_noise};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Inputs, targets and stable ids of a training or test set.
///
/// `ids` is always `0..n`; attacks address examples only through it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T: Scalar> {
    inputs: Tensor<T>,
    targets: Tensor<T>,
    ids: Vec<usize>,
    classes: Option<usize>,
}

impl<T: Scalar> Dataset<T> {
    /// `classes` is `None` for regression targets.
    pub fn new(inputs: Tensor<T>, targets: Tensor<T>, classes: Option<usize>) -> Result<Self> {
        let n = inputs.rows();
        if n == 0 {
            return Err(Error::Empty("dataset has no examples".into()));
        }
        if targets.len() != n {
            return Err(Error::Dimension(format!("{n} inputs but {} targets", targets.len())));
        }
        if let Some(k) = classes {
            if k < 2 {
                return Err(Error::Invalid("a labelled dataset needs at least two classes".into()));
            }
            if let Some(bad) =
                targets.data().iter().find(|t| !(t.fract() == T::zero() && **t >= T::zero() && t.as_f64() < k as f64))
            {
                return Err(Error::Invalid(format!("label {bad} outside 0..{k}")));
            }
        }
        Ok(Self { inputs, targets, ids: (0..n).collect(), classes })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn inputs(&self) -> &Tensor<T> {
        &self.inputs
    }

    pub fn targets(&self) -> &Tensor<T> {
        &self.targets
    }

    pub fn classes(&self) -> Option<usize> {
        self.classes
    }

    /// Per-example shape, e.g. `[28, 28]`.
    pub fn feature_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn example(&self, id: usize) -> &[T] {
        self.inputs.row(id)
    }

    pub fn target(&self, id: usize) -> T {
        self.targets.data()[id]
    }

    /// Class label of `id`; errors for regression datasets.
    pub fn label(&self, id: usize) -> Result<usize> {
        if self.classes.is_none() {
            return Err(Error::Invalid("dataset is unlabelled".into()));
        }
        Ok(self.targets.data()[id].to_usize().expect("validated label"))
    }

    pub fn labels(&self) -> Result<Vec<usize>> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }

    /// Inputs and targets for the given ids, in order, repeats allowed.
    pub fn gather(&self, ids: &[usize]) -> Result<(Tensor<T>, Tensor<T>)> {
        Ok((self.inputs.select_rows(ids)?, self.targets.select_rows(ids)?))
    }

    /// A new dataset made of the given rows (ids are renumbered).
    pub fn subset(&self, ids: &[usize]) -> Result<Self> {
        let (x, y) = self.gather(ids)?;
        Self::new(x, y, self.classes)
    }

    /// Splits into the first `n_first` examples and the rest.
    pub fn split_at(&self, n_first: usize) -> Result<(Self, Self)> {
        let first: Vec<usize> = (0..n_first).collect();
        let rest: Vec<usize> = (n_first..self.len()).collect();
        Ok((self.subset(&first)?, self.subset(&rest)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_misaligned() {
        let x = Tensor::<f64>::zeros(vec![0, 2]);
        assert!(matches!(Dataset::new(x, Tensor::vector(vec![]), Some(2)), Err(Error::Empty(_))));
        let x = Tensor::<f64>::zeros(vec![3, 2]);
        assert!(matches!(Dataset::new(x.clone(), Tensor::vector(vec![0.0]), Some(2)), Err(Error::Dimension(_))));
        assert!(Dataset::new(x, Tensor::vector(vec![0.0, 1.0, 2.0]), Some(2)).is_err());
    }

    #[test]
    fn gather_keeps_alignment() {
        let x = Tensor::matrix(3, 1, vec![10.0, 11.0, 12.0]).unwrap();
        let d = Dataset::new(x, Tensor::vector(vec![0.0, 1.0, 0.0]), Some(2)).unwrap();
        let (bx, by) = d.gather(&[2, 0, 2]).unwrap();
        assert_eq!(bx.data(), &[12.0, 10.0, 12.0]);
        assert_eq!(by.data(), &[0.0, 0.0, 0.0]);
        assert_eq!(d.ids(), &[0, 1, 2]);
    }
}
