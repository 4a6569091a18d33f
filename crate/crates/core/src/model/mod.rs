//! Fixed desk-scale differentiable models.
//!
//! Each architecture stores its parameters in one flat vector and provides a
//! hand-written per-example forward and backward pass. Batch losses are means
//! over per-example losses, accumulated in batch order.

mod cnn;
mod linreg;
mod logreg;
mod mlp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use crate::scalar::Scalar;
use crate::tensor::{GradientVector, LayoutId, Tensor};

pub use cnn::{CNN_CONV1_CHANNELS, CNN_CONV2_CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Linreg2,
    Logreg,
    Mlp,
    CnnSmall,
}

/// Model architecture together with its input/output dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    /// `y = θ1·x + θ0`, squared error, parameters ordered `(θ1, θ0)`.
    Linreg2,
    Logreg {
        inputs: usize,
        classes: usize,
    },
    /// One tanh hidden layer.
    Mlp {
        inputs: usize,
        hidden: usize,
        classes: usize,
    },
    /// Two 3×3 stride-2 tanh convolutions and a dense softmax head over a
    /// square single-channel image.
    CnnSmall {
        side: usize,
        classes: usize,
    },
}

impl Architecture {
    pub fn kind(&self) -> ModelKind {
        match self {
            Architecture::Linreg2 => ModelKind::Linreg2,
            Architecture::Logreg { .. } => ModelKind::Logreg,
            Architecture::Mlp { .. } => ModelKind::Mlp,
            Architecture::CnnSmall { .. } => ModelKind::CnnSmall,
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Architecture::Linreg2 => 2,
            Architecture::Logreg { inputs, classes } => logreg::param_count(inputs, classes),
            Architecture::Mlp { inputs, hidden, classes } => mlp::param_count(inputs, hidden, classes),
            Architecture::CnnSmall { side, classes } => cnn::param_count(side, classes),
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            Architecture::Linreg2 => 1,
            Architecture::Logreg { inputs, .. } | Architecture::Mlp { inputs, .. } => inputs,
            Architecture::CnnSmall { side, .. } => side * side,
        }
    }

    /// Number of classes, or `None` for regression.
    pub fn classes(&self) -> Option<usize> {
        match *self {
            Architecture::Linreg2 => None,
            Architecture::Logreg { classes, .. }
            | Architecture::Mlp { classes, .. }
            | Architecture::CnnSmall { classes, .. } => Some(classes),
        }
    }

    pub fn layout(&self) -> LayoutId {
        LayoutId::from_description(&format!("{self:?}"))
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Architecture::Linreg2 => true,
            Architecture::Logreg { inputs, classes } => inputs > 0 && classes >= 2,
            Architecture::Mlp { inputs, hidden, classes } => inputs > 0 && hidden > 0 && classes >= 2,
            Architecture::CnnSmall { side, classes } => cnn::valid_side(side) && classes >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("degenerate architecture {self:?}")))
        }
    }
}

/// Per-example losses and their mean.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport<T: Scalar> {
    pub per_example: Vec<T>,
    pub mean: T,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Predictions<T: Scalar> {
    Classes(Vec<usize>),
    Values(Vec<T>),
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A parameter vector bound to an architecture.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferentiableModel<T: Scalar> {
    arch: Architecture,
    params: Vec<T>,
}

impl<T: Scalar> DifferentiableModel<T> {
    /// Uniform fan-in initialization: every weight and bias of a layer with
    /// fan-in `f` is drawn from `U(-1/√f, 1/√f)`.
    pub fn init(arch: Architecture, rng: &mut StreamRng) -> Result<Self> {
        arch.validate()?;
        let mut params = Vec::with_capacity(arch.param_count());
        for (count, fan_in) in layer_fan_ins(&arch) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..count).map(|_| T::of(rng.uniform(-bound, bound))));
        }
        debug_assert_eq!(params.len(), arch.param_count());
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self { params: vec![T::zero(); arch.param_count()], arch })
    }

    pub fn from_params(arch: Architecture, params: Vec<T>) -> Result<Self> {
        arch.validate()?;
        if params.len() != arch.param_count() {
            return Err(Error::Dimension(format!(
                "{arch:?} has {} parameters, got {}",
                arch.param_count(),
                params.len()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn kind(&self) -> ModelKind {
        self.arch.kind()
    }

    pub fn layout(&self) -> LayoutId {
        self.arch.layout()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_batch(&self, inputs: &Tensor<T>, targets: &Tensor<T>) -> Result<usize> {
        let n = inputs.rows();
        if inputs.row_len() != self.arch.input_len() && !(inputs.rank() == 1 && self.arch.input_len() == 1) {
            return Err(Error::Dimension(format!(
                "{:?} expects {} features per example, inputs have shape {:?}",
                self.arch.kind(),
                self.arch.input_len(),
                inputs.shape()
            )));
        }
        if targets.len() != n {
            return Err(Error::Dimension(format!("{n} inputs but {} targets", targets.len())));
        }
        if let Some(k) = self.arch.classes() {
            for &t in targets.data() {
                let ok = t >= T::zero() && t.fract() == T::zero() && t.as_f64() < k as f64;
                if !ok {
                    return Err(Error::Dimension(format!("label {t} outside 0..{k}")));
                }
            }
        }
        Ok(n)
    }

    fn example_len(&self) -> usize {
        self.arch.input_len()
    }

    /// Loss of a single example, accumulating `scale · ∂loss/∂θ` into `grad`
    /// when given.
    fn example(&self, x: &[T], y: T, grad: Option<(&mut [T], T)>) -> T {
        match self.arch {
            Architecture::Linreg2 => linreg::example(&self.params, x[0], y, grad),
            Architecture::Logreg { inputs, classes } => {
                logreg::example(&self.params, inputs, classes, x, label(y), grad)
            }
            Architecture::Mlp { inputs, hidden, classes } => {
                mlp::example(&self.params, inputs, hidden, classes, x, label(y), grad)
            }
            Architecture::CnnSmall { side, classes } => cnn::example(&self.params, side, classes, x, label(y), grad),
        }
    }

    pub fn forward_loss(&self, inputs: &Tensor<T>, targets: &Tensor<T>) -> Result<LossReport<T>> {
        let n = self.check_batch(inputs, targets)?;
        let w = self.example_len();
        let mut per_example = Vec::with_capacity(n);
        let mut sum = T::zero();
        for i in 0..n {
            let l = self.example(&inputs.data()[i * w..(i + 1) * w], targets.data()[i], None);
            sum += l;
            per_example.push(l);
        }
        let mean = if n == 0 { T::zero() } else { sum / T::of(n as f64) };
        Ok(LossReport { per_example, mean })
    }

    /// Gradient of the mean batch loss.
    pub fn backward(&self, inputs: &Tensor<T>, targets: &Tensor<T>) -> Result<GradientVector<T>> {
        Ok(self.loss_and_gradient(inputs, targets)?.1)
    }

    /// Mean loss and its gradient in one pass.
    pub fn loss_and_gradient(&self, inputs: &Tensor<T>, targets: &Tensor<T>) -> Result<(T, GradientVector<T>)> {
        let n = self.check_batch(inputs, targets)?;
        if n == 0 {
            return Err(Error::Empty("backward on an empty batch".into()));
        }
        let w = self.example_len();
        let scale = T::one() / T::of(n as f64);
        let mut grad = vec![T::zero(); self.params.len()];
        let mut sum = T::zero();
        for i in 0..n {
            sum += self.example(&inputs.data()[i * w..(i + 1) * w], targets.data()[i], Some((&mut grad, scale)));
        }
        Ok((sum * scale, GradientVector::new(grad, self.layout())))
    }

    /// Raw outputs: logits `[n, classes]` for classifiers, `[n]` for regression.
    pub fn outputs(&self, inputs: &Tensor<T>) -> Result<Tensor<T>> {
        let n = inputs.rows();
        let w = self.example_len();
        if inputs.len() != n * w {
            return Err(Error::Dimension(format!(
                "inputs of shape {:?} do not carry {w} features per row",
                inputs.shape()
            )));
        }
        match self.arch {
            Architecture::Linreg2 => {
                let out = (0..n).map(|i| linreg::predict(&self.params, inputs.data()[i])).collect();
                Ok(Tensor::vector(out))
            }
            arch => {
                let k = arch.classes().unwrap_or(1);
                let mut out = vec![T::zero(); n * k];
                for i in 0..n {
                    let x = &inputs.data()[i * w..(i + 1) * w];
                    let z = &mut out[i * k..(i + 1) * k];
                    match arch {
                        Architecture::Logreg { inputs, classes } => logreg::logits(&self.params, inputs, classes, x, z),
                        Architecture::Mlp { inputs, hidden, classes } => {
                            mlp::logits(&self.params, inputs, hidden, classes, x, z)
                        }
                        Architecture::CnnSmall { side, classes } => cnn::logits(&self.params, side, classes, x, z),
                        Architecture::Linreg2 => unreachable!(),
                    }
                }
                Tensor::matrix(n, k, out)
            }
        }
    }

    pub fn predict(&self, inputs: &Tensor<T>) -> Result<Predictions<T>> {
        let out = self.outputs(inputs)?;
        match self.arch.classes() {
            None => Ok(Predictions::Values(out.into_data())),
            Some(_) => Ok(Predictions::Classes((0..out.rows()).map(|i| argmax(out.row(i))).collect())),
        }
    }

    /// Predicted classes; errors for regression models.
    pub fn predict_classes(&self, inputs: &Tensor<T>) -> Result<Vec<usize>> {
        match self.predict(inputs)? {
            Predictions::Classes(c) => Ok(c),
            Predictions::Values(_) => Err(Error::Invalid("regression model has no class predictions".into())),
        }
    }
}

fn label<T: Scalar>(y: T) -> usize {
    y.to_usize().expect("labels validated as non-negative integers")
}

fn layer_fan_ins(arch: &Architecture) -> Vec<(usize, usize)> {
    match *arch {
        Architecture::Linreg2 => vec![(2, 1)],
        Architecture::Logreg { inputs, classes } => vec![(classes * inputs + classes, inputs)],
        Architecture::Mlp { inputs, hidden, classes } => {
            vec![(hidden * inputs + hidden, inputs), (classes * hidden + classes, hidden)]
        }
        Architecture::CnnSmall { side, classes } => {
            let s2 = cnn::conv2_side(side);
            let c1 = CNN_CONV1_CHANNELS;
            let c2 = CNN_CONV2_CHANNELS;
            vec![(c1 * 9 + c1, 9), (c2 * c1 * 9 + c2, c1 * 9), (classes * c2 * s2 * s2 + classes, c2 * s2 * s2)]
        }
    }
}

/// Source model and the smaller surrogate a blackbox attacker co-trains.
#[derive(Clone, Debug)]
pub struct ModelPair<T: Scalar> {
    source: DifferentiableModel<T>,
    surrogate: DifferentiableModel<T>,
}

impl<T: Scalar> ModelPair<T> {
    pub fn new(source: DifferentiableModel<T>, surrogate: DifferentiableModel<T>) -> Result<Self> {
        if surrogate.param_count() >= source.param_count() {
            return Err(Error::Invalid(format!(
                "surrogate must be smaller than source ({} >= {} parameters)",
                surrogate.param_count(),
                source.param_count()
            )));
        }
        Ok(Self { source, surrogate })
    }

    pub fn source(&self) -> &DifferentiableModel<T> {
        &self.source
    }

    pub fn surrogate(&self) -> &DifferentiableModel<T> {
        &self.surrogate
    }

    pub fn into_parts(self) -> (DifferentiableModel<T>, DifferentiableModel<T>) {
        (self.source, self.surrogate)
    }
}

/// Numerically stable softmax cross-entropy on logits `z`. Writes
/// `softmax(z) - onehot(y)` into `dz` and returns the loss.
pub(crate) fn softmax_xent<T: Scalar>(z: &[T], y: usize, dz: &mut [T]) -> T {
    let zmax = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let mut sum = T::zero();
    for (d, &v) in dz.iter_mut().zip(z) {
        *d = (v - zmax).exp();
        sum += *d;
    }
    for d in dz.iter_mut() {
        *d /= sum;
    }
    dz[y] -= T::one();
    sum.ln() + zmax - z[y]
}
