//! SGD, heavy-ball momentum and Adam.
//!
//! Gradients are gradients of the loss and every rule subtracts them; the
//! velocity form is `v ← μv − η·g`, `θ ← θ + v`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{GradientVector, LayoutId};

pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSpec {
    Sgd {
        lr: f64,
    },
    Momentum {
        lr: f64,
        momentum: f64,
    },
    Adam {
        lr: f64,
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
    },
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

impl OptimizerSpec {
    pub fn adam(lr: f64) -> Self {
        OptimizerSpec::Adam { lr, beta1: default_beta1(), beta2: default_beta2() }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerSpec::Sgd { lr } | OptimizerSpec::Momentum { lr, .. } | OptimizerSpec::Adam { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            OptimizerSpec::Sgd { .. } => OptimizerSpec::Sgd { lr },
            OptimizerSpec::Momentum { momentum, .. } => OptimizerSpec::Momentum { lr, momentum },
            OptimizerSpec::Adam { beta1, beta2, .. } => OptimizerSpec::Adam { lr, beta1, beta2 },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerSpec::Sgd { .. } => "sgd",
            OptimizerSpec::Momentum { .. } => "momentum",
            OptimizerSpec::Adam { .. } => "adam",
        }
    }

    /// Returns the names of offending fields.
    pub fn problems(&self, prefix: &str) -> Vec<String> {
        let mut bad = Vec::new();
        let lr = self.lr();
        if !(lr.is_finite() && lr > 0.0) {
            bad.push(format!("{prefix}.lr"));
        }
        match *self {
            OptimizerSpec::Sgd { .. } => {}
            OptimizerSpec::Momentum { momentum, .. } => {
                if !(0.0..1.0).contains(&momentum) {
                    bad.push(format!("{prefix}.momentum"));
                }
            }
            OptimizerSpec::Adam { beta1, beta2, .. } => {
                if !(0.0..1.0).contains(&beta1) {
                    bad.push(format!("{prefix}.beta1"));
                }
                if !(0.0..1.0).contains(&beta2) {
                    bad.push(format!("{prefix}.beta2"));
                }
            }
        }
        bad
    }
}

/// Mutable optimizer state owned by one training loop.
#[derive(Clone, Debug)]
pub struct OptimizerState<T: Scalar> {
    spec: OptimizerSpec,
    layout: LayoutId,
    velocity: Vec<T>,
    first_moment: Vec<T>,
    second_moment: Vec<T>,
    step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(spec: OptimizerSpec, param_count: usize, layout: LayoutId) -> Self {
        let (velocity, first_moment, second_moment) = match spec {
            OptimizerSpec::Sgd { .. } => (Vec::new(), Vec::new(), Vec::new()),
            OptimizerSpec::Momentum { .. } => (vec![T::zero(); param_count], Vec::new(), Vec::new()),
            OptimizerSpec::Adam { .. } => (Vec::new(), vec![T::zero(); param_count], vec![T::zero(); param_count]),
        };
        Self { spec, layout, velocity, first_moment, second_moment, step: 0 }
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn velocity(&self) -> &[T] {
        &self.velocity
    }

    fn check(&self, params: &[T], grad: &GradientVector<T>) -> Result<()> {
        if grad.layout() != self.layout {
            return Err(Error::Layout { expected: self.layout, actual: grad.layout() });
        }
        if grad.len() != params.len() {
            return Err(Error::Dimension(format!(
                "gradient has {} entries for {} parameters",
                grad.len(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Applies the configured rule.
    pub fn step(&mut self, params: &mut [T], grad: &GradientVector<T>) -> Result<()> {
        match self.spec {
            OptimizerSpec::Sgd { .. } => self.sgd_step(params, grad),
            OptimizerSpec::Momentum { .. } => self.momentum_step(params, grad),
            OptimizerSpec::Adam { .. } => self.adam_step(params, grad),
        }
    }

    /// `θ ← θ − η·g`
    pub fn sgd_step(&mut self, params: &mut [T], grad: &GradientVector<T>) -> Result<()> {
        self.check(params, grad)?;
        let lr = T::of(self.spec.lr());
        for (p, &g) in params.iter_mut().zip(grad.values()) {
            *p -= lr * g;
        }
        self.step += 1;
        Ok(())
    }

    /// `v ← μv − η·g; θ ← θ + v`
    pub fn momentum_step(&mut self, params: &mut [T], grad: &GradientVector<T>) -> Result<()> {
        self.check(params, grad)?;
        let mu = match self.spec {
            OptimizerSpec::Momentum { momentum, .. } => T::of(momentum),
            _ => T::zero(),
        };
        if self.velocity.len() != params.len() {
            self.velocity = vec![T::zero(); params.len()];
        }
        let lr = T::of(self.spec.lr());
        for ((p, v), &g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(grad.values()) {
            *v = mu * *v - lr * g;
            *p += *v;
        }
        self.step += 1;
        Ok(())
    }

    /// Bias-corrected Adam with ε = 1e-8.
    pub fn adam_step(&mut self, params: &mut [T], grad: &GradientVector<T>) -> Result<()> {
        self.check(params, grad)?;
        let (beta1, beta2) = match self.spec {
            OptimizerSpec::Adam { beta1, beta2, .. } => (beta1, beta2),
            _ => (default_beta1(), default_beta2()),
        };
        if self.first_moment.len() != params.len() {
            self.first_moment = vec![T::zero(); params.len()];
            self.second_moment = vec![T::zero(); params.len()];
        }
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::of(beta1);
        let b2 = T::of(beta2);
        let c1 = T::one() - T::of(beta1.powi(t));
        let c2 = T::one() - T::of(beta2.powi(t));
        let lr = T::of(self.spec.lr());
        let eps = T::of(ADAM_EPSILON);
        for (i, p) in params.iter_mut().enumerate() {
            let g = grad.values()[i];
            let m = b1 * self.first_moment[i] + (T::one() - b1) * g;
            let v = b2 * self.second_moment[i] + (T::one() - b2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
