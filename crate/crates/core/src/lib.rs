//! A deterministic stochastic-training laboratory for data-ordering attacks.
//!
//! The crate trains small models with SGD-family optimizers while an
//! attacker controls nothing but the order (and, for replacement attacks,
//! the multiset) of the natural training examples. It contains:
//!
//! * [`tensor`], [`model`], [`optim`]: dense tensors, a fixed model zoo with
//!   hand-written backward passes, and the optimizers under attack;
//! * [`data`]: datasets, [`data::BatchPlan`]s and the [`data::BatchSource`]
//!   interception point;
//! * [`attack`]: loss-ranked reorder/reshuffle/replace attacks and
//!   gradient-matching batch-order poisoning and backdoors;
//! * [`theory`]: numerical checks of the order-dependent SGD term, order
//!   statistic constants, the biased convergence bound and sample-size bounds;
//! * [`harness`]: config-driven experiments, sweeps and CSV metrics.
//!
//! Numerics are generic over [`Scalar`] (`f32` or `f64`); experiments run in
//! `f64` through the aliases below.

pub mod attack;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type GradientVector = tensor::GradientVector<f64>;
pub type Model = model::DifferentiableModel<f64>;
pub type Dataset = data::Dataset<f64>;
pub type Trainer = train::Trainer<f64>;
pub type OptimizerState = optim::OptimizerState<f64>;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Model32 = model::DifferentiableModel<f32>;
