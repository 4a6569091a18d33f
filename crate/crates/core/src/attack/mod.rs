//! Data-ordering attacks.
//!
//! [`brrr`] ranks natural examples by (surrogate) loss and reorders,
//! reshuffles or replaces batches. [`bopbob`] picks natural batches whose
//! gradient imitates a poisoned one.

pub mod bopbob;
pub mod brrr;

pub use bopbob::*;
pub use brrr::*;
