//! Experiment configuration, sweeps and arm comparison.
//!
//! An [`ExperimentConfig`] is one JSON document. Baseline and attack arms of
//! a config share the data and initialization streams of its seed; only the
//! ordering differs.

mod compare;
mod config;
mod run;
mod sweep;
mod theory;

pub use compare::{
    average_logs, best_test_loss_epoch, compare_arms, compare_arms_from, pooled_stats, recovery_time, relative_delta,
    BestEpoch, DeltaReport, PooledStats,
};
pub use config::{BobConfig, BopConfig, DatasetSpec, ExperimentConfig, Precision};
pub use run::{run_bob_experiment, run_bop_experiment, run_experiment, run_paired};
pub use sweep::{
    run_sweep, summary_csv, trend, CellResult, SweepAxes, SweepCell, SweepGrid, SweepOutput, Trend, SUMMARY_HEADER,
};
pub use theory::{run_theory, theory_csv, TheoryConfig, TheoryRow, THEORY_HEADER};
