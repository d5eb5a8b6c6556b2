//! Seeded experiments, sweeps, CSV output and the acceptance suite.

pub mod config;
pub mod output;
mod run;
pub mod sweep;
pub mod verify;

pub use config::{ExperimentConfig, OfferMode, Settings};
pub use run::{
    run_experiment, run_experiment_with, run_trial, run_trial_with_loads, Execution, Experiment, Stats, Summary,
    TrialRecord,
};
pub use sweep::{sweep, Grid, SweepRow};
pub use verify::{verify, CheckResult, Scale};
