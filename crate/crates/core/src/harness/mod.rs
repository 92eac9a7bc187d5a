//! Monte Carlo experiment engine.

pub mod experiment;
pub mod realization;
pub mod spec;
pub mod stats;

pub use experiment::{
    read_rows, rows_to_csv, run_experiment, run_experiment_unchecked, ExperimentOutput, PointOutput, Row,
};
pub use realization::{build_problem, draw, run_realization, stream_rng, Draw, PointContext, RealizationOutcome};
pub use spec::{BaseParams, DetectorKind, ExperimentSpec, PriorFamily, PriorSpec, Sweep, SweepVar};
pub use stats::{error_decompose, paired_sign_test, sweep_threshold, ErrorCounts, SignTest};
