//! Joint activity and interference estimation by coordinate descent.

pub mod problem;
pub mod runner;
pub mod steps;

pub use problem::{penalty_from_moments, CellPrior, DetectionProblem, Estimator, Mode};
pub use runner::{
    run_detector, run_detector_observed, threshold, Coord, DetectionResult, Detector, DetectorConfig, DetectorState,
    StepObserver, StepRecord, XInit,
};
pub use steps::{ApTerm, XPenalty};
