//! Executor sizing for analytical queries.
//!
//! The crate predicts query runtime as a function of allocated executors
//! through small parametric price-performance models (power law with a
//! runtime floor, and Amdahl's law), learns the model parameters from
//! compile-time plan features with a regression forest, picks allocations
//! under slowdown or elbow objectives, and replays allocation policies in a
//! discrete-time skyline simulator.
//!
//! Module map:
//!
//! * [`ppm`]: model families, evaluation and curve fitting.
//! * [`features`]: plan features, workload records and the JSON-lines loader.
//! * [`forest`]: multi-output regression forest and its model file.
//! * [`select`]: error metric, slowdown/elbow selection, core factorization.
//! * [`schedsim`]: critical-path runtime estimator over per-stage task timings.
//! * [`allocsim`]: static / dynamic / rule allocation skyline simulator.
//! * [`evalharness`]: repeated k-fold cross-validation and ablation.
//! * [`synth`]: synthetic workload generator.
//! * [`par`]: sequential or rayon-backed execution of independent work items.

pub mod allocsim;
pub mod evalharness;
pub mod features;
pub mod forest;
pub mod par;
pub mod ppm;
pub mod schedsim;
pub mod select;
pub mod stats;
pub mod synth;

pub use par::Parallelism;
pub use ppm::{AllocationCurve, AmdahlPPM, PowerLawPPM, PpmFamily, PricePerfModel, ResourceKind};

/// Executor grid used for profiling and fitting unless the caller supplies one.
pub const DEFAULT_GRID: [u32; 6] = [1, 3, 8, 16, 32, 48];
