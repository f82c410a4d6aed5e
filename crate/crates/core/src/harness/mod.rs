//! Degradation operators, metrics, the Taylor landscape diagnostic and the
//! experiment runner.

pub mod degrade;
pub mod experiment;
pub mod landscape;
pub mod metrics;

pub use degrade::{degrade, DegradeContext, DegradeKind, DegradeSpec};
pub use experiment::{run_experiment, ExperimentConfig, Report};
pub use landscape::{taylor_landscape, taylor_landscape_with, LandscapeCurve, QuadraticMode};
pub use metrics::{evaluate, mse, MetricsRow};
