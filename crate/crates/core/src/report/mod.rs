//! Error metrics, experiment configuration and artifacts.

mod check;
mod config;
mod experiment;
mod metrics;

pub use check::{
    curl_divergence, parameter_gradient_error, pointwise_violations, random_vector, ritz_energy, ritz_equivalence_gap,
    run_checks, spatial_gradient_error, zero_increment_residual, CheckOutcome,
};
pub use config::{
    preset, preset_names, ExperimentConfig, ExperimentSection, MarchingSection, Method, NetworkSection, PinnSection,
    ProblemSection, TestSection, PRESET_NAMES,
};
pub use experiment::{
    compare_methods, median, read_slice, read_trajectory, run_experiment, run_seed_sweep, slice_points, write_slice,
    write_trajectory, Artifacts, Comparison, ComparisonRow, DerivedSeeds, ExponentInfo, FinalMetrics, LevelReport,
    PinnSummary, RunOutput, RunReport, TrajectoryRecord, SLICE_HEADER, SLICE_NODES, TRAJECTORY_HEADER,
};
pub use metrics::{relative_l2, relative_l2_error, ErrorProbe, TestSet};
