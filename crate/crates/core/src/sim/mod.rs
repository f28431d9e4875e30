//! Experiment harness: the windowed driver, synthetic data, metrics and the
//! shortest-path oracle.

pub mod experiment;
pub mod metrics;
pub mod oracle;
pub mod synth;

pub use experiment::{
    run_scenario, Experiment, LabelCounts, LeakThreshold, OperatorMode, RunMetadata, RunReport, RunSettings,
    RunSummary, Scenario, SimError, WindowError, WindowOutput, WindowResult,
};
pub use metrics::{prediction_score, qopt_delta, PredictionScore, QoptDelta};
pub use oracle::dijkstra_oracle;
pub use synth::{generate_synthetic_leaks, synthetic_districts, GenError, LeakGenConfig};
