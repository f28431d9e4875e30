//! Batch execution of a configured scenario.

use std::path::{Path, PathBuf};
use std::time::Instant;

use pqroute_core::learner::LearnerSnapshot;
use pqroute_core::sim::{Experiment, OperatorMode, RunReport, RunSummary, Scenario, SimError};

use crate::config::{ConfigError, Overrides, ScenarioConfig};
use crate::formats::{self, FormatError, TimingDoc};

/// A config with its inputs loaded and validated.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub config: ScenarioConfig,
    pub scenario: Scenario,
    pub config_hash: String,
    pub overrides: Vec<String>,
}

impl PreparedRun {
    pub fn new(mut config: ScenarioConfig, base: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let notes = config.apply(overrides);
        let scenario = config.resolve(base)?;
        Ok(PreparedRun { config_hash: config.hash(), config, scenario, overrides: notes })
    }

    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let (cfg, base) = ScenarioConfig::load(path)?;
        Self::new(cfg, &base, overrides)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub snapshot: LearnerSnapshot,
    pub timing: TimingDoc,
}

pub fn execute(run: &PreparedRun) -> Result<RunOutput, SimError> {
    let sc = run.scenario.clone();
    let events = sc.events.len();
    let scripted_replay = sc.script.is_some() && sc.settings.operator == OperatorMode::Scripted;
    let start = Instant::now();
    let mut exp = Experiment::new(sc)?;
    let mut metadata = RunReport::metadata_for(&exp, events, scripted_replay);
    metadata.config_hash = Some(run.config_hash.clone());
    metadata.overrides = run.overrides.clone();
    let mut windows = Vec::with_capacity(exp.total_windows());
    while !exp.is_finished() {
        windows.push(exp.step_window(())?.result);
    }
    let elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
    let summary = RunSummary::from_windows(&windows);
    let snapshot = exp.learner().snapshot(exp.graph(), &exp.settings().learning);
    let timing = TimingDoc { elapsed_ms, ms_per_window: elapsed_ms / windows.len().max(1) as f64 };
    Ok(RunOutput { report: RunReport { metadata, windows, summary }, snapshot, timing })
}

/// Writes the report, summary, final learner tables, timing and optionally
/// the metric series into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, out: &RunOutput, csv: bool) -> Result<Vec<PathBuf>, FormatError> {
    std::fs::create_dir_all(dir).map_err(|source| FormatError::Io { path: dir.to_path_buf(), source })?;
    formats::write_report(dir, &out.report)?;
    formats::write_json(&dir.join(formats::SNAPSHOT_FILE), &out.snapshot)?;
    formats::write_json(&dir.join(formats::TIMING_FILE), &out.timing)?;
    let mut written = vec![
        dir.join(formats::REPORT_FILE),
        dir.join(formats::SUMMARY_FILE),
        dir.join(formats::SNAPSHOT_FILE),
        dir.join(formats::TIMING_FILE),
    ];
    if csv {
        written.extend(formats::write_metric_series(dir, &out.report.windows)?);
    }
    Ok(written)
}
