//! Windowed experiment driver.
//!
//! Each window: update fault scores from the next batch, build the
//! environment matrix, consult the operator, train, then extract the path,
//! isolation set and leak prediction.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{
    build_reward_matrix, chunk_events, update_fault_scores, validate_events, FaultError, FaultScores, FaultWeights,
    LeakEvent, RewardMatrix, WindowBatch,
};
use crate::learner::{LearnerError, LearnerState, LearningParams, ParamWarning, StaticEnv, TrainingStats};
use crate::operator::{
    apply_live_intervention, shape_rewards, CommandSource, InterventionOverlay, LiveCommand, OperatorError,
    OverlaySource, PruningEnv, ScriptConfig, ScriptEntry, ScriptReplay, ScriptedOperator, Shaper, ShapingParams,
    Variant,
};
use crate::planner::{extract_path, isolation_set, predict_leaks, score_quantile};
use crate::sim::metrics::{prediction_score, qopt_delta, DomainMismatch};
use crate::topology::{NetworkGraph, NodeId, RouteDiagnostic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    None,
    Scripted,
    Live,
}

impl OperatorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorMode::None => "none",
            OperatorMode::Scripted => "scripted",
            OperatorMode::Live => "live",
        }
    }
}

/// How the leak-prediction threshold `tau` is chosen each window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum LeakThreshold {
    /// Nearest-rank quantile of the window's nonzero fault scores.
    Quantile {
        q: f64,
    },
    Fixed {
        tau: f64,
    },
}

impl Default for LeakThreshold {
    fn default() -> Self {
        LeakThreshold::Quantile { q: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub source: NodeId,
    pub dest: NodeId,
    pub variant: Variant,
    pub operator: OperatorMode,
    pub script: ScriptConfig,
    pub learning: LearningParams,
    pub faults: FaultWeights,
    pub shaping: ShapingParams,
    pub window_size: usize,
    pub max_windows: Option<usize>,
    /// Cycle through the event batches again once they run out.
    pub repeat: bool,
    pub threshold: LeakThreshold,
}

impl RunSettings {
    pub fn new(source: NodeId, dest: NodeId) -> Self {
        RunSettings {
            source,
            dest,
            variant: Variant::Plain,
            operator: OperatorMode::None,
            script: ScriptConfig::default(),
            learning: LearningParams::default(),
            faults: FaultWeights::default(),
            shaping: ShapingParams::default(),
            window_size: 30,
            max_windows: None,
            repeat: false,
            threshold: LeakThreshold::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub graph: NetworkGraph,
    pub events: Vec<LeakEvent>,
    pub settings: RunSettings,
    /// Fixed intervention script; replaces the random operator when the
    /// operator mode is scripted.
    pub script: Option<Vec<ScriptEntry>>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WindowError {
    #[error(transparent)]
    Fault(#[from] FaultError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Metrics(#[from] DomainMismatch),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Route(#[from] RouteDiagnostic),
    #[error(transparent)]
    Events(#[from] FaultError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("intervention script: {0}")]
    Script(OperatorError),
    #[error("window {window}: {cause}")]
    AtWindow { window: usize, cause: WindowError },
    #[error("experiment finished after {0} windows")]
    Finished(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub leaks: usize,
    pub dangerous: usize,
    pub safe: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: usize,
    pub feasible: bool,
    pub path: Option<Vec<NodeId>>,
    pub path_cost: Option<f64>,
    pub isolation: BTreeSet<NodeId>,
    pub predicted_leaks: BTreeSet<NodeId>,
    pub tau: f64,
    /// Summed absolute change of `Q_opt` against the previous window;
    /// absent for the first window.
    pub qopt_delta: Option<f64>,
    pub qopt_delta_max: Option<f64>,
    pub label_counts: LabelCounts,
    pub leaky: BTreeSet<NodeId>,
    pub dangerous: BTreeSet<NodeId>,
    pub safe: BTreeSet<NodeId>,
    pub training: TrainingStats,
    pub partial_batch: bool,
    /// Edges (outside the destination) never updated so far.
    pub unvisited_edges: usize,
}

/// A window's result plus the operator commands that landed mid-window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutput {
    pub result: WindowResult,
    pub applied_mid_window: Vec<(u64, LiveCommand)>,
    pub rejected_mid_window: Vec<(u64, LiveCommand, OperatorError)>,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum OperatorDriver {
    Silent,
    Random(ScriptedOperator),
    Replay(ScriptReplay),
}

pub const PREDICTION_RULE: &str = "fault-score threshold (placeholder rule)";

/// Step-at-a-time experiment. Deterministic given the scenario.
#[derive(Debug, Clone)]
pub struct Experiment {
    graph: NetworkGraph,
    settings: RunSettings,
    batches: Vec<WindowBatch>,
    total_windows: usize,
    completed: usize,
    learner: LearnerState,
    faults: FaultScores,
    driver: OperatorDriver,
    live: InterventionOverlay,
    rng: ChaCha8Rng,
    prev_q_opt: Vec<f64>,
    last: Option<WindowResult>,
    warnings: Vec<ParamWarning>,
}

const OPERATOR_SEED_SALT: u64 = 0x6a09_e667_f3bc_c909;

impl Experiment {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let Scenario { graph, events, settings, script } = scenario;
        let s = &settings;
        s.learning.validate().map_err(LearnerError::from)?;
        s.faults.validate()?;
        s.shaping.validate().map_err(|e| SimError::Config(e.into()))?;
        s.script.validate().map_err(|e| SimError::Config(e.into()))?;
        graph.validate_route_endpoints(s.source, s.dest)?;
        if s.variant == Variant::Plain && s.operator != OperatorMode::None {
            return Err(SimError::Config("variant plain requires operator mode none".into()));
        }
        if s.window_size == 0 {
            return Err(SimError::Config("window_size must be at least 1".into()));
        }
        if s.repeat && s.max_windows.is_none() {
            return Err(SimError::Config("repeat requires max_windows".into()));
        }
        match s.threshold {
            LeakThreshold::Quantile { q } if !(0.0..=1.0).contains(&q) => {
                return Err(SimError::Config("threshold quantile must be in [0, 1]".into()))
            }
            LeakThreshold::Fixed { tau } if !(tau >= 0.0) => {
                return Err(SimError::Config("threshold tau must be >= 0".into()))
            }
            _ => {}
        }
        validate_events(&events, graph.node_count())?;
        let batches = chunk_events(&events, s.window_size)?;
        let total_windows = match (s.repeat, s.max_windows) {
            (true, Some(limit)) => limit,
            (false, Some(limit)) => limit.min(batches.len()),
            (false, None) => batches.len(),
            (true, None) => unreachable!(),
        };

        let endpoints = (s.source, s.dest);
        let driver = match (s.operator, script) {
            (OperatorMode::Scripted, Some(entries)) => {
                let replay = ScriptReplay::new(entries);
                replay.validate(&graph, endpoints, s.variant).map_err(SimError::Script)?;
                OperatorDriver::Replay(replay)
            }
            (OperatorMode::Scripted, None) => OperatorDriver::Random(ScriptedOperator::new(
                s.script,
                s.variant,
                endpoints,
                graph.node_count(),
                s.learning.rng_seed ^ OPERATOR_SEED_SALT,
            )),
            _ => OperatorDriver::Silent,
        };

        let learner = LearnerState::new(&graph, &s.learning)?;
        let warnings = s.learning.warnings(&graph);
        let prev_q_opt = learner.q_opt.clone();
        let live_source = if s.operator == OperatorMode::Live { OverlaySource::Live } else { OverlaySource::Scripted };
        Ok(Experiment {
            faults: FaultScores::zero(graph.node_count()),
            rng: ChaCha8Rng::seed_from_u64(s.learning.rng_seed),
            live: InterventionOverlay::empty(0, live_source),
            graph,
            batches,
            total_windows,
            completed: 0,
            learner,
            driver,
            prev_q_opt,
            last: None,
            warnings,
            settings,
        })
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn settings(&self) -> &RunSettings {
        &self.settings
    }

    pub fn learner(&self) -> &LearnerState {
        &self.learner
    }

    pub fn fault_scores(&self) -> &FaultScores {
        &self.faults
    }

    pub fn warnings(&self) -> &[ParamWarning] {
        &self.warnings
    }

    pub fn completed_windows(&self) -> usize {
        self.completed
    }

    pub fn total_windows(&self) -> usize {
        self.total_windows
    }

    pub fn is_finished(&self) -> bool {
        self.completed >= self.total_windows
    }

    pub fn last_result(&self) -> Option<&WindowResult> {
        self.last.as_ref()
    }

    /// Operator labels entered live; they apply from the next window.
    pub fn live_overlay(&self) -> &InterventionOverlay {
        &self.live
    }

    /// Validates `cmd` and records it in the live layer. Returns whether the
    /// layer changed.
    pub fn stage_live(&mut self, cmd: LiveCommand) -> Result<bool, OperatorError> {
        let s = &self.settings;
        let next = apply_live_intervention(&self.live, cmd, &self.graph, (s.source, s.dest), s.variant)?;
        let changed = next != self.live;
        self.live = next;
        Ok(changed)
    }

    fn batch(&self, window: usize) -> WindowBatch {
        if self.batches.is_empty() {
            return WindowBatch { index: window, events: Vec::new(), partial: true };
        }
        let src = &self.batches[(window - 1) % self.batches.len()];
        WindowBatch { index: window, events: src.events.clone(), partial: src.partial }
    }

    fn overlay_for(&mut self, window: usize) -> Result<InterventionOverlay, OperatorError> {
        let s = &self.settings;
        let endpoints = (s.source, s.dest);
        let mut ov = match &mut self.driver {
            OperatorDriver::Silent => InterventionOverlay::empty(window, self.live.source),
            OperatorDriver::Random(op) => op.step(window),
            OperatorDriver::Replay(r) => r.step(window, &self.graph, endpoints, s.variant)?,
        };
        if !self.live.is_empty() {
            for &d in &self.live.dangerous {
                ov.safe.remove(&d);
                ov.dangerous.insert(d);
            }
            for &n in &self.live.safe {
                ov.dangerous.remove(&n);
                ov.safe.insert(n);
            }
            if matches!(self.driver, OperatorDriver::Silent) {
                ov.source = OverlaySource::Live;
            }
        }
        ov.window = window;
        if s.variant == Variant::Plain {
            ov.dangerous.clear();
            ov.safe.clear();
        }
        ov.validate(&self.graph, s.source, s.dest)?;
        Ok(ov)
    }

    /// Runs the next window. Commands from `commands` are polled before every
    /// training step in action pruning and ignored otherwise.
    pub fn step_window<S: CommandSource>(&mut self, commands: S) -> Result<WindowOutput, SimError> {
        if self.is_finished() {
            return Err(SimError::Finished(self.completed));
        }
        let window = self.completed + 1;
        let out = self.run_window(window, commands).map_err(|cause| SimError::AtWindow { window, cause })?;
        self.completed = window;
        self.last = Some(out.result.clone());
        Ok(out)
    }

    fn run_window<S: CommandSource>(&mut self, window: usize, commands: S) -> Result<WindowOutput, WindowError> {
        let batch = self.batch(window);
        let scores = update_fault_scores(&self.faults, &batch, &self.settings.faults)?;
        let env_costs = build_reward_matrix(&self.graph, &scores, &self.settings.faults)?;
        let overlay = self.overlay_for(window)?;

        let s = &self.settings;
        let g = &self.graph;
        let shaper = Shaper { params: &s.shaping, faults: &scores, weights: &s.faults };
        let mut applied = Vec::new();
        let mut rejected = Vec::new();
        let (training, overlay, shaped): (TrainingStats, InterventionOverlay, RewardMatrix) = match s.variant {
            Variant::Plain | Variant::RewardShaping => {
                let shaped = shape_rewards(g, &env_costs, &overlay, &shaper);
                let mut env = StaticEnv::new(&shaped);
                let stats = self.learner.train_window(g, &mut env, s.dest, &s.learning, &mut self.rng)?;
                (stats, overlay, shaped)
            }
            Variant::ActionPruning => {
                let mut env = PruningEnv::new(g, &env_costs, shaper, overlay, (s.source, s.dest), commands);
                let stats = self.learner.train_window(g, &mut env, s.dest, &s.learning, &mut self.rng)?;
                applied.extend_from_slice(env.applied());
                rejected.extend(env.rejected().iter().cloned());
                let overlay = env.into_overlay();
                let shaped = shape_rewards(g, &env_costs, &overlay, &shaper);
                (stats, overlay, shaped)
            }
        };
        for &(_, cmd) in &applied {
            if let Ok(next) = apply_live_intervention(&self.live, cmd, g, (s.source, s.dest), s.variant) {
                self.live = next;
            }
        }

        let path = extract_path(g, &self.learner.q_opt, &shaped, s.source, s.dest, &overlay.dangerous);
        let leaky = batch.leak_nodes();
        let isolation = isolation_set(path.as_ref(), &leaky, &overlay.dangerous);
        let tau = match s.threshold {
            LeakThreshold::Quantile { q } => score_quantile(&scores, q),
            LeakThreshold::Fixed { tau } => tau,
        };
        let predicted_leaks = predict_leaks(&scores, tau);
        let delta = if window == 1 { None } else { Some(qopt_delta(&self.prev_q_opt, &self.learner.q_opt)?) };
        self.prev_q_opt.copy_from_slice(&self.learner.q_opt);
        let unvisited_edges =
            g.edges().iter().zip(&self.learner.visits).filter(|&(&(from, _), &v)| from != s.dest && v == 0).count();

        let result = WindowResult {
            window,
            feasible: path.is_some(),
            path_cost: path.as_ref().map(|p| p.total_cost),
            path: path.map(|p| p.nodes),
            isolation,
            predicted_leaks,
            tau,
            qopt_delta: delta.map(|d| d.sum),
            qopt_delta_max: delta.map(|d| d.max),
            label_counts: LabelCounts {
                leaks: leaky.len(),
                dangerous: overlay.dangerous.len(),
                safe: overlay.safe.len(),
            },
            leaky,
            dangerous: overlay.dangerous,
            safe: overlay.safe,
            training,
            partial_batch: batch.partial,
            unvisited_edges,
        };
        self.faults = scores;
        Ok(WindowOutput { result, applied_mid_window: applied, rejected_mid_window: rejected })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub variant: Variant,
    pub operator: OperatorMode,
    pub seed: u64,
    pub nodes: usize,
    pub edges: usize,
    pub source: NodeId,
    pub dest: NodeId,
    pub events: usize,
    pub window_size: usize,
    pub windows: usize,
    pub repeat: bool,
    pub cold_start: bool,
    pub learning: LearningParams,
    pub faults: FaultWeights,
    pub shaping: ShapingParams,
    pub script: Option<ScriptConfig>,
    pub scripted_replay: bool,
    pub threshold: LeakThreshold,
    pub prediction_rule: String,
    pub warnings: Vec<ParamWarning>,
    /// Filled in by whoever loaded the configuration.
    pub config_hash: Option<String>,
    pub overrides: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub windows: usize,
    pub final_qopt_delta: Option<f64>,
    /// First window from which every later delta is exactly zero.
    pub settled_from_window: Option<usize>,
    pub infeasible_windows: usize,
    pub dangerous_on_path: usize,
    pub dangerous_not_isolated: usize,
    pub trapped_episodes: u64,
    pub truncated_episodes: u64,
    pub mean_path_cost: Option<f64>,
    pub mean_precision: Option<f64>,
    pub mean_recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: RunMetadata,
    pub windows: Vec<WindowResult>,
    pub summary: RunSummary,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl RunSummary {
    pub fn from_windows(windows: &[WindowResult]) -> Self {
        let settled_from_window = {
            let mut from = None;
            for w in windows.iter().filter(|w| w.qopt_delta.is_some()) {
                if w.qopt_delta == Some(0.0) {
                    from.get_or_insert(w.window);
                } else {
                    from = None;
                }
            }
            from
        };
        let scores: Vec<_> = windows.windows(2).map(|p| prediction_score(&p[0].predicted_leaks, &p[1].leaky)).collect();
        RunSummary {
            windows: windows.len(),
            final_qopt_delta: windows.last().and_then(|w| w.qopt_delta),
            settled_from_window,
            infeasible_windows: windows.iter().filter(|w| !w.feasible).count(),
            dangerous_on_path: windows
                .iter()
                .map(|w| w.path.as_ref().map_or(0, |p| p.iter().filter(|n| w.dangerous.contains(n)).count()))
                .sum(),
            dangerous_not_isolated: windows.iter().map(|w| w.dangerous.difference(&w.isolation).count()).sum(),
            trapped_episodes: windows.iter().map(|w| w.training.trapped as u64).sum(),
            truncated_episodes: windows.iter().map(|w| w.training.truncated as u64).sum(),
            mean_path_cost: mean(windows.iter().filter_map(|w| w.path_cost)),
            mean_precision: mean(scores.iter().filter_map(|s| s.precision)),
            mean_recall: mean(scores.iter().filter_map(|s| s.recall)),
        }
    }
}

impl RunReport {
    pub fn metadata_for(exp: &Experiment, events: usize, scripted_replay: bool) -> RunMetadata {
        let s = exp.settings();
        RunMetadata {
            variant: s.variant,
            operator: s.operator,
            seed: s.learning.rng_seed,
            nodes: exp.graph().node_count(),
            edges: exp.graph().edge_count(),
            source: s.source,
            dest: s.dest,
            events,
            window_size: s.window_size,
            windows: exp.total_windows(),
            repeat: s.repeat,
            cold_start: s.learning.cold_start,
            learning: s.learning,
            faults: s.faults,
            shaping: s.shaping,
            script: (s.operator == OperatorMode::Scripted && !scripted_replay).then_some(s.script),
            scripted_replay,
            threshold: s.threshold,
            prediction_rule: PREDICTION_RULE.into(),
            warnings: exp.warnings().to_vec(),
            config_hash: None,
            overrides: Vec::new(),
        }
    }
}

/// Runs every window of `scenario` with no live operator.
pub fn run_scenario(scenario: Scenario) -> Result<RunReport, SimError> {
    let events = scenario.events.len();
    let scripted_replay = scenario.script.is_some() && scenario.settings.operator == OperatorMode::Scripted;
    let mut exp = Experiment::new(scenario)?;
    let metadata = RunReport::metadata_for(&exp, events, scripted_replay);
    let mut windows = Vec::with_capacity(exp.total_windows());
    while !exp.is_finished() {
        windows.push(exp.step_window(())?.result);
    }
    let summary = RunSummary::from_windows(&windows);
    Ok(RunReport { metadata, windows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Border, Node};
    use alloc::vec;

    fn ring(n: u32) -> NetworkGraph {
        let nodes = (1..=n).map(|i| Node::new(i, "", 0.0, 0.0)).collect::<Vec<_>>();
        let borders: Vec<_> = (1..=n).map(|i| Border { a: NodeId(i), b: NodeId(i % n + 1), cost: 1.0 }).collect();
        NetworkGraph::from_borders(nodes, &borders).unwrap()
    }

    fn events(count: u64, nodes: u32) -> Vec<LeakEvent> {
        (1..=count)
            .map(|i| LeakEvent { seq: i, node: NodeId((i % nodes as u64) as u32 + 1), repair_hours: 2.0, cost: 100.0 })
            .collect()
    }

    #[test]
    fn window_count_follows_events() {
        let mut s = RunSettings::new(NodeId(1), NodeId(4));
        s.learning.epochs = 5;
        let sc = Scenario { graph: ring(6), events: events(1816, 6), settings: s.clone(), script: None };
        assert_eq!(Experiment::new(sc.clone()).unwrap().total_windows(), 61);
        s.max_windows = Some(10);
        let capped = Scenario { settings: s.clone(), ..sc.clone() };
        assert_eq!(Experiment::new(capped).unwrap().total_windows(), 10);
        s.max_windows = Some(100);
        s.repeat = true;
        let repeated = Scenario { settings: s, ..sc };
        assert_eq!(Experiment::new(repeated).unwrap().total_windows(), 100);
    }

    #[test]
    fn rejects_bad_settings() {
        let mut s = RunSettings::new(NodeId(1), NodeId(1));
        let sc = |s: &RunSettings| Scenario { graph: ring(4), events: vec![], settings: s.clone(), script: None };
        assert!(matches!(Experiment::new(sc(&s)), Err(SimError::Route(RouteDiagnostic::EndpointsEqual(_)))));
        s.dest = NodeId(3);
        s.operator = OperatorMode::Scripted;
        assert!(matches!(Experiment::new(sc(&s)), Err(SimError::Config(_))));
        s.operator = OperatorMode::None;
        s.learning.beta = 0.95;
        assert!(matches!(Experiment::new(sc(&s)), Err(SimError::Learner(_))));
    }

    #[test]
    fn finished_experiment_refuses_steps() {
        let mut s = RunSettings::new(NodeId(1), NodeId(3));
        s.learning.epochs = 3;
        let mut exp =
            Experiment::new(Scenario { graph: ring(4), events: events(30, 4), settings: s, script: None }).unwrap();
        let out = exp.step_window(()).unwrap();
        assert_eq!(out.result.window, 1);
        assert_eq!(out.result.qopt_delta, None);
        assert!(exp.is_finished());
        assert_eq!(exp.step_window(()), Err(SimError::Finished(1)));
    }

    #[test]
    fn staged_live_label_applies_next_window() {
        let mut s = RunSettings::new(NodeId(1), NodeId(4));
        s.variant = Variant::RewardShaping;
        s.operator = OperatorMode::Live;
        s.learning.epochs = 50;
        s.max_windows = Some(3);
        s.repeat = true;
        let mut exp =
            Experiment::new(Scenario { graph: ring(6), events: events(30, 6), settings: s, script: None }).unwrap();
        let first = exp.step_window(()).unwrap().result;
        assert!(first.dangerous.is_empty());
        assert!(exp.stage_live(LiveCommand { node: NodeId(2), label: crate::operator::LiveLabel::Dangerous }).unwrap());
        let second = exp.step_window(()).unwrap().result;
        assert!(second.dangerous.contains(&NodeId(2)));
        assert!(!second.path.unwrap().contains(&NodeId(2)));
        assert!(second.isolation.contains(&NodeId(2)));
    }
}
