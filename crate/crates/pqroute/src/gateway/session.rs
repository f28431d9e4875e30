//! One interactive experiment and its event log.

use std::collections::{BTreeSet, VecDeque};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use pqroute_core::learner::LearnerSnapshot;
use pqroute_core::operator::{
    apply_live_intervention, CommandSource, InterventionOverlay, LiveCommand, OperatorError, OverlaySource, Variant,
};
use pqroute_core::sim::{Experiment, OperatorMode, SimError, WindowResult};
use pqroute_core::{NetworkGraph, NodeId};
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::config::ScenarioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Idle,
    Training,
    AwaitingOperator,
    Finished,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    Manual,
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Normal,
    Leaky,
    Dangerous,
    Safe,
    OnPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub name: String,
    pub x: f64,
    pub y: f64,
    /// Display status; dangerous, then safe, then on-path, then leaky.
    pub status: NodeStatus,
    pub leaky: bool,
    pub dangerous: bool,
    pub safe: bool,
    pub on_path: bool,
    pub isolated: bool,
    pub predicted_leak: bool,
}

/// Immutable view of a session after a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session: u64,
    pub window: usize,
    pub status: Status,
    pub source: NodeId,
    pub dest: NodeId,
    pub nodes: Vec<NodeView>,
    pub path: Option<Vec<NodeId>>,
    pub path_cost: Option<f64>,
    pub isolation: BTreeSet<NodeId>,
    /// Commands accepted but not yet in effect.
    pub pending: Vec<LiveCommand>,
}

impl Snapshot {
    fn build(
        session: u64,
        g: &NetworkGraph,
        ends: (NodeId, NodeId),
        status: Status,
        last: Option<&WindowResult>,
        pending: Vec<LiveCommand>,
    ) -> Self {
        let empty = BTreeSet::new();
        let pick = |f: fn(&WindowResult) -> &BTreeSet<NodeId>| last.map_or(&empty, f);
        let (leaky, dangerous, safe, isolation, predicted) = (
            pick(|w| &w.leaky),
            pick(|w| &w.dangerous),
            pick(|w| &w.safe),
            pick(|w| &w.isolation),
            pick(|w| &w.predicted_leaks),
        );
        let path = last.and_then(|w| w.path.clone());
        let nodes = g
            .nodes()
            .iter()
            .map(|n| {
                let on_path = path.as_ref().is_some_and(|p| p.contains(&n.id));
                let flags = (dangerous.contains(&n.id), safe.contains(&n.id), on_path, leaky.contains(&n.id));
                let status = match flags {
                    (true, ..) => NodeStatus::Dangerous,
                    (_, true, ..) => NodeStatus::Safe,
                    (_, _, true, _) => NodeStatus::OnPath,
                    (.., true) => NodeStatus::Leaky,
                    _ => NodeStatus::Normal,
                };
                NodeView {
                    id: n.id,
                    name: n.name.clone(),
                    x: n.x,
                    y: n.y,
                    status,
                    leaky: flags.3,
                    dangerous: flags.0,
                    safe: flags.1,
                    on_path,
                    isolated: isolation.contains(&n.id),
                    predicted_leak: predicted.contains(&n.id),
                }
            })
            .collect();
        Snapshot {
            session,
            window: last.map_or(0, |w| w.window),
            status,
            source: ends.0,
            dest: ends.1,
            nodes,
            path,
            path_cost: last.and_then(|w| w.path_cost),
            isolation: isolation.clone(),
            pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventBody {
    StatusChange {
        from: Status,
        to: Status,
        window: usize,
    },
    /// `step` is set for commands that landed inside a pruning window.
    InterventionApplied {
        window: usize,
        step: Option<u64>,
        command: LiveCommand,
    },
    WindowResult {
        result: WindowResult,
    },
    Snapshot {
        snapshot: Snapshot,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::StatusChange { .. } => "status_change",
            EventBody::InterventionApplied { .. } => "intervention_applied",
            EventBody::WindowResult { .. } => "window_result",
            EventBody::Snapshot { .. } => "snapshot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub index: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

/// Append-only, totally ordered event list. Subscribers read by index and
/// wait on the length watch, so every subscriber sees the same sequence.
pub struct EventLog {
    inner: Mutex<LogInner>,
    len: watch::Sender<u64>,
}

struct LogInner {
    events: Vec<Arc<SessionEvent>>,
    file: Option<BufWriter<File>>,
    closed: bool,
}

impl EventLog {
    fn new(file: Option<File>) -> Self {
        EventLog {
            inner: Mutex::new(LogInner { events: Vec::new(), file: file.map(BufWriter::new), closed: false }),
            len: watch::channel(0).0,
        }
    }

    fn emit(&self, body: EventBody) {
        let mut inner = lock(&self.inner);
        let ev = Arc::new(SessionEvent { index: inner.events.len() as u64, body });
        if let Some(f) = inner.file.as_mut() {
            let ok = serde_json::to_writer(&mut *f, &*ev).is_ok() && f.write_all(b"\n").is_ok() && f.flush().is_ok();
            if !ok {
                inner.file = None;
            }
        }
        inner.events.push(ev);
        self.len.send_replace(inner.events.len() as u64);
    }

    fn close(&self) {
        lock(&self.inner).closed = true;
        self.len.send_modify(|_| {});
    }

    /// The event at `index`, or whether the log is closed when there is none yet.
    pub fn get(&self, index: u64) -> Result<Arc<SessionEvent>, bool> {
        let inner = lock(&self.inner);
        inner.events.get(index as usize).cloned().ok_or(inner.closed)
    }

    pub fn len(&self) -> u64 {
        lock(&self.inner).events.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Vec<Arc<SessionEvent>> {
        lock(&self.inner).events.clone()
    }

    pub fn watch(&self) -> watch::Receiver<u64> {
        self.len.subscribe()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub id: u64,
    pub status: Status,
    pub mode: StepMode,
    pub variant: Variant,
    pub operator: OperatorMode,
    pub completed_windows: usize,
    pub total_windows: usize,
    pub config_hash: String,
    pub events: u64,
    pub last_result: Option<WindowResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    /// The command did not change any label.
    pub noop: bool,
    /// First window whose training sees the command.
    pub effective_window: usize,
    pub command: LiveCommand,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepError {
    Busy,
    Finished,
    Failed(SimError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SubmitError {
    Finished,
    Rejected(OperatorError),
}

struct State {
    status: Status,
    completed: usize,
    /// Commands waiting for the next window boundary.
    staged: Vec<LiveCommand>,
    /// Live layer with every accepted command applied; used to validate.
    shadow: InterventionOverlay,
    last: Option<WindowResult>,
    snapshot: Arc<Snapshot>,
    learner: Arc<LearnerSnapshot>,
}

#[derive(Clone, Default)]
struct Queue(Arc<Mutex<VecDeque<LiveCommand>>>);

impl CommandSource for Queue {
    fn poll(&mut self) -> Option<LiveCommand> {
        lock(&self.0).pop_front()
    }
}

pub struct Session {
    pub id: u64,
    pub config: ScenarioConfig,
    pub mode: StepMode,
    config_hash: String,
    total: usize,
    graph: NetworkGraph,
    engine: Mutex<Experiment>,
    state: Mutex<State>,
    queue: Queue,
    log: EventLog,
}

impl Session {
    pub fn new(
        id: u64,
        config: ScenarioConfig,
        exp: Experiment,
        mode: StepMode,
        log_file: Option<&Path>,
    ) -> std::io::Result<Self> {
        let file = log_file.map(File::create).transpose()?;
        let graph = exp.graph().clone();
        let s = exp.settings();
        let ends = (s.source, s.dest);
        let source = if s.operator == OperatorMode::Live { OverlaySource::Live } else { OverlaySource::Scripted };
        let state = State {
            status: Status::Idle,
            completed: 0,
            staged: Vec::new(),
            shadow: InterventionOverlay::empty(0, source),
            last: None,
            snapshot: Arc::new(Snapshot::build(id, &graph, ends, Status::Idle, None, Vec::new())),
            learner: Arc::new(exp.learner().snapshot(&graph, &s.learning)),
        };
        let session = Session {
            id,
            config_hash: config.hash(),
            config,
            mode,
            total: exp.total_windows(),
            graph,
            engine: Mutex::new(exp),
            state: Mutex::new(state),
            queue: Queue::default(),
            log: EventLog::new(file),
        };
        session.log.emit(EventBody::Snapshot { snapshot: (*lock(&session.state).snapshot).clone() });
        Ok(session)
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn status(&self) -> Status {
        lock(&self.state).status
    }

    pub fn events(&self) -> &EventLog {
        &self.log
    }

    pub fn info(&self) -> SessionInfo {
        let st = lock(&self.state);
        SessionInfo {
            id: self.id,
            status: st.status,
            mode: self.mode,
            variant: self.config.variant,
            operator: self.config.operator.mode,
            completed_windows: st.completed,
            total_windows: self.total,
            config_hash: self.config_hash.clone(),
            events: self.log.len(),
            last_result: st.last.clone(),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        lock(&self.state).snapshot.clone()
    }

    pub fn learner_snapshot(&self) -> Arc<LearnerSnapshot> {
        lock(&self.state).learner.clone()
    }

    fn ends(&self) -> (NodeId, NodeId) {
        (self.config.source, self.config.dest)
    }

    fn transition(&self, st: &mut State, to: Status) {
        let from = st.status;
        if from != to {
            st.status = to;
            self.log.emit(EventBody::StatusChange { from, to, window: st.completed });
        }
    }

    /// Validates `cmd` and schedules it. Shaping commands wait for the next
    /// window boundary; pruning commands sent during training land at the
    /// next episode step.
    pub fn submit(&self, cmd: LiveCommand) -> Result<Ack, SubmitError> {
        let mut st = lock(&self.state);
        if st.status == Status::Finished {
            return Err(SubmitError::Finished);
        }
        let next = apply_live_intervention(&st.shadow, cmd, &self.graph, self.ends(), self.config.variant)
            .map_err(SubmitError::Rejected)?;
        let training = st.status == Status::Training;
        let pruning = self.config.variant == Variant::ActionPruning;
        let effective_window = if training && !pruning { st.completed + 2 } else { st.completed + 1 };
        let noop = next == st.shadow;
        if !noop {
            st.shadow = next;
            if training && pruning {
                lock(&self.queue.0).push_back(cmd);
            } else {
                st.staged.push(cmd);
            }
            let mut pending = st.staged.clone();
            pending.extend(lock(&self.queue.0).iter().copied());
            st.snapshot = Arc::new(Snapshot { pending, ..(*st.snapshot).clone() });
        }
        Ok(Ack { accepted: true, noop, effective_window, command: cmd })
    }

    /// Trains one window. Blocking; run off the async executor.
    pub fn step(&self) -> Result<WindowResult, StepError> {
        let staged = {
            let mut st = lock(&self.state);
            match st.status {
                Status::Finished => return Err(StepError::Finished),
                Status::Training => return Err(StepError::Busy),
                _ => {}
            }
            self.transition(&mut st, Status::Training);
            std::mem::take(&mut st.staged)
        };
        let mut exp = lock(&self.engine);
        let window = exp.completed_windows() + 1;
        for cmd in staged {
            // already validated against the shadow layer
            if exp.stage_live(cmd).is_ok() {
                self.log.emit(EventBody::InterventionApplied { window, step: None, command: cmd });
            }
        }
        let out = exp.step_window(self.queue.clone());
        let learner = Arc::new(exp.learner().snapshot(exp.graph(), &exp.settings().learning));
        let finished = exp.is_finished();
        drop(exp);

        let mut st = lock(&self.state);
        // commands queued after the last training step wait for the boundary
        st.staged.extend(lock(&self.queue.0).drain(..));
        let out = match out {
            Ok(out) => out,
            Err(e) => {
                self.transition(&mut st, Status::Finished);
                self.log.close();
                return Err(StepError::Failed(e));
            }
        };
        for &(step, command) in &out.applied_mid_window {
            self.log.emit(EventBody::InterventionApplied { window, step: Some(step), command });
        }
        let status = match (finished, self.mode) {
            (true, _) => Status::Finished,
            (false, StepMode::Manual) => Status::AwaitingOperator,
            (false, StepMode::Auto) => Status::Idle,
        };
        st.completed = window;
        st.last = Some(out.result.clone());
        st.learner = learner;
        st.snapshot =
            Arc::new(Snapshot::build(self.id, &self.graph, self.ends(), status, Some(&out.result), st.staged.clone()));
        self.log.emit(EventBody::WindowResult { result: out.result.clone() });
        self.log.emit(EventBody::Snapshot { snapshot: (*st.snapshot).clone() });
        self.transition(&mut st, status);
        if finished {
            self.log.close();
        }
        Ok(out.result)
    }
}
