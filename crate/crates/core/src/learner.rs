//! Tabular predictive Q-learning.
//!
//! Costs are minimised. For every directed edge `(s_i, a_j)` the learner keeps
//! five tables: the cost estimate `Q`, the best cost ever seen `B`, the
//! (nonpositive) recovery rate `RR`, the step of the last update `U`, and the
//! predicted cost `Q_opt = max(Q + dt * RR, B)`. A single global step clock
//! `now` advances once per transition and carries across windows.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::RewardMatrix;
use crate::topology::{EdgeId, NetworkGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Exploration {
    /// Uniform random choice among allowed actions.
    Uniform,
    /// Greedy on `Q` with probability `1 - epsilon`, uniform otherwise.
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_decay: f64,
    pub epochs: u32,
    pub big_init: f64,
    pub rng_seed: u64,
    pub exploration: Exploration,
    /// Episode step cap is `step_cap_factor * node_count`.
    pub step_cap_factor: usize,
    /// Reset Q, B, RR, U and Q_opt at the start of every window.
    pub cold_start: bool,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            alpha: 1.0,
            beta: 0.7,
            gamma_decay: 0.9,
            epochs: 100,
            big_init: 1e6,
            rng_seed: 0,
            exploration: Exploration::Uniform,
            step_cap_factor: 50,
            cold_start: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("alpha must be in (0, 1], got {0}")]
    Alpha(f64),
    #[error("beta must be in (0, 1), got {0}")]
    Beta(f64),
    #[error("gamma_decay must be in (0, 1), got {0}")]
    GammaDecay(f64),
    #[error("beta ({beta}) must be strictly less than gamma_decay ({gamma_decay})")]
    BetaNotBelowGamma { beta: f64, gamma_decay: f64 },
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("big_init must be positive and finite, got {0}")]
    BigInit(f64),
    #[error("epsilon must be in [0, 1], got {0}")]
    Epsilon(f64),
    #[error("step_cap_factor must be at least 1")]
    StepCap,
}

/// Non-fatal configuration findings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "snake_case")]
pub enum ParamWarning {
    /// alpha below 1 degrades the recovery-rate estimate.
    AlphaBelowOne { alpha: f64 },
    /// big_init does not exceed the sum of all base edge costs, so it may not
    /// dominate every reachable path cost.
    BigInitTooSmall { big_init: f64, bound: f64 },
}

impl LearningParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ParamError::Alpha(self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(ParamError::Beta(self.beta));
        }
        if !(self.gamma_decay > 0.0 && self.gamma_decay < 1.0) {
            return Err(ParamError::GammaDecay(self.gamma_decay));
        }
        if self.beta >= self.gamma_decay {
            return Err(ParamError::BetaNotBelowGamma { beta: self.beta, gamma_decay: self.gamma_decay });
        }
        if self.epochs == 0 {
            return Err(ParamError::ZeroEpochs);
        }
        if !(self.big_init > 0.0) || !self.big_init.is_finite() {
            return Err(ParamError::BigInit(self.big_init));
        }
        if let Exploration::EpsilonGreedy { epsilon } = self.exploration {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(ParamError::Epsilon(epsilon));
            }
        }
        if self.step_cap_factor == 0 {
            return Err(ParamError::StepCap);
        }
        Ok(())
    }

    pub fn warnings(&self, g: &NetworkGraph) -> Vec<ParamWarning> {
        let mut out = Vec::new();
        if self.alpha < 1.0 {
            out.push(ParamWarning::AlphaBelowOne { alpha: self.alpha });
        }
        let bound: f64 = g.base_costs().iter().sum();
        if self.big_init <= bound {
            out.push(ParamWarning::BigInitTooSmall { big_init: self.big_init, bound });
        }
        out
    }

    pub fn step_cap(&self, node_count: usize) -> usize {
        self.step_cap_factor * node_count
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("({from}, {to}) is not an edge")]
    NotAnEdge { from: NodeId, to: NodeId },
    #[error("graph has {graph} edges, learner tables have {tables}")]
    DomainMismatch { graph: usize, tables: usize },
}

/// One observed transition and the (shaped) cost paid for it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub from: NodeId,
    pub to: NodeId,
    pub cost: f64,
}

/// What a single update did; mostly useful for tests and tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub edge: EdgeId,
    pub delta_q: f64,
    pub dt: u64,
}

/// What the agent may do and what it pays during training.
///
/// `before_step` runs before every action selection so per-step operator
/// interventions can be picked up mid-episode.
pub trait TrainingEnv {
    fn before_step(&mut self) {}

    fn allows(&self, from: NodeId, to: NodeId) -> bool;

    fn cost(&self, edge: EdgeId, from: NodeId, to: NodeId) -> f64;
}

/// Fixed reward matrix with an optional fixed set of forbidden heads.
pub struct StaticEnv<'a> {
    pub rewards: &'a RewardMatrix,
    pub forbidden: Option<&'a BTreeSet<NodeId>>,
}

impl<'a> StaticEnv<'a> {
    pub fn new(rewards: &'a RewardMatrix) -> Self {
        StaticEnv { rewards, forbidden: None }
    }
}

impl TrainingEnv for StaticEnv<'_> {
    #[inline]
    fn allows(&self, _from: NodeId, to: NodeId) -> bool {
        self.forbidden.is_none_or(|f| !f.contains(&to))
    }

    #[inline]
    fn cost(&self, edge: EdgeId, _from: NodeId, _to: NodeId) -> f64 {
        self.rewards.cost(edge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    ReachedGoal,
    /// The allowed action set at the current node was empty.
    Trapped,
    /// Step cap hit before reaching the goal.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochTrace {
    pub start: NodeId,
    /// Visited nodes, starting with `start`.
    pub visited: Vec<NodeId>,
    pub outcome: EpisodeOutcome,
}

impl EpochTrace {
    pub fn transitions(&self) -> usize {
        self.visited.len() - 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub epochs: u32,
    pub steps: u64,
    pub reached_goal: u32,
    pub trapped: u32,
    pub truncated: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerState {
    pub q: Vec<f64>,
    pub best: Vec<f64>,
    pub recovery: Vec<f64>,
    pub last_update: Vec<u64>,
    pub q_opt: Vec<f64>,
    pub now: u64,
    /// Per-edge update counter; not part of the algorithm, used to flag
    /// edges training never touched.
    pub visits: Vec<u64>,
}

impl LearnerState {
    /// Q, U, RR at zero; B and Q_opt at `big_init`; `now = 0`.
    pub fn new(g: &NetworkGraph, p: &LearningParams) -> Result<Self, LearnerError> {
        p.validate()?;
        let m = g.edge_count();
        Ok(LearnerState {
            q: alloc::vec![0.0; m],
            best: alloc::vec![p.big_init; m],
            recovery: alloc::vec![0.0; m],
            last_update: alloc::vec![0; m],
            q_opt: alloc::vec![p.big_init; m],
            now: 0,
            visits: alloc::vec![0; m],
        })
    }

    /// Re-initialises the five tables, keeping the clock.
    pub fn reset_tables(&mut self, big_init: f64) {
        self.q.fill(0.0);
        self.best.fill(big_init);
        self.recovery.fill(0.0);
        self.last_update.fill(0);
        self.q_opt.fill(big_init);
    }

    pub fn edge_count(&self) -> usize {
        self.q.len()
    }

    fn check_domain(&self, g: &NetworkGraph) -> Result<(), LearnerError> {
        if self.q.len() != g.edge_count() {
            return Err(LearnerError::DomainMismatch { graph: g.edge_count(), tables: self.q.len() });
        }
        Ok(())
    }

    /// `min_a Q(state, a)` over the actions `env` allows. The goal is
    /// absorbing with zero cost-to-go; any other node without allowed actions
    /// is a dead end and costs `big_init`.
    pub fn next_state_min<E: TrainingEnv + ?Sized>(
        &self,
        g: &NetworkGraph,
        state: NodeId,
        goal: NodeId,
        env: &E,
        big_init: f64,
    ) -> f64 {
        if state == goal {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for (edge, to) in g.out_edges(state) {
            if env.allows(state, to) {
                let v = self.q[edge.0];
                if v < best {
                    best = v;
                }
            }
        }
        if best == f64::INFINITY {
            big_init
        } else {
            best
        }
    }

    /// One predictive update of edge `(tr.from, tr.to)`. `next_min` is
    /// `min_a Q(tr.to, a)`; `self.now` must already be advanced for this step.
    pub fn q_update(
        &mut self,
        g: &NetworkGraph,
        tr: &Transition,
        next_min: f64,
        p: &LearningParams,
    ) -> Result<UpdateOutcome, LearnerError> {
        self.check_domain(g)?;
        let edge = g.edge_id(tr.from, tr.to).ok_or(LearnerError::NotAnEdge { from: tr.from, to: tr.to })?;
        Ok(self.update_edge(edge, tr.cost, next_min, p))
    }

    #[inline]
    fn update_edge(&mut self, edge: EdgeId, cost: f64, next_min: f64, p: &LearningParams) -> UpdateOutcome {
        let e = edge.0;
        let delta_q = cost + next_min - self.q[e];
        self.q[e] += p.alpha * delta_q;
        if self.q[e] < self.best[e] {
            self.best[e] = self.q[e];
        }
        // dt is taken before U is refreshed, otherwise it is always zero.
        let dt = self.now - self.last_update[e];
        if delta_q < 0.0 {
            let delta_rr = delta_q / dt.max(1) as f64;
            self.recovery[e] += p.beta * delta_rr;
        } else if delta_q > 0.0 {
            self.recovery[e] *= p.gamma_decay;
        }
        self.last_update[e] = self.now;
        let predicted = self.q[e] + dt as f64 * self.recovery[e];
        self.q_opt[e] = if predicted > self.best[e] { predicted } else { self.best[e] };
        self.visits[e] += 1;
        UpdateOutcome { edge, delta_q, dt }
    }

    /// One episode from a uniformly drawn start `!= goal` until the goal is
    /// reached, the agent is trapped, or the step cap is hit.
    pub fn run_epoch<E, R>(
        &mut self,
        g: &NetworkGraph,
        env: &mut E,
        goal: NodeId,
        p: &LearningParams,
        rng: &mut R,
    ) -> Result<EpochTrace, LearnerError>
    where
        E: TrainingEnv + ?Sized,
        R: Rng + ?Sized,
    {
        self.check_domain(g)?;
        if !g.contains(goal) {
            return Err(LearnerError::UnknownNode(goal));
        }
        let n = g.node_count();
        let mut start = rng.random_range(0..n - 1);
        if start >= goal.index() {
            start += 1;
        }
        let start = NodeId::from_index(start);
        let cap = p.step_cap(n);
        let mut visited = Vec::with_capacity(16);
        visited.push(start);
        let mut candidates: Vec<(EdgeId, NodeId)> = Vec::with_capacity(8);
        let mut cur = start;

        let outcome = loop {
            if cur == goal {
                break EpisodeOutcome::ReachedGoal;
            }
            if visited.len() > cap {
                break EpisodeOutcome::Truncated;
            }
            env.before_step();
            candidates.clear();
            candidates.extend(g.out_edges(cur).filter(|&(_, to)| env.allows(cur, to)));
            if candidates.is_empty() {
                break EpisodeOutcome::Trapped;
            }
            let (edge, next) = self.select(&candidates, p, rng);
            self.now += 1;
            let cost = env.cost(edge, cur, next);
            let next_min = self.next_state_min(g, next, goal, &*env, p.big_init);
            self.update_edge(edge, cost, next_min, p);
            visited.push(next);
            cur = next;
        };
        Ok(EpochTrace { start, visited, outcome })
    }

    fn select<R: Rng + ?Sized>(
        &self,
        candidates: &[(EdgeId, NodeId)],
        p: &LearningParams,
        rng: &mut R,
    ) -> (EdgeId, NodeId) {
        let greedy = match p.exploration {
            Exploration::Uniform => false,
            Exploration::EpsilonGreedy { epsilon } => rng.random::<f64>() >= epsilon,
        };
        if greedy {
            *candidates
                .iter()
                .min_by(|a, b| self.q[a.0 .0].total_cmp(&self.q[b.0 .0]).then(a.1.cmp(&b.1)))
                .expect("non-empty candidates")
        } else {
            candidates[rng.random_range(0..candidates.len())]
        }
    }

    /// Runs `p.epochs` episodes against `env`. With `p.cold_start` the tables
    /// are reset first; the clock always carries over.
    pub fn train_window<E, R>(
        &mut self,
        g: &NetworkGraph,
        env: &mut E,
        goal: NodeId,
        p: &LearningParams,
        rng: &mut R,
    ) -> Result<TrainingStats, LearnerError>
    where
        E: TrainingEnv + ?Sized,
        R: Rng + ?Sized,
    {
        p.validate()?;
        if p.cold_start {
            self.reset_tables(p.big_init);
        }
        let mut stats = TrainingStats::default();
        for _ in 0..p.epochs {
            let trace = self.run_epoch(g, env, goal, p, rng)?;
            stats.epochs += 1;
            stats.steps += trace.transitions() as u64;
            match trace.outcome {
                EpisodeOutcome::ReachedGoal => stats.reached_goal += 1,
                EpisodeOutcome::Trapped => stats.trapped += 1,
                EpisodeOutcome::Truncated => stats.truncated += 1,
            }
        }
        Ok(stats)
    }

    /// Dense row-major `N x N` view of a per-edge table; non-edges are `None`.
    pub fn dense(g: &NetworkGraph, table: &[f64]) -> Vec<Vec<Option<f64>>> {
        let n = g.node_count();
        let mut rows = alloc::vec![alloc::vec![None; n]; n];
        for (k, &(from, to)) in g.edges().iter().enumerate() {
            rows[from.index()][to.index()] = Some(table[k]);
        }
        rows
    }

    pub fn snapshot(&self, g: &NetworkGraph, params: &LearningParams) -> LearnerSnapshot {
        let last_update: Vec<f64> = self.last_update.iter().map(|&u| u as f64).collect();
        LearnerSnapshot {
            now: self.now,
            params: *params,
            q: Self::dense(g, &self.q),
            b: Self::dense(g, &self.best),
            rr: Self::dense(g, &self.recovery),
            u: Self::dense(g, &last_update),
            q_opt: Self::dense(g, &self.q_opt),
        }
    }
}

/// Export form of a [`LearnerState`]: dense row-major tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSnapshot {
    pub now: u64,
    pub params: LearningParams,
    #[serde(rename = "Q")]
    pub q: Vec<Vec<Option<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Option<f64>>>,
    #[serde(rename = "RR")]
    pub rr: Vec<Vec<Option<f64>>>,
    #[serde(rename = "U")]
    pub u: Vec<Vec<Option<f64>>>,
    #[serde(rename = "Q_opt")]
    pub q_opt: Vec<Vec<Option<f64>>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{DirectedEdge, Node};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: u32, edges: &[(u32, u32, f64)]) -> NetworkGraph {
        let nodes = (1..=n).map(|i| Node::new(i, "", 0.0, 0.0)).collect();
        let edges: Vec<_> =
            edges.iter().map(|&(a, b, c)| DirectedEdge { from: NodeId(a), to: NodeId(b), cost: c }).collect();
        NetworkGraph::from_edges(nodes, &edges).unwrap()
    }

    #[test]
    fn params_constraints() {
        assert!(LearningParams::default().validate().is_ok());
        let bad = LearningParams { beta: 0.95, gamma_decay: 0.9, ..Default::default() };
        assert_eq!(bad.validate(), Err(ParamError::BetaNotBelowGamma { beta: 0.95, gamma_decay: 0.9 }));
        assert_eq!(LearningParams { epochs: 0, ..Default::default() }.validate(), Err(ParamError::ZeroEpochs));
        assert!(LearningParams { alpha: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn warnings_flag_small_alpha_and_big_init() {
        let g = graph(2, &[(1, 2, 5.0)]);
        let p = LearningParams { alpha: 0.5, big_init: 3.0, ..Default::default() };
        let w = p.warnings(&g);
        assert_eq!(w.len(), 2);
        assert!(LearningParams::default().warnings(&g).is_empty());
    }

    #[test]
    fn init_tables() {
        let g = graph(3, &[(1, 2, 1.0), (2, 3, 1.0)]);
        let p = LearningParams::default();
        let st = LearnerState::new(&g, &p).unwrap();
        for len in [st.q.len(), st.best.len(), st.recovery.len(), st.last_update.len(), st.q_opt.len()] {
            assert_eq!(len, 2);
        }
        assert_eq!(st.best, vec![1e6; 2]);
        assert_eq!(st.q_opt, vec![1e6; 2]);
        assert_eq!(st.now, 0);
        let bad = LearningParams { beta: 0.95, ..Default::default() };
        assert!(LearnerState::new(&g, &bad).is_err());
    }

    #[test]
    fn fresh_update_positive_delta() {
        let g = graph(2, &[(1, 2, 5.0)]);
        let p = LearningParams::default();
        let mut st = LearnerState::new(&g, &p).unwrap();
        st.now = 1;
        let out = st.q_update(&g, &Transition { from: NodeId(1), to: NodeId(2), cost: 5.0 }, 0.0, &p).unwrap();
        assert_eq!(out.delta_q, 5.0);
        assert_eq!((st.q[0], st.best[0], st.recovery[0], st.q_opt[0]), (5.0, 5.0, 0.0, 5.0));
        assert_eq!(st.last_update[0], 1);
    }

    #[test]
    fn negative_delta_builds_recovery_rate() {
        let g = graph(2, &[(1, 2, 2.0)]);
        let p = LearningParams::default();
        let mut st = LearnerState::new(&g, &p).unwrap();
        st.q[0] = 10.0;
        st.last_update[0] = 3;
        st.now = 5;
        let out = st.q_update(&g, &Transition { from: NodeId(1), to: NodeId(2), cost: 2.0 }, 3.0, &p).unwrap();
        assert_eq!(out.delta_q, -5.0);
        assert_eq!(out.dt, 2);
        assert_eq!(st.q[0], 5.0);
        assert_eq!(st.best[0], 5.0);
        assert!((st.recovery[0] - -1.75).abs() < 1e-12);
        // max(5 + 2 * -1.75, 5)
        assert_eq!(st.q_opt[0], 5.0);

        // with a lower best-ever cost the prediction wins
        st.q[0] = 10.0;
        st.best[0] = 1.0;
        st.recovery[0] = 0.0;
        st.last_update[0] = 3;
        st.q_update(&g, &Transition { from: NodeId(1), to: NodeId(2), cost: 2.0 }, 3.0, &p).unwrap();
        assert!((st.q_opt[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_delta_leaves_rate_alone() {
        let g = graph(2, &[(1, 2, 2.0)]);
        let p = LearningParams::default();
        let mut st = LearnerState::new(&g, &p).unwrap();
        st.q[0] = 5.0;
        st.best[0] = 4.0;
        st.recovery[0] = -0.25;
        st.last_update[0] = 6;
        st.now = 10;
        st.q_update(&g, &Transition { from: NodeId(1), to: NodeId(2), cost: 2.0 }, 3.0, &p).unwrap();
        assert_eq!((st.q[0], st.best[0], st.recovery[0]), (5.0, 4.0, -0.25));
        assert_eq!(st.last_update[0], 10);
        assert_eq!(st.q_opt[0], 4.0);
    }

    #[test]
    fn positive_delta_decays_rate() {
        let g = graph(2, &[(1, 2, 2.0)]);
        let p = LearningParams::default();
        let mut st = LearnerState::new(&g, &p).unwrap();
        st.recovery[0] = -1.0;
        st.now = 4;
        st.q_update(&g, &Transition { from: NodeId(1), to: NodeId(2), cost: 2.0 }, 0.0, &p).unwrap();
        assert!((st.recovery[0] - -0.9).abs() < 1e-12);
    }

    #[test]
    fn update_rejects_non_edge() {
        let g = graph(2, &[(1, 2, 2.0)]);
        let p = LearningParams::default();
        let mut st = LearnerState::new(&g, &p).unwrap();
        let err = st.q_update(&g, &Transition { from: NodeId(2), to: NodeId(1), cost: 1.0 }, 0.0, &p).unwrap_err();
        assert_eq!(err, LearnerError::NotAnEdge { from: NodeId(2), to: NodeId(1) });
    }

    #[test]
    fn two_node_epoch_is_one_transition() {
        let g = graph(2, &[(1, 2, 1.0)]);
        let p = LearningParams::default();
        let mut st = LearnerState::new(&g, &p).unwrap();
        let r = RewardMatrix::from_base(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let tr = st.run_epoch(&g, &mut StaticEnv::new(&r), NodeId(2), &p, &mut rng).unwrap();
            assert_eq!(tr.visited, vec![NodeId(1), NodeId(2)]);
            assert_eq!(tr.outcome, EpisodeOutcome::ReachedGoal);
        }
        assert_eq!(st.now, 10);
    }

    #[test]
    fn trapped_and_truncated_episodes() {
        // 1 -> 2 -> 3, goal 3, node 3 forbidden: trapped at 2
        let g = graph(3, &[(1, 2, 1.0), (2, 3, 1.0), (2, 1, 1.0)]);
        let p = LearningParams { step_cap_factor: 1, ..Default::default() };
        let r = RewardMatrix::from_base(&g);
        let blocked: BTreeSet<_> = [NodeId(3)].into_iter().collect();
        let mut env = StaticEnv { rewards: &r, forbidden: Some(&blocked) };
        let mut st = LearnerState::new(&g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stats = st.train_window(&g, &mut env, NodeId(3), &p, &mut rng).unwrap();
        assert_eq!(stats.reached_goal, 0);
        assert_eq!(stats.trapped + stats.truncated, 100);
        assert!(stats.truncated > 0);

        // 1 -> 2 with goal 1 and no way back: node 2 is trapped
        let g = graph(2, &[(1, 2, 1.0)]);
        let r = RewardMatrix::from_base(&g);
        let mut st = LearnerState::new(&g, &p).unwrap();
        let tr = st.run_epoch(&g, &mut StaticEnv::new(&r), NodeId(1), &p, &mut rng).unwrap();
        assert_eq!(tr.outcome, EpisodeOutcome::Trapped);
        assert_eq!(tr.visited, vec![NodeId(2)]);
    }

    #[test]
    fn diamond_visits_every_edge() {
        let g = graph(4, &[(1, 2, 1.0), (1, 3, 2.0), (2, 4, 1.0), (3, 4, 1.0)]);
        let p = LearningParams { epochs: 1000, ..Default::default() };
        let r = RewardMatrix::from_base(&g);
        let mut st = LearnerState::new(&g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        st.train_window(&g, &mut StaticEnv::new(&r), NodeId(4), &p, &mut rng).unwrap();
        assert!(st.visits.iter().all(|&v| v > 0));
        assert_eq!(st.q, vec![2.0, 3.0, 1.0, 1.0]);
    }

    #[test]
    fn zero_epochs_rejected() {
        let g = graph(2, &[(1, 2, 1.0)]);
        let p = LearningParams { epochs: 0, ..Default::default() };
        let r = RewardMatrix::from_base(&g);
        let mut st = LearnerState::new(&g, &LearningParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = st.train_window(&g, &mut StaticEnv::new(&r), NodeId(2), &p, &mut rng).unwrap_err();
        assert_eq!(err, LearnerError::Params(ParamError::ZeroEpochs));
    }

    #[test]
    fn dense_snapshot_layout() {
        let g = graph(3, &[(1, 2, 1.0), (3, 1, 2.0)]);
        let p = LearningParams::default();
        let st = LearnerState::new(&g, &p).unwrap();
        let snap = st.snapshot(&g, &p);
        assert_eq!(snap.q_opt[0][1], Some(1e6));
        assert_eq!(snap.q_opt[2][0], Some(1e6));
        assert_eq!(snap.q_opt[1][0], None);
        assert_eq!(snap.q.len(), 3);
    }
}
