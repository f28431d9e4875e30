//! Leak events, windowing, discounted per-node fault scores and the
//! per-window environment cost matrix.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{EdgeId, NetworkGraph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakEvent {
    pub seq: u64,
    pub node: NodeId,
    pub repair_hours: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    /// 1-based window index.
    pub index: usize,
    pub events: Vec<LeakEvent>,
    /// Set on a trailing batch holding fewer than `M` events.
    pub partial: bool,
}

impl WindowBatch {
    /// Distinct leaking nodes in this batch, ascending.
    pub fn leak_nodes(&self) -> alloc::collections::BTreeSet<NodeId> {
        self.events.iter().map(|e| e.node).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultWeights {
    pub w_count: f64,
    pub w_time: f64,
    pub w_cost: f64,
    /// Coupling from a node's fault score to the cost of entering it.
    pub lambda: f64,
    /// History discount, `0 < b < 1`.
    pub b: f64,
}

impl Default for FaultWeights {
    fn default() -> Self {
        FaultWeights { w_count: 1.0, w_time: 0.1, w_cost: 0.001, lambda: 1.0, b: 0.9 }
    }
}

impl FaultWeights {
    pub fn validate(&self) -> Result<(), FaultError> {
        for (name, v) in
            [("w_count", self.w_count), ("w_time", self.w_time), ("w_cost", self.w_cost), ("lambda", self.lambda)]
        {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(FaultError::BadWeight { name, value: v });
            }
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(FaultError::BadWeight { name: "b", value: self.b });
        }
        Ok(())
    }

    /// One event's contribution to its node's aggregate.
    #[inline]
    pub fn event_weight(&self, e: &LeakEvent) -> f64 {
        self.w_count + self.w_time * e.repair_hours + self.w_cost * e.cost
    }
}

/// Discounted fault score per node, indexed by `NodeId::index()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScores {
    pub window: usize,
    pub scores: Vec<f64>,
}

impl FaultScores {
    pub fn zero(node_count: usize) -> Self {
        FaultScores { window: 0, scores: alloc::vec![0.0; node_count] }
    }

    pub fn get(&self, node: NodeId) -> f64 {
        self.scores[node.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaultError {
    #[error("window size must be at least 1")]
    ZeroWindow,
    #[error("events out of order: seq {next} follows {prev}")]
    Unordered { prev: u64, next: u64 },
    #[error("event {seq} has negative or non-finite {field}")]
    BadEvent { seq: u64, field: &'static str },
    #[error("event {seq} references unknown node {node}")]
    UnknownNode { seq: u64, node: NodeId },
    #[error("window index mismatch: scores at {scores}, batch {batch}")]
    WindowMismatch { scores: usize, batch: usize },
    #[error("fault scores cover {got} nodes, graph has {expected}")]
    MissingScores { expected: usize, got: usize },
    #[error("weight {name} out of range: {value}")]
    BadWeight { name: &'static str, value: f64 },
}

/// Checks event ordering and field ranges against a graph of `node_count`
/// nodes.
pub fn validate_events(events: &[LeakEvent], node_count: usize) -> Result<(), FaultError> {
    for (i, e) in events.iter().enumerate() {
        if i > 0 && e.seq <= events[i - 1].seq {
            return Err(FaultError::Unordered { prev: events[i - 1].seq, next: e.seq });
        }
        if e.node.0 == 0 || e.node.0 as usize > node_count {
            return Err(FaultError::UnknownNode { seq: e.seq, node: e.node });
        }
        if !(e.repair_hours >= 0.0) || !e.repair_hours.is_finite() {
            return Err(FaultError::BadEvent { seq: e.seq, field: "repair_hours" });
        }
        if !(e.cost >= 0.0) || !e.cost.is_finite() {
            return Err(FaultError::BadEvent { seq: e.seq, field: "cost" });
        }
    }
    Ok(())
}

/// Splits an ordered event stream into consecutive windows of `m` events.
/// A shorter trailing window is kept and flagged `partial`.
pub fn chunk_events(events: &[LeakEvent], m: usize) -> Result<Vec<WindowBatch>, FaultError> {
    if m == 0 {
        return Err(FaultError::ZeroWindow);
    }
    for pair in events.windows(2) {
        if pair[1].seq <= pair[0].seq {
            return Err(FaultError::Unordered { prev: pair[0].seq, next: pair[1].seq });
        }
    }
    Ok(events
        .chunks(m)
        .enumerate()
        .map(|(i, chunk)| WindowBatch { index: i + 1, events: chunk.to_vec(), partial: chunk.len() < m })
        .collect())
}

/// `F_j^k = b * F_j^{k-1} + agg_j(batch)`.
pub fn update_fault_scores(
    prev: &FaultScores,
    batch: &WindowBatch,
    w: &FaultWeights,
) -> Result<FaultScores, FaultError> {
    if batch.index != prev.window + 1 {
        return Err(FaultError::WindowMismatch { scores: prev.window, batch: batch.index });
    }
    let n = prev.scores.len();
    let mut agg = alloc::vec![0.0; n];
    for e in &batch.events {
        if e.node.0 == 0 || e.node.0 as usize > n {
            return Err(FaultError::UnknownNode { seq: e.seq, node: e.node });
        }
        agg[e.node.index()] += w.event_weight(e);
    }
    let scores = prev.scores.iter().zip(&agg).map(|(&f, &a)| w.b * f + a).collect();
    Ok(FaultScores { window: batch.index, scores })
}

/// Per-edge cost matrix for one window, indexed by [`EdgeId`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardMatrix {
    pub window: usize,
    pub costs: Vec<f64>,
}

impl RewardMatrix {
    pub fn from_base(g: &NetworkGraph) -> Self {
        RewardMatrix { window: 0, costs: g.base_costs().to_vec() }
    }

    #[inline]
    pub fn cost(&self, e: EdgeId) -> f64 {
        self.costs[e.0]
    }
}

/// `r_ij = base_cost(i, j) + lambda * F_j`: entering a faulty node is what
/// costs.
pub fn build_reward_matrix(g: &NetworkGraph, f: &FaultScores, w: &FaultWeights) -> Result<RewardMatrix, FaultError> {
    if f.scores.len() != g.node_count() {
        return Err(FaultError::MissingScores { expected: g.node_count(), got: f.scores.len() });
    }
    let costs = g.edges().iter().zip(g.base_costs()).map(|(&(_, to), &base)| base + w.lambda * f.get(to)).collect();
    Ok(RewardMatrix { window: f.window, costs })
}
