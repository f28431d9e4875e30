//! Predictive, resilient Q-routing on a directed infrastructure graph with a
//! human operator in the loop.
//!
//! The learner walks the graph towards a fixed destination, paying per-edge
//! costs that grow with the discounted leak history of the node being
//! entered. Between (or during) training windows an operator can mark nodes
//! dangerous or safe, either reshaping the costs the learner sees or pruning
//! dangerous nodes from its action set. After each window the predicted-cost
//! table yields a source-to-destination path, a set of nodes to isolate, and
//! a leak forecast.
//!
//! The crate is `no_std` with `alloc`; file formats, the CLI and the session
//! service live in the `pqroute` crate.

#![no_std]
// parameter checks use negated comparisons so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod fault;
pub mod learner;
pub mod operator;
pub mod planner;
pub mod sim;
pub mod topology;

pub use fault::{FaultScores, FaultWeights, LeakEvent, RewardMatrix, WindowBatch};
pub use learner::{LearnerState, LearningParams, TrainingEnv, Transition};
pub use operator::{InterventionOverlay, LiveCommand, LiveLabel, ShapingParams, Variant};
pub use planner::Path;
pub use topology::{EdgeId, NetworkGraph, Node, NodeId};
