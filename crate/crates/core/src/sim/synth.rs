//! Synthetic topologies and leak histories.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::LeakEvent;
use crate::topology::{Border, NetworkGraph, Node, NodeId, TopologyError};

/// Map-like district layout: a jittered `rows x cols` grid where neighbouring
/// cells share a border, plus a random diagonal border in some grid squares.
/// Borders have unit cost. `7 x 17` gives 119 districts.
pub fn synthetic_districts(
    rows: usize,
    cols: usize,
    diagonal_prob: f64,
    seed: u64,
) -> Result<NetworkGraph, TopologyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = |r: usize, c: usize| NodeId((r * cols + c + 1) as u32);
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let jx: f64 = rng.random_range(-0.3..0.3);
            let jy: f64 = rng.random_range(-0.3..0.3);
            nodes.push(Node {
                id: id(r, c),
                name: alloc::format!("district-{}", id(r, c)),
                x: c as f64 + jx,
                y: r as f64 + jy,
            });
        }
    }
    let mut borders = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                borders.push(Border { a: id(r, c), b: id(r, c + 1), cost: 1.0 });
            }
            if r + 1 < rows {
                borders.push(Border { a: id(r, c), b: id(r + 1, c), cost: 1.0 });
            }
            if r + 1 < rows && c + 1 < cols && rng.random::<f64>() < diagonal_prob {
                // one diagonal per square keeps the layout planar
                if rng.random::<bool>() {
                    borders.push(Border { a: id(r, c), b: id(r + 1, c + 1), cost: 1.0 });
                } else {
                    borders.push(Border { a: id(r, c + 1), b: id(r + 1, c), cost: 1.0 });
                }
            }
        }
    }
    NetworkGraph::from_borders(nodes, &borders)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakGenConfig {
    pub count: usize,
    /// Pareto shape of per-node leak propensity; smaller is more skewed.
    pub propensity_shape: f64,
    /// Mean of the exponential repair-time distribution, hours.
    pub repair_mean_hours: f64,
    /// Mean of the exponential repair-cost distribution.
    pub cost_mean: f64,
}

impl Default for LeakGenConfig {
    fn default() -> Self {
        LeakGenConfig { count: 1816, propensity_shape: 1.2, repair_mean_hours: 24.0, cost_mean: 2000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenError {
    #[error("{name} must be positive and finite, got {value}")]
    BadParameter { name: &'static str, value: f64 },
    #[error("need at least one node")]
    NoNodes,
}

impl LeakGenConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        for (name, value) in [
            ("propensity_shape", self.propensity_shape),
            ("repair_mean_hours", self.repair_mean_hours),
            ("cost_mean", self.cost_mean),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(GenError::BadParameter { name, value });
            }
        }
        Ok(())
    }
}

fn round2(x: f64) -> f64 {
    libm::round(x * 100.0) / 100.0
}

fn exponential<R: Rng>(rng: &mut R, mean: f64) -> f64 {
    // 1 - u lies in (0, 1]
    -mean * libm::log(1.0 - rng.random::<f64>())
}

/// Leak events over nodes `1..=node_count`. Each node gets a heavy-tailed
/// propensity; events pick nodes proportionally to it. Sequence numbers run
/// `1..=count`; repair time and cost are exponential, rounded to cents.
pub fn generate_synthetic_leaks(node_count: usize, cfg: &LeakGenConfig, seed: u64) -> Result<Vec<LeakEvent>, GenError> {
    cfg.validate()?;
    if node_count == 0 {
        return Err(GenError::NoNodes);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cumulative = Vec::with_capacity(node_count);
    let mut total = 0.0;
    for _ in 0..node_count {
        let u = 1.0 - rng.random::<f64>();
        total += libm::pow(u, -1.0 / cfg.propensity_shape);
        cumulative.push(total);
    }
    let mut events = Vec::with_capacity(cfg.count);
    for seq in 1..=cfg.count as u64 {
        let x = rng.random::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= x).min(node_count - 1);
        events.push(LeakEvent {
            seq,
            node: NodeId::from_index(idx),
            repair_hours: round2(exponential(&mut rng, cfg.repair_mean_hours)),
            cost: round2(exponential(&mut rng, cfg.cost_mean)),
        });
    }
    Ok(events)
}
