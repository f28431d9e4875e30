//! Window-to-window metrics.

use alloc::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoptDelta {
    /// Summed entrywise absolute difference.
    pub sum: f64,
    /// Largest entrywise absolute difference.
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("Q_opt tables differ in size: {prev} vs {cur}")]
pub struct DomainMismatch {
    pub prev: usize,
    pub cur: usize,
}

pub fn qopt_delta(prev: &[f64], cur: &[f64]) -> Result<QoptDelta, DomainMismatch> {
    if prev.len() != cur.len() {
        return Err(DomainMismatch { prev: prev.len(), cur: cur.len() });
    }
    let mut sum = 0.0;
    let mut max: f64 = 0.0;
    for (a, b) in prev.iter().zip(cur) {
        let d = libm::fabs(b - a);
        sum += d;
        max = max.max(d);
    }
    Ok(QoptDelta { sum, max })
}

/// Precision/recall of a predicted leak set against the leaks that
/// actually showed up. Both are `None` when their denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionScore {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn prediction_score(predicted: &BTreeSet<NodeId>, actual: &BTreeSet<NodeId>) -> PredictionScore {
    let hits = predicted.intersection(actual).count() as f64;
    PredictionScore {
        precision: (!predicted.is_empty()).then(|| hits / predicted.len() as f64),
        recall: (!actual.is_empty()).then(|| hits / actual.len() as f64),
    }
}
