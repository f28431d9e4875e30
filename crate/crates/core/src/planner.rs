//! Turning a trained `Q_opt` table into recommendations: a source to
//! destination path, the nodes to isolate, and the nodes likely to leak next.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fault::{FaultScores, RewardMatrix};
use crate::topology::{NetworkGraph, NodeId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub nodes: Vec<NodeId>,
    /// Sum of the window's shaped costs along the path.
    pub total_cost: f64,
}

impl Path {
    pub fn contains(&self, n: NodeId) -> bool {
        self.nodes.contains(&n)
    }
}

/// Sums `costs` along consecutive pairs of `nodes`; `None` if a pair is not
/// an edge.
pub fn path_cost(g: &NetworkGraph, costs: &RewardMatrix, nodes: &[NodeId]) -> Option<f64> {
    let mut total = 0.0;
    for pair in nodes.windows(2) {
        total += costs.cost(g.edge_id(pair[0], pair[1])?);
    }
    Some(total)
}

/// Greedy walk on `Q_opt` with backtracking.
///
/// From the current node the unvisited, non-forbidden neighbour with the
/// smallest `Q_opt` is taken (ties to the smaller id). A node whose
/// candidates are exhausted is popped and stays excluded. Returns `None`
/// once the source itself runs out of candidates.
pub fn extract_path(
    g: &NetworkGraph,
    q_opt: &[f64],
    costs: &RewardMatrix,
    source: NodeId,
    dest: NodeId,
    forbidden: &BTreeSet<NodeId>,
) -> Option<Path> {
    if !g.contains(source) || !g.contains(dest) || forbidden.contains(&source) || forbidden.contains(&dest) {
        return None;
    }
    let mut explored = alloc::vec![false; g.node_count()];
    explored[source.index()] = true;
    let mut stack = alloc::vec![source];
    while let Some(&cur) = stack.last() {
        if cur == dest {
            let total_cost = path_cost(g, costs, &stack).unwrap_or(f64::INFINITY);
            return Some(Path { nodes: stack, total_cost });
        }
        let next = g
            .out_edges(cur)
            .filter(|&(_, to)| !explored[to.index()] && !forbidden.contains(&to))
            .min_by(|a, b| q_opt[a.0 .0].total_cmp(&q_opt[b.0 .0]).then(a.1.cmp(&b.1)));
        match next {
            Some((_, to)) => {
                explored[to.index()] = true;
                stack.push(to);
            }
            None => {
                stack.pop();
            }
        }
    }
    None
}

/// `(leaky ∪ dangerous) \ path`.
pub fn isolation_set(path: Option<&Path>, leaky: &BTreeSet<NodeId>, dangerous: &BTreeSet<NodeId>) -> BTreeSet<NodeId> {
    leaky.union(dangerous).copied().filter(|n| path.is_none_or(|p| !p.contains(*n))).collect()
}

/// Nodes with some fault history whose score reaches `tau`.
pub fn predict_leaks(f: &FaultScores, tau: f64) -> BTreeSet<NodeId> {
    f.scores.iter().enumerate().filter(|&(_, &s)| s > 0.0 && s >= tau).map(|(i, _)| NodeId::from_index(i)).collect()
}

/// Nearest-rank `quantile` of the nonzero scores; 0 when none are nonzero.
pub fn score_quantile(f: &FaultScores, quantile: f64) -> f64 {
    let mut nz: Vec<f64> = f.scores.iter().copied().filter(|&s| s > 0.0).collect();
    if nz.is_empty() {
        return 0.0;
    }
    nz.sort_by(f64::total_cmp);
    let rank = libm::ceil(quantile.clamp(0.0, 1.0) * nz.len() as f64) as usize;
    nz[rank.clamp(1, nz.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{DirectedEdge, Node};
    use alloc::vec;

    fn graph(n: u32, edges: &[(u32, u32, f64)]) -> NetworkGraph {
        let nodes = (1..=n).map(|i| Node::new(i, "", 0.0, 0.0)).collect();
        let edges: Vec<_> =
            edges.iter().map(|&(a, b, c)| DirectedEdge { from: NodeId(a), to: NodeId(b), cost: c }).collect();
        NetworkGraph::from_edges(nodes, &edges).unwrap()
    }

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn two_nodes() {
        let g = graph(2, &[(1, 2, 3.0)]);
        let r = RewardMatrix::from_base(&g);
        let p = extract_path(&g, &[0.0], &r, NodeId(1), NodeId(2), &BTreeSet::new()).unwrap();
        assert_eq!(p.nodes, ids(&[1, 2]));
        assert_eq!(p.total_cost, 3.0);
    }

    #[test]
    fn diamond_with_forbidden_arm() {
        let g = graph(4, &[(1, 2, 1.0), (1, 3, 1.0), (2, 4, 1.0), (3, 4, 1.0)]);
        let r = RewardMatrix::from_base(&g);
        let q_opt = [1.0, 5.0, 1.0, 1.0];
        let none = BTreeSet::new();
        assert_eq!(extract_path(&g, &q_opt, &r, NodeId(1), NodeId(4), &none).unwrap().nodes, ids(&[1, 2, 4]));
        let forbid: BTreeSet<_> = [NodeId(2)].into_iter().collect();
        assert_eq!(extract_path(&g, &q_opt, &r, NodeId(1), NodeId(4), &forbid).unwrap().nodes, ids(&[1, 3, 4]));
        let both: BTreeSet<_> = [NodeId(2), NodeId(3)].into_iter().collect();
        assert_eq!(extract_path(&g, &q_opt, &r, NodeId(1), NodeId(4), &both), None);
    }

    #[test]
    fn backtracks_out_of_dead_end() {
        // 1 -> 2 looks cheapest but 2 is a dead end
        let g = graph(4, &[(1, 2, 1.0), (1, 3, 1.0), (3, 4, 1.0), (2, 1, 1.0)]);
        let r = RewardMatrix::from_base(&g);
        let q_opt = [0.0, 9.0, 1.0, 0.0];
        let p = extract_path(&g, &q_opt, &r, NodeId(1), NodeId(4), &BTreeSet::new()).unwrap();
        assert_eq!(p.nodes, ids(&[1, 3, 4]));
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let g = graph(4, &[(1, 3, 1.0), (1, 2, 1.0), (2, 4, 1.0), (3, 4, 1.0)]);
        let r = RewardMatrix::from_base(&g);
        let p = extract_path(&g, &[2.0, 2.0, 1.0, 1.0], &r, NodeId(1), NodeId(4), &BTreeSet::new()).unwrap();
        assert_eq!(p.nodes, ids(&[1, 2, 4]));
    }

    #[test]
    fn isolation() {
        let leaky: BTreeSet<_> = ids(&[5, 7]).into_iter().collect();
        let dangerous: BTreeSet<_> = ids(&[9]).into_iter().collect();
        let path = Path { nodes: ids(&[1, 5, 8]), total_cost: 0.0 };
        assert_eq!(isolation_set(Some(&path), &leaky, &dangerous), ids(&[7, 9]).into_iter().collect());
        assert!(isolation_set(Some(&path), &BTreeSet::new(), &BTreeSet::new()).is_empty());
        // adjacency to the path does not matter
        let near: BTreeSet<_> = ids(&[2]).into_iter().collect();
        assert_eq!(isolation_set(Some(&path), &BTreeSet::new(), &near), near);
        assert_eq!(isolation_set(None, &leaky, &dangerous).len(), 3);
    }

    #[test]
    fn prediction_thresholds() {
        let zero = FaultScores::zero(4);
        assert!(predict_leaks(&zero, 1.0).is_empty());
        assert!(predict_leaks(&zero, 0.0).is_empty());
        let f = FaultScores { window: 3, scores: vec![0.0, 0.5, 2.0, 4.0] };
        assert_eq!(predict_leaks(&f, 0.0), ids(&[2, 3, 4]).into_iter().collect());
        assert_eq!(predict_leaks(&f, 2.0), ids(&[3, 4]).into_iter().collect());
        assert_eq!(score_quantile(&f, 0.75), 4.0);
        assert_eq!(score_quantile(&f, 0.5), 2.0);
        assert_eq!(score_quantile(&zero, 0.75), 0.0);
    }
}
