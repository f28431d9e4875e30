//! Exact shortest paths, kept apart from the learner so tests can check
//! learned routes against them.

use alloc::collections::{BTreeSet, BinaryHeap};
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::fault::RewardMatrix;
use crate::planner::Path;
use crate::topology::{NetworkGraph, NodeId};

#[derive(PartialEq)]
struct Entry {
    cost: f64,
    node: NodeId,
}

impl Eq for Entry {}

impl Ord for Entry {
    // min-heap on (cost, node id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over `costs`, never entering a `forbidden` node. Equal-cost
/// predecessors resolve to the one settled first, which is the smaller id
/// among equal distances. `None` if `dest` is unreachable.
pub fn dijkstra_oracle(
    g: &NetworkGraph,
    costs: &RewardMatrix,
    source: NodeId,
    dest: NodeId,
    forbidden: &BTreeSet<NodeId>,
) -> Option<Path> {
    if !g.contains(source) || !g.contains(dest) || forbidden.contains(&source) || forbidden.contains(&dest) {
        return None;
    }
    let n = g.node_count();
    let mut dist = alloc::vec![f64::INFINITY; n];
    let mut prev: Vec<Option<NodeId>> = alloc::vec![None; n];
    let mut done = alloc::vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source.index()] = 0.0;
    heap.push(Entry { cost: 0.0, node: source });
    while let Some(Entry { cost, node }) = heap.pop() {
        if done[node.index()] {
            continue;
        }
        done[node.index()] = true;
        if node == dest {
            break;
        }
        for (edge, to) in g.out_edges(node) {
            if forbidden.contains(&to) || done[to.index()] {
                continue;
            }
            let alt = cost + costs.cost(edge);
            if alt < dist[to.index()] {
                dist[to.index()] = alt;
                prev[to.index()] = Some(node);
                heap.push(Entry { cost: alt, node: to });
            }
        }
    }
    if !done[dest.index()] {
        return None;
    }
    let mut nodes = alloc::vec![dest];
    let mut cur = dest;
    while let Some(p) = prev[cur.index()] {
        nodes.push(p);
        cur = p;
    }
    nodes.reverse();
    Some(Path { nodes, total_cost: dist[dest.index()] })
}
