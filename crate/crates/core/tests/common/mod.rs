#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use pqroute_core::topology::Border;
use pqroute_core::{NetworkGraph, Node, NodeId};
use rand::Rng;

/// Random connected graph: a random spanning tree plus extra borders with
/// probability `extra`. Integer costs in `1..=max_cost`.
pub fn random_connected<R: Rng>(rng: &mut R, n: usize, extra: f64, max_cost: u32) -> NetworkGraph {
    let nodes: Vec<_> = (1..=n as u32).map(|i| Node::new(i, format!("n{i}"), i as f64, 0.0)).collect();
    let mut pairs = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        pairs.insert((j, i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < extra {
                pairs.insert((i, j));
            }
        }
    }
    let borders: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| Border {
            a: NodeId::from_index(a),
            b: NodeId::from_index(b),
            cost: rng.random_range(1..=max_cost) as f64,
        })
        .collect();
    NetworkGraph::from_borders(nodes, &borders).unwrap()
}

/// Reachability by plain BFS over `neighbors`.
pub fn bfs_reaches(g: &NetworkGraph, from: NodeId, to: NodeId) -> bool {
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([from]);
    seen[from.index()] = true;
    while let Some(u) = queue.pop_front() {
        if u == to {
            return true;
        }
        for &v in g.neighbors(u).unwrap() {
            if !seen[v.index()] {
                seen[v.index()] = true;
                queue.push_back(v);
            }
        }
    }
    false
}

/// Cost-to-go to `goal` for every node by Bellman-Ford relaxation over
/// `cost(edge index)`.
pub fn bellman_ford_to(g: &NetworkGraph, goal: NodeId, cost: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; g.node_count()];
    d[goal.index()] = 0.0;
    for _ in 0..g.node_count() {
        let mut changed = false;
        for (k, &(from, to)) in g.edges().iter().enumerate() {
            let via = cost(k) + d[to.index()];
            if from != goal && via < d[from.index()] {
                d[from.index()] = via;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    d
}
