//! Directed network graph: nodes are neighborhoods (states), directed edges
//! are the actions available from each node.
//!
//! Edges are stored densely. Every directed edge gets an [`EdgeId`] in
//! `(from node, adjacency order)` order, and all per-edge tables in the crate
//! (rewards, Q, B, RR, U, Q_opt) are plain vectors indexed by that id.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(index: usize) -> Self {
        NodeId(index as u32 + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense index of a directed edge inside a [`NetworkGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub x: f64,
    pub y: f64,
}

impl Node {
    pub fn new(id: u32, name: impl Into<String>, x: f64, y: f64) -> Self {
        Node { id: NodeId(id), name: name.into(), x, y }
    }
}

/// Undirected shared border; expands to two directed edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Border {
    pub a: NodeId,
    pub b: NodeId,
    pub cost: f64,
}

/// One directed edge with its own cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectedEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("topology needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("node ids must be contiguous 1..={expected}; missing {missing}")]
    NonContiguousIds { expected: usize, missing: NodeId },
    #[error("edge ({from}, {to}) references unknown node {unknown}")]
    UnknownEdgeNode { from: NodeId, to: NodeId, unknown: NodeId },
    #[error("edge ({from}, {to}) has negative or non-finite cost {cost}")]
    BadCost { from: NodeId, to: NodeId, cost: f64 },
    #[error("self-loop on node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge ({from}, {to})")]
    DuplicateEdge { from: NodeId, to: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("({from}, {to}) is not an edge")]
    NotAnEdge { from: NodeId, to: NodeId },
}

/// Why a source/destination pair cannot be routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum RouteDiagnostic {
    #[error("endpoints equal ({0})")]
    EndpointsEqual(NodeId),
    #[error("unknown source {0}")]
    UnknownSource(NodeId),
    #[error("unknown destination {0}")]
    UnknownDestination(NodeId),
    #[error("destination {dest} unreachable from {origin}")]
    Unreachable { origin: NodeId, dest: NodeId },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    adjacency: Vec<Vec<NodeId>>,
    // first edge id of each node's out-edges; edges of node i are
    // offsets[i]..offsets[i + 1]
    offsets: Vec<usize>,
    edges: Vec<(NodeId, NodeId)>,
    base_cost: Vec<f64>,
    lookup: BTreeMap<(NodeId, NodeId), EdgeId>,
}

impl NetworkGraph {
    /// Builds a graph from undirected borders. Each border becomes the pair
    /// `(a, b)` and `(b, a)` with the same cost.
    pub fn from_borders(nodes: Vec<Node>, borders: &[Border]) -> Result<Self, TopologyError> {
        let mut edges = Vec::with_capacity(borders.len() * 2);
        for b in borders {
            edges.push(DirectedEdge { from: b.a, to: b.b, cost: b.cost });
            edges.push(DirectedEdge { from: b.b, to: b.a, cost: b.cost });
        }
        Self::from_edges(nodes, &edges)
    }

    pub fn from_edges(mut nodes: Vec<Node>, edges: &[DirectedEdge]) -> Result<Self, TopologyError> {
        let n = nodes.len();
        if n < 2 {
            return Err(TopologyError::TooFewNodes(n));
        }
        let mut seen = BTreeSet::new();
        for node in &nodes {
            if !seen.insert(node.id) {
                return Err(TopologyError::DuplicateNode(node.id));
            }
        }
        for id in 1..=n as u32 {
            if !seen.contains(&NodeId(id)) {
                return Err(TopologyError::NonContiguousIds { expected: n, missing: NodeId(id) });
            }
        }
        nodes.sort_by_key(|node| node.id);

        let known = |id: NodeId| id.0 >= 1 && id.0 as usize <= n;
        let mut adjacency: Vec<Vec<(NodeId, f64)>> = alloc::vec![Vec::new(); n];
        let mut pairs = BTreeSet::new();
        for e in edges {
            for end in [e.from, e.to] {
                if !known(end) {
                    return Err(TopologyError::UnknownEdgeNode { from: e.from, to: e.to, unknown: end });
                }
            }
            if e.from == e.to {
                return Err(TopologyError::SelfLoop(e.from));
            }
            if !(e.cost >= 0.0) || !e.cost.is_finite() {
                return Err(TopologyError::BadCost { from: e.from, to: e.to, cost: e.cost });
            }
            if !pairs.insert((e.from, e.to)) {
                return Err(TopologyError::DuplicateEdge { from: e.from, to: e.to });
            }
            adjacency[e.from.index()].push((e.to, e.cost));
        }

        let mut offsets = Vec::with_capacity(n + 1);
        let mut flat = Vec::with_capacity(edges.len());
        let mut base_cost = Vec::with_capacity(edges.len());
        let mut lookup = BTreeMap::new();
        for (i, outs) in adjacency.iter().enumerate() {
            offsets.push(flat.len());
            for &(to, cost) in outs {
                let from = NodeId::from_index(i);
                lookup.insert((from, to), EdgeId(flat.len()));
                flat.push((from, to));
                base_cost.push(cost);
            }
        }
        offsets.push(flat.len());

        Ok(NetworkGraph {
            nodes,
            adjacency: adjacency.into_iter().map(|v| v.into_iter().map(|(to, _)| to).collect()).collect(),
            offsets,
            edges: flat,
            base_cost,
            lookup,
        })
    }

    /// `rows x cols` 4-neighbour grid with unit costs. Node ids run row-major
    /// from 1, positions are `(col, row)`.
    pub fn grid(rows: usize, cols: usize) -> Result<Self, TopologyError> {
        let id = |r: usize, c: usize| NodeId((r * cols + c + 1) as u32);
        let mut nodes = Vec::with_capacity(rows * cols);
        let mut borders = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                nodes.push(Node { id: id(r, c), name: alloc::format!("r{r}c{c}"), x: c as f64, y: r as f64 });
                if c + 1 < cols {
                    borders.push(Border { a: id(r, c), b: id(r, c + 1), cost: 1.0 });
                }
                if r + 1 < rows {
                    borders.push(Border { a: id(r, c), b: id(r + 1, c), cost: 1.0 });
                }
            }
        }
        Self::from_borders(nodes, &borders)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 >= 1 && (id.0 as usize) <= self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.contains(id).then(|| &self.nodes[id.index()])
    }

    /// Out-neighbours of `id` in stored order.
    pub fn neighbors(&self, id: NodeId) -> Result<&[NodeId], TopologyError> {
        if !self.contains(id) {
            return Err(TopologyError::UnknownNode(id));
        }
        Ok(&self.adjacency[id.index()])
    }

    /// Out-edges of `id` as `(edge, head)` pairs, same order as [`neighbors`](Self::neighbors).
    ///
    /// Panics if `id` is not in the graph.
    #[inline]
    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = (EdgeId, NodeId)> + '_ {
        let i = id.index();
        let start = self.offsets[i];
        self.adjacency[i].iter().enumerate().map(move |(k, &to)| (EdgeId(start + k), to))
    }

    #[inline]
    pub fn edge_range(&self, id: NodeId) -> core::ops::Range<usize> {
        let i = id.index();
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn edge_id(&self, from: NodeId, to: NodeId) -> Option<EdgeId> {
        self.lookup.get(&(from, to)).copied()
    }

    pub fn edge(&self, id: EdgeId) -> (NodeId, NodeId) {
        self.edges[id.0]
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    pub fn base_cost(&self, id: EdgeId) -> f64 {
        self.base_cost[id.0]
    }

    pub fn base_costs(&self) -> &[f64] {
        &self.base_cost
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(a, b)| self.lookup.contains_key(&(b, a)))
    }

    /// Nodes reachable from `source`, skipping `blocked` nodes (the source
    /// itself is always entered).
    pub fn reachable_from(&self, source: NodeId, blocked: &BTreeSet<NodeId>) -> Vec<bool> {
        let mut seen = alloc::vec![false; self.node_count()];
        if !self.contains(source) {
            return seen;
        }
        let mut queue = VecDeque::new();
        seen[source.index()] = true;
        queue.push_back(source);
        while let Some(cur) = queue.pop_front() {
            for &next in &self.adjacency[cur.index()] {
                if !seen[next.index()] && !blocked.contains(&next) {
                    seen[next.index()] = true;
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    /// Checks that `source != dest`, both exist, and `dest` is reachable.
    pub fn validate_route_endpoints(&self, source: NodeId, dest: NodeId) -> Result<(), RouteDiagnostic> {
        if !self.contains(source) {
            return Err(RouteDiagnostic::UnknownSource(source));
        }
        if !self.contains(dest) {
            return Err(RouteDiagnostic::UnknownDestination(dest));
        }
        if source == dest {
            return Err(RouteDiagnostic::EndpointsEqual(source));
        }
        if !self.reachable_from(source, &BTreeSet::new())[dest.index()] {
            return Err(RouteDiagnostic::Unreachable { origin: source, dest });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn nodes(n: u32) -> Vec<Node> {
        (1..=n).map(|i| Node::new(i, alloc::format!("n{i}"), i as f64, 0.0)).collect()
    }

    fn diamond() -> NetworkGraph {
        let e = |a, b| DirectedEdge { from: NodeId(a), to: NodeId(b), cost: 1.0 };
        NetworkGraph::from_edges(nodes(4), &[e(1, 2), e(1, 3), e(2, 4), e(3, 4)]).unwrap()
    }

    #[test]
    fn border_expands_to_both_directions() {
        let g = NetworkGraph::from_borders(nodes(2), &[Border { a: NodeId(1), b: NodeId(2), cost: 1.0 }]).unwrap();
        assert_eq!(g.edges(), &[(NodeId(1), NodeId(2)), (NodeId(2), NodeId(1))]);
        assert_eq!(g.base_costs(), &[1.0, 1.0]);
        assert!(g.is_symmetric());
    }

    #[test]
    fn rejects_self_loop() {
        let err = NetworkGraph::from_edges(nodes(2), &[DirectedEdge { from: NodeId(1), to: NodeId(1), cost: 0.0 }])
            .unwrap_err();
        assert_eq!(err, TopologyError::SelfLoop(NodeId(1)));
        assert!(alloc::format!("{err}").contains("self-loop"));
    }

    #[test]
    fn rejects_bad_documents() {
        let mut dup = nodes(3);
        dup[2].id = NodeId(2);
        assert_eq!(NetworkGraph::from_edges(dup, &[]).unwrap_err(), TopologyError::DuplicateNode(NodeId(2)));

        let mut gap = nodes(3);
        gap[2].id = NodeId(5);
        assert!(matches!(NetworkGraph::from_edges(gap, &[]), Err(TopologyError::NonContiguousIds { .. })));

        let unknown = DirectedEdge { from: NodeId(1), to: NodeId(9), cost: 1.0 };
        assert!(matches!(
            NetworkGraph::from_edges(nodes(3), &[unknown]),
            Err(TopologyError::UnknownEdgeNode { unknown: NodeId(9), .. })
        ));

        let negative = Border { a: NodeId(1), b: NodeId(2), cost: -0.5 };
        assert!(matches!(NetworkGraph::from_borders(nodes(2), &[negative]), Err(TopologyError::BadCost { .. })));

        assert_eq!(NetworkGraph::from_edges(nodes(1), &[]).unwrap_err(), TopologyError::TooFewNodes(1));
    }

    #[test]
    fn neighbors_in_stored_order() {
        let g = diamond();
        assert_eq!(g.neighbors(NodeId(1)).unwrap(), &[NodeId(2), NodeId(3)]);
        assert!(g.neighbors(NodeId(4)).unwrap().is_empty());
        assert_eq!(g.neighbors(NodeId(7)).unwrap_err(), TopologyError::UnknownNode(NodeId(7)));
        let ids: Vec<_> = g.out_edges(NodeId(1)).collect();
        assert_eq!(ids, vec![(EdgeId(0), NodeId(2)), (EdgeId(1), NodeId(3))]);
        assert_eq!(g.edge_id(NodeId(3), NodeId(4)), Some(EdgeId(3)));
    }

    #[test]
    fn grid_interior_has_four_neighbors() {
        let g = NetworkGraph::grid(5, 5).unwrap();
        // brute force: count grid cells at manhattan distance 1 from (2, 2)
        let mut expected = 0;
        for r in 0..5i32 {
            for c in 0..5i32 {
                if (r - 2).abs() + (c - 2).abs() == 1 {
                    expected += 1;
                }
            }
        }
        assert_eq!(g.neighbors(NodeId(13)).unwrap().len(), expected);
        assert_eq!(g.neighbors(NodeId(1)).unwrap().len(), 2);
        assert!(g.is_symmetric());
    }

    #[test]
    fn endpoint_diagnostics() {
        let g = diamond();
        assert_eq!(g.validate_route_endpoints(NodeId(1), NodeId(4)), Ok(()));
        assert_eq!(g.validate_route_endpoints(NodeId(2), NodeId(2)), Err(RouteDiagnostic::EndpointsEqual(NodeId(2))));
        assert_eq!(
            g.validate_route_endpoints(NodeId(4), NodeId(1)),
            Err(RouteDiagnostic::Unreachable { origin: NodeId(4), dest: NodeId(1) })
        );
        assert_eq!(g.validate_route_endpoints(NodeId(0), NodeId(1)), Err(RouteDiagnostic::UnknownSource(NodeId(0))));
        assert_eq!(
            g.validate_route_endpoints(NodeId(1), NodeId(5)),
            Err(RouteDiagnostic::UnknownDestination(NodeId(5)))
        );
    }
}
