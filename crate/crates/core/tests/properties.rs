mod common;

use std::collections::BTreeSet;

use pqroute_core::fault::{build_reward_matrix, update_fault_scores};
use pqroute_core::learner::StaticEnv;
use pqroute_core::operator::{prune_actions, shape_rewards, InterventionOverlay, OverlaySource, Shaper, ShapingParams};
use pqroute_core::planner::extract_path;
use pqroute_core::sim::qopt_delta;
use pqroute_core::topology::Border;
use pqroute_core::{
    FaultScores, FaultWeights, LeakEvent, LearnerState, LearningParams, NetworkGraph, Node, NodeId, RewardMatrix,
    Transition, WindowBatch,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_from_seed(seed: u64, n: usize) -> NetworkGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    common::random_connected(&mut rng, n, 0.25, 9)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn learner_tables_keep_their_bounds(seed in any::<u64>(), n in 2usize..10, steps in 1usize..400) {
        let g = graph_from_seed(seed, n);
        let p = LearningParams::default();
        let mut s = LearnerState::new(&g, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let costs = RewardMatrix { window: 1, costs: (0..g.edge_count()).map(|_| rng.random_range(0.0..50.0)).collect() };
        let env = StaticEnv::new(&costs);
        let goal = NodeId(n as u32);
        for _ in 0..steps {
            let k = rng.random_range(0..g.edge_count());
            let (from, to) = g.edge(pqroute_core::EdgeId(k));
            if from == goal {
                continue;
            }
            let before = s.best[k];
            s.now += 1;
            let next_min = s.next_state_min(&g, to, goal, &env, p.big_init);
            s.q_update(&g, &Transition { from, to, cost: costs.costs[k] }, next_min, &p).unwrap();
            prop_assert!(s.best[k] <= before);
            prop_assert!(s.best[k] <= s.q[k]);
            for e in 0..g.edge_count() {
                prop_assert!(s.recovery[e] <= 0.0);
                prop_assert!(s.q_opt[e] >= s.best[e]);
            }
        }
    }

    #[test]
    fn fault_recursion_matches_discounted_sum(
        seed in any::<u64>(),
        b in 0.01f64..0.99,
        windows in 1usize..12,
    ) {
        let n = 6;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = FaultWeights { b, ..FaultWeights::default() };
        let mut seq = 0;
        let batches: Vec<Vec<LeakEvent>> = (0..windows)
            .map(|_| {
                (0..rng.random_range(0..8))
                    .map(|_| {
                        seq += 1;
                        LeakEvent {
                            seq,
                            node: NodeId(rng.random_range(1..=n as u32)),
                            repair_hours: rng.random_range(0.0..48.0),
                            cost: rng.random_range(0.0..5000.0),
                        }
                    })
                    .collect()
            })
            .collect();
        let mut f = FaultScores::zero(n);
        for (i, events) in batches.iter().enumerate() {
            f = update_fault_scores(&f, &WindowBatch { index: i + 1, events: events.clone(), partial: false }, &w).unwrap();
        }
        let k = batches.len();
        for j in 1..=n as u32 {
            let mut brute = 0.0;
            for (t, events) in batches.iter().enumerate() {
                let age = (k - (t + 1)) as i32;
                for e in events.iter().filter(|e| e.node == NodeId(j)) {
                    brute += b.powi(age) * (w.w_count + w.w_time * e.repair_hours + w.w_cost * e.cost);
                }
            }
            prop_assert!((f.get(NodeId(j)) - brute).abs() <= 1e-9 * brute.max(1.0));
        }
    }

    #[test]
    fn rewards_never_drop_below_base(seed in any::<u64>(), n in 2usize..10) {
        let g = graph_from_seed(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = FaultScores { window: 1, scores: (0..n).map(|_| rng.random_range(0.0..100.0)).collect() };
        let r = build_reward_matrix(&g, &f, &FaultWeights::default()).unwrap();
        for (k, c) in r.costs.iter().enumerate() {
            prop_assert!(*c >= g.base_costs()[k]);
        }
    }

    #[test]
    fn shaped_costs_are_nonnegative(seed in any::<u64>(), n in 3usize..10, relief in 0.0f64..=1.0) {
        let g = graph_from_seed(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = FaultWeights::default();
        let f = FaultScores { window: 1, scores: (0..n).map(|_| rng.random_range(0.0..100.0)).collect() };
        let r = build_reward_matrix(&g, &f, &w).unwrap();
        let mut ov = InterventionOverlay::empty(1, OverlaySource::Scripted);
        for i in 2..n as u32 {
            match rng.random_range(0..3) {
                0 => { ov.dangerous.insert(NodeId(i)); }
                1 => { ov.safe.insert(NodeId(i)); }
                _ => {}
            }
        }
        let params = ShapingParams { safe_relief: relief, ..ShapingParams::default() };
        let shaped = shape_rewards(&g, &r, &ov, &Shaper { params: &params, faults: &f, weights: &w });
        for (k, &(_, to)) in g.edges().iter().enumerate() {
            prop_assert!(shaped.costs[k] >= 0.0);
            if ov.dangerous.contains(&to) {
                prop_assert!(shaped.costs[k] >= params.danger_penalty);
            }
        }
    }

    #[test]
    fn pruning_is_an_idempotent_subsequence(actions in prop::collection::vec(1u32..20, 0..15), marks in prop::collection::btree_set(1u32..20, 0..6)) {
        let actions: Vec<_> = actions.into_iter().map(NodeId).collect();
        let mut ov = InterventionOverlay::empty(1, OverlaySource::Live);
        ov.dangerous = marks.into_iter().map(NodeId).collect();
        let once = prune_actions(&actions, &ov);
        prop_assert_eq!(prune_actions(&once, &ov), once.clone());
        prop_assert!(once.iter().all(|a| !ov.dangerous.contains(a)));
        let mut it = actions.iter();
        prop_assert!(once.iter().all(|a| it.any(|b| b == a)));
    }

    #[test]
    fn borders_are_symmetric(seed in any::<u64>(), n in 2usize..12) {
        let g = graph_from_seed(seed, n);
        prop_assert!(g.is_symmetric());
        for (k, &(from, to)) in g.edges().iter().enumerate() {
            let back = g.edge_id(to, from).unwrap();
            prop_assert_eq!(g.base_cost(back), g.base_costs()[k]);
        }
        // neighbour order is stable across rebuilds
        let rebuilt = graph_from_seed(seed, n);
        for id in g.node_ids() {
            prop_assert_eq!(g.neighbors(id).unwrap(), rebuilt.neighbors(id).unwrap());
        }
    }

    #[test]
    fn qopt_delta_is_symmetric_and_exact(a in prop::collection::vec(-1e3f64..1e3, 0..40), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|x| if rng.random::<bool>() { *x } else { x + rng.random_range(-5.0..5.0) }).collect();
        let d = qopt_delta(&a, &b).unwrap();
        prop_assert_eq!(d, qopt_delta(&b, &a).unwrap());
        let mut brute = 0.0;
        let mut max = 0.0f64;
        for i in 0..a.len() {
            brute += (a[i] - b[i]).abs();
            max = max.max((a[i] - b[i]).abs());
        }
        prop_assert_eq!(d.sum, brute);
        prop_assert_eq!(d.max, max);
        prop_assert_eq!(qopt_delta(&a, &a).unwrap().sum, 0.0);
    }

    #[test]
    fn extracted_paths_avoid_forbidden_nodes(seed in any::<u64>(), n in 3usize..12) {
        let g = graph_from_seed(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q_opt: Vec<f64> = (0..g.edge_count()).map(|_| rng.random_range(0.0..10.0)).collect();
        let forbidden: BTreeSet<_> = (2..n as u32).filter(|_| rng.random::<f64>() < 0.3).map(NodeId).collect();
        let r = RewardMatrix::from_base(&g);
        let (s, t) = (NodeId(1), NodeId(n as u32));
        let path = extract_path(&g, &q_opt, &r, s, t, &forbidden);
        let reachable = g.reachable_from(s, &forbidden)[t.index()];
        prop_assert_eq!(path.is_some(), reachable);
        if let Some(p) = path {
            prop_assert_eq!(p.nodes.first(), Some(&s));
            prop_assert_eq!(p.nodes.last(), Some(&t));
            prop_assert!(p.nodes.iter().all(|v| !forbidden.contains(v)));
            prop_assert!(p.nodes.windows(2).all(|w| g.edge_id(w[0], w[1]).is_some()));
        }
    }
}

#[test]
fn endpoint_diagnostics_agree_with_bfs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut unreachable = 0;
    for _ in 0..100 {
        let n = rng.random_range(2..12usize);
        let nodes: Vec<_> = (1..=n as u32).map(|i| Node::new(i, "", 0.0, 0.0)).collect();
        // sparse, possibly disconnected
        let mut borders = Vec::new();
        for a in 1..=n as u32 {
            for b in a + 1..=n as u32 {
                if rng.random::<f64>() < 0.15 {
                    borders.push(Border { a: NodeId(a), b: NodeId(b), cost: 1.0 });
                }
            }
        }
        let g = NetworkGraph::from_borders(nodes, &borders).unwrap();
        let s = NodeId(rng.random_range(1..=n as u32));
        let t = NodeId(rng.random_range(1..=n as u32));
        let verdict = g.validate_route_endpoints(s, t);
        if s == t {
            assert!(verdict.is_err());
            continue;
        }
        let reach = common::bfs_reaches(&g, s, t);
        assert_eq!(verdict.is_ok(), reach, "{s} -> {t} on {borders:?}");
        if !reach {
            unreachable += 1;
            assert!(verdict.unwrap_err().to_string().contains("unreachable"));
        }
    }
    assert!(unreachable > 0);
}
