//! The human operator: dangerous/safe labels, the shaped reward overlay, the
//! per-step action filter, and a scripted stochastic stand-in used for
//! unattended experiments.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fault::{FaultScores, FaultWeights, RewardMatrix};
use crate::learner::TrainingEnv;
use crate::topology::{EdgeId, NetworkGraph, NodeId};

/// How the operator reaches the learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// No operator.
    Plain,
    /// Labels reshape the reward matrix once per window.
    RewardShaping,
    /// Dangerous nodes are removed from the action set at every step.
    ActionPruning,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::RewardShaping => "reward_shaping",
            Variant::ActionPruning => "action_pruning",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Dangerous,
    Safe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlaySource {
    Scripted,
    Live,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionOverlay {
    pub window: usize,
    pub dangerous: BTreeSet<NodeId>,
    pub safe: BTreeSet<NodeId>,
    pub source: OverlaySource,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OperatorError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is a route endpoint and cannot be marked dangerous")]
    EndpointProtected(NodeId),
    #[error("node {node} is already labelled {existing:?}; clear it first")]
    LabelConflict { node: NodeId, existing: Label },
    #[error("safe labels are not available in action pruning")]
    SafeNotAllowed,
    #[error("node {0} is both dangerous and safe")]
    Overlap(NodeId),
}

impl InterventionOverlay {
    pub fn empty(window: usize, source: OverlaySource) -> Self {
        InterventionOverlay { window, dangerous: BTreeSet::new(), safe: BTreeSet::new(), source }
    }

    pub fn is_empty(&self) -> bool {
        self.dangerous.is_empty() && self.safe.is_empty()
    }

    pub fn label(&self, node: NodeId) -> Option<Label> {
        if self.dangerous.contains(&node) {
            Some(Label::Dangerous)
        } else if self.safe.contains(&node) {
            Some(Label::Safe)
        } else {
            None
        }
    }

    pub fn validate(&self, g: &NetworkGraph, source: NodeId, dest: NodeId) -> Result<(), OperatorError> {
        for &n in self.dangerous.iter().chain(&self.safe) {
            if !g.contains(n) {
                return Err(OperatorError::UnknownNode(n));
            }
        }
        if let Some(&n) = self.dangerous.intersection(&self.safe).next() {
            return Err(OperatorError::Overlap(n));
        }
        for end in [source, dest] {
            if self.dangerous.contains(&end) {
                return Err(OperatorError::EndpointProtected(end));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingParams {
    /// Cost added to every edge entering a dangerous node.
    pub danger_penalty: f64,
    /// Fraction of the fault component removed on edges entering a safe node.
    pub safe_relief: f64,
}

impl Default for ShapingParams {
    fn default() -> Self {
        ShapingParams { danger_penalty: 1e4, safe_relief: 1.0 }
    }
}

impl ShapingParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.danger_penalty > 0.0) || !self.danger_penalty.is_finite() {
            return Err("danger_penalty must be positive and finite");
        }
        if !(0.0..=1.0).contains(&self.safe_relief) {
            return Err("safe_relief must be in [0, 1]");
        }
        Ok(())
    }
}

/// Everything needed to price an edge under an overlay.
#[derive(Debug, Clone, Copy)]
pub struct Shaper<'a> {
    pub params: &'a ShapingParams,
    pub faults: &'a FaultScores,
    pub weights: &'a FaultWeights,
}

impl Shaper<'_> {
    /// Operator term `R_H` for an edge entering `to`.
    #[inline]
    pub fn human_cost(&self, to: NodeId, ov: &InterventionOverlay) -> f64 {
        if ov.dangerous.contains(&to) {
            self.params.danger_penalty
        } else if ov.safe.contains(&to) {
            -self.params.safe_relief * self.weights.lambda * self.faults.get(to)
        } else {
            0.0
        }
    }

    /// `max(r + R_H, 0)`.
    #[inline]
    pub fn shaped_cost(&self, env_cost: f64, to: NodeId, ov: &InterventionOverlay) -> f64 {
        let c = env_cost + self.human_cost(to, ov);
        if c > 0.0 {
            c
        } else {
            0.0
        }
    }
}

/// Applies the operator overlay to a whole environment matrix.
pub fn shape_rewards(
    g: &NetworkGraph,
    ra: &RewardMatrix,
    ov: &InterventionOverlay,
    shaper: &Shaper<'_>,
) -> RewardMatrix {
    if ov.is_empty() {
        return ra.clone();
    }
    let costs = g.edges().iter().zip(&ra.costs).map(|(&(_, to), &r)| shaper.shaped_cost(r, to, ov)).collect();
    RewardMatrix { window: ra.window, costs }
}

/// `actions` without the dangerous nodes, order preserved.
pub fn prune_actions(actions: &[NodeId], ov: &InterventionOverlay) -> Vec<NodeId> {
    actions.iter().copied().filter(|a| !ov.dangerous.contains(a)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LiveLabel {
    Dangerous,
    Safe,
    Clear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LiveCommand {
    pub node: NodeId,
    pub label: LiveLabel,
}

/// Applies one operator command. Route endpoints cannot be marked
/// dangerous, a labelled node must be cleared before it takes the other
/// label, and pruning has no safe label.
pub fn apply_live_intervention(
    current: &InterventionOverlay,
    cmd: LiveCommand,
    g: &NetworkGraph,
    endpoints: (NodeId, NodeId),
    variant: Variant,
) -> Result<InterventionOverlay, OperatorError> {
    if !g.contains(cmd.node) {
        return Err(OperatorError::UnknownNode(cmd.node));
    }
    let mut next = current.clone();
    match cmd.label {
        LiveLabel::Dangerous => {
            if cmd.node == endpoints.0 || cmd.node == endpoints.1 {
                return Err(OperatorError::EndpointProtected(cmd.node));
            }
            if next.safe.contains(&cmd.node) {
                return Err(OperatorError::LabelConflict { node: cmd.node, existing: Label::Safe });
            }
            next.dangerous.insert(cmd.node);
        }
        LiveLabel::Safe => {
            if variant == Variant::ActionPruning {
                return Err(OperatorError::SafeNotAllowed);
            }
            if next.dangerous.contains(&cmd.node) {
                return Err(OperatorError::LabelConflict { node: cmd.node, existing: Label::Dangerous });
            }
            next.safe.insert(cmd.node);
        }
        LiveLabel::Clear => {
            next.dangerous.remove(&cmd.node);
            next.safe.remove(&cmd.node);
        }
    }
    Ok(next)
}

/// Where per-step commands come from during pruning-mode training.
pub trait CommandSource {
    fn poll(&mut self) -> Option<LiveCommand>;
}

impl CommandSource for () {
    fn poll(&mut self) -> Option<LiveCommand> {
        None
    }
}

/// Training environment for action pruning: per-step shaped costs plus a
/// per-step filter that removes dangerous heads. Commands from `commands`
/// are applied before each step.
pub struct PruningEnv<'a, S: CommandSource> {
    g: &'a NetworkGraph,
    rewards: &'a RewardMatrix,
    shaper: Shaper<'a>,
    overlay: InterventionOverlay,
    endpoints: (NodeId, NodeId),
    commands: S,
    step: u64,
    applied: Vec<(u64, LiveCommand)>,
    rejected: Vec<(u64, LiveCommand, OperatorError)>,
}

impl<'a, S: CommandSource> PruningEnv<'a, S> {
    pub fn new(
        g: &'a NetworkGraph,
        rewards: &'a RewardMatrix,
        shaper: Shaper<'a>,
        overlay: InterventionOverlay,
        endpoints: (NodeId, NodeId),
        commands: S,
    ) -> Self {
        PruningEnv {
            g,
            rewards,
            shaper,
            overlay,
            endpoints,
            commands,
            step: 0,
            applied: Vec::new(),
            rejected: Vec::new(),
        }
    }

    pub fn overlay(&self) -> &InterventionOverlay {
        &self.overlay
    }

    /// Commands applied mid-window, tagged with the in-window step count.
    pub fn applied(&self) -> &[(u64, LiveCommand)] {
        &self.applied
    }

    pub fn rejected(&self) -> &[(u64, LiveCommand, OperatorError)] {
        &self.rejected
    }

    pub fn into_overlay(self) -> InterventionOverlay {
        self.overlay
    }
}

impl<S: CommandSource> TrainingEnv for PruningEnv<'_, S> {
    fn before_step(&mut self) {
        self.step += 1;
        while let Some(cmd) = self.commands.poll() {
            match apply_live_intervention(&self.overlay, cmd, self.g, self.endpoints, Variant::ActionPruning) {
                Ok(next) => {
                    self.overlay = next;
                    self.applied.push((self.step, cmd));
                }
                Err(e) => self.rejected.push((self.step, cmd, e)),
            }
        }
    }

    #[inline]
    fn allows(&self, _from: NodeId, to: NodeId) -> bool {
        !self.overlay.dangerous.contains(&to)
    }

    #[inline]
    fn cost(&self, edge: EdgeId, _from: NodeId, to: NodeId) -> f64 {
        self.shaper.shaped_cost(self.rewards.cost(edge), to, &self.overlay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScriptConfig {
    /// Chance that the operator acts at all in a window.
    pub intervention_prob: f64,
    /// New dangerous labels per acting window ~ uniform{0..=max}.
    pub max_new_dangerous: u32,
    /// New safe labels per acting window (reward shaping only).
    pub max_new_safe: u32,
    /// Label lifetime in windows ~ uniform{min..=max}.
    pub persistence_min: u32,
    pub persistence_max: u32,
}

impl Default for ScriptConfig {
    fn default() -> Self {
        ScriptConfig {
            intervention_prob: 0.3,
            max_new_dangerous: 3,
            max_new_safe: 3,
            persistence_min: 3,
            persistence_max: 10,
        }
    }
}

impl ScriptConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(0.0..=1.0).contains(&self.intervention_prob) {
            return Err("intervention_prob must be in [0, 1]");
        }
        if self.persistence_min == 0 || self.persistence_min > self.persistence_max {
            return Err("persistence bounds must satisfy 1 <= min <= max");
        }
        Ok(())
    }
}

/// Randomised operator. Labels persist for a drawn number of windows and
/// then expire. In pruning mode only new dangerous labels are issued; in
/// shaping mode safe labels are issued too and existing labels may flip.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    cfg: ScriptConfig,
    variant: Variant,
    endpoints: (NodeId, NodeId),
    node_count: usize,
    // node -> (label, first window it no longer applies)
    labels: BTreeMap<NodeId, (Label, usize)>,
    rng: ChaCha8Rng,
}

impl ScriptedOperator {
    pub fn new(cfg: ScriptConfig, variant: Variant, endpoints: (NodeId, NodeId), node_count: usize, seed: u64) -> Self {
        ScriptedOperator {
            cfg,
            variant,
            endpoints,
            node_count,
            labels: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Overlay in force for `window`. Call once per window in order.
    pub fn step(&mut self, window: usize) -> InterventionOverlay {
        self.labels.retain(|_, &mut (_, until)| until > window);
        if self.variant != Variant::Plain && self.rng.random::<f64>() < self.cfg.intervention_prob {
            let dangerous = self.rng.random_range(0..=self.cfg.max_new_dangerous);
            for _ in 0..dangerous {
                if let Some(node) = self.draw(Label::Dangerous) {
                    let until = window + self.duration();
                    self.labels.insert(node, (Label::Dangerous, until));
                }
            }
            if self.variant == Variant::RewardShaping {
                let safe = self.rng.random_range(0..=self.cfg.max_new_safe);
                for _ in 0..safe {
                    if let Some(node) = self.draw(Label::Safe) {
                        let until = window + self.duration();
                        self.labels.insert(node, (Label::Safe, until));
                    }
                }
            }
        }
        let mut ov = InterventionOverlay::empty(window, OverlaySource::Scripted);
        for (&node, &(label, _)) in &self.labels {
            match label {
                Label::Dangerous => ov.dangerous.insert(node),
                Label::Safe => ov.safe.insert(node),
            };
        }
        ov
    }

    fn duration(&mut self) -> usize {
        self.rng.random_range(self.cfg.persistence_min..=self.cfg.persistence_max) as usize
    }

    // Endpoints are resampled for dangerous draws; in pruning any labelled
    // node is resampled; in shaping only nodes already carrying `label`.
    fn draw(&mut self, label: Label) -> Option<NodeId> {
        for _ in 0..64 * self.node_count {
            let node = NodeId(self.rng.random_range(1..=self.node_count as u32));
            if label == Label::Dangerous && (node == self.endpoints.0 || node == self.endpoints.1) {
                continue;
            }
            let taken = match (self.variant, self.labels.get(&node)) {
                (_, None) => false,
                (Variant::ActionPruning, Some(_)) => true,
                (_, Some(&(existing, _))) => existing == label,
            };
            if !taken {
                return Some(node);
            }
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptMark {
    pub node: NodeId,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    pub window: usize,
    #[serde(default)]
    pub mark: Vec<ScriptMark>,
    #[serde(default)]
    pub unmark: Vec<NodeId>,
}

/// Replays a fixed intervention script. Entries accumulate: an entry for
/// window `k` changes the overlay from window `k` on.
#[derive(Debug, Clone)]
pub struct ScriptReplay {
    entries: Vec<ScriptEntry>,
    current: InterventionOverlay,
}

impl ScriptReplay {
    pub fn new(mut entries: Vec<ScriptEntry>) -> Self {
        entries.sort_by_key(|e| e.window);
        ScriptReplay { entries, current: InterventionOverlay::empty(0, OverlaySource::Scripted) }
    }

    pub fn validate(
        &self,
        g: &NetworkGraph,
        endpoints: (NodeId, NodeId),
        variant: Variant,
    ) -> Result<(), OperatorError> {
        let mut ov = InterventionOverlay::empty(0, OverlaySource::Scripted);
        for e in &self.entries {
            ov = apply_entry(&ov, e, g, endpoints, variant)?;
        }
        Ok(())
    }

    pub fn step(
        &mut self,
        window: usize,
        g: &NetworkGraph,
        endpoints: (NodeId, NodeId),
        variant: Variant,
    ) -> Result<InterventionOverlay, OperatorError> {
        let mut ov = self.current.clone();
        for e in self.entries.iter().filter(|e| e.window == window) {
            ov = apply_entry(&ov, e, g, endpoints, variant)?;
        }
        ov.window = window;
        self.current = ov.clone();
        Ok(ov)
    }
}

fn apply_entry(
    ov: &InterventionOverlay,
    e: &ScriptEntry,
    g: &NetworkGraph,
    endpoints: (NodeId, NodeId),
    variant: Variant,
) -> Result<InterventionOverlay, OperatorError> {
    let mut next = ov.clone();
    for &node in &e.unmark {
        next = apply_live_intervention(&next, LiveCommand { node, label: LiveLabel::Clear }, g, endpoints, variant)?;
    }
    for m in &e.mark {
        let label = match m.label {
            Label::Dangerous => LiveLabel::Dangerous,
            Label::Safe => LiveLabel::Safe,
        };
        // scripts may flip a label in one entry
        next.dangerous.remove(&m.node);
        next.safe.remove(&m.node);
        next = apply_live_intervention(&next, LiveCommand { node: m.node, label }, g, endpoints, variant)?;
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fault::build_reward_matrix;
    use crate::topology::{Border, Node};
    use alloc::vec;

    fn line(n: u32) -> NetworkGraph {
        let nodes = (1..=n).map(|i| Node::new(i, "", 0.0, 0.0)).collect::<Vec<_>>();
        let borders: Vec<_> = (1..n).map(|i| Border { a: NodeId(i), b: NodeId(i + 1), cost: 1.0 }).collect();
        NetworkGraph::from_borders(nodes, &borders).unwrap()
    }

    fn set(ids: &[u32]) -> BTreeSet<NodeId> {
        ids.iter().map(|&i| NodeId(i)).collect()
    }

    #[test]
    fn empty_overlay_is_identity() {
        let g = line(3);
        let f = FaultScores { window: 1, scores: vec![0.0, 7.2, 1.0] };
        let w = FaultWeights::default();
        let r = build_reward_matrix(&g, &f, &w).unwrap();
        let sp = ShapingParams::default();
        let shaper = Shaper { params: &sp, faults: &f, weights: &w };
        let ov = InterventionOverlay::empty(1, OverlaySource::Live);
        assert_eq!(shape_rewards(&g, &r, &ov, &shaper), r);
    }

    #[test]
    fn dangerous_and_safe_pricing() {
        let g = line(3);
        let f = FaultScores { window: 1, scores: vec![0.0, 7.2, 3.0] };
        let w = FaultWeights::default();
        let r = build_reward_matrix(&g, &f, &w).unwrap();
        let sp = ShapingParams::default();
        let shaper = Shaper { params: &sp, faults: &f, weights: &w };
        let mut ov = InterventionOverlay::empty(1, OverlaySource::Live);
        ov.dangerous.insert(NodeId(2));
        ov.safe.insert(NodeId(3));
        let shaped = shape_rewards(&g, &r, &ov, &shaper);
        let e12 = g.edge_id(NodeId(1), NodeId(2)).unwrap();
        let e23 = g.edge_id(NodeId(2), NodeId(3)).unwrap();
        let e21 = g.edge_id(NodeId(2), NodeId(1)).unwrap();
        assert!((r.cost(e12) - 8.2).abs() < 1e-12);
        assert!((shaped.cost(e12) - 10008.2).abs() < 1e-9);
        assert_eq!(shaped.cost(e23), g.base_cost(e23));
        assert_eq!(shaped.cost(e21), r.cost(e21));
    }

    #[test]
    fn pruning() {
        let mut ov = InterventionOverlay::empty(1, OverlaySource::Live);
        let acts = [NodeId(2), NodeId(3), NodeId(4)];
        assert_eq!(prune_actions(&acts, &ov), acts.to_vec());
        ov.dangerous = set(&[3]);
        assert_eq!(prune_actions(&acts, &ov), vec![NodeId(2), NodeId(4)]);
        ov.dangerous = set(&[2, 3, 4]);
        assert!(prune_actions(&acts, &ov).is_empty());
    }

    #[test]
    fn live_commands() {
        let g = line(10);
        let ends = (NodeId(1), NodeId(10));
        let empty = InterventionOverlay::empty(0, OverlaySource::Live);
        let mark = |node, label| LiveCommand { node: NodeId(node), label };
        let ov =
            apply_live_intervention(&empty, mark(7, LiveLabel::Dangerous), &g, ends, Variant::RewardShaping).unwrap();
        assert_eq!(ov.dangerous, set(&[7]));
        let cleared =
            apply_live_intervention(&ov, mark(7, LiveLabel::Clear), &g, ends, Variant::RewardShaping).unwrap();
        assert!(cleared.is_empty());
        assert_eq!(
            apply_live_intervention(&empty, mark(10, LiveLabel::Dangerous), &g, ends, Variant::RewardShaping),
            Err(OperatorError::EndpointProtected(NodeId(10)))
        );
        assert_eq!(
            apply_live_intervention(&ov, mark(7, LiveLabel::Safe), &g, ends, Variant::RewardShaping),
            Err(OperatorError::LabelConflict { node: NodeId(7), existing: Label::Dangerous })
        );
        assert_eq!(
            apply_live_intervention(&empty, mark(5, LiveLabel::Safe), &g, ends, Variant::ActionPruning),
            Err(OperatorError::SafeNotAllowed)
        );
        assert_eq!(
            apply_live_intervention(&empty, mark(50, LiveLabel::Dangerous), &g, ends, Variant::ActionPruning),
            Err(OperatorError::UnknownNode(NodeId(50)))
        );
    }

    #[test]
    fn scripted_operator_respects_mode() {
        let ends = (NodeId(1), NodeId(30));
        let silent = ScriptConfig { intervention_prob: 0.0, ..Default::default() };
        let mut op = ScriptedOperator::new(silent, Variant::RewardShaping, ends, 30, 9);
        assert!((1..=50).all(|k| op.step(k).is_empty()));

        for seed in 0..20 {
            let mut op = ScriptedOperator::new(ScriptConfig::default(), Variant::ActionPruning, ends, 30, seed);
            for k in 1..=100 {
                let ov = op.step(k);
                assert!(ov.safe.is_empty());
                assert!(!ov.dangerous.contains(&ends.0) && !ov.dangerous.contains(&ends.1));
            }
        }

        let mut op = ScriptedOperator::new(ScriptConfig::default(), Variant::RewardShaping, ends, 30, 5);
        let any_safe = (1..=100).any(|k| !op.step(k).safe.is_empty());
        assert!(any_safe);
    }

    #[test]
    fn scripted_operator_replays() {
        let ends = (NodeId(1), NodeId(30));
        let run = || {
            let mut op = ScriptedOperator::new(ScriptConfig::default(), Variant::RewardShaping, ends, 30, 77);
            (1..=600).map(|k| op.step(k)).map(|ov| (ov.dangerous.len(), ov.safe.len())).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn script_replay_accumulates() {
        let g = line(10);
        let ends = (NodeId(1), NodeId(10));
        let entries = vec![
            ScriptEntry {
                window: 2,
                mark: vec![ScriptMark { node: NodeId(4), label: Label::Dangerous }],
                unmark: vec![],
            },
            ScriptEntry { window: 4, mark: vec![ScriptMark { node: NodeId(4), label: Label::Safe }], unmark: vec![] },
            ScriptEntry { window: 5, mark: vec![], unmark: vec![NodeId(4)] },
        ];
        let mut replay = ScriptReplay::new(entries);
        assert!(replay.validate(&g, ends, Variant::RewardShaping).is_ok());
        assert!(replay.validate(&g, ends, Variant::ActionPruning).is_err());
        let labels: Vec<_> =
            (1..=6).map(|k| replay.step(k, &g, ends, Variant::RewardShaping).unwrap().label(NodeId(4))).collect();
        assert_eq!(labels, vec![None, Some(Label::Dangerous), Some(Label::Dangerous), Some(Label::Safe), None, None]);
    }
}
