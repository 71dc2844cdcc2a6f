//! Developmental graph cellular automaton.
//!
//! A genome holds two networks shared by every node. Each growth step is
//! synchronous: per-node neighborhood features are read from the pre-step
//! graph, an action MLP picks a structural decision per node, the graph is
//! restructured in one shot, and a state SLP then rewrites every node state
//! from post-restructure features.
//!
//! Features are `[onehot(state) | in-counts by state | out-counts by state |
//! 1.0]`, so the networks carry no separate bias terms. A self-loop counts
//! once as an in-edge and once as an out-edge.
//!
//! Restructure semantics: removed nodes go first, taking incident edges.
//! Each divider spawns one child (fresh ids, handed out in ascending parent
//! id), whose provisional state copies the parent. Edge replication reads
//! the pre-step graph and only targets nodes that survive the step; children
//! of other parents do not exist yet from any node's point of view. Finally
//! every node with no incident edges at all is dropped.

use crate::graph::{GraphError, NodeId, StateGraph};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const ACTION_LOGITS: usize = 11;
const ACTION_BASE: usize = 0;
const FROM_BASE: usize = 3;
const TO_BASE: usize = 6;
const TONEW_BASE: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DgcaError {
    #[error("seed state {state} is out of range for {s} states")]
    SeedStateOutOfRange { state: u8, s: u8 },
    #[error("{which} chromosome has {got} genes, expected {expected}")]
    ChromosomeLength { which: &'static str, expected: usize, got: usize },
    #[error("zero hidden units")]
    ZeroHidden,
    #[error("no decision for node {0:?}")]
    MissingDecision(NodeId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Remove,
    Divide,
    Stasis,
}

/// Edge from the parent's side into the new node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FromExisting {
    None,
    ParentToNew,
    ReplicateIn,
}

/// Edge from the new node back into the existing graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToExisting {
    None,
    NewToParent,
    ReplicateOut,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToNew {
    None,
    SelfLoop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDecision {
    pub action: Action,
    pub from_existing: FromExisting,
    pub to_existing: ToExisting,
    pub to_new: ToNew,
}

impl NodeDecision {
    pub const STASIS: NodeDecision = NodeDecision {
        action: Action::Stasis,
        from_existing: FromExisting::None,
        to_existing: ToExisting::None,
        to_new: ToNew::None,
    };
}

/// Shared genome: an action MLP (hidden tanh layer, eleven linear logits)
/// and a state SLP, both reading the same feature vector. Chromosomes are
/// flat row-major weight lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GenomeJson", try_from = "GenomeJson")]
pub struct Genome {
    s: u8,
    hidden: usize,
    mlp: Vec<f64>,
    slp: Vec<f64>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
    sm: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct GenomeJson {
    s: u8,
    hidden: usize,
    mlp: Vec<f64>,
    slp: Vec<f64>,
}

impl From<Genome> for GenomeJson {
    fn from(g: Genome) -> Self {
        GenomeJson { s: g.s, hidden: g.hidden, mlp: g.mlp, slp: g.slp }
    }
}

impl TryFrom<GenomeJson> for Genome {
    type Error = DgcaError;
    fn try_from(j: GenomeJson) -> Result<Self, Self::Error> {
        Genome::from_chromosomes(j.s, j.hidden, j.mlp, j.slp)
    }
}

impl Genome {
    /// Feature vector length: onehot + in-counts + out-counts + bias.
    pub fn feature_len(s: u8) -> usize {
        3 * s as usize + 1
    }

    pub fn mlp_len(s: u8, hidden: usize) -> usize {
        hidden * Self::feature_len(s) + ACTION_LOGITS * hidden
    }

    pub fn slp_len(s: u8) -> usize {
        s as usize * Self::feature_len(s)
    }

    pub fn from_chromosomes(
        s: u8,
        hidden: usize,
        mlp: Vec<f64>,
        slp: Vec<f64>,
    ) -> Result<Self, DgcaError> {
        if s == 0 {
            return Err(DgcaError::Graph(GraphError::ZeroStates));
        }
        if hidden == 0 {
            return Err(DgcaError::ZeroHidden);
        }
        let d = Self::feature_len(s);
        if mlp.len() != Self::mlp_len(s, hidden) {
            return Err(DgcaError::ChromosomeLength {
                which: "mlp",
                expected: Self::mlp_len(s, hidden),
                got: mlp.len(),
            });
        }
        if slp.len() != Self::slp_len(s) {
            return Err(DgcaError::ChromosomeLength {
                which: "slp",
                expected: Self::slp_len(s),
                got: slp.len(),
            });
        }
        let w1 = DMatrix::from_row_slice(hidden, d, &mlp[..hidden * d]);
        let w2 = DMatrix::from_row_slice(ACTION_LOGITS, hidden, &mlp[hidden * d..]);
        let sm = DMatrix::from_row_slice(s as usize, d, &slp);
        Ok(Self { s, hidden, mlp, slp, w1, w2, sm })
    }

    pub fn random(s: u8, hidden: usize, rng: &mut impl Rng) -> Result<Self, DgcaError> {
        let mlp = (0..Self::mlp_len(s, hidden)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let slp = (0..Self::slp_len(s)).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Self::from_chromosomes(s, hidden, mlp, slp)
    }

    pub fn s(&self) -> u8 {
        self.s
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn mlp_chromosome(&self) -> &[f64] {
        &self.mlp
    }

    pub fn slp_chromosome(&self) -> &[f64] {
        &self.slp
    }
}

/// First strictly greatest entry, so ties resolve to the lowest index.
fn argmax(slice: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in slice.iter().enumerate().skip(1) {
        if v > slice[best] {
            best = i;
        }
    }
    best
}

/// Per-node neighborhood features read from `g`, keyed by node, in id order.
pub fn neighborhood_features(g: &StateGraph) -> BTreeMap<NodeId, DVector<f64>> {
    let s = g.s() as usize;
    let d = Genome::feature_len(g.s());
    let mut feats: BTreeMap<NodeId, DVector<f64>> = g
        .nodes()
        .map(|(id, state)| {
            let mut f = DVector::zeros(d);
            f[state as usize] = 1.0;
            f[d - 1] = 1.0;
            (id, f)
        })
        .collect();
    for (src, dst) in g.edges() {
        let src_state = g.state_of(src).expect("edge endpoint exists") as usize;
        let dst_state = g.state_of(dst).expect("edge endpoint exists") as usize;
        feats.get_mut(&dst).expect("edge endpoint exists")[s + src_state] += 1.0;
        feats.get_mut(&src).expect("edge endpoint exists")[2 * s + dst_state] += 1.0;
    }
    feats
}

pub fn action_forward(genome: &Genome, features: &DVector<f64>) -> NodeDecision {
    let hidden = (&genome.w1 * features).map(f64::tanh);
    let logits = &genome.w2 * hidden;
    let l = logits.as_slice();
    let action = match argmax(&l[ACTION_BASE..ACTION_BASE + 3]) {
        0 => Action::Remove,
        1 => Action::Divide,
        _ => Action::Stasis,
    };
    let from_existing = match argmax(&l[FROM_BASE..FROM_BASE + 3]) {
        0 => FromExisting::None,
        1 => FromExisting::ParentToNew,
        _ => FromExisting::ReplicateIn,
    };
    let to_existing = match argmax(&l[TO_BASE..TO_BASE + 3]) {
        0 => ToExisting::None,
        1 => ToExisting::NewToParent,
        _ => ToExisting::ReplicateOut,
    };
    let to_new = match argmax(&l[TONEW_BASE..TONEW_BASE + 2]) {
        0 => ToNew::None,
        _ => ToNew::SelfLoop,
    };
    NodeDecision { action, from_existing, to_existing, to_new }
}

pub fn state_forward(genome: &Genome, features: &DVector<f64>) -> u8 {
    let logits = &genome.sm * features;
    argmax(logits.as_slice()) as u8
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StepStats {
    pub removed: usize,
    pub divided: usize,
    pub stasis: usize,
}

/// Applies one synchronous restructuring. `next_id` is the first unused node
/// id; the advanced value comes back with the new graph.
pub fn restructure(
    g: &StateGraph,
    decisions: &BTreeMap<NodeId, NodeDecision>,
    mut next_id: u64,
) -> Result<(StateGraph, u64, StepStats), DgcaError> {
    let mut stats = StepStats::default();
    let mut out = StateGraph::new(g.s())?;
    for (id, state) in g.nodes() {
        let d = decisions.get(&id).ok_or(DgcaError::MissingDecision(id))?;
        match d.action {
            Action::Remove => stats.removed += 1,
            Action::Divide => {
                stats.divided += 1;
                out.add_node(id, state)?;
            }
            Action::Stasis => {
                stats.stasis += 1;
                out.add_node(id, state)?;
            }
        }
    }
    for (src, dst) in g.edges() {
        if out.contains(src) && out.contains(dst) {
            out.add_edge(src, dst)?;
        }
    }
    // Children, in ascending parent id. Replication reads the pre-step
    // edges, so children of other parents are invisible here.
    for (parent, state) in g.nodes() {
        let d = decisions[&parent];
        if d.action != Action::Divide {
            continue;
        }
        let child = NodeId(next_id);
        next_id += 1;
        out.add_node(child, state)?;
        match d.from_existing {
            FromExisting::None => {}
            FromExisting::ParentToNew => out.add_edge(parent, child)?,
            FromExisting::ReplicateIn => {
                for (src, dst) in g.edges() {
                    if dst == parent && out.contains(src) {
                        out.add_edge(src, child)?;
                    }
                }
            }
        }
        match d.to_existing {
            ToExisting::None => {}
            ToExisting::NewToParent => out.add_edge(child, parent)?,
            ToExisting::ReplicateOut => {
                for (src, dst) in g.edges() {
                    if src == parent && out.contains(dst) {
                        out.add_edge(child, dst)?;
                    }
                }
            }
        }
        if d.to_new == ToNew::SelfLoop {
            out.add_edge(child, child)?;
        }
    }
    let isolated: Vec<NodeId> =
        out.node_ids().filter(|&id| out.total_degree(id) == 0).collect();
    for id in isolated {
        out.remove_node(id)?;
    }
    Ok((out, next_id, stats))
}

/// One full step: decide on the pre-step graph, restructure, then rewrite
/// every state from post-restructure features.
pub fn step(
    g: &StateGraph,
    genome: &Genome,
    next_id: u64,
) -> Result<(StateGraph, u64, StepStats), DgcaError> {
    let feats = neighborhood_features(g);
    let decisions: BTreeMap<NodeId, NodeDecision> =
        feats.iter().map(|(&id, f)| (id, action_forward(genome, f))).collect();
    let (mut out, next_id, stats) = restructure(g, &decisions, next_id)?;
    let new_feats = neighborhood_features(&out);
    let new_states: Vec<(NodeId, u8)> =
        new_feats.iter().map(|(&id, f)| (id, state_forward(genome, f))).collect();
    for (id, state) in new_states {
        out.set_state(id, state)?;
    }
    Ok((out, next_id, stats))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrowthConfig {
    pub steps: usize,
    /// Node budget the evolutionary loop holds graphs to; growth itself only
    /// stops at four times this.
    pub budget: usize,
    pub seed_state: u8,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self { steps: 100, budget: 64, seed_state: 0 }
    }
}

impl GrowthConfig {
    pub fn hard_cap(&self) -> usize {
        4 * self.budget
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub nodes: usize,
    pub removed: usize,
    pub divided: usize,
    pub stasis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthResult {
    pub graph: StateGraph,
    pub steps_run: usize,
    pub extinct: bool,
    pub overgrown: bool,
    pub trace: Vec<TraceStep>,
}

impl GrowthResult {
    /// One JSON object per step plus a final flags line.
    pub fn trace_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.trace {
            out.push_str(&serde_json::to_string(t).expect("trace serializes"));
            out.push('\n');
        }
        out.push_str(
            &serde_json::to_string(
                &serde_json::json!({ "extinct": self.extinct, "overgrown": self.overgrown }),
            )
            .expect("flags serialize"),
        );
        out.push('\n');
        out
    }
}

/// Runs the automaton from a single seed node. The seed carries a self-loop;
/// without one it would count as isolated and no genome could grow anything.
pub fn grow(genome: &Genome, cfg: &GrowthConfig) -> Result<GrowthResult, DgcaError> {
    if cfg.seed_state >= genome.s() {
        return Err(DgcaError::SeedStateOutOfRange { state: cfg.seed_state, s: genome.s() });
    }
    let mut g = StateGraph::new(genome.s())?;
    g.add_node(NodeId(0), cfg.seed_state)?;
    g.add_edge(NodeId(0), NodeId(0))?;
    let mut next_id = 1u64;
    let mut trace = Vec::with_capacity(cfg.steps);
    let mut extinct = false;
    let mut overgrown = false;
    let mut steps_run = 0;
    for n in 1..=cfg.steps {
        let (next, id, stats) = step(&g, genome, next_id)?;
        g = next;
        next_id = id;
        steps_run = n;
        trace.push(TraceStep {
            step: n,
            nodes: g.node_count(),
            removed: stats.removed,
            divided: stats.divided,
            stasis: stats.stasis,
        });
        if g.is_empty() {
            extinct = true;
            break;
        }
        if g.node_count() > cfg.hard_cap() {
            overgrown = true;
            break;
        }
    }
    Ok(GrowthResult { graph: g, steps_run, extinct, overgrown, trace })
}
