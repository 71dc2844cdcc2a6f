//! Directed multistate graphs and the structural measures taken on them.
//!
//! A `StateGraph` holds nodes with integer states in `[0, S)` and a set of
//! directed edges. Edges are a set: inserting a duplicate is a no-op. Node
//! ids are opaque and never reassigned; all iteration is in ascending id
//! order so downstream consumers are deterministic.
//!
//! Structural measures (components, diameter, centralities, degree Gini)
//! work on the undirected view: edge direction and self-loops are ignored,
//! parallel directions collapse to one undirected edge.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

/// Stable node identifier. Ids are assigned by the grower and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("state {state} out of range for S={s}")]
    StateOutOfRange { state: u8, s: u8 },
    #[error("S must be at least 1")]
    ZeroStates,
}

#[derive(Debug, Error, PartialEq)]
pub enum CentralityError {
    #[error("component has {n_c} nodes; at least {min} required")]
    ComponentTooSmall { n_c: usize, min: usize },
}

/// One weakly connected component: node ids sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentView {
    pub node_ids: Vec<NodeId>,
}

impl ComponentView {
    pub fn n_c(&self) -> usize {
        self.node_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateGraph {
    s: u8,
    nodes: BTreeMap<NodeId, u8>,
    edges: BTreeSet<(NodeId, NodeId)>,
}

impl StateGraph {
    pub fn new(s: u8) -> Result<Self, GraphError> {
        if s == 0 {
            return Err(GraphError::ZeroStates);
        }
        Ok(Self { s, nodes: BTreeMap::new(), edges: BTreeSet::new() })
    }

    /// Convenience constructor for fixtures and tests.
    pub fn from_parts(s: u8, nodes: &[(u64, u8)], edges: &[(u64, u64)]) -> Result<Self, GraphError> {
        let mut g = Self::new(s)?;
        for &(id, state) in nodes {
            g.add_node(NodeId(id), state)?;
        }
        for &(src, dst) in edges {
            g.add_edge(NodeId(src), NodeId(dst))?;
        }
        Ok(g)
    }

    pub fn s(&self) -> u8 {
        self.s
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn state_of(&self, id: NodeId) -> Option<u8> {
        self.nodes.get(&id).copied()
    }

    /// Node ids in ascending order.
    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    /// (id, state) pairs in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, u8)> + '_ {
        self.nodes.iter().map(|(&id, &state)| (id, state))
    }

    /// Directed edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId) -> bool {
        self.edges.contains(&(src, dst))
    }

    pub fn add_node(&mut self, id: NodeId, state: u8) -> Result<(), GraphError> {
        if state >= self.s {
            return Err(GraphError::StateOutOfRange { state, s: self.s });
        }
        if self.nodes.insert(id, state).is_some() {
            return Err(GraphError::DuplicateNode(id));
        }
        Ok(())
    }

    pub fn set_state(&mut self, id: NodeId, state: u8) -> Result<(), GraphError> {
        if state >= self.s {
            return Err(GraphError::StateOutOfRange { state, s: self.s });
        }
        match self.nodes.get_mut(&id) {
            Some(slot) => {
                *slot = state;
                Ok(())
            }
            None => Err(GraphError::UnknownNode(id)),
        }
    }

    /// Inserts a directed edge; inserting an existing edge is a no-op.
    pub fn add_edge(&mut self, src: NodeId, dst: NodeId) -> Result<(), GraphError> {
        if !self.contains(src) {
            return Err(GraphError::UnknownNode(src));
        }
        if !self.contains(dst) {
            return Err(GraphError::UnknownNode(dst));
        }
        self.edges.insert((src, dst));
        Ok(())
    }

    /// Removes a node and every incident edge.
    pub fn remove_node(&mut self, id: NodeId) -> Result<(), GraphError> {
        if self.nodes.remove(&id).is_none() {
            return Err(GraphError::UnknownNode(id));
        }
        self.edges.retain(|&(src, dst)| src != id && dst != id);
        Ok(())
    }

    /// In-degree + out-degree; a self-loop contributes to both.
    pub fn total_degree(&self, id: NodeId) -> usize {
        self.edges
            .iter()
            .map(|&(src, dst)| usize::from(src == id) + usize::from(dst == id))
            .sum()
    }

    /// Fraction of the n*n possible directed edges (self-loops included) present.
    pub fn directed_density(&self) -> f64 {
        let n = self.node_count();
        if n == 0 {
            return 0.0;
        }
        self.edges.len() as f64 / (n * n) as f64
    }

    /// Weakly connected components, ordered by smallest contained node id.
    pub fn components(&self) -> Vec<ComponentView> {
        let adj = self.undirected_adjacency(None);
        let ids: Vec<NodeId> = self.node_ids().collect();
        let mut seen = vec![false; ids.len()];
        let mut out = Vec::new();
        for start in 0..ids.len() {
            if seen[start] {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            let mut members = Vec::new();
            while let Some(v) = queue.pop_front() {
                members.push(ids[v]);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            members.sort_unstable();
            out.push(ComponentView { node_ids: members });
        }
        out
    }

    /// Longest shortest-path distance in the component's undirected view.
    /// A single-node component has diameter 0.
    pub fn diameter(&self, comp: &ComponentView) -> usize {
        let adj = self.undirected_adjacency(Some(comp));
        let n = comp.n_c();
        let mut best = 0;
        for s in 0..n {
            let dist = bfs_distances(&adj, s);
            for &d in &dist {
                best = best.max(d.expect("component is connected"));
            }
        }
        best
    }

    /// Betweenness centrality per node (aligned with `comp.node_ids`), counted
    /// over ordered (s, t) pairs with fractional credit for tied shortest
    /// paths, normalized by (n_c-1)(n_c-2). The center of a 3-path scores 1.
    pub fn betweenness_normalized(&self, comp: &ComponentView) -> Result<Vec<f64>, CentralityError> {
        let n = comp.n_c();
        if n < 3 {
            return Err(CentralityError::ComponentTooSmall { n_c: n, min: 3 });
        }
        let adj = self.undirected_adjacency(Some(comp));
        let mut bc = vec![0.0f64; n];
        // Brandes accumulation over every source counts each ordered pair once.
        for s in 0..n {
            let mut sigma = vec![0.0f64; n];
            let mut dist = vec![usize::MAX; n];
            let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
            let mut order = Vec::with_capacity(n);
            sigma[s] = 1.0;
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            let mut delta = vec![0.0f64; n];
            for &w in order.iter().rev() {
                for &v in &preds[w] {
                    // sigma[w] > 0 whenever w was reached, which it was.
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    bc[w] += delta[w];
                }
            }
        }
        let norm = ((n - 1) * (n - 2)) as f64;
        for value in &mut bc {
            *value /= norm;
        }
        Ok(bc)
    }

    /// Mean shortest-path distance from each node to every other node in the
    /// component (the reciprocal of closeness centrality), aligned with
    /// `comp.node_ids`. Needs at least 2 nodes.
    pub fn closeness_reciprocal(&self, comp: &ComponentView) -> Result<Vec<f64>, CentralityError> {
        let n = comp.n_c();
        if n < 2 {
            return Err(CentralityError::ComponentTooSmall { n_c: n, min: 2 });
        }
        let adj = self.undirected_adjacency(Some(comp));
        let mut out = Vec::with_capacity(n);
        for s in 0..n {
            let dist = bfs_distances(&adj, s);
            let total: usize = dist.iter().map(|d| d.expect("component is connected")).sum();
            out.push(total as f64 / (n - 1) as f64);
        }
        Ok(out)
    }

    /// Gini coefficient of the component's undirected degree sequence.
    /// 0 for regular components, approaching 1 for hub-dominated ones.
    pub fn degree_gini(&self, comp: &ComponentView) -> f64 {
        let adj = self.undirected_adjacency(Some(comp));
        let degrees: Vec<f64> = adj.iter().map(|nbrs| nbrs.len() as f64).collect();
        gini(&degrees)
    }

    /// Undirected adjacency lists (indices into the id list), self-loops
    /// dropped, both directions collapsed. Restricted to `comp` when given.
    fn undirected_adjacency(&self, comp: Option<&ComponentView>) -> Vec<Vec<usize>> {
        let ids: Vec<NodeId> = match comp {
            Some(c) => c.node_ids.clone(),
            None => self.node_ids().collect(),
        };
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut pairs = BTreeSet::new();
        for &(src, dst) in &self.edges {
            if src == dst {
                continue;
            }
            if let (Some(&a), Some(&b)) = (index.get(&src), index.get(&dst)) {
                pairs.insert((a.min(b), a.max(b)));
            }
        }
        let mut adj = vec![Vec::new(); ids.len()];
        for (a, b) in pairs {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// BFS distances from `start`; `None` for unreachable nodes.
fn bfs_distances(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; adj.len()];
    dist[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Gini coefficient via the sorted-rank identity; equals the pairwise
/// |x_i - x_j| double sum divided by 2 n^2 mean.
fn gini(values: &[f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let weighted: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| (2.0 * (i as f64 + 1.0) - n as f64 - 1.0) * v)
        .sum();
    weighted / (n as f64 * total)
}

// Wire format: {"S": .., "nodes": [{"id", "state"}..], "edges": [[src,dst]..]},
// nodes ascending by id, edges lexicographic.
#[derive(Serialize, Deserialize)]
struct GraphJson {
    #[serde(rename = "S")]
    s: u8,
    nodes: Vec<NodeJson>,
    edges: Vec<(u64, u64)>,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: u64,
    state: u8,
}

impl Serialize for StateGraph {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> Result<Ser::Ok, Ser::Error> {
        GraphJson {
            s: self.s,
            nodes: self.nodes().map(|(id, state)| NodeJson { id: id.0, state }).collect(),
            edges: self.edges().map(|(a, b)| (a.0, b.0)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StateGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let raw = GraphJson::deserialize(deserializer)?;
        let mut g = StateGraph::new(raw.s).map_err(D::Error::custom)?;
        for node in &raw.nodes {
            g.add_node(NodeId(node.id), node.state).map_err(D::Error::custom)?;
        }
        for &(src, dst) in &raw.edges {
            g.add_edge(NodeId(src), NodeId(dst)).map_err(D::Error::custom)?;
        }
        Ok(g)
    }
}
