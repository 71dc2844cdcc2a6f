//! Coarse structural classification of grown graphs.
//!
//! Analysis is undirected: edge directions collapse and self-loops drop, as
//! in the centrality routines. A graph is `Linear` when every connected
//! component is a simple path (diameter n_c - 1). Failing that it is
//! `LooselyStranded` when every component looks like long strands with
//! occasional cross-links: high mean betweenness, long mean shortest-path
//! distance, and an even degree distribution. Everything else is `Other`.

use crate::graph::{ComponentView, StateGraph};
use serde::{Deserialize, Serialize};

/// Minimum mean normalized betweenness for a strand-like component.
pub const STRAND_BETWEENNESS_MIN: f64 = 0.01;
/// Mean shortest-path distance must exceed this fraction of component size.
pub const STRAND_CLOSENESS_COEFF: f64 = 0.07;
/// Maximum degree Gini for a strand-like component.
pub const STRAND_GINI_MAX: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureClass {
    Linear,
    LooselyStranded,
    Other,
}

impl std::fmt::Display for StructureClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            StructureClass::Linear => "linear",
            StructureClass::LooselyStranded => "loosely_stranded",
            StructureClass::Other => "other",
        };
        f.write_str(tag)
    }
}

/// Per-component measurements behind a verdict. Centrality means are absent
/// for components too small to define them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentDiagnostics {
    pub n_c: usize,
    pub diameter: usize,
    pub mean_betweenness: Option<f64>,
    pub mean_distance: Option<f64>,
    pub degree_gini: f64,
    pub is_path: bool,
    pub is_strand: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub class: StructureClass,
    pub components: Vec<ComponentDiagnostics>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn diagnose(g: &StateGraph, comp: &ComponentView) -> ComponentDiagnostics {
    let n_c = comp.n_c();
    let diameter = g.diameter(comp);
    let mean_betweenness = g.betweenness_normalized(comp).ok().map(|v| mean(&v));
    let mean_distance = g.closeness_reciprocal(comp).ok().map(|v| mean(&v));
    let degree_gini = g.degree_gini(comp);
    let is_strand = match (mean_betweenness, mean_distance) {
        (Some(b), Some(d)) => {
            b > STRAND_BETWEENNESS_MIN
                && d > STRAND_CLOSENESS_COEFF * n_c as f64
                && degree_gini < STRAND_GINI_MAX
        }
        _ => false,
    };
    ComponentDiagnostics {
        n_c,
        diameter,
        mean_betweenness,
        mean_distance,
        degree_gini,
        is_path: diameter + 1 == n_c,
        is_strand,
    }
}

pub fn classify(g: &StateGraph) -> Classification {
    let components: Vec<ComponentDiagnostics> =
        g.components().iter().map(|c| diagnose(g, c)).collect();
    let class = if components.is_empty() {
        StructureClass::Other
    } else if components.iter().all(|d| d.is_path) {
        StructureClass::Linear
    } else if components.iter().all(|d| d.is_strand) {
        StructureClass::LooselyStranded
    } else {
        StructureClass::Other
    };
    Classification { class, components }
}
