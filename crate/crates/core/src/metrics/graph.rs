//! Labeled directed (multi)graph encodings of the three policy kinds.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::bt::PolicyTree;
use crate::document::PolicyDocument;
use crate::fsm::{StateKind, StateMachine};
use crate::hfsm::{Hfsm, HfsmContainer, HfsmKind};
use crate::types::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphKind {
    Bt,
    Fsm,
    Hfsm,
    Plain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vertex {
    /// Stable identity used by anchored comparisons.
    pub key: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyGraph {
    pub kind: GraphKind,
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    sinks: BTreeSet<usize>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl PolicyGraph {
    pub fn new(kind: GraphKind) -> Self {
        PolicyGraph {
            kind,
            vertices: vec![],
            edges: vec![],
            sinks: BTreeSet::new(),
            index: BTreeMap::new(),
        }
    }

    /// Adds a vertex; keys must be unique.
    pub fn add_vertex(&mut self, key: impl Into<String>, label: impl Into<String>) -> usize {
        let key = key.into();
        assert!(!self.index.contains_key(&key), "duplicate vertex key {key}");
        let i = self.vertices.len();
        self.index.insert(key.clone(), i);
        self.vertices.push(Vertex {
            key,
            label: label.into(),
        });
        i
    }

    pub fn add_edge(&mut self, from: usize, to: usize, label: impl Into<String>) {
        assert!(
            from < self.vertices.len() && to < self.vertices.len(),
            "edge endpoint out of range"
        );
        self.edges.push(Edge {
            from,
            to,
            label: label.into(),
        });
    }

    pub fn mark_sink(&mut self, v: usize) {
        self.sinks.insert(v);
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn sinks(&self) -> &BTreeSet<usize> {
        &self.sinks
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn index_of(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Rebuilds the key index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, v)| (v.key.clone(), i))
            .collect();
    }
}

/// One vertex per node, one parent-to-child edge per link; leaves are sinks.
pub fn bt_to_graph(tree: &PolicyTree) -> PolicyGraph {
    let mut g = PolicyGraph::new(GraphKind::Bt);
    let mut at = BTreeMap::new();
    for id in tree.preorder() {
        let n = tree.node(id).expect("preorder node");
        at.insert(
            id,
            g.add_vertex(format!("n{id}"), format!("{}:{}", n.kind.tag(), n.name)),
        );
    }
    for id in tree.preorder() {
        let n = tree.node(id).expect("preorder node");
        if n.children.is_empty() {
            g.mark_sink(at[&id]);
        }
        for c in &n.children {
            g.add_edge(at[&id], at[c], "");
        }
    }
    g
}

/// One vertex per state, one edge per distinct transition pair; outcomes are sinks.
pub fn fsm_to_graph(sm: &StateMachine) -> PolicyGraph {
    let mut g = PolicyGraph::new(GraphKind::Fsm);
    let mut at = BTreeMap::new();
    for s in sm.states() {
        let tag = match s.kind {
            StateKind::Skill { .. } => "skill",
            StateKind::Selector => "selector",
            StateKind::Outcome(_) => "outcome",
        };
        let v = g.add_vertex(format!("s{}", s.id), format!("{tag}:{}", s.name));
        if s.is_outcome() {
            g.mark_sink(v);
        }
        at.insert(s.id, v);
    }
    for (from, to, labels) in sm.edges() {
        g.add_edge(at[&from], at[&to], labels.join("|"));
    }
    g
}

fn encode_container(c: &HfsmContainer, g: &mut PolicyGraph, outcomes: &[usize; 3]) -> usize {
    let v = g.add_vertex(format!("c{}", c.id), format!("{}:{}", c.kind.tag(), c.name));
    let statuses: &[Status] = match c.kind {
        HfsmKind::Condition(_) => &[Status::Success, Status::Failure],
        _ => &Status::ALL,
    };
    for s in statuses {
        let o = outcomes[Status::ALL.iter().position(|x| x == s).expect("status")];
        g.add_edge(v, o, s.as_str());
    }
    let mut first = None;
    for child in &c.children {
        let cv = encode_container(child, g, outcomes);
        first.get_or_insert(cv);
    }
    if let Some(cv) = first {
        g.add_edge(v, cv, "entry");
    }
    v
}

/// Container vertices plus the three outcome vertices.
///
/// Entry pseudo-states and the containers' internal return statuses are not
/// drawn: every status transition lands on the matching outcome vertex, and
/// each control container has one entry edge to its first child. An action
/// contributes 1 vertex and 3 edges, a condition 1 and 2, a control
/// container 1 and 4.
pub fn hfsm_to_graph(h: &Hfsm) -> PolicyGraph {
    let mut g = PolicyGraph::new(GraphKind::Hfsm);
    let outcomes = Status::ALL.map(|s| {
        let v = g.add_vertex(format!("out:{s}"), format!("outcome:{s}"));
        g.mark_sink(v);
        v
    });
    encode_container(h.root(), &mut g, &outcomes);
    g
}

pub fn policy_graph(doc: &PolicyDocument) -> PolicyGraph {
    match doc {
        PolicyDocument::Bt(t) => bt_to_graph(t),
        PolicyDocument::Fsm(sm) => fsm_to_graph(sm),
        PolicyDocument::Hfsm(h) => hfsm_to_graph(h),
    }
}

/// `a + s - n + 1`; tree graphs use a single exit.
pub fn cyclomatic(g: &PolicyGraph) -> i64 {
    let s = if g.kind == GraphKind::Bt {
        1
    } else {
        g.sinks().len()
    };
    g.edge_count() as i64 + s as i64 - g.vertex_count() as i64 + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::hfsm::from_bt;

    fn size(g: &PolicyGraph) -> (usize, usize) {
        (g.vertex_count(), g.edge_count())
    }

    #[test]
    fn tree_graphs() {
        assert_eq!(size(&bt_to_graph(&fixtures::bt_fetch())), (14, 13));
        assert_eq!(size(&bt_to_graph(&fixtures::bt_fetch_recharge())), (18, 17));
        assert_eq!(size(&bt_to_graph(&fixtures::bt_fetch_dock())), (18, 17));
        let mut b = crate::bt::TreeBuilder::new();
        let a = b.action(crate::types::SkillCall::new("tuck", &[]));
        let single = bt_to_graph(&b.build(a).unwrap());
        assert_eq!(size(&single), (1, 0));
        assert_eq!(cyclomatic(&single), 1);
    }

    #[test]
    fn machine_graphs() {
        assert_eq!(
            size(&fsm_to_graph(&fixtures::fsm_fetch_fault_tolerant())),
            (6, 18)
        );
        assert_eq!(
            size(&fsm_to_graph(&fixtures::fsm_fetch_recharge())),
            (7, 25)
        );
        assert_eq!(
            size(&fsm_to_graph(&fixtures::fsm_fetch_sequential())),
            (5, 4)
        );
    }

    #[test]
    fn container_graphs() {
        let g = |t| hfsm_to_graph(&from_bt(&t).unwrap());
        assert_eq!(size(&g(fixtures::bt_fetch())), (17, 44));
        assert_eq!(size(&g(fixtures::bt_fetch_tuck())), (20, 53));
        assert_eq!(size(&g(fixtures::bt_fetch_dock())), (21, 57));
    }

    #[test]
    fn cyclomatic_values() {
        assert_eq!(
            cyclomatic(&fsm_to_graph(&fixtures::fsm_fetch_fault_tolerant())),
            14
        );
        assert_eq!(
            cyclomatic(&fsm_to_graph(&fixtures::fsm_fetch_recharge())),
            20
        );
        for t in [
            fixtures::bt_fetch(),
            fixtures::bt_scalability_recharge(),
            fixtures::bt_fetch_gp(),
        ] {
            assert_eq!(cyclomatic(&bt_to_graph(&t)), 1);
        }
    }
}
