//! Behavior Tree data model, tick engine and constant-touch edit operations.

mod tick;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::types::{ConditionLiteral, ElementCounts, NodeId, SkillCall, SkillHandle, Status};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BtKind {
    Sequence,
    Fallback,
    Parallel { success_threshold: usize },
    MemorySequence,
    Action(SkillCall),
    Condition(ConditionLiteral),
}

impl BtKind {
    pub fn is_control(&self) -> bool {
        !matches!(self, BtKind::Action(_) | BtKind::Condition(_))
    }

    /// Document type tag.
    pub fn tag(&self) -> &'static str {
        match self {
            BtKind::Sequence => "sequence",
            BtKind::Fallback => "fallback",
            BtKind::Parallel { .. } => "parallel",
            BtKind::MemorySequence => "memory_sequence",
            BtKind::Action(_) => "action",
            BtKind::Condition(_) => "condition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BtNode {
    pub id: NodeId,
    pub kind: BtKind,
    pub children: Vec<NodeId>,
    pub name: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BtError {
    #[error("node {0} is not a control node")]
    NotControl(NodeId),
    #[error("index {index} out of range for node {parent} with {len} children")]
    IndexOutOfRange {
        parent: NodeId,
        index: usize,
        len: usize,
    },
    #[error("node id {0} already in use")]
    IdCollision(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("cannot remove the root")]
    RemoveRoot,
    #[error("invalid tree: {0}")]
    Invalid(String),
}

/// Pre-existing nodes mutated by an edit, plus nodes added or dropped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EditReceipt {
    pub touched: Vec<NodeId>,
    pub added: Vec<NodeId>,
    pub removed: Vec<NodeId>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct TickState {
    pub visited: BTreeSet<NodeId>,
    pub active: BTreeMap<NodeId, (SkillHandle, SkillCall)>,
    pub memory: BTreeMap<NodeId, usize>,
    pub last_status: BTreeMap<NodeId, Status>,
    pub inline_cancels: Vec<SkillCall>,
}

/// A rooted behavior tree plus its engine bookkeeping.
#[derive(Debug, Clone)]
pub struct PolicyTree {
    nodes: BTreeMap<NodeId, BtNode>,
    root: NodeId,
    parents: BTreeMap<NodeId, NodeId>,
    next_id: u32,
    pub(crate) rt: TickState,
}

impl PartialEq for PolicyTree {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root && self.nodes == other.nodes
    }
}

impl Eq for PolicyTree {}

impl PolicyTree {
    /// Validates nodes and root into a tree.
    pub fn from_nodes(nodes: Vec<BtNode>, root: NodeId) -> Result<Self, BtError> {
        let mut map = BTreeMap::new();
        for n in nodes {
            if map.insert(n.id, n.clone()).is_some() {
                return Err(BtError::IdCollision(n.id));
            }
        }
        let mut parents = BTreeMap::new();
        for n in map.values() {
            if n.kind.is_control() {
                if n.children.is_empty() {
                    return Err(BtError::Invalid(format!(
                        "control node {} has no children",
                        n.id
                    )));
                }
            } else if !n.children.is_empty() {
                return Err(BtError::Invalid(format!("leaf {} has children", n.id)));
            }
            if let BtKind::Parallel { success_threshold } = n.kind {
                if success_threshold == 0 || success_threshold > n.children.len() {
                    return Err(BtError::Invalid(format!(
                        "parallel {} threshold {success_threshold} outside [1,{}]",
                        n.id,
                        n.children.len()
                    )));
                }
            }
            for c in &n.children {
                if !map.contains_key(c) {
                    return Err(BtError::UnknownNode(*c));
                }
                if parents.insert(*c, n.id).is_some() {
                    return Err(BtError::Invalid(format!("node {c} has two parents")));
                }
            }
        }
        if !map.contains_key(&root) {
            return Err(BtError::UnknownNode(root));
        }
        if parents.contains_key(&root) {
            return Err(BtError::Invalid("root has a parent".into()));
        }
        let tree = PolicyTree {
            next_id: map.keys().next_back().map_or(0, |k| k.0 + 1),
            nodes: map,
            root,
            parents,
            rt: TickState::default(),
        };
        let reached = tree.preorder().len();
        if reached != tree.nodes.len() {
            return Err(BtError::Invalid(format!(
                "{} nodes unreachable from root",
                tree.nodes.len() - reached
            )));
        }
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Option<&BtNode> {
        self.nodes.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &BtNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(&id).copied()
    }

    /// Smallest id that no node of this tree has ever used.
    pub fn next_free_id(&self) -> u32 {
        self.next_id
    }

    /// Raises the id allocator so ids below `next` are never handed out.
    pub fn reserve_ids(&mut self, next: u32) {
        self.next_id = self.next_id.max(next);
    }

    /// Node ids in depth-first pre-order.
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            out.push(id);
            if let Some(n) = self.nodes.get(&id) {
                stack.extend(n.children.iter().rev());
            }
        }
        out
    }

    /// Action leaves left to right.
    pub fn action_leaves(&self) -> Vec<&SkillCall> {
        self.preorder()
            .into_iter()
            .filter_map(|id| match &self.nodes[&id].kind {
                BtKind::Action(call) => Some(call),
                _ => None,
            })
            .collect()
    }

    /// Copy with ids reassigned in pre-order starting at `first`.
    pub fn with_ids_from(&self, first: u32) -> PolicyTree {
        let order = self.preorder();
        let remap: BTreeMap<NodeId, NodeId> = order
            .iter()
            .enumerate()
            .map(|(i, id)| (*id, NodeId(first + i as u32)))
            .collect();
        let nodes = order
            .iter()
            .map(|id| {
                let n = &self.nodes[id];
                BtNode {
                    id: remap[id],
                    kind: n.kind.clone(),
                    children: n.children.iter().map(|c| remap[c]).collect(),
                    name: n.name.clone(),
                }
            })
            .collect();
        PolicyTree::from_nodes(nodes, remap[&self.root]).expect("renumbering keeps validity")
    }

    /// Ordered structural equality ignoring ids.
    pub fn same_shape(&self, other: &PolicyTree) -> bool {
        fn eq(a: &PolicyTree, x: NodeId, b: &PolicyTree, y: NodeId) -> bool {
            let (nx, ny) = (&a.nodes[&x], &b.nodes[&y]);
            nx.kind == ny.kind
                && nx.children.len() == ny.children.len()
                && nx
                    .children
                    .iter()
                    .zip(&ny.children)
                    .all(|(cx, cy)| eq(a, *cx, b, *cy))
        }
        eq(self, self.root, other, other.root)
    }

    pub fn count_elements(&self) -> ElementCounts {
        let nodes = self.nodes.len();
        let edges = self.nodes.values().map(|n| n.children.len()).sum();
        ElementCounts {
            nodes,
            edges,
            graphical: nodes + edges,
            active: nodes,
        }
    }

    fn check_disjoint(&self, sub: &PolicyTree) -> Result<(), BtError> {
        match sub
            .nodes
            .keys()
            .find(|k| k.0 < self.next_id || self.nodes.contains_key(k))
        {
            Some(k) => Err(BtError::IdCollision(*k)),
            None => Ok(()),
        }
    }

    fn absorb(&mut self, sub: PolicyTree) -> Vec<NodeId> {
        let added: Vec<NodeId> = sub.nodes.keys().copied().collect();
        self.next_id = self.next_id.max(sub.next_id);
        self.parents.extend(sub.parents);
        self.nodes.extend(sub.nodes);
        added
    }

    /// Inserts `sub` as the `index`-th child of `parent`.
    pub fn insert_subtree(
        &mut self,
        parent: NodeId,
        index: usize,
        sub: PolicyTree,
    ) -> Result<EditReceipt, BtError> {
        let p = self
            .nodes
            .get(&parent)
            .ok_or(BtError::UnknownNode(parent))?;
        if !p.kind.is_control() {
            return Err(BtError::NotControl(parent));
        }
        if index > p.children.len() {
            return Err(BtError::IndexOutOfRange {
                parent,
                index,
                len: p.children.len(),
            });
        }
        self.check_disjoint(&sub)?;
        let sub_root = sub.root;
        let added = self.absorb(sub);
        self.parents.insert(sub_root, parent);
        self.nodes
            .get_mut(&parent)
            .expect("checked")
            .children
            .insert(index, sub_root);
        Ok(EditReceipt {
            touched: vec![parent],
            added,
            removed: vec![],
        })
    }

    /// Detaches `node` and its descendants; returns them as a tree.
    pub fn remove_subtree(&mut self, node: NodeId) -> Result<(EditReceipt, PolicyTree), BtError> {
        if !self.nodes.contains_key(&node) {
            return Err(BtError::UnknownNode(node));
        }
        if node == self.root {
            return Err(BtError::RemoveRoot);
        }
        let parent = self.parents[&node];
        let mut removed_nodes = Vec::new();
        let mut stack = vec![node];
        while let Some(id) = stack.pop() {
            let n = self.nodes.remove(&id).expect("reachable");
            self.parents.remove(&id);
            self.rt.active.remove(&id);
            self.rt.memory.remove(&id);
            self.rt.last_status.remove(&id);
            self.rt.visited.remove(&id);
            stack.extend(n.children.iter().copied());
            removed_nodes.push(n);
        }
        self.nodes
            .get_mut(&parent)
            .expect("parent exists")
            .children
            .retain(|c| *c != node);
        let removed: Vec<NodeId> = removed_nodes.iter().map(|n| n.id).collect();
        let sub = PolicyTree::from_nodes(removed_nodes, node).expect("detached subtree is a tree");
        Ok((
            EditReceipt {
                touched: vec![parent],
                added: vec![],
                removed,
            },
            sub,
        ))
    }

    /// Puts `sub` first under a Sequence root, creating one if needed.
    pub fn prepend_priority_subtree(&mut self, sub: PolicyTree) -> Result<EditReceipt, BtError> {
        self.attach_at_root(sub, true)
    }

    /// Puts `sub` last under a Sequence root, creating one if needed.
    pub fn append_subtree(&mut self, sub: PolicyTree) -> Result<EditReceipt, BtError> {
        self.attach_at_root(sub, false)
    }

    fn attach_at_root(&mut self, sub: PolicyTree, first: bool) -> Result<EditReceipt, BtError> {
        if self.nodes[&self.root].kind == BtKind::Sequence {
            let index = if first {
                0
            } else {
                self.nodes[&self.root].children.len()
            };
            return self.insert_subtree(self.root, index, sub);
        }
        self.check_disjoint(&sub)?;
        let sub_root = sub.root;
        let mut added = self.absorb(sub);
        let new_root = NodeId(self.next_id);
        self.next_id += 1;
        let old_root = self.root;
        let children = if first {
            vec![sub_root, old_root]
        } else {
            vec![old_root, sub_root]
        };
        self.nodes.insert(
            new_root,
            BtNode {
                id: new_root,
                kind: BtKind::Sequence,
                children,
                name: "Sequence".into(),
            },
        );
        self.parents.insert(sub_root, new_root);
        self.parents.insert(old_root, new_root);
        self.root = new_root;
        added.push(new_root);
        Ok(EditReceipt {
            touched: vec![],
            added,
            removed: vec![],
        })
    }

    /// Nodes visited by the most recent tick.
    pub fn last_visited(&self) -> &BTreeSet<NodeId> {
        &self.rt.visited
    }

    pub fn last_status(&self, id: NodeId) -> Option<Status> {
        self.rt.last_status.get(&id).copied()
    }

    /// Drops all engine bookkeeping without cancelling anything.
    pub fn reset_runtime(&mut self) {
        self.rt = TickState::default();
    }

    /// Indented listing with the status each node returned last tick.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut stack = vec![(self.root, 0usize)];
        while let Some((id, depth)) = stack.pop() {
            let n = &self.nodes[&id];
            let status = match self.rt.last_status.get(&id) {
                Some(s) if self.rt.visited.contains(&id) => s.as_str(),
                _ => "-",
            };
            let _ = writeln!(out, "{}{} [{}]", "  ".repeat(depth), n.name, status);
            for c in n.children.iter().rev() {
                stack.push((*c, depth + 1));
            }
        }
        out
    }
}

/// Builds trees bottom-up; ids are reassigned in pre-order on `build`.
#[derive(Debug, Default)]
pub struct TreeBuilder {
    nodes: Vec<BtNode>,
}

impl TreeBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    fn add(&mut self, kind: BtKind, name: String, children: Vec<NodeId>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(BtNode {
            id,
            kind,
            children,
            name,
        });
        id
    }

    pub fn sequence(&mut self, children: Vec<NodeId>) -> NodeId {
        self.add(BtKind::Sequence, "Sequence".into(), children)
    }

    pub fn fallback(&mut self, children: Vec<NodeId>) -> NodeId {
        self.add(BtKind::Fallback, "Fallback".into(), children)
    }

    pub fn parallel(&mut self, success_threshold: usize, children: Vec<NodeId>) -> NodeId {
        self.add(
            BtKind::Parallel { success_threshold },
            "Parallel".into(),
            children,
        )
    }

    pub fn memory_sequence(&mut self, children: Vec<NodeId>) -> NodeId {
        self.add(BtKind::MemorySequence, "MemorySequence".into(), children)
    }

    pub fn action(&mut self, call: SkillCall) -> NodeId {
        let name = format!("{call}!");
        self.add(BtKind::Action(call), name, vec![])
    }

    pub fn condition(&mut self, lit: ConditionLiteral) -> NodeId {
        let name = format!("{}?", lit.key());
        self.add(BtKind::Condition(lit), name, vec![])
    }

    /// `Fallback(condition?, action!)`, the usual guarded action.
    pub fn guarded(&mut self, lit: ConditionLiteral, call: SkillCall) -> NodeId {
        let c = self.condition(lit);
        let a = self.action(call);
        self.fallback(vec![c, a])
    }

    pub fn rename(&mut self, id: NodeId, name: &str) {
        self.nodes[id.0 as usize].name = name.to_string();
    }

    /// Finishes the tree rooted at `root`, numbering nodes from `first`.
    pub fn build_from(self, root: NodeId, first: u32) -> Result<PolicyTree, BtError> {
        let mut reachable = BTreeSet::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if reachable.insert(id) {
                if let Some(n) = self.nodes.get(id.0 as usize) {
                    stack.extend(n.children.iter().copied());
                }
            }
        }
        let nodes = self
            .nodes
            .into_iter()
            .filter(|n| reachable.contains(&n.id))
            .collect();
        Ok(PolicyTree::from_nodes(nodes, root)?.with_ids_from(first))
    }

    pub fn build(self, root: NodeId) -> Result<PolicyTree, BtError> {
        self.build_from(root, 0)
    }
}
