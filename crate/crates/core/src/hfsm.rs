//! Hierarchical state machines built from behavior trees, executed by
//! interpreting the nested containers and their outcome wiring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BtKind, PolicyTree};
use crate::types::{ConditionLiteral, EngineError, NodeId, SkillCall, SkillHandle, Status, World};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HfsmKind {
    SequenceContainer,
    FallbackContainer,
    Action(SkillCall),
    Condition(ConditionLiteral),
}

impl HfsmKind {
    pub fn tag(&self) -> &'static str {
        match self {
            HfsmKind::SequenceContainer => "sequence_container",
            HfsmKind::FallbackContainer => "fallback_container",
            HfsmKind::Action(_) => "action",
            HfsmKind::Condition(_) => "condition",
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, HfsmKind::Action(_) | HfsmKind::Condition(_))
    }
}

/// Where a child's outcome leads inside its container.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Child(NodeId),
    Outcome(Status),
}

/// Outcome wiring of one child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wiring {
    #[serde(rename = "SUCCESS")]
    pub success: Target,
    #[serde(rename = "FAILURE")]
    pub failure: Target,
    #[serde(rename = "RUNNING")]
    pub running: Target,
}

impl Wiring {
    pub fn target(&self, s: Status) -> Target {
        match s {
            Status::Success => self.success,
            Status::Failure => self.failure,
            Status::Running => self.running,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HfsmContainer {
    pub id: NodeId,
    pub name: String,
    pub kind: HfsmKind,
    pub children: Vec<HfsmContainer>,
    /// One entry per child, same order.
    pub wiring: Vec<Wiring>,
}

impl HfsmContainer {
    /// Total number of containers in this subtree.
    pub fn count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(HfsmContainer::count)
            .sum::<usize>()
    }

    /// (conditions, actions, control containers) in this subtree.
    pub fn kind_counts(&self) -> (usize, usize, usize) {
        let own = match self.kind {
            HfsmKind::Condition(_) => (1, 0, 0),
            HfsmKind::Action(_) => (0, 1, 0),
            _ => (0, 0, 1),
        };
        self.children
            .iter()
            .map(HfsmContainer::kind_counts)
            .fold(own, |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2))
    }

    /// Depth-first pre-order walk.
    pub fn walk(&self) -> Vec<&HfsmContainer> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    fn validate(&self, seen: &mut BTreeSet<NodeId>) -> Result<(), HfsmError> {
        if !seen.insert(self.id) {
            return Err(HfsmError::Invalid(format!(
                "duplicate container id {}",
                self.id
            )));
        }
        if self.kind.is_leaf() != self.children.is_empty() {
            return Err(HfsmError::Invalid(format!(
                "container {} has the wrong arity",
                self.id
            )));
        }
        if self.wiring.len() != self.children.len() {
            return Err(HfsmError::Invalid(format!(
                "container {} wiring does not cover its children",
                self.id
            )));
        }
        for (i, w) in self.wiring.iter().enumerate() {
            for s in Status::ALL {
                if let Target::Child(t) = w.target(s) {
                    match self.children.iter().position(|c| c.id == t) {
                        Some(j) if j > i => {}
                        _ => {
                            return Err(HfsmError::Invalid(format!(
                                "container {} routes child {} backwards or outside",
                                self.id, self.children[i].id
                            )))
                        }
                    }
                }
            }
        }
        for c in &self.children {
            c.validate(seen)?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HfsmError {
    #[error("node {0} is a parallel node; the construction covers sequence, fallback and leaves")]
    Parallel(NodeId),
    #[error(
        "node {0} is a memory sequence; the construction covers sequence, fallback and leaves"
    )]
    MemorySequence(NodeId),
    #[error("invalid container tree: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default)]
struct Runtime {
    visited: BTreeSet<NodeId>,
    active: BTreeMap<NodeId, (SkillHandle, SkillCall)>,
}

/// A container tree together with its executor state.
#[derive(Debug, Clone)]
pub struct Hfsm {
    root: HfsmContainer,
    rt: Runtime,
}

impl PartialEq for Hfsm {
    fn eq(&self, other: &Self) -> bool {
        self.root == other.root
    }
}

impl Eq for Hfsm {}

fn wire(kind: &HfsmKind, ids: &[NodeId], i: usize) -> Wiring {
    let next = ids.get(i + 1).map(|n| Target::Child(*n));
    match kind {
        HfsmKind::SequenceContainer => Wiring {
            success: next.unwrap_or(Target::Outcome(Status::Success)),
            failure: Target::Outcome(Status::Failure),
            running: Target::Outcome(Status::Running),
        },
        _ => Wiring {
            success: Target::Outcome(Status::Success),
            failure: next.unwrap_or(Target::Outcome(Status::Failure)),
            running: Target::Outcome(Status::Running),
        },
    }
}

fn convert(tree: &PolicyTree, id: NodeId) -> Result<HfsmContainer, HfsmError> {
    let n = tree.node(id).expect("tree node");
    let kind = match &n.kind {
        BtKind::Sequence => HfsmKind::SequenceContainer,
        BtKind::Fallback => HfsmKind::FallbackContainer,
        BtKind::Action(c) => HfsmKind::Action(c.clone()),
        BtKind::Condition(l) => HfsmKind::Condition(l.clone()),
        BtKind::Parallel { .. } => return Err(HfsmError::Parallel(id)),
        BtKind::MemorySequence => return Err(HfsmError::MemorySequence(id)),
    };
    let children = n
        .children
        .iter()
        .map(|c| convert(tree, *c))
        .collect::<Result<Vec<_>, _>>()?;
    let wiring = (0..children.len())
        .map(|i| wire(&kind, &n.children, i))
        .collect();
    Ok(HfsmContainer {
        id,
        name: n.name.clone(),
        kind,
        children,
        wiring,
    })
}

/// Nested-container machine mirroring `tree` one-to-one.
pub fn from_bt(tree: &PolicyTree) -> Result<Hfsm, HfsmError> {
    Hfsm::new(convert(tree, tree.root())?)
}

fn run<W: World + ?Sized>(
    c: &HfsmContainer,
    rt: &mut Runtime,
    world: &mut W,
) -> Result<Status, EngineError> {
    rt.visited.insert(c.id);
    match &c.kind {
        HfsmKind::Condition(l) => Ok(if world.evaluate(l)? {
            Status::Success
        } else {
            Status::Failure
        }),
        HfsmKind::Action(call) => {
            let h = match rt.active.get(&c.id) {
                Some((h, _)) => *h,
                None => world.start_skill(call)?,
            };
            let s = world.poll_skill(h)?;
            if s == Status::Running {
                rt.active.insert(c.id, (h, call.clone()));
            } else {
                rt.active.remove(&c.id);
            }
            Ok(s)
        }
        HfsmKind::SequenceContainer | HfsmKind::FallbackContainer => {
            let mut i = 0;
            loop {
                let s = run(&c.children[i], rt, world)?;
                match c.wiring[i].target(s) {
                    Target::Outcome(o) => return Ok(o),
                    Target::Child(t) => {
                        i = c
                            .children
                            .iter()
                            .position(|x| x.id == t)
                            .expect("validated wiring");
                    }
                }
            }
        }
    }
}

impl Hfsm {
    pub fn new(root: HfsmContainer) -> Result<Self, HfsmError> {
        root.validate(&mut BTreeSet::new())?;
        Ok(Hfsm {
            root,
            rt: Runtime::default(),
        })
    }

    pub fn root(&self) -> &HfsmContainer {
        &self.root
    }

    /// Evaluates the container tree from its entry, one tick's worth.
    pub fn step<W: World + ?Sized>(&mut self, world: &mut W) -> Result<Status, EngineError> {
        self.rt.visited.clear();
        run(&self.root, &mut self.rt, world)
    }

    /// Cancels skills of leaves that were running but not entered this step.
    pub fn halt_unvisited<W: World + ?Sized>(&mut self, world: &mut W) -> Vec<SkillCall> {
        let stale: Vec<NodeId> = self
            .rt
            .active
            .keys()
            .filter(|id| !self.rt.visited.contains(id))
            .copied()
            .collect();
        let mut cancelled = Vec::new();
        for id in stale {
            let (h, call) = self.rt.active.remove(&id).expect("listed");
            if world.cancel_skill(h).unwrap_or(false) {
                cancelled.push(call);
            }
        }
        cancelled
    }

    pub fn last_visited(&self) -> &BTreeSet<NodeId> {
        &self.rt.visited
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bt::TreeBuilder;
    use crate::fixtures;
    use crate::testutil::ScriptedWorld;

    #[test]
    fn pick_subtree_structure() {
        let h = from_bt(&fixtures::bt_pick_subtree()).unwrap();
        let root = h.root();
        assert_eq!(root.kind, HfsmKind::SequenceContainer);
        assert_eq!(root.children.len(), 2);
        assert_eq!(root.children[0].kind, HfsmKind::FallbackContainer);
        assert!(matches!(root.children[1].kind, HfsmKind::Action(_)));
        let first = &root.wiring[0];
        assert_eq!(first.success, Target::Child(root.children[1].id));
        assert_eq!(first.failure, Target::Outcome(Status::Failure));
        assert_eq!(root.wiring[1].success, Target::Outcome(Status::Success));
        let fb = &root.children[0];
        assert_eq!(fb.wiring[0].failure, Target::Child(fb.children[1].id));
        assert_eq!(fb.wiring[0].success, Target::Outcome(Status::Success));
    }

    #[test]
    fn single_action_is_single_leaf() {
        let mut b = TreeBuilder::new();
        let a = b.action(SkillCall::new("tuck", &[]));
        let h = from_bt(&b.build(a).unwrap()).unwrap();
        assert_eq!(h.root().count(), 1);
    }

    #[test]
    fn bijection_on_fixtures() {
        for t in [
            fixtures::bt_fetch(),
            fixtures::bt_fetch_recharge_dock(),
            fixtures::bt_scalability(),
        ] {
            assert_eq!(from_bt(&t).unwrap().root().count(), t.len());
        }
    }

    #[test]
    fn rejects_parallel_and_memory() {
        let mut b = TreeBuilder::new();
        let a = b.action(SkillCall::new("tuck", &[]));
        let p = b.parallel(1, vec![a]);
        assert_eq!(
            from_bt(&b.build(p).unwrap()).unwrap_err(),
            HfsmError::Parallel(NodeId(0))
        );
        assert!(matches!(
            from_bt(&fixtures::bt_fetch_memory_sequence()),
            Err(HfsmError::MemorySequence(_))
        ));
    }

    #[test]
    fn step_matches_tick() {
        for truths in [
            vec![],
            vec![ConditionLiteral::object_at("cube2", "delivery")],
            vec![ConditionLiteral::in_hand("cube2")],
            vec![
                ConditionLiteral::in_hand("cube2"),
                ConditionLiteral::robot_at("delivery"),
            ],
        ] {
            let mut t = fixtures::bt_fetch_recharge();
            let mut h = from_bt(&t).unwrap();
            let mut wt = ScriptedWorld::default();
            let mut wh = ScriptedWorld::default();
            for l in &truths {
                wt.set_true(l.clone());
                wh.set_true(l.clone());
            }
            assert_eq!(t.tick(&mut wt).unwrap(), h.step(&mut wh).unwrap());
            assert_eq!(wt.started, wh.started);
            assert_eq!(t.last_visited(), h.last_visited());
        }
    }

    #[test]
    fn backwards_wiring_rejected() {
        let mut h = from_bt(&fixtures::bt_pick_subtree())
            .unwrap()
            .root()
            .clone();
        let first = h.children[0].id;
        h.wiring[1].failure = Target::Child(first);
        assert!(Hfsm::new(h).is_err());
    }
}
