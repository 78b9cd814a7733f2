//! Finite state machines: sequential and fault-tolerant builders, state
//! insertion and removal, the step engine and a DOT emitter.

mod step;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::Plan;
use crate::types::{
    ConditionLiteral, ElementCounts, EngineError, NodeId, SkillCall, SkillHandle, Status, World,
};

pub const SUCCESS: &str = "SUCCESS";
pub const FAILURE: &str = "FAILURE";
pub const RUNNING: &str = "RUNNING";

/// Transition label used by the SELECTOR to dispatch to a plan state.
pub fn dispatch_label(target: NodeId) -> String {
    format!("dispatch:{target}")
}

/// A literal, optionally negated, watched as a transition trigger.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Guard {
    pub literal: ConditionLiteral,
    #[serde(default)]
    pub negated: bool,
}

impl Guard {
    pub fn when(literal: ConditionLiteral) -> Self {
        Guard {
            literal,
            negated: false,
        }
    }

    pub fn unless(literal: ConditionLiteral) -> Self {
        Guard {
            literal,
            negated: true,
        }
    }

    pub fn key(&self) -> String {
        if self.negated {
            format!("!{}", self.literal.key())
        } else {
            self.literal.key()
        }
    }

    pub fn holds<W: World + ?Sized>(&self, world: &W) -> Result<bool, EngineError> {
        Ok(world.evaluate(&self.literal)? != self.negated)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StateKind {
    Skill {
        call: SkillCall,
        guard: Vec<ConditionLiteral>,
        post: Vec<ConditionLiteral>,
    },
    Selector,
    Outcome(Status),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsmState {
    pub id: NodeId,
    pub name: String,
    pub kind: StateKind,
    /// Watched conditions, in priority order; each keys a transition.
    pub interrupts: Vec<Guard>,
    pub transitions: BTreeMap<String, NodeId>,
}

impl FsmState {
    pub fn is_outcome(&self) -> bool {
        matches!(self.kind, StateKind::Outcome(_))
    }
}

/// Description of a skill state to be inserted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewState {
    pub name: String,
    pub call: SkillCall,
    pub guard: Vec<ConditionLiteral>,
    pub post: Vec<ConditionLiteral>,
}

impl NewState {
    pub fn new(
        name: &str,
        call: SkillCall,
        guard: Vec<ConditionLiteral>,
        post: Vec<ConditionLiteral>,
    ) -> Self {
        NewState {
            name: name.to_string(),
            call,
            guard,
            post,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FsmError {
    #[error("empty plan")]
    EmptyPlan,
    #[error("step {0} has no dispatch precondition")]
    MissingDispatch(usize),
    #[error("no transition from {from} to {to}")]
    MissingEdge { from: NodeId, to: NodeId },
    #[error("state {0} must be a skill state")]
    NotSkillState(NodeId),
    #[error("state {0} has no FAILURE transition to the SELECTOR")]
    NoSelectorFailure(NodeId),
    #[error("cannot remove the SELECTOR")]
    RemoveSelector,
    #[error("unknown state {0}")]
    UnknownState(NodeId),
    #[error("state id {0} already in use")]
    IdCollision(NodeId),
    #[error("invalid machine: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Current {
    At(NodeId),
    Terminated(Status),
}

/// Pre-existing states mutated by an edit.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateEdit {
    pub touched: Vec<NodeId>,
    pub added: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct StateMachine {
    states: BTreeMap<NodeId, FsmState>,
    initial: NodeId,
    plan_order: Vec<NodeId>,
    goal: Vec<ConditionLiteral>,
    next_id: u32,
    current: Current,
    active: Option<SkillHandle>,
}

impl PartialEq for StateMachine {
    fn eq(&self, other: &Self) -> bool {
        self.states == other.states
            && self.initial == other.initial
            && self.plan_order == other.plan_order
            && self.goal == other.goal
    }
}

impl Eq for StateMachine {}

fn skill_state(id: NodeId, s: NewState) -> FsmState {
    FsmState {
        id,
        name: s.name,
        kind: StateKind::Skill {
            call: s.call,
            guard: s.guard,
            post: s.post,
        },
        interrupts: vec![],
        transitions: BTreeMap::new(),
    }
}

fn outcome_state(id: NodeId, status: Status) -> FsmState {
    FsmState {
        id,
        name: status.as_str().to_string(),
        kind: StateKind::Outcome(status),
        interrupts: vec![],
        transitions: BTreeMap::new(),
    }
}

fn step_state(spec: &crate::types::ActionSpec, guard: Vec<ConditionLiteral>) -> NewState {
    NewState {
        name: spec.name.clone(),
        call: spec.call(),
        guard,
        post: spec.post.clone(),
    }
}

impl StateMachine {
    /// Assembles and validates a machine.
    pub fn from_parts(
        states: Vec<FsmState>,
        initial: NodeId,
        plan_order: Vec<NodeId>,
        goal: Vec<ConditionLiteral>,
    ) -> Result<Self, FsmError> {
        let mut map = BTreeMap::new();
        for s in states {
            let id = s.id;
            if map.insert(id, s).is_some() {
                return Err(FsmError::IdCollision(id));
            }
        }
        let sm = StateMachine {
            next_id: map.keys().next_back().map_or(0, |k| k.0 + 1),
            states: map,
            initial,
            plan_order,
            goal,
            current: Current::At(initial),
            active: None,
        };
        sm.validate()?;
        Ok(sm)
    }

    /// One skill state per step chained by SUCCESS; FAILURE terminates.
    pub fn build_sequential(plan: &Plan) -> Result<Self, FsmError> {
        if plan.steps.is_empty() {
            return Err(FsmError::EmptyPlan);
        }
        let m = plan.steps.len() as u32;
        let guards = plan.regressed_guards();
        let mut states = Vec::new();
        for (i, spec) in plan.steps.iter().enumerate() {
            let id = NodeId(i as u32 + 1);
            let mut s = skill_state(id, step_state(spec, guards[i].clone()));
            s.transitions.insert(SUCCESS.into(), NodeId(i as u32 + 2));
            states.push(s);
        }
        states.push(outcome_state(NodeId(m + 1), Status::Success));
        let order = (1..=m).map(NodeId).collect();
        Self::from_parts(states, NodeId(1), order, plan.goal.clone())
    }

    /// Every skill state wired to a SELECTOR hub that re-dispatches on failure.
    pub fn build_fault_tolerant(plan: &Plan) -> Result<Self, FsmError> {
        if plan.steps.is_empty() {
            return Err(FsmError::EmptyPlan);
        }
        let guards = plan.regressed_guards();
        if let Some(i) = (1..guards.len()).find(|&i| guards[i].is_empty()) {
            return Err(FsmError::MissingDispatch(i));
        }
        let m = plan.steps.len() as u32;
        let sel = NodeId(0);
        let outcome = NodeId(m + 1);
        let mut selector = FsmState {
            id: sel,
            name: "SELECTOR".into(),
            kind: StateKind::Selector,
            interrupts: vec![],
            transitions: BTreeMap::new(),
        };
        selector.transitions.insert(RUNNING.into(), sel);
        selector.transitions.insert(SUCCESS.into(), outcome);
        let mut states = Vec::new();
        for (i, spec) in plan.steps.iter().enumerate() {
            let id = NodeId(i as u32 + 1);
            let mut s = skill_state(id, step_state(spec, guards[i].clone()));
            s.transitions.insert(SUCCESS.into(), NodeId(i as u32 + 2));
            s.transitions.insert(FAILURE.into(), sel);
            s.transitions.insert(RUNNING.into(), id);
            selector.transitions.insert(dispatch_label(id), id);
            states.push(s);
        }
        states.push(selector);
        states.push(outcome_state(outcome, Status::Success));
        let order = (1..=m).map(NodeId).collect();
        Self::from_parts(states, sel, order, plan.goal.clone())
    }

    pub fn states(&self) -> impl Iterator<Item = &FsmState> {
        self.states.values()
    }

    pub fn state(&self, id: NodeId) -> Option<&FsmState> {
        self.states.get(&id)
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.states.values().find(|s| s.name == name).map(|s| s.id)
    }

    pub fn initial(&self) -> NodeId {
        self.initial
    }

    pub fn plan_order(&self) -> &[NodeId] {
        &self.plan_order
    }

    pub fn goal(&self) -> &[ConditionLiteral] {
        &self.goal
    }

    pub fn current(&self) -> Current {
        self.current
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn next_free_id(&self) -> u32 {
        self.next_id
    }

    /// Raises the id allocator so ids below `next` are never handed out.
    pub fn reserve_ids(&mut self, next: u32) {
        self.next_id = self.next_id.max(next);
    }

    pub fn selector(&self) -> Option<NodeId> {
        self.states
            .values()
            .find(|s| s.kind == StateKind::Selector)
            .map(|s| s.id)
    }

    pub fn is_fault_tolerant(&self) -> bool {
        self.selector().is_some()
    }

    pub fn outcome_count(&self) -> usize {
        self.states.values().filter(|s| s.is_outcome()).count()
    }

    /// Distinct (from, to) pairs; parallel transitions count once.
    pub fn edges(&self) -> Vec<(NodeId, NodeId, Vec<String>)> {
        let mut pairs: BTreeMap<(NodeId, NodeId), Vec<String>> = BTreeMap::new();
        for s in self.states.values() {
            for (label, to) in &s.transitions {
                pairs.entry((s.id, *to)).or_default().push(label.clone());
            }
        }
        pairs.into_iter().map(|((a, b), l)| (a, b, l)).collect()
    }

    pub fn count_elements(&self) -> ElementCounts {
        let nodes = self.states.len();
        let edges = self.edges().len();
        ElementCounts {
            nodes,
            edges,
            graphical: nodes + edges,
            active: nodes + edges,
        }
    }

    /// Checks references and transition totality.
    pub fn validate(&self) -> Result<(), FsmError> {
        let bad = |m: String| Err(FsmError::Invalid(m));
        if !self.states.contains_key(&self.initial) {
            return Err(FsmError::UnknownState(self.initial));
        }
        let selectors = self
            .states
            .values()
            .filter(|s| s.kind == StateKind::Selector)
            .count();
        if selectors > 1 {
            return bad(format!("{selectors} SELECTOR states"));
        }
        let ft = selectors == 1;
        for id in &self.plan_order {
            match self.states.get(id).map(|s| &s.kind) {
                Some(StateKind::Skill { .. }) => {}
                _ => return bad(format!("plan order entry {id} is not a skill state")),
            }
        }
        for s in self.states.values() {
            for to in s.transitions.values() {
                if !self.states.contains_key(to) {
                    return Err(FsmError::UnknownState(*to));
                }
            }
            for g in &s.interrupts {
                if !s.transitions.contains_key(&g.key()) {
                    return bad(format!(
                        "state {} watches `{}` without a transition",
                        s.id,
                        g.key()
                    ));
                }
            }
            let needs: &[&str] = match s.kind {
                StateKind::Outcome(_) => {
                    if !s.transitions.is_empty() {
                        return bad(format!("outcome {} has transitions", s.id));
                    }
                    &[]
                }
                StateKind::Selector => &[SUCCESS, RUNNING],
                StateKind::Skill { .. } if ft => &[SUCCESS, FAILURE, RUNNING],
                StateKind::Skill { .. } => &[SUCCESS],
            };
            for label in needs {
                if !s.transitions.contains_key(*label) {
                    return bad(format!("state {} lacks a {label} transition", s.id));
                }
            }
            if s.kind == StateKind::Selector {
                for p in &self.plan_order {
                    if s.transitions.get(&dispatch_label(*p)) != Some(p) {
                        return bad(format!("SELECTOR cannot dispatch to {p}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn alloc(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn require(&self, id: NodeId) -> Result<&FsmState, FsmError> {
        self.states.get(&id).ok_or(FsmError::UnknownState(id))
    }

    /// Copies `from`'s watched interrupts (and their transitions) onto `to`.
    fn inherit_interrupts(&mut self, from: NodeId, to: NodeId) {
        let src = self.states[&from].clone();
        let dst = self.states.get_mut(&to).expect("new state");
        for g in src.interrupts {
            let target = src.transitions[&g.key()];
            dst.transitions.insert(g.key(), target);
            dst.interrupts.push(g);
        }
    }

    /// Inserts `new` on the edge preceding→following.
    pub fn add_sequential_state(
        &mut self,
        preceding: NodeId,
        new: NewState,
        following: NodeId,
    ) -> Result<StateEdit, FsmError> {
        let pre = self.require(preceding)?;
        self.require(following)?;
        let label = if pre.transitions.get(SUCCESS) == Some(&following) {
            SUCCESS.to_string()
        } else {
            pre.transitions
                .iter()
                .find(|(_, t)| **t == following)
                .map(|(l, _)| l.clone())
                .ok_or(FsmError::MissingEdge {
                    from: preceding,
                    to: following,
                })?
        };
        let follows_outcome = matches!(
            self.states[&following].kind,
            StateKind::Outcome(Status::Success)
        );
        let post = new.post.clone();
        let id = self.alloc();
        self.states.insert(id, skill_state(id, new));
        self.states
            .get_mut(&preceding)
            .expect("checked")
            .transitions
            .insert(label, id);
        let mut touched = vec![preceding];
        let sel = self.selector();
        {
            let s = self.states.get_mut(&id).expect("inserted");
            s.transitions.insert(SUCCESS.into(), following);
            if let Some(sel) = sel {
                s.transitions.insert(RUNNING.into(), id);
                s.transitions.insert(FAILURE.into(), sel);
            }
        }
        if let Some(sel) = sel {
            self.states
                .get_mut(&sel)
                .expect("selector")
                .transitions
                .insert(dispatch_label(id), id);
            touched.push(sel);
        }
        self.inherit_interrupts(preceding, id);
        let at = self
            .plan_order
            .iter()
            .position(|p| *p == preceding)
            .map_or(self.plan_order.len(), |i| i + 1);
        self.plan_order.insert(at, id);
        if follows_outcome {
            for p in post {
                if !self.goal.contains(&p) {
                    self.goal.push(p);
                }
            }
        }
        Ok(StateEdit {
            touched,
            added: Some(id),
        })
    }

    /// Adds `new` as the fallback strategy of `preceding`.
    pub fn add_alternative_state(
        &mut self,
        preceding: NodeId,
        new: NewState,
        following: NodeId,
    ) -> Result<StateEdit, FsmError> {
        let pre = self.require(preceding)?;
        if !matches!(pre.kind, StateKind::Skill { .. }) {
            return Err(FsmError::NotSkillState(preceding));
        }
        let sel = self
            .selector()
            .ok_or(FsmError::NoSelectorFailure(preceding))?;
        if pre.transitions.get(FAILURE) != Some(&sel) {
            return Err(FsmError::NoSelectorFailure(preceding));
        }
        if pre.transitions.get(SUCCESS) != Some(&following) {
            return Err(FsmError::MissingEdge {
                from: preceding,
                to: following,
            });
        }
        let id = self.alloc();
        let mut s = skill_state(id, new);
        s.transitions.insert(SUCCESS.into(), following);
        s.transitions.insert(FAILURE.into(), sel);
        s.transitions.insert(RUNNING.into(), id);
        self.states.insert(id, s);
        self.states
            .get_mut(&preceding)
            .expect("checked")
            .transitions
            .insert(FAILURE.into(), id);
        self.inherit_interrupts(preceding, id);
        Ok(StateEdit {
            touched: vec![preceding],
            added: Some(id),
        })
    }

    /// Fully connects `new`: every non-outcome state gains a transition to `new`,
    /// keyed by `condition` (the SELECTOR by `selector_condition`).
    pub fn add_connected_state(
        &mut self,
        new: NewState,
        condition: Guard,
        selector_condition: Guard,
    ) -> Result<StateEdit, FsmError> {
        let sel = self.selector();
        let id = self.alloc();
        let mut touched = Vec::new();
        for s in self.states.values_mut() {
            if s.is_outcome() {
                continue;
            }
            let g = if s.kind == StateKind::Selector {
                selector_condition.clone()
            } else {
                condition.clone()
            };
            s.transitions.insert(g.key(), id);
            if !s.interrupts.contains(&g) {
                s.interrupts.push(g);
            }
            touched.push(s.id);
        }
        let mut s = skill_state(id, new);
        s.transitions.insert(RUNNING.into(), id);
        if let Some(sel) = sel {
            s.transitions.insert(FAILURE.into(), sel);
            s.transitions.insert(SUCCESS.into(), sel);
        }
        self.states.insert(id, s);
        Ok(StateEdit {
            touched,
            added: Some(id),
        })
    }

    /// Deletes a state and every transition touching it, splicing
    /// predecessors to the removed state's successor under the same label.
    pub fn remove_state(&mut self, id: NodeId) -> Result<StateEdit, FsmError> {
        let victim = self.require(id)?.clone();
        if victim.kind == StateKind::Selector {
            return Err(FsmError::RemoveSelector);
        }
        if id == self.initial {
            return Err(FsmError::Invalid("cannot remove the initial state".into()));
        }
        self.states.remove(&id);
        let mut touched = Vec::new();
        for s in self.states.values_mut() {
            let labels: Vec<String> = s
                .transitions
                .iter()
                .filter(|(_, t)| **t == id)
                .map(|(l, _)| l.clone())
                .collect();
            if labels.is_empty() {
                continue;
            }
            touched.push(s.id);
            for l in labels {
                match victim.transitions.get(&l) {
                    Some(next) if *next != id && *next != s.id => {
                        s.transitions.insert(l, *next);
                    }
                    _ => {
                        s.transitions.remove(&l);
                    }
                }
            }
            let keys = &s.transitions;
            s.interrupts.retain(|g| keys.contains_key(&g.key()));
        }
        self.plan_order.retain(|p| *p != id);
        if let StateKind::Skill { post, .. } = &victim.kind {
            let still: BTreeSet<&ConditionLiteral> = self
                .plan_order
                .iter()
                .filter_map(|p| match &self.states[p].kind {
                    StateKind::Skill { post, .. } => Some(post),
                    _ => None,
                })
                .flatten()
                .collect();
            self.goal.retain(|g| !post.contains(g) || still.contains(g));
        }
        self.validate()?;
        Ok(StateEdit {
            touched,
            added: None,
        })
    }

    /// Returns the machine to its initial state without cancelling skills.
    pub fn reset(&mut self) {
        self.current = Current::At(self.initial);
        self.active = None;
    }

    /// Transition diagram in DOT format.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph fsm {\n");
        for s in self.states.values() {
            let shape = match s.kind {
                StateKind::Outcome(_) => "doublecircle",
                StateKind::Selector => "diamond",
                StateKind::Skill { .. } => "box",
            };
            let _ = writeln!(
                out,
                "  n{} [label=\"{}\", shape={shape}];",
                s.id,
                s.name.replace('"', "'")
            );
        }
        for s in self.states.values() {
            for (label, to) in &s.transitions {
                let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", s.id, to, label);
            }
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn counts(sm: &StateMachine) -> (usize, usize) {
        let c = sm.count_elements();
        (c.nodes, c.edges)
    }

    #[test]
    fn builders_match_published_sizes() {
        let plan = fixtures::fetch_plan();
        assert_eq!(
            counts(&StateMachine::build_sequential(&plan).unwrap()),
            (5, 4)
        );
        assert_eq!(
            counts(&StateMachine::build_fault_tolerant(&plan).unwrap()),
            (6, 18)
        );
        let big = fixtures::scalability_plan();
        assert_eq!(
            counts(&StateMachine::build_sequential(&big).unwrap()),
            (23, 22)
        );
        assert_eq!(
            counts(&StateMachine::build_fault_tolerant(&big).unwrap()),
            (24, 90)
        );
    }

    #[test]
    fn one_step_plans() {
        let plan = Plan {
            goal: vec![ConditionLiteral::docked()],
            steps: vec![fixtures::dock_action()],
        };
        assert_eq!(
            counts(&StateMachine::build_sequential(&plan).unwrap()),
            (2, 1)
        );
        assert_eq!(
            counts(&StateMachine::build_fault_tolerant(&plan).unwrap()),
            (3, 6)
        );
        let empty = Plan {
            goal: vec![],
            steps: vec![],
        };
        assert_eq!(
            StateMachine::build_sequential(&empty).unwrap_err(),
            FsmError::EmptyPlan
        );
    }

    #[test]
    fn fault_tolerant_wiring() {
        let sm = fixtures::fsm_fetch_fault_tolerant();
        let sel = sm.selector().unwrap();
        for id in sm.plan_order() {
            let s = sm.state(*id).unwrap();
            assert_eq!(s.transitions[RUNNING], *id);
            assert_eq!(s.transitions[FAILURE], sel);
            assert_eq!(
                sm.state(sel).unwrap().transitions[&dispatch_label(*id)],
                *id
            );
        }
        assert_eq!(sm.initial(), sel);
    }

    #[test]
    fn insertion_sizes() {
        assert_eq!(counts(&fixtures::fsm_fetch_tuck()), (7, 22));
        assert_eq!(counts(&fixtures::fsm_fetch_safe_move()), (7, 21));
        assert_eq!(counts(&fixtures::fsm_fetch_dock()), (7, 22));
        assert_eq!(counts(&fixtures::fsm_fetch_recharge()), (7, 25));
        assert_eq!(counts(&fixtures::fsm_fetch_recharge_dock()), (8, 30));
        assert_eq!(counts(&fixtures::fsm_scalability_recharge()), (25, 115));
    }

    #[test]
    fn connected_state_on_minimal_machine() {
        let mut sel = FsmState {
            id: NodeId(0),
            name: "SELECTOR".into(),
            kind: StateKind::Selector,
            interrupts: vec![],
            transitions: BTreeMap::new(),
        };
        sel.transitions.insert(RUNNING.into(), NodeId(0));
        sel.transitions.insert(SUCCESS.into(), NodeId(1));
        let mut sm = StateMachine::from_parts(
            vec![sel, outcome_state(NodeId(1), Status::Success)],
            NodeId(0),
            vec![],
            vec![],
        )
        .unwrap();
        let before = sm.edges().len();
        let edit = sm
            .add_connected_state(
                fixtures::recharge_state(20),
                Guard::unless(ConditionLiteral::battery_above(20)),
                Guard::unless(ConditionLiteral::battery_above(20)),
            )
            .unwrap();
        assert_eq!(edit.touched, vec![NodeId(0)]);
        let r = edit.added.unwrap();
        let edges = sm.edges();
        assert_eq!(edges.len(), before + 3);
        assert_eq!(edges.iter().filter(|e| e.0 == r).count(), 2);
        sm.validate().unwrap();
    }

    #[test]
    fn connected_state_touches_all_non_outcome_states() {
        let mut sm = fixtures::fsm_scalability();
        let expected = sm.len() - sm.outcome_count();
        let edit = sm
            .add_connected_state(
                fixtures::recharge_state(20),
                Guard::unless(ConditionLiteral::battery_above(20)),
                Guard::unless(ConditionLiteral::battery_above(20)),
            )
            .unwrap();
        assert_eq!(edit.touched.len(), expected);
    }

    #[test]
    fn add_then_remove_is_identity() {
        let base = fixtures::fsm_fetch_fault_tolerant();
        for modified in [
            fixtures::fsm_fetch_tuck(),
            fixtures::fsm_fetch_safe_move(),
            fixtures::fsm_fetch_dock(),
            fixtures::fsm_fetch_recharge(),
        ] {
            let mut m = modified.clone();
            let added = m.states().map(|s| s.id).max().unwrap();
            m.remove_state(added).unwrap();
            assert_eq!(m, base);
        }
    }

    #[test]
    fn remove_pick_splices() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let pick = sm.find("pick_cube2").unwrap();
        let mv = sm.find("move_to_cube2").unwrap();
        let md = sm.find("move_to_delivery").unwrap();
        let edit = sm.remove_state(pick).unwrap();
        assert_eq!(sm.len(), 5);
        assert_eq!(sm.state(mv).unwrap().transitions[SUCCESS], md);
        assert_eq!(edit.touched.len(), 2);
        assert_eq!(
            sm.remove_state(NodeId(77)).unwrap_err(),
            FsmError::UnknownState(NodeId(77))
        );
        let sel = sm.selector().unwrap();
        assert_eq!(sm.remove_state(sel).unwrap_err(), FsmError::RemoveSelector);
    }

    #[test]
    fn alternative_chain() {
        let mut sm = fixtures::fsm_fetch_safe_move();
        let sel = sm.selector().unwrap();
        let first = sm.find("safe_move_to_cube2").unwrap();
        let pick = sm.find("pick_cube2").unwrap();
        let mv = sm.find("move_to_cube2").unwrap();
        let mut slow = fixtures::safe_move_state();
        slow.name = "slow_move_to_cube2".into();
        let edit = sm.add_alternative_state(first, slow, pick).unwrap();
        let second = edit.added.unwrap();
        assert_eq!(sm.state(mv).unwrap().transitions[FAILURE], first);
        assert_eq!(sm.state(first).unwrap().transitions[FAILURE], second);
        assert_eq!(sm.state(second).unwrap().transitions[FAILURE], sel);
        assert_eq!(
            sm.add_alternative_state(sel, fixtures::safe_move_state(), pick)
                .unwrap_err(),
            FsmError::NotSkillState(sel)
        );
        sm.validate().unwrap();
    }

    #[test]
    fn sequential_insertion_errors() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let mv = sm.find("move_to_cube2").unwrap();
        let place = sm.find("place_cube2").unwrap();
        assert_eq!(
            sm.add_sequential_state(mv, fixtures::tuck_state(), place)
                .unwrap_err(),
            FsmError::MissingEdge {
                from: mv,
                to: place
            }
        );
    }

    #[test]
    fn dot_lists_every_transition() {
        let sm = fixtures::fsm_fetch_fault_tolerant();
        let dot = sm.to_dot();
        assert_eq!(dot.matches("->").count(), 18);
        assert!(dot.contains("label=\"RUNNING\""));
    }
}
