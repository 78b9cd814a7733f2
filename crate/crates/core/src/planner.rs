//! Backchaining synthesis of behavior trees, plan extraction and
//! precondition ordering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{PolicyTree, TreeBuilder};
use crate::types::{ActionLibrary, ActionSpec, ConditionLiteral, Goal, NodeId};

/// Default bound on nested condition expansions.
pub const DEPTH_BOUND: usize = 10;
const MAX_PERMUTATIONS: usize = 24;

/// Ground action sequence together with the goal it serves.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Plan {
    pub goal: Vec<ConditionLiteral>,
    pub steps: Vec<ActionSpec>,
}

impl Plan {
    /// Symbolic execution: every step's preconditions hold when it runs and
    /// the goal holds at the end.
    pub fn is_valid_from(&self, initial: &BTreeSet<ConditionLiteral>) -> bool {
        let mut state = initial.clone();
        for step in &self.steps {
            if !step.pre.iter().all(|p| state.contains(p)) {
                return false;
            }
            apply(step, &mut state);
        }
        self.goal.iter().all(|g| state.contains(g))
    }

    /// Dispatch guards: the goal regressed through the plan suffix at each step.
    pub fn regressed_guards(&self) -> Vec<Vec<ConditionLiteral>> {
        let mut guards = vec![Vec::new(); self.steps.len()];
        let mut need: Vec<ConditionLiteral> = self.goal.clone();
        for (i, step) in self.steps.iter().enumerate().rev() {
            need.retain(|l| !step.post.contains(l));
            for p in &step.pre {
                if !need.contains(p) {
                    need.push(p.clone());
                }
            }
            guards[i] = need.clone();
        }
        guards
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    Safe,
    Naive,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("unachievable condition `{0}`")]
    Unachievable(String),
    #[error("expansion of `{0}` exceeds the depth bound")]
    DepthExceeded(String),
    #[error("precondition `{literal}` of `{action}` is achieved by no earlier step and not initially true")]
    Unordered { action: String, literal: String },
    #[error("goal is empty")]
    EmptyGoal,
}

/// Result of a backchaining run.
#[derive(Debug, Clone)]
pub struct Backchained {
    pub tree: PolicyTree,
    pub warnings: Vec<String>,
    /// Action names in left-to-right leaf order.
    pub leaf_actions: Vec<String>,
}

/// Removes literals contradicted by `step`'s postconditions, then adds them.
fn apply(step: &ActionSpec, state: &mut BTreeSet<ConditionLiteral>) {
    state.retain(|l| !step.post.iter().any(|p| p.conflicts_with(l)));
    state.extend(step.post.iter().cloned());
}

fn permutations<T: Clone>(items: &[T], cap: usize) -> Vec<Vec<T>> {
    fn go<T: Clone>(rest: Vec<T>, acc: Vec<T>, out: &mut Vec<Vec<T>>, cap: usize) {
        if out.len() >= cap {
            return;
        }
        if rest.is_empty() {
            out.push(acc);
            return;
        }
        for i in 0..rest.len() {
            let mut r = rest.clone();
            let x = r.remove(i);
            let mut a = acc.clone();
            a.push(x);
            go(r, a, out, cap);
        }
    }
    let mut out = Vec::new();
    go(items.to_vec(), Vec::new(), &mut out, cap);
    out
}

struct Synth<'a> {
    lib: &'a ActionLibrary,
    initial: &'a BTreeSet<ConditionLiteral>,
    ordering: Ordering,
    first_only: bool,
    orders: BTreeMap<String, Vec<ConditionLiteral>>,
    expanded_for: BTreeMap<String, ConditionLiteral>,
    warnings: Vec<String>,
    leaves: Vec<String>,
    b: TreeBuilder,
}

impl<'a> Synth<'a> {
    /// Symbolically achieves `lit` with first achievers, recording the
    /// precondition order each action ends up using.
    fn achieve(
        &mut self,
        lit: &ConditionLiteral,
        state: &mut BTreeSet<ConditionLiteral>,
        plan: &mut Vec<ActionSpec>,
        depth: usize,
    ) -> Result<bool, PlanError> {
        if state.contains(lit) {
            return Ok(true);
        }
        if depth > DEPTH_BOUND {
            return Err(PlanError::DepthExceeded(lit.key()));
        }
        let Some(a) = self.lib.achievers(lit).first().copied() else {
            return Err(PlanError::Unachievable(lit.key()));
        };
        let order = self.safe_order(a, state, depth)?;
        for p in &order {
            self.achieve(p, state, plan, depth + 1)?;
        }
        let ok = a.pre.iter().all(|p| state.contains(p));
        apply(a, state);
        plan.push(a.clone());
        Ok(ok)
    }

    /// First clobber-free precondition order (declared order tried first),
    /// then sorted by achieving step.
    fn safe_order(
        &mut self,
        a: &ActionSpec,
        state: &BTreeSet<ConditionLiteral>,
        depth: usize,
    ) -> Result<Vec<ConditionLiteral>, PlanError> {
        if let Some(o) = self.orders.get(&a.name) {
            return Ok(o.clone());
        }
        if a.pre.len() < 2 {
            return Ok(a.pre.clone());
        }
        for perm in permutations(&a.pre, MAX_PERMUTATIONS) {
            let mut s = state.clone();
            let mut sub = Vec::new();
            let mut ok = true;
            for p in &perm {
                ok &= self.achieve(p, &mut s, &mut sub, depth + 1)?;
            }
            if ok && a.pre.iter().all(|p| s.contains(p)) {
                let ordered = order_preconditions(
                    a,
                    &Plan {
                        goal: vec![],
                        steps: sub,
                    },
                    state,
                )?;
                self.orders.insert(a.name.clone(), ordered.clone());
                return Ok(ordered);
            }
        }
        self.warnings.push(format!(
            "no clobber-free precondition order for `{}`",
            a.name
        ));
        Ok(a.pre.clone())
    }

    fn expand(&mut self, lit: &ConditionLiteral, depth: usize) -> Result<NodeId, PlanError> {
        if depth > DEPTH_BOUND {
            return Err(PlanError::DepthExceeded(lit.key()));
        }
        let mut achievers = self.lib.achievers(lit);
        if achievers.is_empty() {
            if self.initial.contains(lit) {
                return Ok(self.b.condition(lit.clone()));
            }
            return Err(PlanError::Unachievable(lit.key()));
        }
        if self.first_only {
            achievers.truncate(1);
        }
        let cond = self.b.condition(lit.clone());
        let mut children = vec![cond];
        for a in achievers {
            match self.expanded_for.get(&a.name) {
                Some(other) if other != lit => {
                    self.warnings.push(format!(
                        "`{}` achieves both `{}` and `{}`; expanded at the first only",
                        a.name, other, lit
                    ));
                    continue;
                }
                _ => {
                    self.expanded_for.insert(a.name.clone(), lit.clone());
                }
            }
            children.push(self.expand_action(a, depth)?);
        }
        if children.len() == 1 {
            return Ok(cond);
        }
        Ok(self.b.fallback(children))
    }

    fn expand_action(&mut self, a: &ActionSpec, depth: usize) -> Result<NodeId, PlanError> {
        let pre = match self.ordering {
            Ordering::Naive => a.pre.clone(),
            Ordering::Safe => {
                let initial = self.initial.clone();
                self.safe_order(a, &initial, depth)?
            }
        };
        let mut children = Vec::new();
        for p in &pre {
            children.push(self.expand(p, depth + 1)?);
        }
        let action = self.b.action(a.call());
        self.leaves.push(a.name.clone());
        if children.is_empty() {
            return Ok(action);
        }
        children.push(action);
        Ok(self.b.sequence(children))
    }
}

fn synthesize(
    goal: &Goal,
    lib: &ActionLibrary,
    ordering: Ordering,
    initial: &BTreeSet<ConditionLiteral>,
    first_only: bool,
) -> Result<Backchained, PlanError> {
    if goal.conditions.is_empty() {
        return Err(PlanError::EmptyGoal);
    }
    let mut s = Synth {
        lib,
        initial,
        ordering,
        first_only,
        orders: BTreeMap::new(),
        expanded_for: BTreeMap::new(),
        warnings: Vec::new(),
        leaves: Vec::new(),
        b: TreeBuilder::new(),
    };
    if ordering == Ordering::Safe {
        // Plan once from the initial state so precondition orders reflect
        // actual execution order.
        let mut state = initial.clone();
        let mut plan = Vec::new();
        for g in &goal.conditions {
            s.achieve(g, &mut state, &mut plan, 0)?;
        }
    }
    let mut tops = Vec::new();
    for g in &goal.conditions {
        tops.push(s.expand(g, 0)?);
    }
    let root = if tops.len() == 1 {
        tops[0]
    } else {
        s.b.sequence(tops)
    };
    let tree = std::mem::take(&mut s.b)
        .build(root)
        .expect("synthesized trees are well formed");
    Ok(Backchained {
        tree,
        warnings: s.warnings,
        leaf_actions: s.leaves,
    })
}

/// Backchains `goal` into a tree, assuming nothing holds initially.
pub fn backchain(
    goal: &Goal,
    lib: &ActionLibrary,
    ordering: Ordering,
) -> Result<PolicyTree, PlanError> {
    Ok(backchain_with(goal, lib, ordering, &BTreeSet::new())?.tree)
}

/// Backchains from an explicit set of initially true literals.
pub fn backchain_with(
    goal: &Goal,
    lib: &ActionLibrary,
    ordering: Ordering,
    initial: &BTreeSet<ConditionLiteral>,
) -> Result<Backchained, PlanError> {
    synthesize(goal, lib, ordering, initial, false)
}

/// Action-leaf order of the safe backchained tree, first achievers only.
pub fn extract_plan(goal: &Goal, lib: &ActionLibrary) -> Result<Plan, PlanError> {
    let out = synthesize(goal, lib, Ordering::Safe, &BTreeSet::new(), true)?;
    let steps = out
        .leaf_actions
        .iter()
        .map(|n| {
            lib.get(n)
                .expect("leaf names come from the library")
                .clone()
        })
        .collect();
    Ok(Plan {
        goal: goal.conditions.clone(),
        steps,
    })
}

/// Sorts `action`'s preconditions by the plan index of the step achieving
/// them; initially true ones first, ties stable.
pub fn order_preconditions(
    action: &ActionSpec,
    plan: &Plan,
    initial: &BTreeSet<ConditionLiteral>,
) -> Result<Vec<ConditionLiteral>, PlanError> {
    let limit = plan
        .steps
        .iter()
        .position(|s| s.name == action.name)
        .unwrap_or(plan.steps.len());
    let mut keyed = Vec::with_capacity(action.pre.len());
    for p in &action.pre {
        let idx = plan.steps[..limit].iter().rposition(|s| s.achieves(p));
        let key = match idx {
            Some(i) => i as i64,
            None if initial.contains(p) => -1,
            None => {
                return Err(PlanError::Unordered {
                    action: action.name.clone(),
                    literal: p.key(),
                })
            }
        };
        keyed.push((key, p.clone()));
    }
    keyed.sort_by_key(|(k, _)| *k);
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}
