//! JSON document formats for policies, action libraries and goals.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bt::{BtKind, BtNode, PolicyTree};
use crate::fsm::{FsmState, Guard, StateKind, StateMachine};
use crate::hfsm::{Hfsm, HfsmContainer, HfsmKind, Target, Wiring};
use crate::types::{ActionSpec, Arg, ConditionLiteral, Goal, NodeId, Predicate, SkillCall, Status};

pub const VERSION: u32 = 1;

/// Any of the three executable policy kinds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicyDocument {
    Bt(PolicyTree),
    Fsm(StateMachine),
    Hfsm(Hfsm),
}

impl PolicyDocument {
    pub fn kind(&self) -> &'static str {
        match self {
            PolicyDocument::Bt(_) => "bt",
            PolicyDocument::Fsm(_) => "fsm",
            PolicyDocument::Hfsm(_) => "hfsm",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DocumentError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("schema violation at `{path}` (line {line}, column {column}): {message}")]
    Schema {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown document kind `{0}`")]
    UnknownKind(String),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("{from} references missing id {to}")]
    Dangling { from: String, to: NodeId },
    #[error("invalid policy: {0}")]
    Invalid(String),
}

fn typed<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, DocumentError> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        DocumentError::Schema {
            path,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(syntax)?;
    Ok(value)
}

fn syntax(e: serde_json::Error) -> DocumentError {
    DocumentError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn check_version(v: u32) -> Result<(), DocumentError> {
    if v == VERSION {
        Ok(())
    } else {
        Err(DocumentError::Version(v))
    }
}

fn to_canonical<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum BtType {
    Sequence,
    Fallback,
    Parallel,
    MemorySequence,
    Action,
    Condition,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBtNode {
    id: NodeId,
    #[serde(rename = "type")]
    ty: BtType,
    name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skill: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    args: Option<Vec<Arg>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBt {
    version: u32,
    kind: String,
    root: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next_id: Option<u32>,
    nodes: Vec<RawBtNode>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FsmType {
    Skill,
    Selector,
    Outcome,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFsmState {
    id: NodeId,
    #[serde(rename = "type")]
    ty: FsmType,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skill: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    args: Option<Vec<Arg>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    guard: Vec<ConditionLiteral>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    post: Vec<ConditionLiteral>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    outcome: Option<Status>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    interrupts: Vec<Guard>,
    #[serde(default)]
    transitions: BTreeMap<String, NodeId>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFsm {
    version: u32,
    kind: String,
    initial: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    next_id: Option<u32>,
    #[serde(default)]
    goal: Vec<ConditionLiteral>,
    #[serde(default)]
    plan_order: Vec<NodeId>,
    states: Vec<RawFsmState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum HfsmType {
    SequenceContainer,
    FallbackContainer,
    Action,
    Condition,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContainer {
    id: NodeId,
    #[serde(rename = "type")]
    ty: HfsmType,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skill: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    args: Option<Vec<Arg>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<RawContainer>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    wiring: Vec<Wiring>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHfsm {
    version: u32,
    kind: String,
    root: RawContainer,
}

#[derive(Deserialize)]
struct Peek {
    kind: Option<serde_json::Value>,
}

fn invalid(e: impl std::fmt::Display) -> DocumentError {
    DocumentError::Invalid(e.to_string())
}

fn literal(
    pred: Option<Predicate>,
    args: Option<Vec<Arg>>,
    at: &str,
) -> Result<ConditionLiteral, DocumentError> {
    let pred =
        pred.ok_or_else(|| DocumentError::Invalid(format!("{at}: condition without predicate")))?;
    ConditionLiteral::new(pred, args.unwrap_or_default())
        .map_err(|e| DocumentError::Invalid(format!("{at}: {e}")))
}

fn call(
    skill: Option<String>,
    args: Option<Vec<Arg>>,
    at: &str,
) -> Result<SkillCall, DocumentError> {
    let skill =
        skill.ok_or_else(|| DocumentError::Invalid(format!("{at}: action without skill")))?;
    Ok(SkillCall {
        skill,
        args: args.unwrap_or_default(),
    })
}

fn bt_from_raw(raw: RawBt) -> Result<PolicyTree, DocumentError> {
    check_version(raw.version)?;
    let ids: BTreeSet<NodeId> = raw.nodes.iter().map(|n| n.id).collect();
    if !ids.contains(&raw.root) {
        return Err(DocumentError::Dangling {
            from: "root".into(),
            to: raw.root,
        });
    }
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for n in raw.nodes {
        let at = format!("node {}", n.id);
        if let Some(c) = n.children.iter().find(|c| !ids.contains(c)) {
            return Err(DocumentError::Dangling { from: at, to: *c });
        }
        let kind = match n.ty {
            BtType::Sequence => BtKind::Sequence,
            BtType::Fallback => BtKind::Fallback,
            BtType::MemorySequence => BtKind::MemorySequence,
            BtType::Parallel => BtKind::Parallel {
                success_threshold: n.threshold.ok_or_else(|| {
                    DocumentError::Invalid(format!("{at}: parallel without threshold"))
                })?,
            },
            BtType::Action => BtKind::Action(call(n.skill, n.args, &at)?),
            BtType::Condition => BtKind::Condition(literal(n.predicate, n.args, &at)?),
        };
        nodes.push(BtNode {
            id: n.id,
            kind,
            children: n.children,
            name: n.name,
        });
    }
    let mut tree = PolicyTree::from_nodes(nodes, raw.root).map_err(invalid)?;
    if let Some(next) = raw.next_id {
        tree.reserve_ids(next);
    }
    Ok(tree)
}

fn bt_to_raw(t: &PolicyTree) -> RawBt {
    let nodes = t
        .nodes()
        .map(|n| {
            let mut r = RawBtNode {
                id: n.id,
                ty: BtType::Sequence,
                name: n.name.clone(),
                children: n.children.clone(),
                skill: None,
                predicate: None,
                args: None,
                threshold: None,
            };
            match &n.kind {
                BtKind::Sequence => {}
                BtKind::Fallback => r.ty = BtType::Fallback,
                BtKind::MemorySequence => r.ty = BtType::MemorySequence,
                BtKind::Parallel { success_threshold } => {
                    r.ty = BtType::Parallel;
                    r.threshold = Some(*success_threshold);
                }
                BtKind::Action(c) => {
                    r.ty = BtType::Action;
                    r.skill = Some(c.skill.clone());
                    r.args = Some(c.args.clone());
                }
                BtKind::Condition(l) => {
                    r.ty = BtType::Condition;
                    r.predicate = Some(l.pred);
                    r.args = Some(l.args.clone());
                }
            }
            r
        })
        .collect();
    RawBt {
        version: VERSION,
        kind: "bt".into(),
        root: t.root(),
        next_id: Some(t.next_free_id()),
        nodes,
    }
}

fn fsm_from_raw(raw: RawFsm) -> Result<StateMachine, DocumentError> {
    check_version(raw.version)?;
    let ids: BTreeSet<NodeId> = raw.states.iter().map(|s| s.id).collect();
    if !ids.contains(&raw.initial) {
        return Err(DocumentError::Dangling {
            from: "initial".into(),
            to: raw.initial,
        });
    }
    if let Some(p) = raw.plan_order.iter().find(|p| !ids.contains(p)) {
        return Err(DocumentError::Dangling {
            from: "plan_order".into(),
            to: *p,
        });
    }
    let mut states = Vec::with_capacity(raw.states.len());
    for s in raw.states {
        let at = format!("state {}", s.id);
        for (label, to) in &s.transitions {
            if !ids.contains(to) {
                return Err(DocumentError::Dangling {
                    from: format!("{at} `{label}`"),
                    to: *to,
                });
            }
        }
        let kind =
            match s.ty {
                FsmType::Skill => StateKind::Skill {
                    call: call(s.skill, s.args, &at)?,
                    guard: s.guard,
                    post: s.post,
                },
                FsmType::Selector => StateKind::Selector,
                FsmType::Outcome => StateKind::Outcome(s.outcome.ok_or_else(|| {
                    DocumentError::Invalid(format!("{at}: outcome without status"))
                })?),
            };
        states.push(FsmState {
            id: s.id,
            name: s.name,
            kind,
            interrupts: s.interrupts,
            transitions: s.transitions,
        });
    }
    let mut sm =
        StateMachine::from_parts(states, raw.initial, raw.plan_order, raw.goal).map_err(invalid)?;
    if let Some(next) = raw.next_id {
        sm.reserve_ids(next);
    }
    Ok(sm)
}

fn fsm_to_raw(sm: &StateMachine) -> RawFsm {
    let states = sm
        .states()
        .map(|s| {
            let mut r = RawFsmState {
                id: s.id,
                ty: FsmType::Selector,
                name: s.name.clone(),
                skill: None,
                args: None,
                guard: vec![],
                post: vec![],
                outcome: None,
                interrupts: s.interrupts.clone(),
                transitions: s.transitions.clone(),
            };
            match &s.kind {
                StateKind::Selector => {}
                StateKind::Outcome(o) => {
                    r.ty = FsmType::Outcome;
                    r.outcome = Some(*o);
                }
                StateKind::Skill { call, guard, post } => {
                    r.ty = FsmType::Skill;
                    r.skill = Some(call.skill.clone());
                    r.args = Some(call.args.clone());
                    r.guard = guard.clone();
                    r.post = post.clone();
                }
            }
            r
        })
        .collect();
    RawFsm {
        version: VERSION,
        kind: "fsm".into(),
        initial: sm.initial(),
        next_id: Some(sm.next_free_id()),
        goal: sm.goal().to_vec(),
        plan_order: sm.plan_order().to_vec(),
        states,
    }
}

fn container_from_raw(raw: RawContainer) -> Result<HfsmContainer, DocumentError> {
    let at = format!("container {}", raw.id);
    let kind = match raw.ty {
        HfsmType::SequenceContainer => HfsmKind::SequenceContainer,
        HfsmType::FallbackContainer => HfsmKind::FallbackContainer,
        HfsmType::Action => HfsmKind::Action(call(raw.skill, raw.args, &at)?),
        HfsmType::Condition => HfsmKind::Condition(literal(raw.predicate, raw.args, &at)?),
    };
    let child_ids: BTreeSet<NodeId> = raw.children.iter().map(|c| c.id).collect();
    for w in &raw.wiring {
        for s in Status::ALL {
            if let Target::Child(t) = w.target(s) {
                if !child_ids.contains(&t) {
                    return Err(DocumentError::Dangling {
                        from: format!("{at} wiring"),
                        to: t,
                    });
                }
            }
        }
    }
    let children = raw
        .children
        .into_iter()
        .map(container_from_raw)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HfsmContainer {
        id: raw.id,
        name: raw.name,
        kind,
        children,
        wiring: raw.wiring,
    })
}

fn container_to_raw(c: &HfsmContainer) -> RawContainer {
    let (ty, skill, predicate, args) = match &c.kind {
        HfsmKind::SequenceContainer => (HfsmType::SequenceContainer, None, None, None),
        HfsmKind::FallbackContainer => (HfsmType::FallbackContainer, None, None, None),
        HfsmKind::Action(call) => (
            HfsmType::Action,
            Some(call.skill.clone()),
            None,
            Some(call.args.clone()),
        ),
        HfsmKind::Condition(l) => (
            HfsmType::Condition,
            None,
            Some(l.pred),
            Some(l.args.clone()),
        ),
    };
    RawContainer {
        id: c.id,
        ty,
        name: c.name.clone(),
        skill,
        predicate,
        args,
        children: c.children.iter().map(container_to_raw).collect(),
        wiring: c.wiring.clone(),
    }
}

/// Parses a policy document of any kind.
pub fn parse_policy_document(bytes: &[u8]) -> Result<PolicyDocument, DocumentError> {
    let peek: Peek = serde_json::from_slice(bytes).map_err(syntax)?;
    let kind = match peek.kind {
        Some(serde_json::Value::String(k)) => k,
        Some(other) => return Err(DocumentError::UnknownKind(other.to_string())),
        None => {
            return Err(DocumentError::Schema {
                path: "kind".into(),
                line: 1,
                column: 1,
                message: "missing field `kind`".into(),
            })
        }
    };
    match kind.as_str() {
        "bt" => Ok(PolicyDocument::Bt(bt_from_raw(typed(bytes)?)?)),
        "fsm" => Ok(PolicyDocument::Fsm(fsm_from_raw(typed(bytes)?)?)),
        "hfsm" => {
            let raw: RawHfsm = typed(bytes)?;
            check_version(raw.version)?;
            Ok(PolicyDocument::Hfsm(
                Hfsm::new(container_from_raw(raw.root)?).map_err(invalid)?,
            ))
        }
        _ => Err(DocumentError::UnknownKind(kind)),
    }
}

/// Canonical pretty JSON with a trailing newline.
pub fn serialize_policy_document(doc: &PolicyDocument) -> String {
    match doc {
        PolicyDocument::Bt(t) => to_canonical(&bt_to_raw(t)),
        PolicyDocument::Fsm(sm) => to_canonical(&fsm_to_raw(sm)),
        PolicyDocument::Hfsm(h) => to_canonical(&RawHfsm {
            version: VERSION,
            kind: "hfsm".into(),
            root: container_to_raw(h.root()),
        }),
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLibrary {
    actions: Vec<ActionSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGoal {
    version: u32,
    goal: Vec<ConditionLiteral>,
}

/// Parses `{"actions": [...]}` without validating the library.
pub fn parse_action_library(bytes: &[u8]) -> Result<Vec<ActionSpec>, DocumentError> {
    Ok(typed::<RawLibrary>(bytes)?.actions)
}

pub fn serialize_action_library(actions: &[ActionSpec]) -> String {
    to_canonical(&RawLibrary {
        actions: actions.to_vec(),
    })
}

pub fn parse_goal(bytes: &[u8]) -> Result<Goal, DocumentError> {
    let raw: RawGoal = typed(bytes)?;
    check_version(raw.version)?;
    Goal::new(raw.goal).map_err(invalid)
}

pub fn serialize_goal(goal: &Goal) -> String {
    to_canonical(&RawGoal {
        version: VERSION,
        goal: goal.conditions.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn roundtrip(doc: &PolicyDocument) -> String {
        let text = serialize_policy_document(doc);
        let back = parse_policy_document(text.as_bytes()).unwrap();
        assert_eq!(&back, doc);
        let again = serialize_policy_document(&back);
        assert_eq!(again, text);
        text
    }

    #[test]
    fn corpus_roundtrips() {
        for (name, doc) in fixtures::corpus() {
            let text = roundtrip(&doc);
            assert!(text.ends_with("}\n"), "{name}");
        }
    }

    #[test]
    fn fetch_tree_document_has_14_nodes() {
        let text = serialize_policy_document(&PolicyDocument::Bt(fixtures::bt_fetch()));
        match parse_policy_document(text.as_bytes()).unwrap() {
            PolicyDocument::Bt(t) => assert_eq!(t.len(), 14),
            other => panic!("unexpected {}", other.kind()),
        }
    }

    #[test]
    fn dangling_child_rejected() {
        let doc = r#"{"version":1,"kind":"bt","root":0,"nodes":[
            {"id":0,"type":"sequence","name":"s","children":[1,7]},
            {"id":1,"type":"action","name":"a","skill":"tuck","args":[]}]}"#;
        assert_eq!(
            parse_policy_document(doc.as_bytes()).unwrap_err(),
            DocumentError::Dangling {
                from: "node 0".into(),
                to: NodeId(7)
            }
        );
    }

    #[test]
    fn schema_errors_carry_path_and_line() {
        let doc = "{\"version\":1,\"kind\":\"bt\",\"root\":0,\"nodes\":[\n{\"id\":0,\"type\":\"decorator\",\"name\":\"x\"}]}";
        match parse_policy_document(doc.as_bytes()).unwrap_err() {
            DocumentError::Schema { path, line, .. } => {
                assert_eq!(path, "nodes[0].type");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_policy_document(br#"{"version":1,"kind":"petri"}"#),
            Err(DocumentError::UnknownKind(_))
        ));
        assert!(matches!(
            parse_policy_document(b"{\"kind\":"),
            Err(DocumentError::Syntax { .. })
        ));
    }

    #[test]
    fn fsm_dangling_transition_rejected() {
        let mut text =
            serialize_policy_document(&PolicyDocument::Fsm(fixtures::fsm_fetch_sequential()));
        text = text.replacen("\"SUCCESS\": 2", "\"SUCCESS\": 42", 1);
        assert!(matches!(
            parse_policy_document(text.as_bytes()),
            Err(DocumentError::Dangling { to: NodeId(42), .. })
        ));
    }

    #[test]
    fn library_and_goal_roundtrip() {
        let lib = fixtures::fetch_library();
        let text = serialize_action_library(&lib);
        assert_eq!(parse_action_library(text.as_bytes()).unwrap(), lib);
        let goal = fixtures::fetch_goal();
        let text = serialize_goal(&goal);
        assert_eq!(parse_goal(text.as_bytes()).unwrap(), goal);
        assert!(parse_goal(br#"{"version":1,"goal":[]}"#).is_err());
    }

    #[test]
    fn next_id_survives_roundtrip() {
        let mut t = fixtures::bt_fetch();
        let sub = fixtures::tuck_subtree().with_ids_from(t.next_free_id());
        t.insert_subtree(t.root(), 0, sub).unwrap();
        let added = t.node(t.root()).unwrap().children[0];
        t.remove_subtree(added).unwrap();
        let text = serialize_policy_document(&PolicyDocument::Bt(t.clone()));
        let PolicyDocument::Bt(back) = parse_policy_document(text.as_bytes()).unwrap() else {
            panic!()
        };
        assert_eq!(back.next_free_id(), t.next_free_id());
    }
}
