//! Shared vocabulary: statuses, condition literals, action specifications,
//! node identifiers and the world interface every engine drives.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Three-valued execution result shared by all policy kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Success,
    Failure,
    Running,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::Success, Status::Failure, Status::Running];

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Success => "SUCCESS",
            Status::Failure => "FAILURE",
            Status::Running => "RUNNING",
        }
    }

    pub fn parse(s: &str) -> Option<Status> {
        match s {
            "SUCCESS" => Some(Status::Success),
            "FAILURE" => Some(Status::Failure),
            "RUNNING" => Some(Status::Running),
            _ => None,
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Document-scoped node identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The closed predicate set understood by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    RobotAt,
    InHand,
    ObjectAt,
    BatteryAbove,
    ArmTucked,
    Docked,
    Found,
}

impl Predicate {
    pub fn as_str(self) -> &'static str {
        match self {
            Predicate::RobotAt => "robot_at",
            Predicate::InHand => "in_hand",
            Predicate::ObjectAt => "object_at",
            Predicate::BatteryAbove => "battery_above",
            Predicate::ArmTucked => "arm_tucked",
            Predicate::Docked => "docked",
            Predicate::Found => "found",
        }
    }
}

/// Literal argument: a symbol (station, item, marker) or a number.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Arg {
    Num(i64),
    Sym(String),
}

impl Arg {
    pub fn sym(s: impl Into<String>) -> Arg {
        Arg::Sym(s.into())
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Arg::Sym(s) => Some(s),
            Arg::Num(_) => None,
        }
    }

    pub fn as_num(&self) -> Option<i64> {
        match self {
            Arg::Num(n) => Some(*n),
            Arg::Sym(_) => None,
        }
    }
}

impl fmt::Display for Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arg::Num(n) => write!(f, "{n}"),
            Arg::Sym(s) => f.write_str(s),
        }
    }
}

fn join_args(args: &[Arg]) -> String {
    args.iter()
        .map(|a| a.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid literal {pred}: {reason}")]
pub struct LiteralError {
    pub pred: String,
    pub reason: String,
}

#[derive(Deserialize)]
struct RawLiteral {
    pred: Predicate,
    #[serde(default)]
    args: Vec<Arg>,
}

/// A ground condition over the world, e.g. `robot_at(delivery)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawLiteral")]
pub struct ConditionLiteral {
    pub pred: Predicate,
    pub args: Vec<Arg>,
}

impl TryFrom<RawLiteral> for ConditionLiteral {
    type Error = LiteralError;
    fn try_from(raw: RawLiteral) -> Result<Self, Self::Error> {
        ConditionLiteral::new(raw.pred, raw.args)
    }
}

impl ConditionLiteral {
    /// Builds a literal after checking arity and argument types.
    pub fn new(pred: Predicate, args: Vec<Arg>) -> Result<Self, LiteralError> {
        let err = |reason: &str| LiteralError {
            pred: pred.as_str().to_string(),
            reason: reason.to_string(),
        };
        let all_sym = args.iter().all(|a| a.as_sym().is_some());
        match pred {
            Predicate::RobotAt | Predicate::InHand => {
                if args.len() != 1 || !all_sym {
                    return Err(err("expects exactly one symbol"));
                }
            }
            Predicate::ObjectAt => {
                if args.len() != 2 || !all_sym {
                    return Err(err("expects an item and a station"));
                }
            }
            Predicate::BatteryAbove => match args.as_slice() {
                [Arg::Num(n)] if (0..=100).contains(n) => {}
                _ => return Err(err("expects one number in [0,100]")),
            },
            Predicate::ArmTucked | Predicate::Docked => {
                if !args.is_empty() {
                    return Err(err("takes no arguments"));
                }
            }
            Predicate::Found => {
                if !all_sym {
                    return Err(err("expects marker symbols"));
                }
            }
        }
        Ok(ConditionLiteral { pred, args })
    }

    pub fn robot_at(place: &str) -> Self {
        ConditionLiteral {
            pred: Predicate::RobotAt,
            args: vec![Arg::sym(place)],
        }
    }

    pub fn in_hand(item: &str) -> Self {
        ConditionLiteral {
            pred: Predicate::InHand,
            args: vec![Arg::sym(item)],
        }
    }

    pub fn object_at(item: &str, station: &str) -> Self {
        ConditionLiteral {
            pred: Predicate::ObjectAt,
            args: vec![Arg::sym(item), Arg::sym(station)],
        }
    }

    pub fn battery_above(threshold: i64) -> Self {
        ConditionLiteral::new(Predicate::BatteryAbove, vec![Arg::Num(threshold)])
            .expect("battery threshold in [0,100]")
    }

    pub fn arm_tucked() -> Self {
        ConditionLiteral {
            pred: Predicate::ArmTucked,
            args: vec![],
        }
    }

    pub fn docked() -> Self {
        ConditionLiteral {
            pred: Predicate::Docked,
            args: vec![],
        }
    }

    pub fn found<S: AsRef<str>>(markers: &[S]) -> Self {
        ConditionLiteral {
            pred: Predicate::Found,
            args: markers.iter().map(|m| Arg::sym(m.as_ref())).collect(),
        }
    }

    /// Canonical textual key, used as a transition label and for display.
    pub fn key(&self) -> String {
        format!("{}({})", self.pred.as_str(), join_args(&self.args))
    }

    pub fn sym_arg(&self, i: usize) -> Option<&str> {
        self.args.get(i).and_then(Arg::as_sym)
    }

    /// True when both literals cannot hold at the same time in the fetch world.
    pub fn conflicts_with(&self, other: &ConditionLiteral) -> bool {
        use Predicate::*;
        match (self.pred, other.pred) {
            (RobotAt, RobotAt) => self.args != other.args,
            (RobotAt, Docked) | (Docked, RobotAt) => true,
            (InHand, ObjectAt) => self.sym_arg(0) == other.sym_arg(0),
            (ObjectAt, InHand) => self.sym_arg(0) == other.sym_arg(0),
            (ObjectAt, ObjectAt) => self.sym_arg(0) == other.sym_arg(0) && self.args != other.args,
            _ => false,
        }
    }
}

impl fmt::Display for ConditionLiteral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

/// A skill invocation: skill name plus ground arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SkillCall {
    pub skill: String,
    #[serde(default)]
    pub args: Vec<Arg>,
}

impl SkillCall {
    pub fn new(skill: &str, args: &[&str]) -> Self {
        SkillCall {
            skill: skill.to_string(),
            args: args.iter().map(|a| Arg::sym(*a)).collect(),
        }
    }
}

impl fmt::Display for SkillCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.skill, join_args(&self.args))
    }
}

/// A named, ground action with ordered pre- and postconditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub name: String,
    #[serde(default)]
    pub params: Vec<Arg>,
    #[serde(default)]
    pub pre: Vec<ConditionLiteral>,
    pub post: Vec<ConditionLiteral>,
    pub skill: String,
}

impl ActionSpec {
    pub fn new(
        name: &str,
        skill: &str,
        params: &[&str],
        pre: Vec<ConditionLiteral>,
        post: Vec<ConditionLiteral>,
    ) -> Self {
        ActionSpec {
            name: name.to_string(),
            params: params.iter().map(|p| Arg::sym(*p)).collect(),
            pre,
            post,
            skill: skill.to_string(),
        }
    }

    pub fn call(&self) -> SkillCall {
        SkillCall {
            skill: self.skill.clone(),
            args: self.params.clone(),
        }
    }

    pub fn achieves(&self, lit: &ConditionLiteral) -> bool {
        self.post.contains(lit)
    }
}

/// Ordered, non-empty set of goal conditions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub conditions: Vec<ConditionLiteral>,
}

impl Goal {
    pub fn new(conditions: Vec<ConditionLiteral>) -> Result<Self, LibraryError> {
        if conditions.is_empty() {
            return Err(LibraryError::EmptyGoal);
        }
        Ok(Goal { conditions })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LibraryError {
    #[error("empty library")]
    Empty,
    #[error("empty goal")]
    EmptyGoal,
    #[error("duplicate action name `{0}`")]
    DuplicateName(String),
    #[error("action `{action}` needs `{literal}` which only it achieves (direct self-loop)")]
    SelfLoop { action: String, literal: String },
    #[error("action `{action}`: {reason}")]
    InvalidSpec { action: String, reason: String },
}

/// A validated action library indexed by postcondition literal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionLibrary {
    actions: Vec<ActionSpec>,
    by_post: BTreeMap<ConditionLiteral, Vec<usize>>,
}

impl ActionLibrary {
    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    /// Achievers of `lit`, in declaration order.
    pub fn achievers(&self, lit: &ConditionLiteral) -> Vec<&ActionSpec> {
        self.by_post
            .get(lit)
            .map(|ix| ix.iter().map(|&i| &self.actions[i]).collect())
            .unwrap_or_default()
    }

    /// Distinct postcondition keys in the index.
    pub fn post_keys(&self) -> Vec<&ConditionLiteral> {
        self.by_post.keys().collect()
    }

    pub fn get(&self, name: &str) -> Option<&ActionSpec> {
        self.actions.iter().find(|a| a.name == name)
    }
}

/// Checks a list of specs and builds the postcondition index.
pub fn validate_action_library(specs: Vec<ActionSpec>) -> Result<ActionLibrary, LibraryError> {
    if specs.is_empty() {
        return Err(LibraryError::Empty);
    }
    let mut by_post: BTreeMap<ConditionLiteral, Vec<usize>> = BTreeMap::new();
    for (i, spec) in specs.iter().enumerate() {
        if specs[..i].iter().any(|s| s.name == spec.name) {
            return Err(LibraryError::DuplicateName(spec.name.clone()));
        }
        if spec.post.is_empty() {
            return Err(LibraryError::InvalidSpec {
                action: spec.name.clone(),
                reason: "no postconditions".into(),
            });
        }
        if let Some(lit) = spec.pre.iter().find(|p| spec.post.contains(p)) {
            return Err(LibraryError::SelfLoop {
                action: spec.name.clone(),
                literal: lit.key(),
            });
        }
        for (j, p) in spec.post.iter().enumerate() {
            if spec.post[..j].contains(p) {
                return Err(LibraryError::InvalidSpec {
                    action: spec.name.clone(),
                    reason: format!("postcondition `{p}` listed twice"),
                });
            }
            by_post.entry(p.clone()).or_default().push(i);
        }
    }
    Ok(ActionLibrary {
        actions: specs,
        by_post,
    })
}

/// Element counts used by the readability metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementCounts {
    pub nodes: usize,
    pub edges: usize,
    pub graphical: usize,
    pub active: usize,
}

/// Handle of one skill invocation inside a world.
pub type SkillHandle = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("cannot evaluate `{literal}`: {reason}")]
    Evaluation { literal: String, reason: String },
    #[error("motion skill `{started}` started while `{running}` is running")]
    MotionConflict { started: String, running: String },
    #[error("unknown skill handle {0}")]
    UnknownHandle(SkillHandle),
    #[error("invalid skill arguments for {0}")]
    BadArguments(String),
    #[error("policy is terminated")]
    Terminated,
}

/// Condition evaluator plus skill controller, as seen by the engines.
pub trait World {
    fn evaluate(&self, literal: &ConditionLiteral) -> Result<bool, EngineError>;
    fn start_skill(&mut self, call: &SkillCall) -> Result<SkillHandle, EngineError>;
    fn poll_skill(&self, handle: SkillHandle) -> Result<Status, EngineError>;
    /// Cancels a running skill; returns whether it was running.
    fn cancel_skill(&mut self, handle: SkillHandle) -> Result<bool, EngineError>;
}
