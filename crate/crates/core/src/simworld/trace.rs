//! Episode traces, their lifecycle projection and chattering detection.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::world::is_motion;
use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SkillStart,
    SkillEnd,
    SkillPreempt,
    Perturbation,
    PolicyStatus,
}

/// One trace line. Field order is fixed so traces diff cleanly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl TraceEvent {
    fn call(&self) -> Option<(String, Vec<String>)> {
        Some((self.skill.clone()?, self.args.clone().unwrap_or_default()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Success,
    Failure,
    Timeout,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::Failure => 2,
            Outcome::Timeout => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

/// A skill invocation reduced to what it was and how it ended.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lifecycle {
    pub skill: String,
    pub args: Vec<String>,
    /// SUCCESS, FAILURE, PREEMPTED or UNFINISHED.
    pub outcome: String,
}

impl Trace {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Trace, SimError> {
        let mut events = Vec::new();
        for (i, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let e = serde_json::from_str(line).map_err(|e| SimError::Parse {
                path: String::new(),
                line: i + 1,
                column: e.column(),
                message: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(Trace { events })
    }

    pub fn starts(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events
            .iter()
            .filter(|e| e.kind == EventKind::SkillStart)
    }

    /// Invocations in start order, each paired with the first matching end
    /// or preemption that follows it.
    pub fn lifecycles(&self) -> Vec<Lifecycle> {
        let mut out: Vec<Lifecycle> = Vec::new();
        let mut open: Vec<usize> = Vec::new();
        for e in &self.events {
            let Some((skill, args)) = e.call() else {
                continue;
            };
            match e.kind {
                EventKind::SkillStart => {
                    open.push(out.len());
                    out.push(Lifecycle {
                        skill,
                        args,
                        outcome: "UNFINISHED".into(),
                    });
                }
                EventKind::SkillEnd | EventKind::SkillPreempt => {
                    if let Some(pos) = open
                        .iter()
                        .position(|&i| out[i].skill == skill && out[i].args == args)
                    {
                        let i = open.remove(pos);
                        out[i].outcome = e.outcome.clone().unwrap_or_default();
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Same ordered skill lifecycles, ignoring ticks.
pub fn traces_equivalent(a: &Trace, b: &Trace) -> bool {
    a.lifecycles() == b.lifecycles()
}

pub const DEFAULT_CHATTER_K: usize = 3;

/// True when two distinct motion skills keep displacing each other: within
/// a run of motion starts alternating between the same two calls, at least
/// `k` starts preempt the previous motion in the same tick.
pub fn detect_chattering(trace: &Trace, k: usize) -> bool {
    // Motion invocations in start order: (call, start tick, preempted at).
    type Run = ((String, Vec<String>), u64, Option<u64>);
    let mut runs: Vec<Run> = Vec::new();
    let mut open: VecDeque<usize> = VecDeque::new();
    for e in &trace.events {
        let Some(call) = e.call() else { continue };
        if !is_motion(&call.0) {
            continue;
        }
        match e.kind {
            EventKind::SkillStart => {
                open.push_back(runs.len());
                runs.push((call, e.tick, None));
            }
            EventKind::SkillEnd | EventKind::SkillPreempt => {
                if let Some(pos) = open.iter().position(|&i| runs[i].0 == call) {
                    let i = open.remove(pos).expect("position is valid");
                    if e.kind == EventKind::SkillPreempt {
                        runs[i].2 = Some(e.tick);
                    }
                }
            }
            _ => {}
        }
    }
    let mut count = 0;
    for i in 1..runs.len() {
        let alternating = runs[i].0 != runs[i - 1].0 && (i < 2 || runs[i].0 == runs[i - 2].0);
        if !alternating {
            count = 0;
            if runs[i].0 == runs[i - 1].0 {
                continue;
            }
        }
        if runs[i - 1].2 == Some(runs[i].1) {
            count += 1;
            if count >= k {
                return true;
            }
        }
    }
    false
}
