//! In-memory world used by engine unit tests.

use std::cell::Cell;
use std::collections::BTreeSet;

use crate::types::{ConditionLiteral, EngineError, SkillCall, SkillHandle, Status, World};

#[derive(Debug, Default)]
pub struct ScriptedWorld {
    pub truths: BTreeSet<ConditionLiteral>,
    pub started: Vec<SkillCall>,
    pub cancelled: Vec<SkillCall>,
    /// Skills report RUNNING on their first poll and SUCCESS afterwards.
    pub auto_complete: bool,
    skills: Vec<(SkillCall, Cell<u32>, Option<Status>)>,
}

impl ScriptedWorld {
    pub fn set_true(&mut self, lit: ConditionLiteral) {
        self.truths.insert(lit);
    }

    pub fn set_false(&mut self, lit: ConditionLiteral) {
        self.truths.remove(&lit);
    }

    /// Forces the outcome of the most recent invocation of `skill`.
    pub fn finish(&mut self, skill: &str, status: Status) {
        if let Some(s) = self.skills.iter_mut().rev().find(|s| s.0.skill == skill) {
            s.2 = Some(status);
        }
    }
}

impl World for ScriptedWorld {
    fn evaluate(&self, literal: &ConditionLiteral) -> Result<bool, EngineError> {
        Ok(self.truths.contains(literal))
    }

    fn start_skill(&mut self, call: &SkillCall) -> Result<SkillHandle, EngineError> {
        if call.skill == "unknown" {
            return Err(EngineError::UnknownSkill(call.skill.clone()));
        }
        self.started.push(call.clone());
        self.skills.push((call.clone(), Cell::new(0), None));
        Ok(self.skills.len() as SkillHandle - 1)
    }

    fn poll_skill(&self, handle: SkillHandle) -> Result<Status, EngineError> {
        let (_, polls, fixed) = self
            .skills
            .get(handle as usize)
            .ok_or(EngineError::UnknownHandle(handle))?;
        let seen = polls.get();
        polls.set(seen + 1);
        Ok(match fixed {
            Some(s) => *s,
            None if self.auto_complete && seen > 0 => Status::Success,
            None => Status::Running,
        })
    }

    fn cancel_skill(&mut self, handle: SkillHandle) -> Result<bool, EngineError> {
        let running = self.poll_skill(handle)? == Status::Running;
        let entry = &mut self.skills[handle as usize];
        if running {
            entry.2 = Some(Status::Failure);
            self.cancelled.push(entry.0.clone());
        }
        Ok(running)
    }
}
