use super::{dispatch_label, Current, StateKind, StateMachine, FAILURE, SUCCESS};
use crate::types::{EngineError, NodeId, Status, World};

impl StateMachine {
    /// Advances the machine by one world tick.
    ///
    /// Transitions chain within the tick until a state reports RUNNING or an
    /// outcome is reached. All conditions read the same snapshot.
    pub fn step<W: World + ?Sized>(&mut self, world: &mut W) -> Result<Status, EngineError> {
        let mut budget = 2 * self.states.len() + 4;
        loop {
            let id = match self.current {
                Current::Terminated(s) => return Ok(s),
                Current::At(id) => id,
            };
            let state = self.states[&id].clone();
            let mut jump = None;
            for g in &state.interrupts {
                if g.holds(world)? {
                    jump = Some(state.transitions[&g.key()]);
                    break;
                }
            }
            match state.kind {
                StateKind::Outcome(s) => {
                    self.current = Current::Terminated(s);
                    return Ok(s);
                }
                StateKind::Selector => {
                    let next = match jump {
                        Some(t) => Some(t),
                        None => self.dispatch(id, world)?,
                    };
                    match next {
                        Some(t) => self.enter(t),
                        None => {
                            self.current = Current::Terminated(Status::Failure);
                            return Ok(Status::Failure);
                        }
                    }
                }
                StateKind::Skill { call, .. } => {
                    if let Some(t) = jump {
                        if let Some(h) = self.active.take() {
                            world.cancel_skill(h)?;
                        }
                        self.enter(t);
                    } else {
                        let h = match self.active {
                            Some(h) => h,
                            None => {
                                let h = world.start_skill(&call)?;
                                self.active = Some(h);
                                h
                            }
                        };
                        let status = world.poll_skill(h)?;
                        if status == Status::Running {
                            return Ok(Status::Running);
                        }
                        self.active = None;
                        let label = if status == Status::Success {
                            SUCCESS
                        } else {
                            FAILURE
                        };
                        match state.transitions.get(label) {
                            Some(t) => {
                                let t = *t;
                                self.enter(t);
                            }
                            None => {
                                self.current = Current::Terminated(Status::Failure);
                                return Ok(Status::Failure);
                            }
                        }
                    }
                }
            }
            budget -= 1;
            if budget == 0 {
                return Ok(Status::Running);
            }
        }
    }

    fn enter(&mut self, target: NodeId) {
        self.current = Current::At(target);
        self.active = None;
    }

    /// SELECTOR choice: SUCCESS outcome if the goal holds, else the latest
    /// plan state whose guard holds and whose postcondition does not.
    fn dispatch<W: World + ?Sized>(
        &self,
        sel: NodeId,
        world: &W,
    ) -> Result<Option<NodeId>, EngineError> {
        let transitions = &self.states[&sel].transitions;
        let mut goal_holds = true;
        for g in &self.goal {
            if !world.evaluate(g)? {
                goal_holds = false;
                break;
            }
        }
        if goal_holds {
            return Ok(transitions.get(SUCCESS).copied());
        }
        for id in self.plan_order.iter().rev() {
            let StateKind::Skill { guard, post, .. } = &self.states[id].kind else {
                continue;
            };
            let mut ready = true;
            for l in guard {
                if !world.evaluate(l)? {
                    ready = false;
                    break;
                }
            }
            if !ready {
                continue;
            }
            let mut done = !post.is_empty();
            for l in post {
                if !world.evaluate(l)? {
                    done = false;
                    break;
                }
            }
            if !done {
                if let Some(t) = transitions.get(&dispatch_label(*id)) {
                    return Ok(Some(*t));
                }
            }
        }
        Ok(None)
    }

    /// True once an outcome has been reached.
    pub fn is_terminated(&self) -> bool {
        matches!(self.current, Current::Terminated(_))
    }
}

#[cfg(test)]
mod tests {
    use crate::fixtures;
    use crate::fsm::Current;
    use crate::testutil::ScriptedWorld;
    use crate::types::{ConditionLiteral, SkillCall, Status};

    #[test]
    fn fresh_world_dispatches_first_move() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let mut w = ScriptedWorld::default();
        assert_eq!(sm.step(&mut w).unwrap(), Status::Running);
        assert_eq!(w.started, vec![SkillCall::new("move_to", &["cube2"])]);
        assert_eq!(sm.current(), Current::At(sm.find("move_to_cube2").unwrap()));
    }

    #[test]
    fn cube_in_hand_skips_ahead() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let mut w = ScriptedWorld::default();
        w.set_true(ConditionLiteral::in_hand("cube2"));
        sm.step(&mut w).unwrap();
        assert_eq!(w.started, vec![SkillCall::new("move_to", &["delivery"])]);
    }

    #[test]
    fn satisfied_goal_succeeds_immediately() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let mut w = ScriptedWorld::default();
        w.set_true(ConditionLiteral::object_at("cube2", "delivery"));
        assert_eq!(sm.step(&mut w).unwrap(), Status::Success);
        assert!(w.started.is_empty());
        assert!(sm.is_terminated());
        assert_eq!(sm.step(&mut w).unwrap(), Status::Success);
        assert!(w.started.is_empty(), "terminated machines start nothing");
    }

    #[test]
    fn sequential_failure_terminates() {
        let mut sm = fixtures::fsm_fetch_sequential();
        let mut w = ScriptedWorld::default();
        assert_eq!(sm.step(&mut w).unwrap(), Status::Running);
        w.finish("move_to", Status::Failure);
        assert_eq!(sm.step(&mut w).unwrap(), Status::Failure);
        assert_eq!(w.started.len(), 1);
    }

    #[test]
    fn failure_returns_to_selector_and_redispatches() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let mut w = ScriptedWorld::default();
        sm.step(&mut w).unwrap();
        w.finish("move_to", Status::Failure);
        assert_eq!(sm.step(&mut w).unwrap(), Status::Running);
        assert_eq!(w.started.len(), 2);
        assert_eq!(w.started[1], SkillCall::new("move_to", &["cube2"]));
    }

    #[test]
    fn interrupt_preempts_in_same_step() {
        let mut sm = fixtures::fsm_fetch_recharge();
        let mut w = ScriptedWorld::default();
        w.set_true(ConditionLiteral::battery_above(20));
        w.set_true(ConditionLiteral::in_hand("cube2"));
        sm.step(&mut w).unwrap();
        w.set_false(ConditionLiteral::battery_above(20));
        assert_eq!(sm.step(&mut w).unwrap(), Status::Running);
        assert_eq!(w.cancelled, vec![SkillCall::new("move_to", &["delivery"])]);
        assert_eq!(w.started.last().unwrap(), &SkillCall::new("recharge", &[]));
    }

    #[test]
    fn deadlock_surfaces_as_failure() {
        let mut sm = fixtures::fsm_fetch_fault_tolerant();
        let mut w = ScriptedWorld::default();
        // Without the first move nothing is dispatchable from a fresh world.
        let mv = sm.find("move_to_cube2").unwrap();
        sm.remove_state(mv).unwrap();
        assert_eq!(sm.step(&mut w).unwrap(), Status::Failure);
    }
}
