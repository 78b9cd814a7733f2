//! Symbolic mobile-manipulation world and its skill lifecycle.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{Perturbation, Scenario};
use super::trace::{EventKind, TraceEvent};
use crate::types::{
    ConditionLiteral, EngineError, Predicate, SkillCall, SkillHandle, Status, World,
};

/// Location of a robot that is between stations.
pub const TRANSIT: &str = "TRANSIT";

pub const SKILLS: [&str; 7] = [
    "move_to", "pick", "place", "recharge", "dock", "tuck", "search",
];

/// Skills that drive the base; at most one may run at a time.
pub const MOTION_SKILLS: [&str; 3] = ["move_to", "dock", "search"];

pub fn default_stations() -> Vec<String> {
    let mut s = vec!["center".to_string()];
    s.extend((1..=5).map(|i| format!("fetch{i}")));
    s.extend(["delivery", "recharge", "dock"].map(String::from));
    s
}

pub fn is_motion(skill: &str) -> bool {
    MOTION_SKILLS.contains(&skill)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldState {
    #[serde(default)]
    pub tick: u64,
    #[serde(default = "center")]
    pub robot_location: String,
    #[serde(default = "full")]
    pub battery: i64,
    #[serde(default)]
    pub holding: Option<String>,
    #[serde(default)]
    pub arm_tucked: bool,
    #[serde(default)]
    pub docked: bool,
    #[serde(default)]
    pub item_locations: BTreeMap<String, String>,
    #[serde(default)]
    pub found_markers: BTreeSet<String>,
    #[serde(default = "default_stations")]
    pub stations: Vec<String>,
}

fn center() -> String {
    "center".into()
}

fn full() -> i64 {
    100
}

impl Default for WorldState {
    fn default() -> Self {
        WorldState {
            tick: 0,
            robot_location: center(),
            battery: full(),
            holding: None,
            arm_tucked: false,
            docked: false,
            item_locations: BTreeMap::new(),
            found_markers: BTreeSet::new(),
            stations: default_stations(),
        }
    }
}

impl WorldState {
    pub fn is_station(&self, s: &str) -> bool {
        self.stations.iter().any(|x| x == s)
    }

    /// Station named by `place`: a station itself, or where an item lies.
    pub fn resolve(&self, place: &str) -> Option<String> {
        if self.is_station(place) {
            Some(place.to_string())
        } else {
            self.item_locations.get(place).cloned()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(0..=100).contains(&self.battery) {
            return Err(format!("battery {} outside [0, 100]", self.battery));
        }
        if self.robot_location != TRANSIT && !self.is_station(&self.robot_location) {
            return Err(format!("unknown robot location `{}`", self.robot_location));
        }
        if let Some(h) = &self.holding {
            if self.item_locations.contains_key(h) {
                return Err(format!("held item `{h}` also has a location"));
            }
        }
        for (item, st) in &self.item_locations {
            if !self.is_station(st) {
                return Err(format!("item `{item}` at unknown station `{st}`"));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, lit: &ConditionLiteral) -> Result<bool, EngineError> {
        let sym = |i: usize| {
            lit.sym_arg(i).ok_or_else(|| EngineError::Evaluation {
                literal: lit.key(),
                reason: format!("argument {i} must be a symbol"),
            })
        };
        Ok(match lit.pred {
            Predicate::RobotAt => {
                self.robot_location != TRANSIT
                    && self
                        .resolve(sym(0)?)
                        .is_some_and(|s| s == self.robot_location)
            }
            Predicate::InHand => self.holding.as_deref() == Some(sym(0)?),
            Predicate::ObjectAt => {
                self.item_locations.get(sym(0)?).map(String::as_str) == Some(sym(1)?)
            }
            Predicate::BatteryAbove => {
                let t = lit.args.first().and_then(|a| a.as_num()).ok_or_else(|| {
                    EngineError::Evaluation {
                        literal: lit.key(),
                        reason: "threshold must be a number".into(),
                    }
                })?;
                self.battery > t
            }
            Predicate::ArmTucked => self.arm_tucked,
            Predicate::Docked => self.docked,
            Predicate::Found => lit
                .args
                .iter()
                .all(|a| a.as_sym().is_some_and(|m| self.found_markers.contains(m))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum RuntimeState {
    Idle,
    Running { remaining: u64 },
    Succeeded,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillRuntime {
    pub call: SkillCall,
    pub state: RuntimeState,
    pub started_at: u64,
    /// Ends in FAILURE regardless of the world when set.
    pub doomed: bool,
    /// Destination station of a motion, fixed at start.
    pub destination: Option<String>,
}

/// Simulated world driven by the episode runner.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub state: WorldState,
    /// State at the start of the current tick; conditions read this.
    snapshot: WorldState,
    scenario: Scenario,
    skills: Vec<SkillRuntime>,
    invocations: BTreeMap<String, usize>,
    force_fail: BTreeSet<String>,
    rng: ChaCha8Rng,
    events: Vec<TraceEvent>,
    next_perturbation: usize,
}

impl SimWorld {
    pub fn new(scenario: &Scenario) -> Self {
        SimWorld {
            state: scenario.initial.clone(),
            snapshot: scenario.initial.clone(),
            scenario: scenario.clone(),
            skills: Vec::new(),
            invocations: BTreeMap::new(),
            force_fail: BTreeSet::new(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            events: Vec::new(),
            next_perturbation: 0,
        }
    }

    pub fn runtime(&self, h: SkillHandle) -> Option<&SkillRuntime> {
        self.skills.get(h as usize)
    }

    pub fn running(&self) -> impl Iterator<Item = &SkillRuntime> {
        self.skills
            .iter()
            .filter(|s| matches!(s.state, RuntimeState::Running { .. }))
    }

    pub fn take_events(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn pending_perturbations(&self) -> usize {
        self.scenario.perturbations.len() - self.next_perturbation
    }

    fn log(
        &mut self,
        kind: EventKind,
        call: Option<&SkillCall>,
        outcome: Option<&str>,
        detail: Option<String>,
    ) {
        self.events.push(TraceEvent {
            tick: self.state.tick,
            kind,
            skill: call.map(|c| c.skill.clone()),
            args: call.map(|c| c.args.iter().map(|a| a.to_string()).collect()),
            outcome: outcome.map(String::from),
            detail,
        });
    }

    /// Applies perturbations due at `tick` and takes the condition snapshot.
    pub fn begin_tick(&mut self, tick: u64) {
        self.state.tick = tick;
        while let Some(p) = self
            .scenario
            .perturbations
            .get(self.next_perturbation)
            .cloned()
        {
            if p.tick > tick {
                break;
            }
            self.next_perturbation += 1;
            self.apply(&p);
        }
        self.snapshot = self.state.clone();
    }

    fn apply(&mut self, p: &Perturbation) {
        use super::scenario::PerturbationEvent as E;
        let detail = match &p.event {
            E::SetItemLocation { item, station } => {
                if self.state.holding.as_deref() == Some(item.as_str()) {
                    self.state.holding = None;
                }
                self.state
                    .item_locations
                    .insert(item.clone(), station.clone());
                format!("set_item_location {item} {station}")
            }
            E::SetBattery { level } => {
                self.state.battery = (*level).clamp(0, 100);
                format!("set_battery {}", self.state.battery)
            }
            E::ForceFailNext { skill } => {
                self.force_fail.insert(skill.clone());
                format!("force_fail_next {skill}")
            }
        };
        self.log(EventKind::Perturbation, None, None, Some(detail));
    }

    /// Rejects a tick that leaves two motion skills running.
    pub fn commit(&self) -> Result<(), EngineError> {
        let motion: Vec<&SkillRuntime> = self
            .running()
            .filter(|s| is_motion(&s.call.skill))
            .collect();
        if motion.len() > 1 {
            return Err(EngineError::MotionConflict {
                started: motion[1].call.to_string(),
                running: motion[0].call.to_string(),
            });
        }
        Ok(())
    }

    /// Advances every running skill by one tick and drains the battery if
    /// the base moved.
    pub fn advance(&mut self) {
        let mut moved = false;
        for i in 0..self.skills.len() {
            let RuntimeState::Running { remaining } = self.skills[i].state else {
                continue;
            };
            moved |= is_motion(&self.skills[i].call.skill);
            let remaining = remaining.saturating_sub(1);
            if remaining == 0 {
                self.complete(i);
            } else {
                self.skills[i].state = RuntimeState::Running { remaining };
            }
        }
        if moved {
            self.state.battery = (self.state.battery - self.scenario.drain_per_tick).clamp(0, 100);
        }
    }

    fn duration(&self, call: &SkillCall) -> u64 {
        let d = &self.scenario.durations;
        match call.skill.as_str() {
            "move_to" if call.args.get(1).and_then(|a| a.as_sym()) == Some("safe") => {
                d.move_to_safe
            }
            "move_to" => d.move_to,
            "pick" => d.pick,
            "place" => d.place,
            "tuck" => d.tuck,
            "dock" => d.dock,
            "recharge" => d.recharge,
            _ => d.search_per_viewpoint * self.scenario.search_viewpoints,
        }
    }

    fn sym(call: &SkillCall, i: usize) -> Result<String, EngineError> {
        call.args
            .get(i)
            .and_then(|a| a.as_sym())
            .map(String::from)
            .ok_or_else(|| EngineError::BadArguments(call.to_string()))
    }

    /// Outcome decided at start time: `Some` ends the invocation immediately.
    fn admit(&self, call: &SkillCall) -> Result<Option<bool>, EngineError> {
        let s = &self.state;
        Ok(match call.skill.as_str() {
            "move_to" => {
                let target = Self::sym(call, 0)?;
                match s.resolve(&target) {
                    None => Some(false),
                    Some(st) if st == s.robot_location => Some(true),
                    Some(_) if s.battery == 0 => Some(false),
                    Some(_) => None,
                }
            }
            "pick" => {
                let item = Self::sym(call, 0)?;
                if s.holding.as_deref() == Some(item.as_str()) {
                    Some(true)
                } else if s.holding.is_some()
                    || s.item_locations.get(&item) != Some(&s.robot_location)
                {
                    Some(false)
                } else {
                    None
                }
            }
            "place" => {
                let (item, st) = (Self::sym(call, 0)?, Self::sym(call, 1)?);
                if s.item_locations.get(&item) == Some(&st) && s.holding.is_none() {
                    Some(true)
                } else if s.holding.as_deref() != Some(item.as_str()) || s.robot_location != st {
                    Some(false)
                } else {
                    None
                }
            }
            "tuck" => s.arm_tucked.then_some(true),
            "dock" => s.docked.then_some(true),
            "recharge" => None,
            "search" => self.all_found().then_some(true),
            other => return Err(EngineError::UnknownSkill(other.to_string())),
        })
    }

    fn all_found(&self) -> bool {
        self.scenario
            .markers
            .iter()
            .all(|m| self.state.found_markers.contains(m))
    }

    /// Applies a finished invocation's effects, re-checking what may have
    /// changed while it ran.
    fn complete(&mut self, i: usize) {
        let call = self.skills[i].call.clone();
        let s = &mut self.state;
        let ok = !self.skills[i].doomed
            && match call.skill.as_str() {
                "move_to" => match self.skills[i].destination.clone() {
                    Some(st) => {
                        s.robot_location = st;
                        true
                    }
                    None => false,
                },
                "pick" => {
                    let item = call.args[0].to_string();
                    if s.holding.is_none() && s.item_locations.get(&item) == Some(&s.robot_location)
                    {
                        s.item_locations.remove(&item);
                        s.holding = Some(item);
                        true
                    } else {
                        false
                    }
                }
                "place" => {
                    let (item, st) = (call.args[0].to_string(), call.args[1].to_string());
                    if s.holding.as_deref() == Some(item.as_str()) && s.robot_location == st {
                        s.holding = None;
                        s.item_locations.insert(item, st);
                        true
                    } else {
                        false
                    }
                }
                "tuck" => {
                    s.arm_tucked = true;
                    true
                }
                "dock" => {
                    s.docked = true;
                    true
                }
                "recharge" => {
                    s.battery = 100;
                    true
                }
                _ => {
                    s.found_markers
                        .extend(self.scenario.markers.iter().cloned());
                    true
                }
            };
        self.skills[i].state = if ok {
            RuntimeState::Succeeded
        } else {
            RuntimeState::Failed
        };
        self.log(
            EventKind::SkillEnd,
            Some(&call),
            Some(if ok { "SUCCESS" } else { "FAILURE" }),
            None,
        );
    }

    fn injected_failure(&mut self, skill: &str, nth: usize) -> bool {
        if self.force_fail.remove(skill) {
            return true;
        }
        let mut doomed = false;
        for f in self.scenario.failures.clone() {
            if f.skill != skill {
                continue;
            }
            if f.nth == Some(nth) {
                doomed = true;
            }
            if let Some(p) = f.probability {
                doomed |= self.rng.random_bool(p.clamp(0.0, 1.0));
            }
        }
        doomed
    }
}

impl World for SimWorld {
    fn evaluate(&self, literal: &ConditionLiteral) -> Result<bool, EngineError> {
        self.snapshot.evaluate(literal)
    }

    fn start_skill(&mut self, call: &SkillCall) -> Result<SkillHandle, EngineError> {
        let verdict = self.admit(call)?;
        let nth = {
            let n = self.invocations.entry(call.skill.clone()).or_insert(0);
            *n += 1;
            *n
        };
        let doomed = self.injected_failure(&call.skill, nth);
        let h = self.skills.len() as SkillHandle;
        let tick = self.state.tick;
        let destination = match call.skill.as_str() {
            "move_to" => call
                .args
                .first()
                .and_then(|a| a.as_sym())
                .and_then(|t| self.state.resolve(t)),
            _ => None,
        };
        self.skills.push(SkillRuntime {
            call: call.clone(),
            state: RuntimeState::Idle,
            started_at: tick,
            doomed,
            destination,
        });
        self.log(EventKind::SkillStart, Some(call), None, None);
        let i = h as usize;
        match verdict {
            Some(ok) => {
                let ok = ok && !doomed;
                self.skills[i].state = if ok {
                    RuntimeState::Succeeded
                } else {
                    RuntimeState::Failed
                };
                self.log(
                    EventKind::SkillEnd,
                    Some(call),
                    Some(if ok { "SUCCESS" } else { "FAILURE" }),
                    None,
                );
            }
            None => {
                match call.skill.as_str() {
                    "move_to" => {
                        self.state.robot_location = TRANSIT.to_string();
                        self.state.docked = false;
                    }
                    "pick" => self.state.arm_tucked = false,
                    _ => {}
                }
                let d = self.duration(call);
                self.skills[i].state = RuntimeState::Running { remaining: d };
                if d == 0 {
                    self.complete(i);
                }
            }
        }
        Ok(h)
    }

    fn poll_skill(&self, handle: SkillHandle) -> Result<Status, EngineError> {
        let r = self
            .skills
            .get(handle as usize)
            .ok_or(EngineError::UnknownHandle(handle))?;
        Ok(match r.state {
            RuntimeState::Idle | RuntimeState::Running { .. } => Status::Running,
            RuntimeState::Succeeded => Status::Success,
            RuntimeState::Failed | RuntimeState::Cancelled => Status::Failure,
        })
    }

    fn cancel_skill(&mut self, handle: SkillHandle) -> Result<bool, EngineError> {
        let i = handle as usize;
        let r = self
            .skills
            .get(i)
            .ok_or(EngineError::UnknownHandle(handle))?;
        if !matches!(r.state, RuntimeState::Running { .. }) {
            return Ok(false);
        }
        let call = r.call.clone();
        self.skills[i].state = RuntimeState::Cancelled;
        self.log(
            EventKind::SkillPreempt,
            Some(&call),
            Some("PREEMPTED"),
            None,
        );
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simworld::scenario::Scenario;

    fn world() -> SimWorld {
        let mut sc = Scenario::default();
        sc.initial
            .item_locations
            .insert("cube2".into(), "fetch2".into());
        sc.drain_per_tick = 2;
        SimWorld::new(&sc)
    }

    #[test]
    fn move_runs_for_its_duration() {
        let mut w = world();
        w.begin_tick(0);
        let h = w
            .start_skill(&SkillCall::new("move_to", &["delivery"]))
            .unwrap();
        assert_eq!(w.state.robot_location, TRANSIT);
        let mut polls = 0;
        for t in 0.. {
            if t > 0 {
                w.begin_tick(t);
            }
            if w.poll_skill(h).unwrap() != Status::Running {
                break;
            }
            polls += 1;
            w.advance();
        }
        assert_eq!(polls, 5);
        assert_eq!(w.poll_skill(h).unwrap(), Status::Success);
        assert_eq!(w.state.robot_location, "delivery");
        assert_eq!(w.state.battery, 90);
    }

    #[test]
    fn pick_away_from_item_fails() {
        let mut w = world();
        let h = w.start_skill(&SkillCall::new("pick", &["cube2"])).unwrap();
        assert_eq!(w.poll_skill(h).unwrap(), Status::Failure);
    }

    #[test]
    fn recharge_fills_battery() {
        let mut w = world();
        w.state.battery = 15;
        let h = w.start_skill(&SkillCall::new("recharge", &[])).unwrap();
        w.advance();
        w.advance();
        assert_eq!(w.poll_skill(h).unwrap(), Status::Success);
        assert_eq!(w.state.battery, 100);
    }

    #[test]
    fn conditions() {
        let mut w = world();
        w.state.battery = 15;
        assert!(!w
            .state
            .evaluate(&ConditionLiteral::battery_above(20))
            .unwrap());
        w.state.robot_location = TRANSIT.into();
        assert!(!w
            .state
            .evaluate(&ConditionLiteral::robot_at("delivery"))
            .unwrap());
        w.state.robot_location = "fetch2".into();
        assert!(w
            .state
            .evaluate(&ConditionLiteral::robot_at("cube2"))
            .unwrap());
    }

    #[test]
    fn cancel_strands_robot_and_conflicts_are_rejected() {
        let mut w = world();
        let a = w
            .start_skill(&SkillCall::new("move_to", &["delivery"]))
            .unwrap();
        w.start_skill(&SkillCall::new("move_to", &["cube2"]))
            .unwrap();
        assert!(matches!(
            w.commit(),
            Err(EngineError::MotionConflict { .. })
        ));
        assert!(w.cancel_skill(a).unwrap());
        w.commit().unwrap();
        assert_eq!(w.state.robot_location, TRANSIT);
        assert!(!w.cancel_skill(a).unwrap());
    }

    #[test]
    fn unknown_skill() {
        let mut w = world();
        assert!(matches!(
            w.start_skill(&SkillCall::new("fly", &[])),
            Err(EngineError::UnknownSkill(_))
        ));
    }
}
