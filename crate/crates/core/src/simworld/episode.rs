//! Episode runner shared by the three policy kinds.

use serde::{Deserialize, Serialize};

use super::scenario::Scenario;
use super::trace::{EventKind, Outcome, Trace, TraceEvent};
use super::world::{SimWorld, WorldState};
use super::SimError;
use crate::document::PolicyDocument;
use crate::types::Status;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub outcome: Outcome,
    /// Ticks evaluated.
    pub ticks: u64,
    pub trace: Trace,
    pub final_state: WorldState,
    /// Ticks that started with the battery below the scenario threshold.
    pub low_battery_ticks: u64,
}

impl Episode {
    pub fn skills_started(&self) -> usize {
        self.trace.starts().count()
    }

    /// One-line summary for command-line output.
    pub fn summary(&self) -> String {
        let outcome = match self.outcome {
            Outcome::Success => "SUCCESS",
            Outcome::Failure => "FAILURE",
            Outcome::Timeout => "TIMEOUT",
        };
        format!(
            "outcome={outcome} ticks={} skills_started={}",
            self.ticks,
            self.skills_started()
        )
    }
}

/// Runs `policy` in a fresh world built from `scenario`.
///
/// Every tick applies due perturbations, evaluates the policy once against
/// the tick-start snapshot, cancels skills the evaluation abandoned,
/// advances running skills and drains the battery. Machines stop at an
/// outcome; trees and container machines keep running until the scenario
/// goal (or, without one, root SUCCESS) has held for `stable_ticks` ticks
/// and no perturbation is left to deliver.
pub fn run_episode(policy: &PolicyDocument, scenario: &Scenario) -> Result<Episode, SimError> {
    scenario.validate()?;
    let mut policy = policy.clone();
    match &mut policy {
        PolicyDocument::Bt(t) => t.reset_runtime(),
        PolicyDocument::Fsm(m) => m.reset(),
        PolicyDocument::Hfsm(_) => {}
    }
    let mut world = SimWorld::new(scenario);
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut last_status = None;
    let mut stable = 0;
    let mut low = 0;
    for tick in 0..scenario.max_ticks {
        world.begin_tick(tick);
        if world.state.battery < scenario.battery_threshold {
            low += 1;
        }
        let status = match &mut policy {
            PolicyDocument::Bt(t) => {
                let s = t.tick(&mut world)?;
                t.halt_unvisited(&mut world);
                s
            }
            PolicyDocument::Hfsm(h) => {
                let s = h.step(&mut world)?;
                h.halt_unvisited(&mut world);
                s
            }
            PolicyDocument::Fsm(m) => m.step(&mut world)?,
        };
        world.commit()?;
        let goal_holds = goal_holds(&world, scenario)?;
        world.advance();
        events.extend(world.take_events());
        if last_status != Some(status) {
            last_status = Some(status);
            events.push(TraceEvent {
                tick,
                kind: EventKind::PolicyStatus,
                skill: None,
                args: None,
                outcome: Some(status.as_str().to_string()),
                detail: None,
            });
        }
        let done = match &policy {
            PolicyDocument::Fsm(m) if m.is_terminated() => Some(match status {
                Status::Success => Outcome::Success,
                _ => Outcome::Failure,
            }),
            PolicyDocument::Fsm(_) => None,
            _ => {
                let reached = if scenario.goal.is_empty() {
                    status == Status::Success
                } else {
                    goal_holds
                };
                stable = if reached { stable + 1 } else { 0 };
                (stable >= scenario.stable_ticks.max(1) && world.pending_perturbations() == 0)
                    .then_some(Outcome::Success)
            }
        };
        if let Some(outcome) = done {
            return Ok(Episode {
                outcome,
                ticks: tick + 1,
                trace: Trace { events },
                final_state: world.state.clone(),
                low_battery_ticks: low,
            });
        }
    }
    Ok(Episode {
        outcome: Outcome::Timeout,
        ticks: scenario.max_ticks,
        trace: Trace { events },
        final_state: world.state.clone(),
        low_battery_ticks: low,
    })
}

fn goal_holds(world: &SimWorld, scenario: &Scenario) -> Result<bool, SimError> {
    use crate::types::World;
    for g in &scenario.goal {
        if !world.evaluate(g)? {
            return Ok(false);
        }
    }
    Ok(true)
}
