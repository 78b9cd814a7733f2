//! Scenario documents: initial world, skill timing, failures and scripted
//! perturbations.

use serde::{Deserialize, Serialize};

use super::world::{WorldState, SKILLS};
use super::SimError;
use crate::types::ConditionLiteral;

pub const DEFAULT_STABLE_TICKS: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Durations {
    pub move_to: u64,
    pub move_to_safe: u64,
    pub pick: u64,
    pub place: u64,
    pub tuck: u64,
    pub dock: u64,
    pub recharge: u64,
    pub search_per_viewpoint: u64,
}

impl Default for Durations {
    fn default() -> Self {
        Durations {
            move_to: 5,
            move_to_safe: 7,
            pick: 3,
            place: 3,
            tuck: 3,
            dock: 3,
            recharge: 2,
            search_per_viewpoint: 4,
        }
    }
}

/// Makes an invocation of `skill` fail: the `nth` one (1-based), or each
/// with `probability` drawn from the scenario seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureInjection {
    pub skill: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
pub enum PerturbationEvent {
    SetItemLocation { item: String, station: String },
    SetBattery { level: i64 },
    ForceFailNext { skill: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perturbation {
    pub tick: u64,
    #[serde(flatten)]
    pub event: PerturbationEvent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub initial: WorldState,
    pub durations: Durations,
    pub failures: Vec<FailureInjection>,
    /// Battery percent lost per tick in which a motion skill ran.
    pub drain_per_tick: i64,
    /// Level below which the battery counts as low in summaries.
    pub battery_threshold: i64,
    pub perturbations: Vec<Perturbation>,
    pub max_ticks: u64,
    pub seed: u64,
    /// Conditions that end a reactive episode once stable.
    pub goal: Vec<ConditionLiteral>,
    pub stable_ticks: u64,
    /// Markers the search skill finds.
    pub markers: Vec<String>,
    pub search_viewpoints: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            version: 1,
            name: "unnamed".into(),
            initial: WorldState::default(),
            durations: Durations::default(),
            failures: vec![],
            drain_per_tick: 2,
            battery_threshold: 20,
            perturbations: vec![],
            max_ticks: 300,
            seed: 0,
            goal: vec![],
            stable_ticks: DEFAULT_STABLE_TICKS,
            markers: vec![],
            search_viewpoints: 2,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Invalid(m));
        if self.version != 1 {
            return bad(format!("unsupported scenario version {}", self.version));
        }
        self.initial.check().map_err(SimError::Invalid)?;
        if self.max_ticks == 0 {
            return bad("max_ticks must be positive".into());
        }
        if self.drain_per_tick < 0 {
            return bad("drain_per_tick must be non-negative".into());
        }
        for w in self.perturbations.windows(2) {
            if w[1].tick <= w[0].tick {
                return bad(format!(
                    "perturbation ticks must increase strictly ({} then {})",
                    w[0].tick, w[1].tick
                ));
            }
        }
        for p in &self.perturbations {
            match &p.event {
                PerturbationEvent::SetItemLocation { station, .. }
                    if !self.initial.is_station(station) =>
                {
                    return bad(format!(
                        "perturbation moves an item to unknown station `{station}`"
                    ));
                }
                PerturbationEvent::ForceFailNext { skill } if !SKILLS.contains(&skill.as_str()) => {
                    return bad(format!("perturbation names unknown skill `{skill}`"));
                }
                _ => {}
            }
        }
        for f in &self.failures {
            if !SKILLS.contains(&f.skill.as_str()) {
                return bad(format!(
                    "failure injection names unknown skill `{}`",
                    f.skill
                ));
            }
            if f.nth == Some(0) || f.probability.is_some_and(|p| !(0.0..=1.0).contains(&p)) {
                return bad(format!(
                    "failure injection for `{}` is out of range",
                    f.skill
                ));
            }
        }
        Ok(())
    }
}

pub fn parse_scenario(bytes: &[u8]) -> Result<Scenario, SimError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let sc: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        SimError::Parse {
            path: e.path().to_string(),
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    sc.validate()?;
    Ok(sc)
}

pub fn serialize_scenario(sc: &Scenario) -> String {
    serde_json::to_string_pretty(sc).expect("scenario serializes") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut sc = Scenario::default();
        sc.initial
            .item_locations
            .insert("cube2".into(), "fetch2".into());
        sc.perturbations.push(Perturbation {
            tick: 4,
            event: PerturbationEvent::SetBattery { level: 15 },
        });
        sc.goal
            .push(ConditionLiteral::object_at("cube2", "delivery"));
        let text = serialize_scenario(&sc);
        assert_eq!(parse_scenario(text.as_bytes()).unwrap(), sc);
    }

    #[test]
    fn rejects_unordered_perturbations() {
        let mut sc = Scenario::default();
        for t in [5, 5] {
            sc.perturbations.push(Perturbation {
                tick: t,
                event: PerturbationEvent::SetBattery { level: 15 },
            });
        }
        assert!(matches!(sc.validate(), Err(SimError::Invalid(_))));
    }

    #[test]
    fn reports_location_of_bad_field() {
        let err = parse_scenario(b"{\n  \"max_ticks\": \"many\"\n}").unwrap_err();
        match err {
            SimError::Parse { path, line, .. } => {
                assert_eq!(path, "max_ticks");
                assert_eq!(line, 2);
            }
            e => panic!("{e}"),
        }
    }
}
