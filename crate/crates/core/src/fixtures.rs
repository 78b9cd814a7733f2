//! Reference policies and task libraries for the fetch and scalability tasks.
//!
//! Trees are assembled by hand (not through the planner) so that planner
//! output can be checked against them. Machines come from the builders and
//! edit operations.

use crate::bt::{PolicyTree, TreeBuilder};
use crate::document::PolicyDocument;
use crate::fsm::{Guard, NewState, StateMachine};
use crate::hfsm;
use crate::planner::Plan;
use crate::simworld::{Perturbation, PerturbationEvent, Scenario};
use crate::types::{ActionSpec, ConditionLiteral as L, Goal, NodeId, SkillCall};

pub const BATTERY_THRESHOLD: i64 = 20;
pub const CUBES: [&str; 5] = ["cube1", "cube2", "cube3", "cube4", "cube5"];
pub const MARKERS: [&str; 5] = ["marker1", "marker2", "marker3", "marker4", "marker5"];

pub fn move_action(target: &str) -> ActionSpec {
    ActionSpec::new(
        &format!("move_to_{target}"),
        "move_to",
        &[target],
        vec![],
        vec![L::robot_at(target)],
    )
}

pub fn pick_action(item: &str) -> ActionSpec {
    ActionSpec::new(
        &format!("pick_{item}"),
        "pick",
        &[item],
        vec![L::robot_at(item)],
        vec![L::in_hand(item)],
    )
}

/// Preconditions are declared station-first; only the safe ordering fixes that.
pub fn place_action(item: &str) -> ActionSpec {
    ActionSpec::new(
        &format!("place_{item}"),
        "place",
        &[item, "delivery"],
        vec![L::robot_at("delivery"), L::in_hand(item)],
        vec![L::object_at(item, "delivery")],
    )
}

pub fn safe_move_action() -> ActionSpec {
    ActionSpec::new(
        "safe_move_to_cube2",
        "move_to",
        &["cube2", "safe"],
        vec![],
        vec![L::robot_at("cube2")],
    )
}

pub fn tuck_action() -> ActionSpec {
    ActionSpec::new("tuck_arm", "tuck", &[], vec![], vec![L::arm_tucked()])
}

pub fn dock_action() -> ActionSpec {
    ActionSpec::new("dock", "dock", &[], vec![], vec![L::docked()])
}

pub fn recharge_action(threshold: i64) -> ActionSpec {
    ActionSpec::new(
        "recharge",
        "recharge",
        &[],
        vec![],
        vec![L::battery_above(threshold)],
    )
}

pub fn search_action() -> ActionSpec {
    ActionSpec::new("search", "search", &[], vec![], vec![L::found(&MARKERS)])
}

pub fn fetch_library() -> Vec<ActionSpec> {
    vec![
        move_action("cube2"),
        pick_action("cube2"),
        move_action("delivery"),
        place_action("cube2"),
    ]
}

pub fn fetch_goal() -> Goal {
    Goal {
        conditions: vec![L::object_at("cube2", "delivery")],
    }
}

pub fn scalability_library() -> Vec<ActionSpec> {
    let mut specs = vec![search_action()];
    for c in CUBES {
        specs.push(move_action(c));
        specs.push(pick_action(c));
        specs.push(place_action(c));
    }
    specs.push(move_action("delivery"));
    specs.push(dock_action());
    specs
}

pub fn scalability_goal() -> Goal {
    let mut conditions = vec![L::found(&MARKERS)];
    conditions.extend(CUBES.iter().map(|c| L::object_at(c, "delivery")));
    conditions.push(L::docked());
    Goal { conditions }
}

fn fetch_steps(item: &str) -> Vec<ActionSpec> {
    vec![
        move_action(item),
        pick_action(item),
        move_action("delivery"),
        place_action(item),
    ]
}

pub fn fetch_plan() -> Plan {
    Plan {
        goal: fetch_goal().conditions,
        steps: fetch_steps("cube2"),
    }
}

pub fn scalability_plan() -> Plan {
    let mut steps = vec![search_action()];
    for c in CUBES {
        steps.extend(fetch_steps(c));
    }
    steps.push(dock_action());
    Plan {
        goal: scalability_goal().conditions,
        steps,
    }
}

/// Fallback over `object_at(item, delivery)` with the pick-and-place branch.
fn fetch_branch(b: &mut TreeBuilder, item: &str, station_first: bool) -> NodeId {
    let done = b.condition(L::object_at(item, "delivery"));
    let reach = b.guarded(L::robot_at(item), SkillCall::new("move_to", &[item]));
    let pick = b.action(SkillCall::new("pick", &[item]));
    let grasp = b.sequence(vec![reach, pick]);
    let holding = b.condition(L::in_hand(item));
    let hold = b.fallback(vec![holding, grasp]);
    let deliver = b.guarded(
        L::robot_at("delivery"),
        SkillCall::new("move_to", &["delivery"]),
    );
    let place = b.action(SkillCall::new("place", &[item, "delivery"]));
    let pre = if station_first {
        vec![deliver, hold, place]
    } else {
        vec![hold, deliver, place]
    };
    let seq = b.sequence(pre);
    b.fallback(vec![done, seq])
}

/// Backchained fetch tree: 14 nodes.
pub fn bt_fetch() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let root = fetch_branch(&mut b, "cube2", false);
    b.build(root).expect("fixture")
}

/// Station precondition expanded first: chatters between the two moves.
pub fn bt_fetch_chattering() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let root = fetch_branch(&mut b, "cube2", true);
    b.build(root).expect("fixture")
}

/// `Sequence(Fallback(robot_at?, move_to!), pick!)`.
pub fn bt_pick_subtree() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let reach = b.guarded(L::robot_at("cube2"), SkillCall::new("move_to", &["cube2"]));
    let pick = b.action(SkillCall::new("pick", &["cube2"]));
    let root = b.sequence(vec![reach, pick]);
    b.build(root).expect("fixture")
}

pub fn tuck_subtree() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let root = b.guarded(L::arm_tucked(), SkillCall::new("tuck", &[]));
    b.build(root).expect("fixture")
}

pub fn recharge_subtree(threshold: i64) -> PolicyTree {
    let mut b = TreeBuilder::new();
    let root = b.guarded(L::battery_above(threshold), SkillCall::new("recharge", &[]));
    b.build(root).expect("fixture")
}

pub fn dock_subtree() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let root = b.guarded(L::docked(), SkillCall::new("dock", &[]));
    b.build(root).expect("fixture")
}

fn single_leaf(call: SkillCall) -> PolicyTree {
    let mut b = TreeBuilder::new();
    let root = b.action(call);
    b.build(root).expect("fixture")
}

fn find_node(t: &PolicyTree, pred: impl Fn(&crate::bt::BtNode) -> bool) -> NodeId {
    t.nodes().find(|n| pred(n)).expect("fixture node").id
}

/// Fetch tree that tucks the arm once the cube is held: 17 nodes.
pub fn bt_fetch_tuck() -> PolicyTree {
    let mut t = bt_fetch();
    let holding = find_node(&t, |n| n.name == "in_hand(cube2)?");
    let hold = t.parent(holding).expect("condition has a parent");
    let parent = t.parent(hold).expect("hold branch has a parent");
    let sub = tuck_subtree().with_ids_from(t.next_free_id());
    t.insert_subtree(parent, 1, sub).expect("fixture edit");
    t
}

/// Fetch tree with a safer move as second strategy: 15 nodes.
pub fn bt_fetch_safe_move() -> PolicyTree {
    let mut t = bt_fetch();
    let mv = find_node(&t, |n| n.name == "move_to(cube2)!");
    let parent = t.parent(mv).expect("move has a parent");
    let sub = single_leaf(safe_move_action().call()).with_ids_from(t.next_free_id());
    t.insert_subtree(parent, 2, sub).expect("fixture edit");
    t
}

/// Fetch tree with docking appended: 18 nodes.
pub fn bt_fetch_dock() -> PolicyTree {
    let mut t = bt_fetch();
    let sub = dock_subtree().with_ids_from(t.next_free_id());
    t.append_subtree(sub).expect("fixture edit");
    t
}

/// Fetch tree with recharging prepended: 18 nodes.
pub fn bt_fetch_recharge() -> PolicyTree {
    let mut t = bt_fetch();
    let sub = recharge_subtree(BATTERY_THRESHOLD).with_ids_from(t.next_free_id());
    t.prepend_priority_subtree(sub).expect("fixture edit");
    t
}

/// Recharge tree with docking appended: 21 nodes.
pub fn bt_fetch_recharge_dock() -> PolicyTree {
    let mut t = bt_fetch_recharge();
    let sub = dock_subtree().with_ids_from(t.next_free_id());
    t.append_subtree(sub).expect("fixture edit");
    t
}

/// Search, five fetches and docking: 77 nodes.
pub fn bt_scalability() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let search = b.guarded(L::found(&MARKERS), SkillCall::new("search", &[]));
    let mut children = vec![search];
    for c in CUBES {
        children.push(fetch_branch(&mut b, c, false));
    }
    children.push(b.guarded(L::docked(), SkillCall::new("dock", &[])));
    let root = b.sequence(children);
    b.build(root).expect("fixture")
}

pub fn bt_scalability_recharge() -> PolicyTree {
    let mut t = bt_scalability();
    let sub = recharge_subtree(BATTERY_THRESHOLD).with_ids_from(t.next_free_id());
    t.prepend_priority_subtree(sub).expect("fixture edit");
    t
}

/// Open-loop memory sequence over the four fetch skills.
pub fn bt_fetch_memory_sequence() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let kids = fetch_steps("cube2")
        .iter()
        .map(|s| b.action(s.call()))
        .collect();
    let root = b.memory_sequence(kids);
    b.build(root).expect("fixture")
}

/// Compact tree of the kind found by genetic programming: 9 nodes.
pub fn bt_fetch_gp() -> PolicyTree {
    let mut b = TreeBuilder::new();
    let done = b.condition(L::object_at("cube2", "delivery"));
    let reach = b.guarded(L::in_hand("cube2"), SkillCall::new("move_to", &["cube2"]));
    let pick = b.action(SkillCall::new("pick", &["cube2"]));
    let deliver = b.action(SkillCall::new("move_to", &["delivery"]));
    let place = b.action(SkillCall::new("place", &["cube2", "delivery"]));
    let seq = b.sequence(vec![reach, pick, deliver, place]);
    let root = b.fallback(vec![done, seq]);
    b.build(root).expect("fixture")
}

pub fn tuck_state() -> NewState {
    NewState::new(
        "tuck_arm",
        SkillCall::new("tuck", &[]),
        vec![L::in_hand("cube2")],
        vec![L::arm_tucked()],
    )
}

pub fn safe_move_state() -> NewState {
    let a = safe_move_action();
    NewState::new(&a.name, a.call(), vec![], a.post)
}

pub fn dock_state(after: &[L]) -> NewState {
    NewState::new(
        "dock",
        SkillCall::new("dock", &[]),
        after.to_vec(),
        vec![L::docked()],
    )
}

pub fn recharge_state(threshold: i64) -> NewState {
    NewState::new(
        "recharge",
        SkillCall::new("recharge", &[]),
        vec![],
        vec![L::battery_above(threshold)],
    )
}

pub fn low_battery() -> Guard {
    Guard::unless(L::battery_above(BATTERY_THRESHOLD))
}

pub fn fsm_fetch_sequential() -> StateMachine {
    StateMachine::build_sequential(&fetch_plan()).expect("fixture")
}

pub fn fsm_fetch_fault_tolerant() -> StateMachine {
    StateMachine::build_fault_tolerant(&fetch_plan()).expect("fixture")
}

fn id_of(sm: &StateMachine, name: &str) -> NodeId {
    sm.find(name).expect("fixture state")
}

pub fn fsm_fetch_tuck() -> StateMachine {
    let mut sm = fsm_fetch_fault_tolerant();
    let (pick, next) = (id_of(&sm, "pick_cube2"), id_of(&sm, "move_to_delivery"));
    sm.add_sequential_state(pick, tuck_state(), next)
        .expect("fixture edit");
    sm
}

pub fn fsm_fetch_safe_move() -> StateMachine {
    let mut sm = fsm_fetch_fault_tolerant();
    let (mv, pick) = (id_of(&sm, "move_to_cube2"), id_of(&sm, "pick_cube2"));
    sm.add_alternative_state(mv, safe_move_state(), pick)
        .expect("fixture edit");
    sm
}

fn append_dock(sm: &mut StateMachine) {
    let place = id_of(sm, "place_cube2");
    let outcome = id_of(sm, "SUCCESS");
    let after = sm.goal().to_vec();
    sm.add_sequential_state(place, dock_state(&after), outcome)
        .expect("fixture edit");
}

pub fn fsm_fetch_dock() -> StateMachine {
    let mut sm = fsm_fetch_fault_tolerant();
    append_dock(&mut sm);
    sm
}

fn connect_recharge(sm: &mut StateMachine) {
    sm.add_connected_state(
        recharge_state(BATTERY_THRESHOLD),
        low_battery(),
        low_battery(),
    )
    .expect("fixture edit");
}

pub fn fsm_fetch_recharge() -> StateMachine {
    let mut sm = fsm_fetch_fault_tolerant();
    connect_recharge(&mut sm);
    sm
}

pub fn fsm_fetch_recharge_dock() -> StateMachine {
    let mut sm = fsm_fetch_recharge();
    append_dock(&mut sm);
    sm
}

pub fn fsm_scalability() -> StateMachine {
    StateMachine::build_fault_tolerant(&scalability_plan()).expect("fixture")
}

pub fn fsm_scalability_recharge() -> StateMachine {
    let mut sm = fsm_scalability();
    connect_recharge(&mut sm);
    sm
}

fn fetch_world(name: &str) -> Scenario {
    let mut sc = Scenario {
        name: name.to_string(),
        goal: fetch_goal().conditions,
        ..Scenario::default()
    };
    sc.initial
        .item_locations
        .insert("cube2".into(), "fetch2".into());
    sc
}

fn at(tick: u64, event: PerturbationEvent) -> Perturbation {
    Perturbation { tick, event }
}

/// Unperturbed fetch of cube2 from fetch2.
pub fn scenario_baseline() -> Scenario {
    fetch_world("baseline")
}

/// Battery drops below the threshold while the cube is carried.
pub fn scenario_recharge() -> Scenario {
    let mut sc = fetch_world("recharge");
    sc.perturbations
        .push(at(10, PerturbationEvent::SetBattery { level: 15 }));
    sc
}

/// Fetch followed by docking, with a low-battery event on the way.
pub fn scenario_docking() -> Scenario {
    let mut sc = scenario_recharge();
    sc.name = "docking".into();
    sc.goal.push(L::docked());
    sc
}

/// Search, five fetches and docking; the battery runs low on its own.
pub fn scenario_scalability() -> Scenario {
    let mut sc = Scenario {
        name: "scalability".into(),
        goal: scalability_goal().conditions,
        markers: MARKERS.iter().map(|m| m.to_string()).collect(),
        max_ticks: 600,
        ..Scenario::default()
    };
    for (i, c) in CUBES.iter().enumerate() {
        sc.initial
            .item_locations
            .insert(c.to_string(), format!("fetch{}", i + 1));
    }
    sc
}

/// Long fetch episode used to expose chattering.
pub fn scenario_chattering() -> Scenario {
    let mut sc = fetch_world("chattering");
    sc.max_ticks = 200;
    sc
}

/// The cube is moved away from the delivery station after the task is done.
pub fn scenario_post_success() -> Scenario {
    let mut sc = fetch_world("post_success");
    sc.perturbations.push(at(
        20,
        PerturbationEvent::SetItemLocation {
            item: "cube2".into(),
            station: "fetch4".into(),
        },
    ));
    sc
}

/// The carried cube ends up on another table before delivery.
pub fn scenario_relocation() -> Scenario {
    let mut sc = fetch_world("relocation");
    sc.perturbations.push(at(
        10,
        PerturbationEvent::SetItemLocation {
            item: "cube2".into(),
            station: "fetch3".into(),
        },
    ));
    sc
}

/// The first motion fails.
pub fn scenario_move_failure() -> Scenario {
    let mut sc = fetch_world("move_failure");
    sc.failures.push(crate::simworld::FailureInjection {
        skill: "move_to".into(),
        nth: Some(1),
        probability: None,
    });
    sc
}

/// Action libraries and goals as (file stem, document text).
pub fn auxiliary_documents() -> Vec<(&'static str, String)> {
    use crate::document::{serialize_action_library, serialize_goal};
    vec![
        ("library_fetch", serialize_action_library(&fetch_library())),
        ("goal_fetch", serialize_goal(&fetch_goal())),
        (
            "library_scalability",
            serialize_action_library(&scalability_library()),
        ),
        ("goal_scalability", serialize_goal(&scalability_goal())),
    ]
}

/// Every shipped scenario with its file stem.
pub fn scenarios() -> Vec<(&'static str, Scenario)> {
    vec![
        ("baseline", scenario_baseline()),
        ("recharge", scenario_recharge()),
        ("docking", scenario_docking()),
        ("scalability", scenario_scalability()),
        ("chattering", scenario_chattering()),
        ("post_success", scenario_post_success()),
        ("relocation", scenario_relocation()),
        ("move_failure", scenario_move_failure()),
    ]
}

/// Every shipped policy document with its file stem.
pub fn corpus() -> Vec<(&'static str, PolicyDocument)> {
    let bt = |name, t: PolicyTree| (name, PolicyDocument::Bt(t));
    let fsm = |name, m: StateMachine| (name, PolicyDocument::Fsm(m));
    let hfsm_of = |t: PolicyTree| PolicyDocument::Hfsm(hfsm::from_bt(&t).expect("fixture"));
    vec![
        bt("bt_fetch", bt_fetch()),
        bt("bt_fetch_chattering", bt_fetch_chattering()),
        bt("bt_pick_subtree", bt_pick_subtree()),
        bt("bt_fetch_tuck", bt_fetch_tuck()),
        bt("bt_fetch_safe_move", bt_fetch_safe_move()),
        bt("bt_fetch_dock", bt_fetch_dock()),
        bt("bt_fetch_recharge", bt_fetch_recharge()),
        bt("bt_fetch_recharge_dock", bt_fetch_recharge_dock()),
        bt("bt_scalability", bt_scalability()),
        bt("bt_scalability_recharge", bt_scalability_recharge()),
        bt("bt_fetch_memory_sequence", bt_fetch_memory_sequence()),
        bt("bt_fetch_gp", bt_fetch_gp()),
        fsm("fsm_fetch_sequential", fsm_fetch_sequential()),
        fsm("fsm_fetch_fault_tolerant", fsm_fetch_fault_tolerant()),
        fsm("fsm_fetch_tuck", fsm_fetch_tuck()),
        fsm("fsm_fetch_safe_move", fsm_fetch_safe_move()),
        fsm("fsm_fetch_dock", fsm_fetch_dock()),
        fsm("fsm_fetch_recharge", fsm_fetch_recharge()),
        fsm("fsm_fetch_recharge_dock", fsm_fetch_recharge_dock()),
        fsm("fsm_scalability", fsm_scalability()),
        fsm("fsm_scalability_recharge", fsm_scalability_recharge()),
        ("hfsm_pick_subtree", hfsm_of(bt_pick_subtree())),
        ("hfsm_fetch", hfsm_of(bt_fetch())),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_tree_sizes() {
        let sizes = [
            (bt_fetch(), 14),
            (bt_fetch_chattering(), 14),
            (bt_fetch_tuck(), 17),
            (bt_fetch_safe_move(), 15),
            (bt_fetch_dock(), 18),
            (bt_fetch_recharge(), 18),
            (bt_fetch_recharge_dock(), 21),
            (bt_scalability(), 77),
            (bt_scalability_recharge(), 80),
            (bt_fetch_gp(), 9),
        ];
        for (t, n) in sizes {
            assert_eq!(t.len(), n);
            assert_eq!(t.count_elements().edges, n - 1);
        }
    }

    #[test]
    fn plans_are_symbolically_valid() {
        let none = Default::default();
        assert!(fetch_plan().is_valid_from(&none));
        assert!(scalability_plan().is_valid_from(&none));
        assert_eq!(scalability_plan().steps.len(), 22);
    }
}
