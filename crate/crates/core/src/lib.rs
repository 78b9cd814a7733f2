//! Behavior trees, fault-tolerant finite state machines and hierarchical
//! state machines for robot task switching, with the structural metrics used
//! to compare them and a deterministic discrete-tick simulator.

pub mod bt;
pub mod cli;
pub mod document;
pub mod fixtures;
pub mod fsm;
pub mod hfsm;
pub mod metrics;
pub mod planner;
pub mod simworld;
pub mod types;

#[cfg(test)]
mod testutil;

pub use bt::{BtKind, BtNode, PolicyTree, TreeBuilder};
pub use document::{parse_policy_document, serialize_policy_document, PolicyDocument};
pub use fsm::StateMachine;
pub use hfsm::{from_bt, Hfsm, HfsmContainer};
pub use planner::{backchain, extract_plan, Ordering, Plan};
pub use types::{
    validate_action_library, ActionLibrary, ActionSpec, ConditionLiteral, Goal, NodeId, SkillCall,
    Status, World,
};
