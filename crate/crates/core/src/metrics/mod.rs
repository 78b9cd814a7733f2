//! Structural measures: graph encodings, edit distance, cyclomatic
//! complexity, effort, element counts and closed-form estimates.

pub mod formulas;
pub mod ged;
pub mod graph;
pub mod report;

pub use formulas::{
    effort, effort_m, formula_estimates, ged_hfsm_formula, Estimate, PolicyKind, StructureCounts,
};
pub use ged::{
    brute_force_ged, default_budget, ged_anchored, ged_exact, is_isomorphic, Anchor, EditOp,
    EditScript, GedCostModel, GedError, GedResult,
};
pub use graph::{
    bt_to_graph, cyclomatic, fsm_to_graph, hfsm_to_graph, policy_graph, GraphKind, PolicyGraph,
};
