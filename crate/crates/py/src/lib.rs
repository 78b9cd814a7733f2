//! Python bindings. Documents cross the boundary as JSON text.

use std::path::Path;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use taskswitch::document::{parse_action_library, parse_goal};
use taskswitch::metrics::{
    default_budget, ged_anchored, ged_exact, policy_graph, Anchor, GedCostModel,
};
use taskswitch::simworld::{detect_chattering, parse_scenario, Trace, DEFAULT_CHATTER_K};
use taskswitch::{
    parse_policy_document, serialize_policy_document, validate_action_library, PolicyDocument,
};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn policy(text: &str) -> PyResult<PolicyDocument> {
    parse_policy_document(text.as_bytes()).map_err(err)
}

/// Kind of a policy document: "bt", "fsm" or "hfsm".
#[pyfunction]
fn policy_kind(doc: &str) -> PyResult<&'static str> {
    Ok(policy(doc)?.kind())
}

/// Cyclomatic complexity of the policy graph.
#[pyfunction]
fn cyclomatic(doc: &str) -> PyResult<i64> {
    Ok(taskswitch::metrics::cyclomatic(&policy_graph(&policy(
        doc,
    )?)))
}

/// Graph edit distance between two policies as (distance, exact, script JSON).
#[pyfunction]
#[pyo3(signature = (a, b, anchored = false, label_sensitive = false))]
fn ged(a: &str, b: &str, anchored: bool, label_sensitive: bool) -> PyResult<(f64, bool, String)> {
    let (ga, gb) = (policy_graph(&policy(a)?), policy_graph(&policy(b)?));
    let cost = if label_sensitive {
        GedCostModel::label_sensitive()
    } else {
        GedCostModel::default()
    };
    let r = if anchored {
        ged_anchored(&ga, &gb, &Anchor::SameKeys, &cost)
    } else {
        ged_exact(&ga, &gb, &cost, default_budget())
    }
    .map_err(err)?;
    let script = serde_json::to_string(&r.script).map_err(err)?;
    Ok((r.distance, anchored || r.exact, script))
}

/// Development effort for `m_s` sequential actions and `m_fc` fully
/// connected ones.
#[pyfunction]
fn effort(m_s: u64, m_fc: u64) -> u64 {
    taskswitch::metrics::effort(m_s, m_fc)
}

/// Backchained behavior tree for a goal, as a policy document.
#[pyfunction]
#[pyo3(signature = (goal, library, ordering = "safe"))]
fn backchain(goal: &str, library: &str, ordering: &str) -> PyResult<String> {
    let goal = parse_goal(goal.as_bytes()).map_err(err)?;
    let lib = validate_action_library(parse_action_library(library.as_bytes()).map_err(err)?)
        .map_err(err)?;
    let ordering = match ordering {
        "safe" => taskswitch::Ordering::Safe,
        "naive" => taskswitch::Ordering::Naive,
        o => return Err(err(format!("unknown ordering `{o}`"))),
    };
    let tree = taskswitch::backchain(&goal, &lib, ordering).map_err(err)?;
    Ok(serialize_policy_document(&PolicyDocument::Bt(tree)))
}

/// Hierarchical state machine equivalent to a behavior tree document.
#[pyfunction]
fn to_hfsm(bt: &str) -> PyResult<String> {
    let PolicyDocument::Bt(tree) = policy(bt)? else {
        return Err(err("expected a behavior tree document"));
    };
    let h = taskswitch::from_bt(&tree).map_err(err)?;
    Ok(serialize_policy_document(&PolicyDocument::Hfsm(h)))
}

/// Simulated episode as (outcome, ticks, trace JSONL).
#[pyfunction]
fn run_episode(policy_doc: &str, scenario: &str) -> PyResult<(String, u64, String)> {
    let sc = parse_scenario(scenario.as_bytes()).map_err(err)?;
    let ep = taskswitch::simworld::run_episode(&policy(policy_doc)?, &sc).map_err(err)?;
    let outcome = serde_json::to_value(ep.outcome).map_err(err)?;
    Ok((
        outcome.as_str().unwrap_or_default().to_owned(),
        ep.ticks,
        ep.trace.to_jsonl(),
    ))
}

/// Whether a JSONL trace shows two motions repeatedly preempting each other.
#[pyfunction]
#[pyo3(signature = (trace, k = DEFAULT_CHATTER_K))]
fn chattering(trace: &str, k: usize) -> PyResult<bool> {
    Ok(detect_chattering(
        &Trace::from_jsonl(trace).map_err(err)?,
        k,
    ))
}

/// Metric table 2 or 3 computed from a fixture directory, as JSON.
#[pyfunction]
fn report(table: u8, fixtures: &str) -> PyResult<String> {
    let r = taskswitch::metrics::report::generate(
        table,
        Path::new(fixtures),
        &GedCostModel::default(),
        default_budget(),
    )
    .map_err(err)?;
    Ok(r.to_json())
}

#[pymodule]
fn taskswitch_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(policy_kind, m)?)?;
    m.add_function(wrap_pyfunction!(cyclomatic, m)?)?;
    m.add_function(wrap_pyfunction!(ged, m)?)?;
    m.add_function(wrap_pyfunction!(effort, m)?)?;
    m.add_function(wrap_pyfunction!(backchain, m)?)?;
    m.add_function(wrap_pyfunction!(to_hfsm, m)?)?;
    m.add_function(wrap_pyfunction!(run_episode, m)?)?;
    m.add_function(wrap_pyfunction!(chattering, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    Ok(())
}
