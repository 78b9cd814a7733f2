//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use taskswitch::fixtures as f;
use taskswitch::fsm::{Guard, NewState};
use taskswitch::metrics::{
    brute_force_ged, cyclomatic, effort, effort_m, ged_anchored, ged_exact, is_isomorphic,
    policy_graph, Anchor, GedCostModel, GraphKind, PolicyGraph,
};
use taskswitch::planner::{backchain, Ordering, Plan};
use taskswitch::simworld::{
    detect_chattering, run_episode, traces_equivalent, EventKind, Outcome, Scenario, Trace,
    DEFAULT_CHATTER_K,
};
use taskswitch::types::{validate_action_library, ConditionLiteral as L, SkillCall};
use taskswitch::{from_bt, PolicyDocument, PolicyTree, StateMachine, TreeBuilder};

/// Wall-clock limit for one exact edit-distance computation.
const GED_PAIR_LIMIT: Duration = Duration::from_secs(60);
/// Wall-clock limit for all cyclomatic complexities together.
const CYCLOMATIC_LIMIT: Duration = Duration::from_secs(1);
/// Wall-clock limit for one simulated episode.
const EPISODE_LIMIT: Duration = Duration::from_secs(5);
/// Integer metrics must match exactly.
const METRIC_TOLERANCE: f64 = 0.0;
const RANDOM_PAIRS: usize = 200;
const RANDOM_SEED: u64 = 20_240_101;
const MAX_RANDOM_VERTICES: usize = 7;
const EFFORT_GRID: u64 = 21;
const TREE_SIZES: [usize; 3] = [14, 80, 500];
const MACHINE_SIZES: [usize; 3] = [6, 25, 100];

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= METRIC_TOLERANCE
}

fn bt(t: PolicyTree) -> PolicyDocument {
    PolicyDocument::Bt(t)
}

fn fsm(m: StateMachine) -> PolicyDocument {
    PolicyDocument::Fsm(m)
}

fn hfsm(t: &PolicyTree) -> PolicyDocument {
    PolicyDocument::Hfsm(from_bt(t).expect("tree converts"))
}

/// Exact distance under the default cost model, with its runtime.
fn timed_ged(a: &PolicyDocument, b: &PolicyDocument) -> (f64, bool, Duration) {
    let start = Instant::now();
    let r = ged_exact(
        &policy_graph(a),
        &policy_graph(b),
        &GedCostModel::default(),
        GED_PAIR_LIMIT,
    )
    .expect("valid graphs");
    (r.distance, r.exact, start.elapsed())
}

fn anchored(a: &PolicyDocument, b: &PolicyDocument) -> f64 {
    ged_anchored(
        &policy_graph(a),
        &policy_graph(b),
        &Anchor::SameKeys,
        &GedCostModel::default(),
    )
    .expect("anchored comparison")
    .distance
}

/// Row name, (base, edited) pairs for BT, FSM and HFSM, expected distances.
type ModifiedRow = (
    &'static str,
    [(PolicyDocument, PolicyDocument); 3],
    [f64; 3],
);

fn modified_policies() -> Vec<ModifiedRow> {
    let row =
        |name, base: PolicyTree, edited: PolicyTree, m0: StateMachine, m1: StateMachine, want| {
            let pair_h = (hfsm(&base), hfsm(&edited));
            (
                name,
                [(bt(base), bt(edited)), (fsm(m0), fsm(m1)), pair_h],
                want,
            )
        };
    vec![
        row(
            "tuck arm",
            f::bt_fetch(),
            f::bt_fetch_tuck(),
            f::fsm_fetch_fault_tolerant(),
            f::fsm_fetch_tuck(),
            [6.0, 5.0, 12.0],
        ),
        row(
            "safe move",
            f::bt_fetch(),
            f::bt_fetch_safe_move(),
            f::fsm_fetch_fault_tolerant(),
            f::fsm_fetch_safe_move(),
            [2.0, 4.0, 4.0],
        ),
        row(
            "dock",
            f::bt_fetch(),
            f::bt_fetch_dock(),
            f::fsm_fetch_fault_tolerant(),
            f::fsm_fetch_dock(),
            [8.0, 5.0, 17.0],
        ),
        row(
            "recharge",
            f::bt_fetch(),
            f::bt_fetch_recharge(),
            f::fsm_fetch_fault_tolerant(),
            f::fsm_fetch_recharge(),
            [8.0, 8.0, 17.0],
        ),
    ]
}

fn modification_distances() -> Check {
    let mut ok = true;
    let mut cells = Vec::new();
    for (name, pairs, want) in modified_policies() {
        for (kind, ((a, b), w)) in ["BT", "FSM", "HFSM"].iter().zip(pairs.iter().zip(want)) {
            let (d, exact, took) = timed_ged(a, b);
            let good = exact && close(d, w) && took < GED_PAIR_LIMIT;
            ok &= good;
            let mut cell = format!("{name}/{kind}={d} ({:.2}s)", took.as_secs_f64());
            if !good {
                cell.push_str(&format!(" expected {w}"));
                // Small enough to enumerate: show the independent figure too.
                let (ga, gb) = (policy_graph(a), policy_graph(b));
                if let Ok(bf) = brute_force_ged(&ga, &gb, &GedCostModel::default()) {
                    cell.push_str(&format!(", brute force {bf}"));
                }
            }
            cells.push(cell);
        }
    }
    ensure(ok, cells.join(", "))
}

fn growth_rows() -> Vec<(&'static str, PolicyTree, StateMachine)> {
    vec![
        ("baseline", f::bt_fetch(), f::fsm_fetch_fault_tolerant()),
        ("recharge", f::bt_fetch_recharge(), f::fsm_fetch_recharge()),
        (
            "docking",
            f::bt_fetch_recharge_dock(),
            f::fsm_fetch_recharge_dock(),
        ),
        ("scalability", f::bt_scalability(), f::fsm_scalability()),
        (
            "scalability recharge",
            f::bt_scalability_recharge(),
            f::fsm_scalability_recharge(),
        ),
    ]
}

fn cyclomatic_column() -> Check {
    let want = [14, 20, 24, 68, 92];
    let start = Instant::now();
    let got: Vec<(i64, i64)> = growth_rows()
        .into_iter()
        .map(|(_, t, m)| {
            (
                cyclomatic(&policy_graph(&bt(t))),
                cyclomatic(&policy_graph(&fsm(m))),
            )
        })
        .collect();
    let took = start.elapsed();
    let ok = got.iter().zip(want).all(|(&(b, m), w)| b == 1 && m == w) && took < CYCLOMATIC_LIMIT;
    ensure(ok, format!("BT/FSM {got:?} in {:.3}s", took.as_secs_f64()))
}

fn element_counts() -> Check {
    let graphical = [(27, 24), (35, 32), (41, 38), (153, 114), (159, 140)];
    let active = [(14, 24), (18, 32), (21, 38), (77, 114), (80, 140)];
    let mut ok = true;
    let mut cells = Vec::new();
    for (i, (name, t, m)) in growth_rows().into_iter().enumerate() {
        let (cb, cm) = (t.count_elements(), m.count_elements());
        let g = (cb.graphical, cm.graphical);
        let a = (cb.active, cm.active);
        ok &= g == graphical[i] && a == active[i];
        cells.push(format!(
            "{name} graphical {}/{} active {}/{}",
            g.0, g.1, a.0, a.1
        ));
    }
    ensure(ok, cells.join(", "))
}

fn growth_distances() -> Check {
    let (rb, rb_exact, _) = timed_ged(&bt(f::bt_fetch()), &bt(f::bt_fetch_recharge()));
    let (rf, rf_exact, _) = timed_ged(
        &fsm(f::fsm_fetch_fault_tolerant()),
        &fsm(f::fsm_fetch_recharge()),
    );
    let (db, db_exact, _) = timed_ged(
        &bt(f::bt_fetch_recharge()),
        &bt(f::bt_fetch_recharge_dock()),
    );
    let (df, df_exact, _) = timed_ged(
        &fsm(f::fsm_fetch_recharge()),
        &fsm(f::fsm_fetch_recharge_dock()),
    );
    let sb = anchored(&bt(f::bt_scalability()), &bt(f::bt_scalability_recharge()));
    let sf = anchored(
        &fsm(f::fsm_scalability()),
        &fsm(f::fsm_scalability_recharge()),
    );
    let exact = rb_exact && rf_exact && db_exact && df_exact;
    let ok = exact
        && close(rb, 8.0)
        && close(rf, 8.0)
        && close(db, 6.0)
        && (close(df, 6.0) || close(df, 8.0))
        && close(sb, 6.0)
        && close(sf, 26.0);
    let which = if close(df, 6.0) {
        "prose figure"
    } else {
        "table figure"
    };
    ensure(ok, format!("recharge {rb}/{rf}, docking BT {db} FSM {df} ({which}), scalability anchored {sb}/{sf}"))
}

fn effort_model() -> Check {
    let closed = effort(4, 0);
    let seq = fsm(f::fsm_fetch_sequential());
    let ft = fsm(f::fsm_fetch_fault_tolerant());
    let (gs, gf) = (policy_graph(&seq), policy_graph(&ft));
    let (d, exact, _) = timed_ged(&seq, &ft);
    let dv = gf.vertex_count() as i64 - gs.vertex_count() as i64;
    let de = gf.edge_count() as i64 - gs.edge_count() as i64;
    let mut grid_ok = true;
    for m_s in 0..EFFORT_GRID {
        for m_fc in 0..EFFORT_GRID {
            grid_ok &= effort(m_s, m_fc) == effort_m(m_s + m_fc, m_fc);
        }
    }
    let ok =
        closed == 15 && exact && close(d, closed as f64) && dv + de == closed as i64 && grid_ok;
    ensure(
        ok,
        format!(
            "effort(4,0)={closed}, sequential to fault tolerant: ged {d}, +{dv} vertices +{de} edges, grid {}x{} consistent={grid_ok}",
            EFFORT_GRID, EFFORT_GRID
        ),
    )
}

fn planner_fidelity() -> Check {
    let lib = validate_action_library(f::fetch_library()).expect("library");
    let goal = f::fetch_goal();
    let safe = backchain(&goal, &lib, Ordering::Safe).expect("safe plan");
    let naive = backchain(&goal, &lib, Ordering::Naive).expect("naive plan");
    let (ds, es, _) = timed_ged(&bt(safe), &bt(f::bt_fetch()));
    let (dn, en, _) = timed_ged(&bt(naive), &bt(f::bt_fetch_chattering()));
    ensure(
        es && en && close(ds, 0.0) && close(dn, 0.0),
        format!("safe vs reference {ds}, naive vs chattering reference {dn}"),
    )
}

fn timed_run(doc: &PolicyDocument, sc: &Scenario) -> (taskswitch::simworld::Episode, Duration) {
    let start = Instant::now();
    let ep = run_episode(doc, sc).expect("episode runs");
    (ep, start.elapsed())
}

fn behavioral_equivalence() -> Check {
    let cases = [
        (
            "baseline",
            f::scenario_baseline(),
            {
                let lib = validate_action_library(f::fetch_library()).expect("library");
                backchain(&f::fetch_goal(), &lib, Ordering::Safe).expect("plan")
            },
            f::fsm_fetch_fault_tolerant(),
        ),
        (
            "recharge",
            f::scenario_recharge(),
            f::bt_fetch_recharge(),
            f::fsm_fetch_recharge(),
        ),
        (
            "docking",
            f::scenario_docking(),
            f::bt_fetch_recharge_dock(),
            f::fsm_fetch_recharge_dock(),
        ),
        (
            "scalability",
            f::scenario_scalability(),
            f::bt_scalability_recharge(),
            f::fsm_scalability_recharge(),
        ),
    ];
    let mut ok = true;
    let mut cells = Vec::new();
    for (name, sc, tree, machine) in cases {
        let docs = [hfsm(&tree), bt(tree), fsm(machine)];
        let runs: Vec<_> = docs.iter().map(|d| timed_run(d, &sc)).collect();
        let slowest = runs.iter().map(|r| r.1).max().unwrap_or_default();
        let all_ok = runs.iter().all(|r| r.0.outcome == Outcome::Success);
        let eq = (0..3)
            .all(|i| (i + 1..3).all(|j| traces_equivalent(&runs[i].0.trace, &runs[j].0.trace)));
        ok &= eq && all_ok && slowest < EPISODE_LIMIT;
        cells.push(format!(
            "{name}: equivalent={eq} success={all_ok} skills={} slowest {:.3}s",
            runs[0].0.skills_started(),
            slowest.as_secs_f64()
        ));
    }
    ensure(ok, cells.join(", "))
}

fn starts<'a>(t: &'a Trace, skill: &'a str) -> impl Iterator<Item = u64> + 'a {
    t.starts()
        .filter(move |e| e.skill.as_deref() == Some(skill))
        .map(|e| e.tick)
}

fn reactivity() -> Check {
    let sc = f::scenario_recharge();
    let mut same_tick = Vec::new();
    for doc in [bt(f::bt_fetch_recharge()), fsm(f::fsm_fetch_recharge())] {
        let (ep, _) = timed_run(&doc, &sc);
        let hit = ep
            .trace
            .events
            .iter()
            .find(|e| e.kind == EventKind::Perturbation)
            .map(|e| e.tick);
        let first = starts(&ep.trace, "recharge").next();
        same_tick.push(hit.is_some() && hit == first);
    }
    let picks =
        |doc: PolicyDocument, sc: &Scenario| starts(&timed_run(&doc, sc).0.trace, "pick").count();
    let before = f::scenario_relocation();
    let (bt_before, fsm_before) = (
        picks(bt(f::bt_fetch()), &before),
        picks(fsm(f::fsm_fetch_fault_tolerant()), &before),
    );
    let after = f::scenario_post_success();
    let (bt_after, fsm_after) = (
        picks(bt(f::bt_fetch()), &after),
        picks(fsm(f::fsm_fetch_fault_tolerant()), &after),
    );
    let ok = same_tick.iter().all(|&b| b)
        && bt_before >= 2
        && fsm_before >= 2
        && bt_after >= 2
        && fsm_after == 1;
    ensure(
        ok,
        format!(
            "recharge starts in perturbation tick BT/FSM {:?}; picks with relocation before completion {bt_before}/{fsm_before}, after success {bt_after}/{fsm_after}",
            same_tick
        ),
    )
}

fn chattering() -> Check {
    let sc = f::scenario_chattering();
    let (naive, _) = timed_run(&bt(f::bt_fetch_chattering()), &sc);
    let (safe, _) = timed_run(&bt(f::bt_fetch()), &sc);
    let (cn, cs) = (
        detect_chattering(&naive.trace, DEFAULT_CHATTER_K),
        detect_chattering(&safe.trace, DEFAULT_CHATTER_K),
    );
    let ok = cn
        && !cs
        && naive.outcome == Outcome::Timeout
        && naive.ticks == sc.max_ticks
        && safe.outcome == Outcome::Success;
    ensure(
        ok,
        format!(
            "naive chattering={cn} {:?} after {} ticks, safe chattering={cs} {:?}",
            naive.outcome, naive.ticks, safe.outcome
        ),
    )
}

fn random_graph(rng: &mut ChaCha8Rng) -> PolicyGraph {
    let mut g = PolicyGraph::new(GraphKind::Plain);
    let n = rng.random_range(0..=MAX_RANDOM_VERTICES);
    for i in 0..n {
        g.add_vertex(format!("v{i}"), ["a", "b"][rng.random_range(0..2)]);
    }
    if n > 0 {
        for _ in 0..rng.random_range(0..=2 * n) {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            g.add_edge(u, v, ["x", "y"][rng.random_range(0..2)]);
        }
    }
    g
}

fn ged_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED);
    let mut mismatches = 0;
    let mut bad_scripts = 0;
    for i in 0..RANDOM_PAIRS {
        let cost = if i % 2 == 0 {
            GedCostModel::default()
        } else {
            GedCostModel::label_sensitive()
        };
        let (a, b) = (random_graph(&mut rng), random_graph(&mut rng));
        let r = ged_exact(&a, &b, &cost, GED_PAIR_LIMIT).expect("small graphs");
        let oracle = brute_force_ged(&a, &b, &cost).expect("small graphs");
        if !r.exact || !close(r.distance, oracle) {
            mismatches += 1;
        }
        let applied = r.script.apply(&a).expect("script applies");
        if !is_isomorphic(&applied, &b) || !close(r.script.cost, r.distance) {
            bad_scripts += 1;
        }
    }
    ensure(
        mismatches == 0 && bad_scripts == 0,
        format!("{RANDOM_PAIRS} pairs: {mismatches} distance mismatches, {bad_scripts} scripts not reaching the target"),
    )
}

/// Tree with exactly `size` nodes: a root sequence over guarded moves.
fn tree_of_size(size: usize) -> PolicyTree {
    match size {
        14 => return f::bt_fetch(),
        80 => return f::bt_scalability_recharge(),
        _ => {}
    }
    let mut b = TreeBuilder::new();
    let mut children = Vec::new();
    let mut n = 1;
    while n + 3 <= size {
        let station = format!("fetch{}", children.len() % 5 + 1);
        children.push(b.guarded(
            L::robot_at(&station),
            SkillCall::new("move_to", &[&station]),
        ));
        n += 3;
    }
    while n < size {
        children.push(b.action(SkillCall::new("search", &[])));
        n += 1;
    }
    let root = b.sequence(children);
    b.build(root).expect("synthetic tree")
}

/// Pre-existing nodes whose content differs after an edit.
fn mutated_nodes(before: &PolicyTree, after: &PolicyTree) -> usize {
    before
        .nodes()
        .filter(|n| after.node(n.id).is_some_and(|m| m != *n))
        .count()
}

fn fetch_blocks(items: &[String]) -> Plan {
    let mut steps = Vec::new();
    for it in items {
        steps.extend([
            f::move_action(it),
            f::pick_action(it),
            f::move_action("delivery"),
            f::place_action(it),
        ]);
    }
    Plan {
        goal: items.iter().map(|i| L::object_at(i, "delivery")).collect(),
        steps,
    }
}

/// Fault-tolerant machine with exactly `size` states, padded with
/// sequential states before the outcome.
fn machine_of_size(size: usize) -> StateMachine {
    let blocks = (size - 2) / 4;
    let items: Vec<String> = (1..=blocks.max(1)).map(|i| format!("cube{i}")).collect();
    let mut sm =
        StateMachine::build_fault_tolerant(&fetch_blocks(&items)).expect("synthetic machine");
    let mut k = 0;
    while sm.len() < size {
        let last = *sm.plan_order().last().expect("non-empty plan");
        let outcome = sm.find("SUCCESS").expect("success outcome");
        let pad = NewState::new(
            &format!("search_{k}"),
            SkillCall::new("search", &[]),
            sm.goal().to_vec(),
            vec![],
        );
        sm.add_sequential_state(last, pad, outcome)
            .expect("pad state");
        k += 1;
    }
    sm
}

fn edit_locality() -> Check {
    let mut ok = true;
    let mut cells = Vec::new();
    for size in TREE_SIZES {
        let base = tree_of_size(size);
        let mut t = base.clone();
        let sub = f::tuck_subtree().with_ids_from(t.next_free_id());
        let sub_root = sub.root();
        t.insert_subtree(t.root(), 1, sub).expect("insert");
        let ins = mutated_nodes(&base, &t);
        let mid = t.clone();
        t.remove_subtree(sub_root).expect("remove");
        let rem = mutated_nodes(&mid, &t);
        ok &= base.len() == size && ins == 1 && rem == 1;
        cells.push(format!("tree {size}: insert {ins}, remove {rem}"));
    }
    let mut touched = Vec::new();
    for size in MACHINE_SIZES {
        let base = machine_of_size(size);
        let mut sm = base.clone();
        let outcomes = base.outcome_count();
        sm.add_connected_state(f::recharge_state(20), low(), low())
            .expect("connect");
        let changed = base
            .states()
            .filter(|s| sm.state(s.id).is_some_and(|t| t != *s))
            .count();
        ok &= base.len() == size && changed == size - outcomes;
        touched.push((size, changed));
        cells.push(format!(
            "machine {size}: connected touches {changed} (states-outcomes {})",
            size - outcomes
        ));
    }
    // Touched states grow with unit slope in the state count.
    let linear = touched
        .windows(2)
        .all(|w| w[1].1 - w[0].1 == w[1].0 - w[0].0);
    ok &= linear;
    cells.push(format!("linear={linear}"));
    ensure(ok, cells.join(", "))
}

fn low() -> Guard {
    Guard::unless(L::battery_above(20))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("edit distance of modified policies", modification_distances),
        ("cyclomatic complexity", cyclomatic_column),
        ("element counts", element_counts),
        ("edit distance of grown policies", growth_distances),
        ("development effort", effort_model),
        ("planner fidelity", planner_fidelity),
        ("behavioral equivalence", behavioral_equivalence),
        ("reactivity probes", reactivity),
        ("chattering", chattering),
        ("edit distance oracle", ged_oracle),
        ("edit locality", edit_locality),
    ];
    let started = Instant::now();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let (verdict, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {verdict}: {name}: {detail}", i + 1);
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
