//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage/parse/input errors, 2 episode FAILURE,
//! 3 episode TIMEOUT, 4 incomplete edit-distance search, 5 report cells that
//! differ without a documented explanation.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use crate::document::{
    parse_action_library, parse_goal, parse_policy_document, serialize_policy_document,
    PolicyDocument,
};
use crate::fixtures;
use crate::fsm::StateMachine;
use crate::hfsm::from_bt;
use crate::metrics::formulas::{effort, formula_estimates, PolicyKind};
use crate::metrics::ged::{
    default_budget, ged_anchored, ged_exact, Anchor, GedCostModel, GedResult,
};
use crate::metrics::graph::{cyclomatic, policy_graph};
use crate::metrics::report;
use crate::planner::{backchain, extract_plan, Ordering};
use crate::simworld::{
    detect_chattering, parse_scenario, run_episode, serialize_scenario, traces_equivalent,
    Scenario, DEFAULT_CHATTER_K,
};
use crate::types::validate_action_library;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 4;
pub const EXIT_UNEXPLAINED: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "taskswitch",
    version,
    about = "Synthesize, run and measure robot task policies"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BuildKind {
    Bt,
    FsmSeq,
    FsmFt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OrderingArg {
    Safe,
    Naive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ExperimentId {
    Baseline,
    Recharge,
    Docking,
    Scalability,
    Chattering,
    PostSuccess,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a policy from a goal and an action library.
    Build {
        goal: PathBuf,
        library: PathBuf,
        #[arg(long, value_enum, default_value = "bt")]
        kind: BuildKind,
        #[arg(long, value_enum, default_value = "safe")]
        ordering: OrderingArg,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Convert a behavior tree document into a hierarchical state machine.
    ToHfsm {
        policy: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a policy in the simulator.
    Run {
        policy: PathBuf,
        scenario: PathBuf,
        #[arg(long)]
        max_ticks: Option<u64>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compute structural measures.
    #[command(group(ArgGroup::new("measure").required(true).args(["ged", "cc", "counts", "effort", "estimate"])))]
    Metrics {
        /// Graph edit distance between two policy documents.
        #[arg(long, num_args = 2, value_names = ["A", "B"])]
        ged: Option<Vec<PathBuf>>,
        /// Use the anchored mode (shared element ids) for --ged.
        #[arg(long, requires = "ged")]
        anchored: bool,
        /// Charge vertex and edge relabeling for --ged.
        #[arg(long, requires = "ged")]
        label_sensitive: bool,
        /// Cyclomatic complexity of a policy document.
        #[arg(long, value_name = "POLICY")]
        cc: Option<PathBuf>,
        /// Element counts of a policy document.
        #[arg(long, value_name = "POLICY")]
        counts: Option<PathBuf>,
        /// Conversion effort for sequential and fully connected state counts.
        #[arg(long, num_args = 2, value_names = ["MS", "MFC"])]
        effort: Option<Vec<u64>>,
        /// Closed-form element estimates: kind (bt|fsm|hfsm), M, M_fc.
        #[arg(long, num_args = 3, value_names = ["KIND", "M", "MFC"])]
        estimate: Option<Vec<String>>,
    },
    /// Regenerate a comparison table from the fixture documents.
    Report {
        #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
        table: u8,
        /// Write the JSON report here.
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures"))]
        fixtures: PathBuf,
    },
    /// Run the reference policies of one experiment on its scenario.
    Experiment {
        #[arg(value_enum)]
        id: ExperimentId,
    },
    /// Write the reference policy documents, libraries, goals and scenarios.
    Fixtures {
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        scenarios: Option<PathBuf>,
    },
}

/// Parses `args` and executes the command, returning the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_ERROR
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    }
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_policy(path: &Path) -> Result<PolicyDocument, String> {
    parse_policy_document(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<i32, String> {
    let io = |e: std::io::Error| e.to_string();
    match cmd {
        Command::Build {
            goal,
            library,
            kind,
            ordering,
            output,
        } => {
            let goal = parse_goal(&read(&goal)?).map_err(|e| format!("{}: {e}", goal.display()))?;
            let specs = parse_action_library(&read(&library)?)
                .map_err(|e| format!("{}: {e}", library.display()))?;
            let lib = validate_action_library(specs).map_err(|e| e.to_string())?;
            let doc = match kind {
                BuildKind::Bt => {
                    let ord = if ordering == OrderingArg::Safe {
                        Ordering::Safe
                    } else {
                        Ordering::Naive
                    };
                    PolicyDocument::Bt(backchain(&goal, &lib, ord).map_err(|e| e.to_string())?)
                }
                BuildKind::FsmSeq | BuildKind::FsmFt => {
                    let plan = extract_plan(&goal, &lib).map_err(|e| e.to_string())?;
                    let sm = if kind == BuildKind::FsmSeq {
                        StateMachine::build_sequential(&plan)
                    } else {
                        StateMachine::build_fault_tolerant(&plan)
                    };
                    PolicyDocument::Fsm(sm.map_err(|e| e.to_string())?)
                }
            };
            write_file(&output, &serialize_policy_document(&doc))?;
            let g = policy_graph(&doc);
            writeln!(
                out,
                "wrote {} {} ({} vertices, {} edges)",
                doc.kind(),
                output.display(),
                g.vertex_count(),
                g.edge_count()
            )
            .map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::ToHfsm { policy, output } => {
            let PolicyDocument::Bt(tree) = load_policy(&policy)? else {
                return Err(format!(
                    "{}: expected a behavior tree document",
                    policy.display()
                ));
            };
            let doc = PolicyDocument::Hfsm(from_bt(&tree).map_err(|e| e.to_string())?);
            write_file(&output, &serialize_policy_document(&doc))?;
            let g = policy_graph(&doc);
            writeln!(
                out,
                "wrote hfsm {} ({} vertices, {} edges)",
                output.display(),
                g.vertex_count(),
                g.edge_count()
            )
            .map_err(io)?;
            Ok(EXIT_OK)
        }
        Command::Run {
            policy,
            scenario,
            max_ticks,
            trace,
        } => {
            let doc = load_policy(&policy)?;
            let mut sc = parse_scenario(&read(&scenario)?)
                .map_err(|e| format!("{}: {e}", scenario.display()))?;
            if let Some(m) = max_ticks {
                sc.max_ticks = m;
            }
            let ep = run_episode(&doc, &sc).map_err(|e| e.to_string())?;
            if let Some(path) = trace {
                write_file(&path, &ep.trace.to_jsonl())?;
            }
            writeln!(out, "{}", ep.summary()).map_err(io)?;
            Ok(ep.outcome.exit_code())
        }
        Command::Metrics {
            ged,
            anchored,
            label_sensitive,
            cc,
            counts,
            effort: eff,
            estimate,
        } => {
            if let Some(paths) = ged {
                let (a, b) = (load_policy(&paths[0])?, load_policy(&paths[1])?);
                let (ga, gb) = (policy_graph(&a), policy_graph(&b));
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
                .map_err(|e| e.to_string())?;
                print_ged(out, &r, anchored).map_err(io)?;
                return Ok(if anchored || r.exact {
                    EXIT_OK
                } else {
                    EXIT_INCOMPLETE
                });
            }
            if let Some(p) = cc {
                writeln!(out, "{}", cyclomatic(&policy_graph(&load_policy(&p)?))).map_err(io)?;
            }
            if let Some(p) = counts {
                let doc = load_policy(&p)?;
                let g = policy_graph(&doc);
                let c = match &doc {
                    PolicyDocument::Bt(t) => Some(t.count_elements()),
                    PolicyDocument::Fsm(m) => Some(m.count_elements()),
                    PolicyDocument::Hfsm(_) => None,
                };
                writeln!(
                    out,
                    "vertices {}\nedges {}",
                    g.vertex_count(),
                    g.edge_count()
                )
                .map_err(io)?;
                if let Some(c) = c {
                    writeln!(out, "graphical {}\nactive {}", c.graphical, c.active).map_err(io)?;
                }
            }
            if let Some(v) = eff {
                writeln!(out, "{}", effort(v[0], v[1])).map_err(io)?;
            }
            if let Some(v) = estimate {
                let kind: PolicyKind = v[0].parse()?;
                let num = |s: &str| s.parse::<u64>().map_err(|e| format!("`{s}`: {e}"));
                let e = formula_estimates(num(&v[1])?, num(&v[2])?, kind);
                writeln!(out, "graphical ~{}\nactive ~{}", e.graphical, e.active).map_err(io)?;
                if let Some(fc) = e.fully_connected {
                    writeln!(out, "fully_connected ~{fc}").map_err(io)?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Report {
            table,
            output,
            fixtures: dir,
        } => {
            let r = report::generate(table, &dir, &GedCostModel::default(), default_budget())
                .map_err(|e| e.to_string())?;
            write!(out, "{}", r.to_text()).map_err(io)?;
            if let Some(path) = output {
                write_file(&path, &r.to_json())?;
            }
            Ok(if r.explained() {
                EXIT_OK
            } else {
                EXIT_UNEXPLAINED
            })
        }
        Command::Experiment { id } => experiment(id, out),
        Command::Fixtures { output, scenarios } => {
            let mut n = 0;
            for (stem, doc) in fixtures::corpus() {
                write_file(
                    &output.join(format!("{stem}.json")),
                    &serialize_policy_document(&doc),
                )?;
                n += 1;
            }
            for (stem, text) in fixtures::auxiliary_documents() {
                write_file(&output.join(format!("{stem}.json")), &text)?;
                n += 1;
            }
            if let Some(dir) = scenarios {
                for (stem, sc) in fixtures::scenarios() {
                    write_file(&dir.join(format!("{stem}.json")), &serialize_scenario(&sc))?;
                    n += 1;
                }
            }
            writeln!(out, "wrote {n} documents").map_err(io)?;
            Ok(EXIT_OK)
        }
    }
}

fn print_ged(out: &mut dyn Write, r: &GedResult, anchored: bool) -> std::io::Result<()> {
    let mode = if anchored {
        "anchored"
    } else if r.exact {
        "exact"
    } else {
        "INCOMPLETE"
    };
    writeln!(out, "ged {} ({mode})", r.distance)?;
    if !anchored && !r.exact {
        writeln!(out, "lower_bound {}", r.lower_bound)?;
    }
    writeln!(out, "n_star {}", r.script.n_star)?;
    for op in &r.script.ops {
        writeln!(out, "{}", serde_json::to_string(op).expect("op serializes"))?;
    }
    Ok(())
}

/// Reference policies of an experiment and the scenario they run on.
fn experiment_setup(id: ExperimentId) -> (Scenario, Vec<(&'static str, PolicyDocument)>) {
    use fixtures as f;
    let triple = |t: crate::bt::PolicyTree, m: StateMachine| {
        let h = from_bt(&t).expect("reference trees convert");
        vec![
            ("bt", PolicyDocument::Bt(t)),
            ("fsm", PolicyDocument::Fsm(m)),
            ("hfsm", PolicyDocument::Hfsm(h)),
        ]
    };
    match id {
        ExperimentId::Baseline => (
            f::scenario_baseline(),
            triple(f::bt_fetch(), f::fsm_fetch_fault_tolerant()),
        ),
        ExperimentId::Recharge => (
            f::scenario_recharge(),
            triple(f::bt_fetch_recharge(), f::fsm_fetch_recharge()),
        ),
        ExperimentId::Docking => (
            f::scenario_docking(),
            triple(f::bt_fetch_recharge_dock(), f::fsm_fetch_recharge_dock()),
        ),
        ExperimentId::Scalability => (
            f::scenario_scalability(),
            triple(f::bt_scalability_recharge(), f::fsm_scalability_recharge()),
        ),
        ExperimentId::Chattering => (
            f::scenario_chattering(),
            vec![
                ("bt_safe", PolicyDocument::Bt(f::bt_fetch())),
                ("bt_naive", PolicyDocument::Bt(f::bt_fetch_chattering())),
            ],
        ),
        ExperimentId::PostSuccess => (
            f::scenario_post_success(),
            vec![
                ("bt", PolicyDocument::Bt(f::bt_fetch())),
                ("fsm", PolicyDocument::Fsm(f::fsm_fetch_fault_tolerant())),
            ],
        ),
    }
}

fn experiment(id: ExperimentId, out: &mut dyn Write) -> Result<i32, String> {
    let (sc, policies) = experiment_setup(id);
    let mut traces = Vec::new();
    for (name, doc) in &policies {
        let ep = run_episode(doc, &sc).map_err(|e| e.to_string())?;
        let chatter = detect_chattering(&ep.trace, DEFAULT_CHATTER_K);
        writeln!(out, "{name:<9} {} chattering={chatter}", ep.summary())
            .map_err(|e| e.to_string())?;
        traces.push((name, ep.trace));
    }
    for i in 0..traces.len() {
        for j in i + 1..traces.len() {
            let eq = traces_equivalent(&traces[i].1, &traces[j].1);
            writeln!(out, "equivalent {} {}: {eq}", traces[i].0, traces[j].0)
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(EXIT_OK)
}
