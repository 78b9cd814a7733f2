//! Graph edit distance: exact best-first search, anchored mode, brute-force
//! oracle, edit scripts and a small-graph isomorphism test.

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::graph::{GraphKind, PolicyGraph};

/// Edge labels of one placed vertex pair: (source graph, target graph).
type EdgeBags<'a> = (Vec<&'a str>, Vec<&'a str>);

/// Environment variable overriding the exact-search time budget (seconds).
pub const BUDGET_ENV: &str = "TASKSWITCH_GED_BUDGET_SECS";
pub const DEFAULT_BUDGET_SECS: u64 = 60;
pub const BRUTE_FORCE_LIMIT: usize = 7;
const EPS: f64 = 1e-9;
const BIG: f64 = 1e9;
const MAX_OPEN: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GedCostModel {
    pub node_insert: f64,
    pub node_delete: f64,
    pub node_substitute: f64,
    pub edge_insert: f64,
    pub edge_delete: f64,
    pub edge_substitute: f64,
}

impl Default for GedCostModel {
    fn default() -> Self {
        GedCostModel {
            node_insert: 1.0,
            node_delete: 1.0,
            node_substitute: 0.0,
            edge_insert: 1.0,
            edge_delete: 1.0,
            edge_substitute: 0.0,
        }
    }
}

impl GedCostModel {
    /// Unit cost for relabeling vertices and edges as well.
    pub fn label_sensitive() -> Self {
        GedCostModel {
            node_substitute: 1.0,
            edge_substitute: 1.0,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), GedError> {
        let all = [
            self.node_insert,
            self.node_delete,
            self.node_substitute,
            self.edge_insert,
            self.edge_delete,
            self.edge_substitute,
        ];
        if all.iter().all(|c| c.is_finite() && *c >= 0.0) {
            Ok(())
        } else {
            Err(GedError::InvalidCost)
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GedError {
    #[error("costs must be finite and non-negative")]
    InvalidCost,
    #[error("graph with {0} vertices exceeds the brute-force limit of {BRUTE_FORCE_LIMIT}")]
    TooLarge(usize),
    #[error("anchor maps both `{0}` and `{1}` to `{2}`")]
    AnchorNotInjective(String, String, String),
    #[error("anchor references unknown vertex `{0}`")]
    UnknownAnchor(String),
    #[error("cannot apply edit script: {0}")]
    Apply(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    DeleteEdge {
        from: String,
        to: String,
        label: String,
    },
    DeleteVertex {
        key: String,
    },
    InsertVertex {
        key: String,
        label: String,
    },
    RelabelVertex {
        key: String,
        label: String,
    },
    RelabelEdge {
        from: String,
        to: String,
        old: String,
        new: String,
    },
    InsertEdge {
        from: String,
        to: String,
        label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditScript {
    pub ops: Vec<EditOp>,
    /// Number of vertex insertions and deletions.
    pub n_star: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GedResult {
    /// Exact distance when `exact`, otherwise the best upper bound found.
    pub distance: f64,
    pub lower_bound: f64,
    pub exact: bool,
    /// Target vertex of each source vertex; `None` means deleted.
    pub mapping: Vec<Option<usize>>,
    pub script: EditScript,
    pub expanded: usize,
}

/// Time budget from the environment, defaulting to 60 s.
pub fn default_budget() -> Duration {
    let secs = std::env::var(BUDGET_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_BUDGET_SECS);
    Duration::from_secs(secs)
}

/// Both graphs with vertex and edge labels interned into one table.
struct Pair {
    n1: usize,
    n2: usize,
    lab1: Vec<u32>,
    lab2: Vec<u32>,
    /// Sorted edge label ids per ordered vertex pair, row-major.
    adj1: Vec<Vec<u32>>,
    adj2: Vec<Vec<u32>>,
}

impl Pair {
    fn new(g1: &PolicyGraph, g2: &PolicyGraph) -> Self {
        let mut table: BTreeMap<String, u32> = BTreeMap::new();
        let mut intern = |s: &str| {
            let next = table.len() as u32;
            *table.entry(s.to_string()).or_insert(next)
        };
        let lab1 = g1.vertices().iter().map(|v| intern(&v.label)).collect();
        let lab2 = g2.vertices().iter().map(|v| intern(&v.label)).collect();
        let mut adj = |g: &PolicyGraph| {
            let n = g.vertex_count();
            let mut a = vec![Vec::new(); n * n];
            for e in g.edges() {
                a[e.from * n + e.to].push(intern(&e.label));
            }
            for l in &mut a {
                l.sort_unstable();
            }
            a
        };
        let adj1 = adj(g1);
        let adj2 = adj(g2);
        Pair {
            n1: g1.vertex_count(),
            n2: g2.vertex_count(),
            lab1,
            lab2,
            adj1,
            adj2,
        }
    }

    fn a1(&self, u: usize, x: usize) -> &[u32] {
        &self.adj1[u * self.n1 + x]
    }

    fn a2(&self, v: usize, y: usize) -> &[u32] {
        &self.adj2[v * self.n2 + y]
    }
}

fn common(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut c) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            CmpOrdering::Less => i += 1,
            CmpOrdering::Greater => j += 1,
            CmpOrdering::Equal => {
                c += 1;
                i += 1;
                j += 1;
            }
        }
    }
    c
}

/// Cheapest way to turn the edge multiset `a` into `b` on one vertex pair.
fn edge_cost(a: &[u32], b: &[u32], cm: &GedCostModel) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let c = common(a, b);
    let (ra, rb) = (a.len() - c, b.len() - c);
    let s = ra.min(rb);
    s as f64 * cm.edge_substitute.min(cm.edge_delete + cm.edge_insert)
        + (ra - s) as f64 * cm.edge_delete
        + (rb - s) as f64 * cm.edge_insert
}

fn vertex_cost(p: &Pair, u: usize, v: usize, cm: &GedCostModel) -> f64 {
    if p.lab1[u] == p.lab2[v] {
        0.0
    } else {
        cm.node_substitute
    }
}

/// Cost of the complete edit path induced by `map`.
fn mapping_cost(p: &Pair, map: &[Option<usize>], cm: &GedCostModel) -> f64 {
    let mut image = vec![false; p.n2];
    let mut cost = 0.0;
    for (u, m) in map.iter().enumerate() {
        match m {
            Some(v) => {
                image[*v] = true;
                cost += vertex_cost(p, u, *v, cm);
            }
            None => cost += cm.node_delete,
        }
    }
    cost += image.iter().filter(|x| !**x).count() as f64 * cm.node_insert;
    for u in 0..p.n1 {
        for x in 0..p.n1 {
            let a = p.a1(u, x);
            match (map[u], map[x]) {
                (Some(v), Some(y)) => cost += edge_cost(a, p.a2(v, y), cm),
                _ => cost += a.len() as f64 * cm.edge_delete,
            }
        }
    }
    for v in 0..p.n2 {
        for y in 0..p.n2 {
            if !image[v] || !image[y] {
                cost += p.a2(v, y).len() as f64 * cm.edge_insert;
            }
        }
    }
    cost
}

/// Minimum-cost perfect assignment on an n x n row-major matrix.
fn hungarian(c: &[f64], n: usize) -> Vec<usize> {
    if n == 0 {
        return vec![];
    }
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = c[(i0 - 1) * n + j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; n];
    for j in 1..=n {
        if p[j] != 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

struct Search<'a> {
    p: &'a Pair,
    cm: GedCostModel,
    order: Vec<usize>,
    /// Edge count between each ordered pair, ignoring labels.
    cnt1: Vec<usize>,
    cnt2: Vec<usize>,
}

#[derive(Debug)]
struct Node {
    f: f64,
    g: f64,
    assign: Vec<Option<usize>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Smallest f first, deeper nodes first among ties.
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.assign.len().cmp(&other.assign.len()))
    }
}

impl<'a> Search<'a> {
    fn new(p: &'a Pair, cm: GedCostModel) -> Self {
        let cnt1 = p.adj1.iter().map(Vec::len).collect::<Vec<_>>();
        let cnt2 = p.adj2.iter().map(Vec::len).collect::<Vec<_>>();
        let n1 = p.n1;
        let degree = |u: usize| {
            (0..n1)
                .map(|x| cnt1[u * n1 + x] + cnt1[x * n1 + u])
                .sum::<usize>()
        };
        // Highest degree first, then the vertex most connected to those
        // already placed.
        let mut order = Vec::with_capacity(n1);
        let mut placed = vec![false; n1];
        while order.len() < n1 {
            let best = (0..n1)
                .filter(|u| !placed[*u])
                .max_by_key(|&u| {
                    let link: usize = order
                        .iter()
                        .map(|&w| cnt1[u * n1 + w] + cnt1[w * n1 + u])
                        .sum();
                    (link, degree(u), std::cmp::Reverse(u))
                })
                .expect("unplaced vertex");
            placed[best] = true;
            order.push(best);
        }
        Search {
            p,
            cm,
            order,
            cnt1,
            cnt2,
        }
    }

    /// Exact cost of mapping `order[k]` given the first k assignments.
    fn step_cost(&self, assign: &[Option<usize>], target: Option<usize>) -> f64 {
        let p = self.p;
        let u = self.order[assign.len()];
        let cm = &self.cm;
        let mut c = match target {
            Some(v) => vertex_cost(p, u, v, cm) + edge_cost(p.a1(u, u), p.a2(v, v), cm),
            None => cm.node_delete + p.a1(u, u).len() as f64 * cm.edge_delete,
        };
        for (j, m) in assign.iter().enumerate() {
            let w = self.order[j];
            match (target, m) {
                (Some(v), Some(y)) => {
                    c += edge_cost(p.a1(u, w), p.a2(v, *y), cm)
                        + edge_cost(p.a1(w, u), p.a2(*y, v), cm);
                }
                _ => c += (p.a1(u, w).len() + p.a1(w, u).len()) as f64 * cm.edge_delete,
            }
        }
        c
    }

    /// Assignment-based lower bound on the remaining cost, plus the
    /// completion it suggests.
    fn bound(&self, assign: &[Option<usize>]) -> (f64, Vec<Option<usize>>) {
        let p = self.p;
        let cm = &self.cm;
        let k = assign.len();
        let r1: Vec<usize> = self.order[k..].to_vec();
        let mut used = vec![false; p.n2];
        for v in assign.iter().flatten() {
            used[*v] = true;
        }
        let r2: Vec<usize> = (0..p.n2).filter(|v| !used[*v]).collect();
        let (a, b) = (r1.len(), r2.len());
        let n = a + b;
        if n == 0 {
            return (0.0, vec![]);
        }
        let (n1, n2) = (p.n1, p.n2);
        let rem1 = |u: usize| {
            let out: usize = r1
                .iter()
                .filter(|&&x| x != u)
                .map(|&x| self.cnt1[u * n1 + x])
                .sum();
            let inn: usize = r1
                .iter()
                .filter(|&&x| x != u)
                .map(|&x| self.cnt1[x * n1 + u])
                .sum();
            (out, inn)
        };
        let rem2 = |v: usize| {
            let out: usize = r2
                .iter()
                .filter(|&&y| y != v)
                .map(|&y| self.cnt2[v * n2 + y])
                .sum();
            let inn: usize = r2
                .iter()
                .filter(|&&y| y != v)
                .map(|&y| self.cnt2[y * n2 + v])
                .sum();
            (out, inn)
        };
        let gap = |x: usize, y: usize| {
            if x > y {
                (x - y) as f64 * cm.edge_delete
            } else {
                (y - x) as f64 * cm.edge_insert
            }
        };
        let d1: Vec<(usize, usize)> = r1.iter().map(|&u| rem1(u)).collect();
        let d2: Vec<(usize, usize)> = r2.iter().map(|&v| rem2(v)).collect();
        let assigned: Vec<(usize, Option<usize>)> = assign
            .iter()
            .enumerate()
            .map(|(j, m)| (self.order[j], *m))
            .collect();
        let mut c = vec![BIG; n * n];
        for (i, &u) in r1.iter().enumerate() {
            for (j, &v) in r2.iter().enumerate() {
                let mut s = vertex_cost(p, u, v, cm) + edge_cost(p.a1(u, u), p.a2(v, v), cm);
                for &(w, m) in &assigned {
                    match m {
                        Some(y) => {
                            s += edge_cost(p.a1(u, w), p.a2(v, y), cm)
                                + edge_cost(p.a1(w, u), p.a2(y, v), cm)
                        }
                        None => s += (p.a1(u, w).len() + p.a1(w, u).len()) as f64 * cm.edge_delete,
                    }
                }
                s += 0.5 * (gap(d1[i].0, d2[j].0) + gap(d1[i].1, d2[j].1));
                c[i * n + j] = s;
            }
            let mut del = cm.node_delete + p.a1(u, u).len() as f64 * cm.edge_delete;
            for &(w, _) in &assigned {
                del += (p.a1(u, w).len() + p.a1(w, u).len()) as f64 * cm.edge_delete;
            }
            del += 0.5 * (d1[i].0 + d1[i].1) as f64 * cm.edge_delete;
            c[i * n + b + i] = del;
        }
        for (j, &v) in r2.iter().enumerate() {
            let mut ins = cm.node_insert + p.a2(v, v).len() as f64 * cm.edge_insert;
            for &(_, m) in &assigned {
                if let Some(y) = m {
                    ins += (p.a2(v, y).len() + p.a2(y, v).len()) as f64 * cm.edge_insert;
                }
            }
            ins += 0.5 * (d2[j].0 + d2[j].1) as f64 * cm.edge_insert;
            c[(a + j) * n + j] = ins;
            for i in 0..a {
                c[(a + j) * n + b + i] = 0.0;
            }
        }
        let sol = hungarian(&c, n);
        let h: f64 = (0..n).map(|i| c[i * n + sol[i]]).sum();
        let completion = (0..a)
            .map(|i| if sol[i] < b { Some(r2[sol[i]]) } else { None })
            .collect();
        (h, completion)
    }

    /// Full mapping indexed by source vertex.
    fn full(&self, assign: &[Option<usize>], completion: &[Option<usize>]) -> Vec<Option<usize>> {
        let mut map = vec![None; self.p.n1];
        for (j, m) in assign.iter().chain(completion).enumerate() {
            map[self.order[j]] = *m;
        }
        map
    }
}

fn exact_search(
    g1: &PolicyGraph,
    g2: &PolicyGraph,
    cm: GedCostModel,
    budget: Duration,
) -> Result<GedResult, GedError> {
    cm.check()?;
    let start = Instant::now();
    let pair = Pair::new(g1, g2);
    let s = Search::new(&pair, cm);
    let (h0, comp0) = s.bound(&[]);
    let mut best_map = s.full(&[], &comp0);
    let mut ub = mapping_cost(&pair, &best_map, &cm);
    let mut open = BinaryHeap::new();
    open.push(Node {
        f: h0,
        g: 0.0,
        assign: vec![],
    });
    let mut expanded = 0usize;
    let mut lower = h0;
    let mut exact = true;
    while let Some(node) = open.pop() {
        lower = lower.max(node.f.min(ub));
        if node.f >= ub - EPS {
            lower = ub;
            break;
        }
        if expanded.is_multiple_of(64) && (start.elapsed() > budget || open.len() > MAX_OPEN) {
            lower = node.f;
            exact = false;
            break;
        }
        expanded += 1;
        let k = node.assign.len();
        if k == pair.n1 {
            continue;
        }
        let used: BTreeSet<usize> = node.assign.iter().flatten().copied().collect();
        let targets = (0..pair.n2)
            .filter(|v| !used.contains(v))
            .map(Some)
            .chain(std::iter::once(None));
        for t in targets {
            let g = node.g + s.step_cost(&node.assign, t);
            if g >= ub - EPS {
                continue;
            }
            let mut assign = node.assign.clone();
            assign.push(t);
            let (h, comp) = s.bound(&assign);
            let map = s.full(&assign, &comp);
            let cost = mapping_cost(&pair, &map, &cm);
            if cost < ub - EPS {
                ub = cost;
                best_map = map;
            }
            if g + h < ub - EPS {
                open.push(Node {
                    f: g + h,
                    g,
                    assign,
                });
            }
        }
    }
    if exact {
        lower = ub;
    }
    let script = edit_script(g1, g2, &best_map, &cm);
    Ok(GedResult {
        distance: ub,
        lower_bound: lower.min(ub),
        exact,
        mapping: best_map,
        script,
        expanded,
    })
}

/// Exact graph edit distance by best-first search over partial vertex
/// mappings; reports an upper bound with `exact == false` when the budget
/// runs out.
pub fn ged_exact(
    g1: &PolicyGraph,
    g2: &PolicyGraph,
    cost: &GedCostModel,
    budget: Duration,
) -> Result<GedResult, GedError> {
    exact_search(g1, g2, *cost, budget)
}

/// Exhaustive enumeration of injective partial mappings (oracle).
pub fn brute_force_ged(
    g1: &PolicyGraph,
    g2: &PolicyGraph,
    cost: &GedCostModel,
) -> Result<f64, GedError> {
    cost.check()?;
    for g in [g1, g2] {
        if g.vertex_count() > BRUTE_FORCE_LIMIT {
            return Err(GedError::TooLarge(g.vertex_count()));
        }
    }
    fn go(
        u: usize,
        g1: &PolicyGraph,
        g2: &PolicyGraph,
        map: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        cost: &GedCostModel,
        best: &mut f64,
    ) {
        if u == g1.vertex_count() {
            *best = best.min(path_cost(g1, g2, map, cost));
            return;
        }
        for v in 0..g2.vertex_count() {
            if !used[v] {
                used[v] = true;
                map.push(Some(v));
                go(u + 1, g1, g2, map, used, cost, best);
                map.pop();
                used[v] = false;
            }
        }
        map.push(None);
        go(u + 1, g1, g2, map, used, cost, best);
        map.pop();
    }
    let mut best = f64::INFINITY;
    go(
        0,
        g1,
        g2,
        &mut Vec::new(),
        &mut vec![false; g2.vertex_count()],
        cost,
        &mut best,
    );
    Ok(best)
}

/// Edit-path cost computed directly from edge lists, independent of the
/// search's pair tables.
fn path_cost(
    g1: &PolicyGraph,
    g2: &PolicyGraph,
    map: &[Option<usize>],
    cost: &GedCostModel,
) -> f64 {
    let n2 = g2.vertex_count();
    let mut total = 0.0;
    let mut hit = vec![false; n2];
    for (u, m) in map.iter().enumerate() {
        match m {
            Some(v) => {
                hit[*v] = true;
                if g1.vertices()[u].label != g2.vertices()[*v].label {
                    total += cost.node_substitute;
                }
            }
            None => total += cost.node_delete,
        }
    }
    total += hit.iter().filter(|h| !**h).count() as f64 * cost.node_insert;
    // Deleted source vertices get private ids past the target range.
    let place = |u: usize| map[u].unwrap_or(n2 + u);
    let mut bags: BTreeMap<(usize, usize), EdgeBags> = BTreeMap::new();
    for e in g1.edges() {
        bags.entry((place(e.from), place(e.to)))
            .or_default()
            .0
            .push(&e.label);
    }
    for e in g2.edges() {
        bags.entry((e.from, e.to)).or_default().1.push(&e.label);
    }
    for (mut a, b) in bags.into_values() {
        let mut matched = 0;
        for l in &b {
            if let Some(i) = a.iter().position(|x| x == l) {
                a.swap_remove(i);
                matched += 1;
            }
        }
        let ra = a.len();
        let rb = b.len() - matched;
        let swaps = ra.min(rb);
        total += swaps as f64
            * cost
                .edge_substitute
                .min(cost.edge_delete + cost.edge_insert);
        total += (ra - swaps) as f64 * cost.edge_delete + (rb - swaps) as f64 * cost.edge_insert;
    }
    total
}

/// Correspondence used by the anchored mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Anchor {
    /// Vertices with equal keys correspond.
    SameKeys,
    /// Explicit source-key to target-key pairs.
    Explicit(BTreeMap<String, String>),
}

/// Cost of the edit script induced by a fixed vertex correspondence.
pub fn ged_anchored(
    g1: &PolicyGraph,
    g2: &PolicyGraph,
    anchor: &Anchor,
    cost: &GedCostModel,
) -> Result<GedResult, GedError> {
    cost.check()?;
    let mut map = vec![None; g1.vertex_count()];
    match anchor {
        Anchor::SameKeys => {
            for (u, v) in g1.vertices().iter().enumerate() {
                map[u] = g2.index_of(&v.key);
            }
        }
        Anchor::Explicit(pairs) => {
            let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
            for (from, to) in pairs {
                let u = g1
                    .index_of(from)
                    .ok_or_else(|| GedError::UnknownAnchor(from.clone()))?;
                let v = g2
                    .index_of(to)
                    .ok_or_else(|| GedError::UnknownAnchor(to.clone()))?;
                if let Some(prev) = seen.insert(to, from) {
                    return Err(GedError::AnchorNotInjective(
                        prev.to_string(),
                        from.clone(),
                        to.clone(),
                    ));
                }
                map[u] = Some(v);
            }
        }
    }
    let pair = Pair::new(g1, g2);
    let distance = mapping_cost(&pair, &map, cost);
    let script = edit_script(g1, g2, &map, cost);
    Ok(GedResult {
        distance,
        lower_bound: 0.0,
        exact: false,
        mapping: map,
        script,
        expanded: 0,
    })
}

fn fresh_key(g1: &PolicyGraph, key: &str) -> String {
    let mut k = format!("+{key}");
    while g1.index_of(&k).is_some() {
        k.insert(0, '+');
    }
    k
}

/// Edit operations realizing `map`, with their total cost.
pub fn edit_script(
    g1: &PolicyGraph,
    g2: &PolicyGraph,
    map: &[Option<usize>],
    cm: &GedCostModel,
) -> EditScript {
    let n2 = g2.vertex_count();
    let mut name2: Vec<String> = g2
        .vertices()
        .iter()
        .map(|v| fresh_key(g1, &v.key))
        .collect();
    let mut image = vec![false; n2];
    for (u, m) in map.iter().enumerate() {
        if let Some(v) = m {
            image[*v] = true;
            name2[*v] = g1.vertices()[u].key.clone();
        }
    }
    let place = |u: usize| map[u].unwrap_or(n2 + u);
    let mut bags: BTreeMap<(usize, usize), EdgeBags> = BTreeMap::new();
    for e in g1.edges() {
        bags.entry((place(e.from), place(e.to)))
            .or_default()
            .0
            .push(&e.label);
    }
    for e in g2.edges() {
        bags.entry((e.from, e.to)).or_default().1.push(&e.label);
    }
    let key_of = |i: usize| -> String {
        if i < n2 {
            name2[i].clone()
        } else {
            g1.vertices()[i - n2].key.clone()
        }
    };
    let mut deletes = Vec::new();
    let mut relabels = Vec::new();
    let mut inserts = Vec::new();
    let mut cost = 0.0;
    for ((a, b), (mut have, want)) in bags {
        let mut missing = Vec::new();
        for l in want {
            match have.iter().position(|x| *x == l) {
                Some(i) => {
                    have.swap_remove(i);
                }
                None => missing.push(l),
            }
        }
        let (from, to) = (key_of(a), key_of(b));
        let swap = cm.edge_substitute <= cm.edge_delete + cm.edge_insert;
        let mut have = have.into_iter();
        let mut missing = missing.into_iter();
        loop {
            match (have.next(), missing.next()) {
                (Some(old), Some(new)) if swap => {
                    cost += cm.edge_substitute;
                    relabels.push(EditOp::RelabelEdge {
                        from: from.clone(),
                        to: to.clone(),
                        old: old.into(),
                        new: new.into(),
                    });
                }
                (old, new) => {
                    if old.is_none() && new.is_none() {
                        break;
                    }
                    if let Some(old) = old {
                        cost += cm.edge_delete;
                        deletes.push(EditOp::DeleteEdge {
                            from: from.clone(),
                            to: to.clone(),
                            label: old.into(),
                        });
                    }
                    if let Some(new) = new {
                        cost += cm.edge_insert;
                        inserts.push(EditOp::InsertEdge {
                            from: from.clone(),
                            to: to.clone(),
                            label: new.into(),
                        });
                    }
                }
            }
        }
    }
    let mut ops = deletes;
    let mut n_star = 0;
    for (u, m) in map.iter().enumerate() {
        let v1 = &g1.vertices()[u];
        match m {
            None => {
                n_star += 1;
                cost += cm.node_delete;
                ops.push(EditOp::DeleteVertex {
                    key: v1.key.clone(),
                });
            }
            Some(v) if g2.vertices()[*v].label != v1.label => {
                cost += cm.node_substitute;
                ops.push(EditOp::RelabelVertex {
                    key: v1.key.clone(),
                    label: g2.vertices()[*v].label.clone(),
                });
            }
            Some(_) => {}
        }
    }
    for v in (0..n2).filter(|v| !image[*v]) {
        n_star += 1;
        cost += cm.node_insert;
        ops.push(EditOp::InsertVertex {
            key: name2[v].clone(),
            label: g2.vertices()[v].label.clone(),
        });
    }
    ops.extend(relabels);
    ops.extend(inserts);
    EditScript { ops, n_star, cost }
}

impl EditScript {
    /// Applies the operations to `g`, in order.
    pub fn apply(&self, g: &PolicyGraph) -> Result<PolicyGraph, GedError> {
        let err = |m: String| Err(GedError::Apply(m));
        let mut verts: Vec<(String, String)> = g
            .vertices()
            .iter()
            .map(|v| (v.key.clone(), v.label.clone()))
            .collect();
        let mut edges: Vec<(String, String, String)> = g
            .edges()
            .iter()
            .map(|e| {
                (
                    g.vertices()[e.from].key.clone(),
                    g.vertices()[e.to].key.clone(),
                    e.label.clone(),
                )
            })
            .collect();
        let sinks: BTreeSet<String> = g
            .sinks()
            .iter()
            .map(|s| g.vertices()[*s].key.clone())
            .collect();
        for op in &self.ops {
            match op {
                EditOp::DeleteEdge { from, to, label } => {
                    match edges
                        .iter()
                        .position(|e| (&e.0, &e.1, &e.2) == (from, to, label))
                    {
                        Some(i) => {
                            edges.remove(i);
                        }
                        None => return err(format!("no edge {from}->{to} [{label}]")),
                    }
                }
                EditOp::RelabelEdge { from, to, old, new } => {
                    match edges
                        .iter_mut()
                        .find(|e| (&e.0, &e.1, &e.2) == (from, to, old))
                    {
                        Some(e) => e.2 = new.clone(),
                        None => return err(format!("no edge {from}->{to} [{old}]")),
                    }
                }
                EditOp::InsertEdge { from, to, label } => {
                    if !verts.iter().any(|v| &v.0 == from) || !verts.iter().any(|v| &v.0 == to) {
                        return err(format!("edge {from}->{to} has a missing endpoint"));
                    }
                    edges.push((from.clone(), to.clone(), label.clone()));
                }
                EditOp::DeleteVertex { key } => {
                    if edges.iter().any(|e| &e.0 == key || &e.1 == key) {
                        return err(format!("vertex {key} still has edges"));
                    }
                    match verts.iter().position(|v| &v.0 == key) {
                        Some(i) => {
                            verts.remove(i);
                        }
                        None => return err(format!("no vertex {key}")),
                    }
                }
                EditOp::InsertVertex { key, label } => {
                    if verts.iter().any(|v| &v.0 == key) {
                        return err(format!("vertex {key} exists"));
                    }
                    verts.push((key.clone(), label.clone()));
                }
                EditOp::RelabelVertex { key, label } => {
                    match verts.iter_mut().find(|v| &v.0 == key) {
                        Some(v) => v.1 = label.clone(),
                        None => return err(format!("no vertex {key}")),
                    }
                }
            }
        }
        let mut out = PolicyGraph::new(if g.kind == GraphKind::Plain {
            GraphKind::Plain
        } else {
            g.kind
        });
        for (k, l) in &verts {
            let i = out.add_vertex(k.clone(), l.clone());
            if sinks.contains(k) {
                out.mark_sink(i);
            }
        }
        for (a, b, l) in edges {
            let (a, b) = (
                out.index_of(&a).expect("endpoint"),
                out.index_of(&b).expect("endpoint"),
            );
            out.add_edge(a, b, l);
        }
        Ok(out)
    }
}

/// Label-preserving isomorphism test by backtracking (multigraph aware).
pub fn is_isomorphic(g1: &PolicyGraph, g2: &PolicyGraph) -> bool {
    if g1.vertex_count() != g2.vertex_count() || g1.edge_count() != g2.edge_count() {
        return false;
    }
    let p = Pair::new(g1, g2);
    let n = p.n1;
    let sig = |adj: &dyn Fn(usize, usize) -> usize, lab: u32, u: usize| {
        let out: usize = (0..n).map(|x| adj(u, x)).sum();
        let inn: usize = (0..n).map(|x| adj(x, u)).sum();
        (lab, out, inn, adj(u, u))
    };
    let s1: Vec<_> = (0..n)
        .map(|u| sig(&|a, b| p.a1(a, b).len(), p.lab1[u], u))
        .collect();
    let s2: Vec<_> = (0..n)
        .map(|v| sig(&|a, b| p.a2(a, b).len(), p.lab2[v], v))
        .collect();
    let mut m1 = s1.clone();
    let mut m2 = s2.clone();
    m1.sort();
    m2.sort();
    if m1 != m2 {
        return false;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&u| std::cmp::Reverse(s1[u].1 + s1[u].2));
    fn go(
        k: usize,
        order: &[usize],
        p: &Pair,
        s1: &[(u32, usize, usize, usize)],
        s2: &[(u32, usize, usize, usize)],
        map: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
    ) -> bool {
        if k == order.len() {
            return true;
        }
        let u = order[k];
        for v in 0..p.n2 {
            if used[v] || s1[u] != s2[v] || p.a1(u, u) != p.a2(v, v) {
                continue;
            }
            let fits = order[..k].iter().all(|&w| {
                let y = map[w].expect("placed");
                p.a1(u, w) == p.a2(v, y) && p.a1(w, u) == p.a2(y, v)
            });
            if fits {
                map[u] = Some(v);
                used[v] = true;
                if go(k + 1, order, p, s1, s2, map, used) {
                    return true;
                }
                map[u] = None;
                used[v] = false;
            }
        }
        false
    }
    go(
        0,
        &order,
        &p,
        &s1,
        &s2,
        &mut vec![None; n],
        &mut vec![false; n],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> PolicyGraph {
        let mut g = PolicyGraph::new(GraphKind::Plain);
        for i in 0..n {
            g.add_vertex(format!("v{i}"), "x");
        }
        for i in 1..n {
            g.add_edge(i - 1, i, "");
        }
        g
    }

    fn budget() -> Duration {
        Duration::from_secs(10)
    }

    #[test]
    fn identity_is_zero() {
        let g = path(5);
        let r = ged_exact(&g, &g, &GedCostModel::default(), budget()).unwrap();
        assert_eq!(r.distance, 0.0);
        assert!(r.exact);
        assert!(r.script.ops.is_empty());
        assert_eq!(
            brute_force_ged(&g, &g, &GedCostModel::default()).unwrap(),
            0.0
        );
    }

    #[test]
    fn paths_differ_by_two() {
        let cm = GedCostModel::default();
        let r = ged_exact(&path(3), &path(4), &cm, budget()).unwrap();
        assert_eq!(r.distance, 2.0);
        assert_eq!(r.script.n_star, 1);
        assert_eq!(brute_force_ged(&path(3), &path(4), &cm).unwrap(), 2.0);
        let applied = r.script.apply(&path(3)).unwrap();
        assert!(is_isomorphic(&applied, &path(4)));
    }

    #[test]
    fn multigraph_edges_counted() {
        let mut a = PolicyGraph::new(GraphKind::Plain);
        let x = a.add_vertex("x", "");
        let y = a.add_vertex("y", "");
        a.add_edge(x, y, "S");
        let mut b = a.clone();
        b.add_edge(x, y, "F");
        b.add_edge(y, y, "R");
        let cm = GedCostModel::default();
        assert_eq!(ged_exact(&a, &b, &cm, budget()).unwrap().distance, 2.0);
        assert_eq!(brute_force_ged(&a, &b, &cm).unwrap(), 2.0);
    }

    #[test]
    fn label_sensitive_relabels() {
        let mut a = path(3);
        let b = path(3);
        a = {
            let mut g = PolicyGraph::new(GraphKind::Plain);
            for (i, v) in a.vertices().iter().enumerate() {
                g.add_vertex(v.key.clone(), if i == 1 { "y" } else { "x" });
            }
            for e in a.edges() {
                g.add_edge(e.from, e.to, e.label.clone());
            }
            g
        };
        assert_eq!(
            ged_exact(&a, &b, &GedCostModel::default(), budget())
                .unwrap()
                .distance,
            0.0
        );
        let r = ged_exact(&a, &b, &GedCostModel::label_sensitive(), budget()).unwrap();
        assert_eq!(r.distance, 1.0);
        assert!(is_isomorphic(&r.script.apply(&a).unwrap(), &b));
    }

    #[test]
    fn anchored_bounds_exact() {
        let (a, b) = (path(4), path(3));
        let cm = GedCostModel::default();
        let anch = ged_anchored(&a, &b, &Anchor::SameKeys, &cm).unwrap();
        assert_eq!(anch.distance, 2.0);
        let mut pairs = BTreeMap::new();
        pairs.insert("v0".to_string(), "v0".to_string());
        pairs.insert("v1".to_string(), "v0".to_string());
        assert!(matches!(
            ged_anchored(&a, &b, &Anchor::Explicit(pairs), &cm),
            Err(GedError::AnchorNotInjective(..))
        ));
    }

    #[test]
    fn brute_force_size_limit() {
        assert_eq!(
            brute_force_ged(&path(8), &path(3), &GedCostModel::default()).unwrap_err(),
            GedError::TooLarge(8)
        );
    }

    #[test]
    fn budget_exhaustion_flags_incomplete() {
        let mut a = PolicyGraph::new(GraphKind::Plain);
        let mut b = PolicyGraph::new(GraphKind::Plain);
        for i in 0..12 {
            a.add_vertex(format!("a{i}"), "");
            b.add_vertex(format!("b{i}"), "");
        }
        for i in 0..12 {
            a.add_edge(i, (i * 5 + 1) % 12, "");
            a.add_edge(i, (i * 7 + 3) % 12, "");
            b.add_edge(i, (i + 1) % 12, "");
            b.add_edge(i, (i * i + 2) % 12, "");
        }
        let r = ged_exact(&a, &b, &GedCostModel::default(), Duration::ZERO).unwrap();
        if !r.exact {
            assert!(r.lower_bound <= r.distance);
        }
        let applied = r.script.apply(&a).unwrap();
        assert!(is_isomorphic(&applied, &b));
    }

    #[test]
    fn invalid_costs_rejected() {
        let cm = GedCostModel {
            node_insert: -1.0,
            ..GedCostModel::default()
        };
        assert_eq!(
            ged_exact(&path(2), &path(2), &cm, budget()).unwrap_err(),
            GedError::InvalidCost
        );
    }

    #[test]
    fn fixture_pairs() {
        use crate::fixtures as f;
        use crate::hfsm::from_bt;
        use crate::metrics::graph::{bt_to_graph, fsm_to_graph, hfsm_to_graph};
        let cm = GedCostModel::default();
        let bts = [
            f::bt_fetch_tuck(),
            f::bt_fetch_safe_move(),
            f::bt_fetch_dock(),
            f::bt_fetch_recharge(),
        ];
        let fsms = [
            f::fsm_fetch_tuck(),
            f::fsm_fetch_safe_move(),
            f::fsm_fetch_dock(),
            f::fsm_fetch_recharge(),
        ];
        let base = bt_to_graph(&f::bt_fetch());
        let fbase = fsm_to_graph(&f::fsm_fetch_fault_tolerant());
        let hbase = hfsm_to_graph(&from_bt(&f::bt_fetch()).unwrap());
        let mut got = vec![];
        for (t, m) in bts.iter().zip(&fsms) {
            let h = hfsm_to_graph(&from_bt(t).unwrap());
            for (g1, g2) in [
                (&base, bt_to_graph(t)),
                (&fbase, fsm_to_graph(m)),
                (&hbase, h),
            ] {
                let r = ged_exact(g1, &g2, &cm, budget()).unwrap();
                assert!(r.exact);
                assert!(is_isomorphic(&r.script.apply(g1).unwrap(), &g2));
                got.push(r.distance as u32);
            }
        }
        assert_eq!(got, [6, 5, 12, 2, 6, 4, 8, 5, 17, 8, 8, 17]);
    }

    #[test]
    fn matches_brute_force_on_random_graphs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let random = |rng: &mut rand_chacha::ChaCha8Rng| {
            let n = rng.random_range(0..=5);
            let mut g = PolicyGraph::new(GraphKind::Plain);
            for i in 0..n {
                g.add_vertex(format!("v{i}"), ["a", "b"][rng.random_range(0..2)]);
            }
            if n > 0 {
                for _ in 0..rng.random_range(0..8) {
                    let (x, y) = (rng.random_range(0..n), rng.random_range(0..n));
                    g.add_edge(x, y, ["S", "F", "R"][rng.random_range(0..3)]);
                }
            }
            g
        };
        for cm in [GedCostModel::default(), GedCostModel::label_sensitive()] {
            for _ in 0..150 {
                let (a, b) = (random(&mut rng), random(&mut rng));
                let r = ged_exact(&a, &b, &cm, budget()).unwrap();
                let bf = brute_force_ged(&a, &b, &cm).unwrap();
                assert!((r.distance - bf).abs() < 1e-9, "{} vs {bf}", r.distance);
                assert!((r.script.cost - r.distance).abs() < 1e-9);
                assert!(is_isomorphic(&r.script.apply(&a).unwrap(), &b));
            }
        }
    }
}
