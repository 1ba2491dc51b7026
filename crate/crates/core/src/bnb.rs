//! Branch and bound over the edge flows.
//!
//! Nodes restrict flows to `{0}` or `{1}` and are explored best-bound first.
//! A node whose relaxation is integral and traces a simple path yields an
//! incumbent, priced exactly by a solve with every flow fixed. Integral
//! flows that revisit a vertex (possible on cyclic graphs without degree
//! rows) are branched on like fractional ones.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{SolveStatus, ToleranceConfig};
use crate::formulation::{build_relaxation, fix_flows, reconstruct, FlowInterval, FlowSolution, RelaxationProgram, TighteningOptions};
use crate::graph::{Gcs, PathResult};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnbError {
    #[error("root relaxation failed: {0:?}")]
    RootFailure(SolveStatus),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branching {
    MostFractional,
    PseudoCost,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnbConfig {
    pub integrality_tol: f64,
    pub rel_gap_tol: f64,
    pub abs_gap_tol: f64,
    pub node_limit: Option<usize>,
    /// Seconds.
    pub time_limit: Option<f64>,
    pub branching: Branching,
    /// Rounding attempts at the root; other nodes never round.
    pub root_rounding: usize,
    /// Nodes evaluated concurrently; 1 is strictly sequential.
    pub threads: usize,
    pub tightening: TighteningOptions,
    pub tol: ToleranceConfig,
}

impl Default for BnbConfig {
    fn default() -> Self {
        Self {
            integrality_tol: 1e-5,
            rel_gap_tol: 1e-6,
            abs_gap_tol: 1e-9,
            node_limit: Some(100_000),
            time_limit: None,
            branching: Branching::MostFractional,
            root_rounding: 1,
            threads: 1,
            tightening: TighteningOptions::default(),
            tol: ToleranceConfig::default(),
        }
    }
}

impl BnbConfig {
    fn validate(&self) -> Result<(), BnbError> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.integrality_tol) || !pos(self.rel_gap_tol) || !pos(self.abs_gap_tol) {
            return Err(BnbError::Config("tolerances must be positive".into()));
        }
        if self.threads == 0 {
            return Err(BnbError::Config("threads must be at least 1".into()));
        }
        Ok(())
    }

    fn prune_margin(&self, incumbent: f64) -> f64 {
        self.abs_gap_tol.max(self.rel_gap_tol * incumbent.abs().max(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BnbStatus {
    Optimal,
    Infeasible,
    LimitReached,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeAction {
    Branch,
    Prune,
    Incumbent,
}

impl NodeAction {
    fn as_str(self) -> &'static str {
        match self {
            NodeAction::Branch => "branch",
            NodeAction::Prune => "prune",
            NodeAction::Incumbent => "incumbent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    /// Relaxation value, `+∞` when infeasible.
    pub bound: f64,
    pub fractional: usize,
    pub action: NodeAction,
}

impl NodeRecord {
    pub fn log_line(&self) -> String {
        format!("node {} bound {} frac {} action {}", self.id, self.bound, self.fractional, self.action.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct BnbReport {
    pub status: BnbStatus,
    pub incumbent: Option<PathResult>,
    /// Relaxation solution of the incumbent with all flows fixed.
    pub solution: Option<FlowSolution>,
    pub lower_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub wall_time: f64,
    pub root_bound: f64,
    pub root_solution: FlowSolution,
    pub records: Vec<NodeRecord>,
}

impl BnbReport {
    pub fn cost(&self) -> Option<f64> {
        self.incumbent.as_ref().map(|p| p.cost)
    }

    pub fn log(&self) -> Vec<String> {
        self.records.iter().map(NodeRecord::log_line).collect()
    }

    /// `(incumbent − relaxation) / incumbent`.
    pub fn relaxation_gap(&self) -> Option<f64> {
        self.cost().map(|c| relative_gap(c, self.root_bound))
    }
}

/// Gap normalized by the larger value, used for reporting relaxation quality.
pub fn relative_gap(upper: f64, lower: f64) -> f64 {
    if upper.abs() <= f64::EPSILON {
        (upper - lower).max(0.0)
    } else {
        (upper - lower) / upper.abs()
    }
}

/// Bound-gap used for termination: `(inc − lb) / max(|inc|, 1)`.
pub fn termination_gap(incumbent: f64, lower: f64) -> f64 {
    (incumbent - lower) / incumbent.abs().max(1.0)
}

type Fixing = Vec<Option<bool>>;

#[derive(Clone, Debug)]
struct Node {
    id: usize,
    parent: Option<usize>,
    bound: f64,
    fixing: Fixing,
    /// Branching decision that created the node, for pseudo-costs.
    origin: Option<(usize, bool, f64)>,
}

struct Queued(Node);

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    // Max-heap: smaller bound, then smaller id, pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.bound.total_cmp(&self.0.bound).then_with(|| other.0.id.cmp(&self.0.id))
    }
}

enum Evaluation {
    Infeasible,
    Failed,
    Solved { bound: f64, solution: FlowSolution },
}

fn to_intervals(fixing: &Fixing) -> Vec<(usize, FlowInterval)> {
    fixing
        .iter()
        .enumerate()
        .filter_map(|(k, f)| f.map(|one| (k, if one { FlowInterval::ONE } else { FlowInterval::ZERO })))
        .collect()
}

fn evaluate(g: &Gcs, root: &RelaxationProgram, fixing: &Fixing, tol: &ToleranceConfig) -> Evaluation {
    let Ok(prog) = fix_flows(root, &to_intervals(fixing)) else {
        return Evaluation::Infeasible;
    };
    let sol = prog.program.solve_retrying(tol);
    match sol.status {
        SolveStatus::Optimal => Evaluation::Solved { bound: sol.objective, solution: reconstruct(g, &prog, &sol.primal) },
        SolveStatus::Infeasible => Evaluation::Infeasible,
        _ => Evaluation::Failed,
    }
}

/// Fixes `y_e = 1` on the path edges and zero elsewhere, and solves.
pub fn price_path(g: &Gcs, root: &RelaxationProgram, path: &[usize], tol: &ToleranceConfig) -> Option<(PathResult, FlowSolution)> {
    let on_path = g.path_edges(path).ok()?;
    let mut fixing: Fixing = vec![Some(false); g.num_edges()];
    for k in on_path {
        fixing[k] = Some(true);
    }
    match evaluate(g, root, &fixing, tol) {
        Evaluation::Solved { solution, .. } => {
            let result = solution.to_path_result(g, 1e-6)?;
            Some((result, solution))
        }
        _ => None,
    }
}

/// Depth-first walk from the source preferring high-flow edges.
pub fn round_incumbent(g: &Gcs, root: &RelaxationProgram, relaxed: &FlowSolution, tol: &ToleranceConfig) -> Option<(PathResult, FlowSolution)> {
    let mut order: Vec<Vec<usize>> = (0..g.num_vertices())
        .map(|v| {
            let mut out: Vec<usize> = g.out_edges(v).to_vec();
            out.sort_by(|&a, &b| relaxed.flows[b].total_cmp(&relaxed.flows[a]).then(a.cmp(&b)));
            out
        })
        .collect();
    // Only follow edges that carry flow; a dead end means no rounding.
    for out in &mut order {
        out.retain(|&k| relaxed.flows[k] > 1e-6);
    }
    let mut visited = vec![false; g.num_vertices()];
    let mut path = vec![g.source()];
    visited[g.source()] = true;
    let mut cursor = vec![0usize; g.num_vertices()];
    let mut budget = 10 * g.num_edges().max(1);
    while let Some(&u) = path.last() {
        if u == g.target() {
            break;
        }
        if budget == 0 {
            return None;
        }
        budget -= 1;
        if cursor[u] < order[u].len() {
            let v = g.edges()[order[u][cursor[u]]].v;
            cursor[u] += 1;
            if !visited[v] {
                visited[v] = true;
                path.push(v);
            }
        } else {
            path.pop();
        }
    }
    if path.last() != Some(&g.target()) {
        return None;
    }
    price_path(g, root, &path, tol)
}

/// The unique simple path traced by an integral flow, if the flow is one.
fn integral_path(g: &Gcs, sol: &FlowSolution, tol: f64) -> Option<Vec<usize>> {
    let path = sol.extract_path(g, tol)?;
    let mut on_path = vec![false; g.num_vertices()];
    for &v in &path {
        on_path[v] = true;
    }
    // Another unit of flow leaving a path vertex means a revisit.
    for &v in &path {
        let out: usize = g.out_edges(v).iter().filter(|&&k| sol.flows[k] >= 1.0 - tol).count();
        if v != g.target() && out != 1 {
            return None;
        }
    }
    Some(path)
}

#[derive(Clone, Debug, Default)]
struct PseudoCosts {
    down: Vec<(f64, usize)>,
    up: Vec<(f64, usize)>,
}

impl PseudoCosts {
    fn new(m: usize) -> Self {
        Self { down: vec![(0.0, 0); m], up: vec![(0.0, 0); m] }
    }

    fn record(&mut self, edge: usize, up: bool, gain: f64) {
        let slot = if up { &mut self.up[edge] } else { &mut self.down[edge] };
        slot.0 += gain.max(0.0);
        slot.1 += 1;
    }

    fn mean(slot: (f64, usize), fallback: f64) -> f64 {
        if slot.1 == 0 {
            fallback
        } else {
            slot.0 / slot.1 as f64
        }
    }

    fn score(&self, edge: usize, y: f64) -> f64 {
        let known: Vec<f64> = self
            .down
            .iter()
            .chain(&self.up)
            .filter(|s| s.1 > 0)
            .map(|s| s.0 / s.1 as f64)
            .collect();
        let fallback = if known.is_empty() { 1.0 } else { known.iter().sum::<f64>() / known.len() as f64 };
        let d = Self::mean(self.down[edge], fallback) * y;
        let u = Self::mean(self.up[edge], fallback) * (1.0 - y);
        d.max(1e-6) * u.max(1e-6)
    }
}

/// Edge to branch on, or `None` when the flow is integral and simple.
fn select_branch(
    g: &Gcs,
    sol: &FlowSolution,
    fixing: &Fixing,
    cfg: &BnbConfig,
    pseudo: &PseudoCosts,
) -> Option<usize> {
    let tol = cfg.integrality_tol;
    let fractional: Vec<usize> = (0..g.num_edges())
        .filter(|&k| fixing[k].is_none() && sol.flows[k] > tol && sol.flows[k] < 1.0 - tol)
        .collect();
    if !fractional.is_empty() {
        let key = |k: usize| -> f64 {
            let y = sol.flows[k];
            match cfg.branching {
                Branching::MostFractional => -(y - 0.5).abs(),
                Branching::PseudoCost => pseudo.score(k, y),
            }
        };
        // Highest key, ties to the smallest index.
        return fractional.into_iter().fold(None, |best: Option<usize>, k| match best {
            Some(b) if key(b) >= key(k) => Some(b),
            _ => Some(k),
        });
    }
    if integral_path(g, sol, tol).is_some() {
        return None;
    }
    // Integral but not a simple path: branch on a free unit-flow edge
    // leaving a vertex that carries more than one unit.
    (0..g.num_vertices())
        .filter(|&v| {
            g.out_edges(v).iter().filter(|&&k| sol.flows[k] >= 1.0 - tol).count() > 1
                || g.in_edges(v).iter().filter(|&&k| sol.flows[k] >= 1.0 - tol).count() > 1
        })
        .flat_map(|v| g.out_edges(v).iter().chain(g.in_edges(v)).copied().collect::<Vec<_>>())
        .filter(|&k| fixing[k].is_none() && sol.flows[k] >= 1.0 - tol)
        .min()
        .or_else(|| (0..g.num_edges()).find(|&k| fixing[k].is_none() && sol.flows[k] >= 1.0 - tol))
}

/// Children of a node branching on `edge`, zero branch first. Fixing an
/// edge to one also zeroes the edges no simple path through it can use.
fn children(g: &Gcs, fixing: &Fixing, edge: usize) -> Vec<(Fixing, bool)> {
    let mut zero = fixing.clone();
    zero[edge] = Some(false);
    let mut one = fixing.clone();
    one[edge] = Some(true);
    let e = &g.edges()[edge];
    let mut conflicts = false;
    let mut implied: Vec<usize> = g.out_edges(e.u).iter().chain(g.in_edges(e.v)).copied().filter(|&k| k != edge).collect();
    if let Some(back) = g.edge_between(e.v, e.u) {
        implied.push(back);
    }
    for k in implied {
        match one[k] {
            Some(true) => conflicts = true,
            _ => one[k] = Some(false),
        }
    }
    let mut out = vec![(zero, false)];
    if !conflicts {
        out.push((one, true));
    }
    out
}

pub fn solve_micp(g: &Gcs, cfg: &BnbConfig) -> Result<BnbReport, BnbError> {
    cfg.validate()?;
    let start = Instant::now();
    let root = build_relaxation(g, cfg.tightening);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| BnbError::Config(e.to_string()))?;

    let free: Fixing = vec![None; g.num_edges()];
    let (root_bound, root_solution) = match evaluate(g, &root, &free, &cfg.tol) {
        Evaluation::Solved { bound, solution } => (bound, solution),
        Evaluation::Infeasible => {
            let empty = reconstruct(g, &root, &vec![0.0; root.layout.num_vars]);
            return Ok(BnbReport {
                status: BnbStatus::Infeasible,
                incumbent: None,
                solution: None,
                lower_bound: f64::INFINITY,
                gap: 0.0,
                nodes: 1,
                wall_time: start.elapsed().as_secs_f64(),
                root_bound: f64::INFINITY,
                root_solution: empty,
                records: vec![NodeRecord { id: 0, parent: None, bound: f64::INFINITY, fractional: 0, action: NodeAction::Prune }],
            });
        }
        Evaluation::Failed => return Err(BnbError::RootFailure(SolveStatus::NumericalFailure)),
    };

    let mut incumbent: Option<(PathResult, FlowSolution)> = None;
    for _ in 0..cfg.root_rounding.min(1) {
        incumbent = round_incumbent(g, &root, &root_solution, &cfg.tol);
    }

    let mut records = Vec::new();
    let mut pseudo = PseudoCosts::new(g.num_edges());
    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    let mut pruned_min = f64::INFINITY;
    let mut limit_hit = false;
    let mut root_eval = Some(Evaluation::Solved { bound: root_bound, solution: root_solution.clone() });
    heap.push(Queued(Node { id: 0, parent: None, bound: root_bound, fixing: free, origin: None }));

    while !heap.is_empty() {
        if cfg.node_limit.is_some_and(|l| records.len() >= l)
            || cfg.time_limit.is_some_and(|t| start.elapsed().as_secs_f64() >= t)
        {
            limit_hit = true;
            break;
        }
        let mut batch = Vec::with_capacity(cfg.threads);
        while batch.len() < cfg.threads {
            let Some(Queued(node)) = heap.pop() else { break };
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |(p, _)| p.cost);
            if node.bound >= inc - cfg.prune_margin(inc) {
                pruned_min = pruned_min.min(node.bound);
                records.push(NodeRecord { id: node.id, parent: node.parent, bound: node.bound, fractional: 0, action: NodeAction::Prune });
                continue;
            }
            batch.push(node);
        }
        let evals: Vec<Evaluation> = match root_eval.take() {
            Some(ev) => vec![ev],
            None => pool.install(|| batch.par_iter().map(|n| evaluate(g, &root, &n.fixing, &cfg.tol)).collect()),
        };

        for (node, ev) in batch.into_iter().zip(evals) {
            let inc = incumbent.as_ref().map_or(f64::INFINITY, |(p, _)| p.cost);
            let (bound, solution) = match ev {
                Evaluation::Infeasible => {
                    records.push(NodeRecord { id: node.id, parent: node.parent, bound: f64::INFINITY, fractional: 0, action: NodeAction::Prune });
                    continue;
                }
                Evaluation::Failed => {
                    log::warn!("node {} failed numerically; branching without a bound", node.id);
                    (node.bound, None)
                }
                Evaluation::Solved { bound, solution } => (bound, Some(solution)),
            };
            if let (Some((edge, up, y)), true) = (node.origin, solution.is_some()) {
                let change = if up { 1.0 - y } else { y };
                if change > 1e-9 {
                    pseudo.record(edge, up, (bound - node.bound) / change);
                }
            }
            let fractional = solution.as_ref().map_or(0, |s| {
                s.flows.iter().filter(|&&y| y > cfg.integrality_tol && y < 1.0 - cfg.integrality_tol).count()
            });
            let record = |action| NodeRecord { id: node.id, parent: node.parent, bound, fractional, action };
            if bound >= inc - cfg.prune_margin(inc) {
                pruned_min = pruned_min.min(bound);
                records.push(record(NodeAction::Prune));
                continue;
            }
            let branch_edge = match &solution {
                Some(sol) => select_branch(g, sol, &node.fixing, cfg, &pseudo),
                None => (0..g.num_edges()).find(|&k| node.fixing[k].is_none()),
            };
            let Some(edge) = branch_edge else {
                // Integral simple path, or a failed node with nothing left to fix.
                let priced = solution
                    .as_ref()
                    .and_then(|s| integral_path(g, s, cfg.integrality_tol))
                    .and_then(|p| price_path(g, &root, &p, &cfg.tol));
                match priced {
                    Some((path, sol)) => {
                        if path.cost < inc {
                            incumbent = Some((path, sol));
                        }
                        records.push(record(NodeAction::Incumbent));
                    }
                    None => records.push(record(NodeAction::Prune)),
                }
                continue;
            };
            records.push(record(NodeAction::Branch));
            let y = solution.as_ref().map_or(0.5, |s| s.flows[edge]);
            for (fixing, up) in children(g, &node.fixing, edge) {
                heap.push(Queued(Node { id: next_id, parent: Some(node.id), bound, fixing, origin: Some((edge, up, y)) }));
                next_id += 1;
            }
        }
    }

    let open_min = heap.iter().map(|q| q.0.bound).fold(f64::INFINITY, f64::min);
    let wall_time = start.elapsed().as_secs_f64();
    let nodes = records.len();
    let (status, lower_bound, gap) = match &incumbent {
        Some((p, _)) => {
            let lb = p.cost.min(pruned_min).min(open_min);
            let status = if limit_hit && !heap.is_empty() { BnbStatus::LimitReached } else { BnbStatus::Optimal };
            (status, lb, termination_gap(p.cost, lb))
        }
        None if limit_hit => (BnbStatus::LimitReached, open_min.min(pruned_min), f64::INFINITY),
        None => (BnbStatus::Infeasible, f64::INFINITY, 0.0),
    };
    for line in records.iter().map(NodeRecord::log_line) {
        log::debug!("{line}");
    }
    let (incumbent, solution) = match incumbent {
        Some((p, s)) => (Some(p), Some(s)),
        None => (None, None),
    };
    Ok(BnbReport { status, incumbent, solution, lower_bound, gap, nodes, wall_time, root_bound, root_solution, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::EdgeLength;
    use crate::geometry::ConvexSet;
    use crate::graph::GcsBuilder;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_edge_needs_one_node() {
        let mut b = GcsBuilder::new();
        b.vertex("s", ConvexSet::point(&[0.0, 0.0]).unwrap()).vertex("t", ConvexSet::point(&[3.0, 4.0]).unwrap());
        b.edge("s", "t", EdgeLength::Euclidean);
        let g = b.build("s", "t").unwrap();
        let r = solve_micp(&g, &BnbConfig::default()).unwrap();
        assert_eq!(r.status, BnbStatus::Optimal);
        assert_abs_diff_eq!(r.cost().unwrap(), 5.0, epsilon = 1e-6);
        assert_eq!(r.nodes, 1);
        assert!(r.log()[0].starts_with("node 0 bound"));
    }

    #[test]
    fn disconnected_graph_is_infeasible() {
        let mut b = GcsBuilder::new();
        b.vertex("s", ConvexSet::point(&[0.0]).unwrap()).vertex("t", ConvexSet::point(&[1.0]).unwrap());
        let g = b.build("s", "t").unwrap();
        let r = solve_micp(&g, &BnbConfig::default()).unwrap();
        assert_eq!(r.status, BnbStatus::Infeasible);
        assert!(r.incumbent.is_none());
    }

    #[test]
    fn rejects_bad_config() {
        let mut b = GcsBuilder::new();
        b.vertex("s", ConvexSet::point(&[0.0]).unwrap()).vertex("t", ConvexSet::point(&[1.0]).unwrap());
        b.edge("s", "t", EdgeLength::Euclidean);
        let g = b.build("s", "t").unwrap();
        let cfg = BnbConfig { threads: 0, ..BnbConfig::default() };
        assert!(solve_micp(&g, &cfg).is_err());
    }

    #[test]
    fn queue_orders_by_bound_then_id() {
        let mk = |id, bound| Queued(Node { id, parent: None, bound, fixing: vec![], origin: None });
        let mut heap = BinaryHeap::new();
        heap.push(mk(3, 1.0));
        heap.push(mk(1, 2.0));
        heap.push(mk(2, 1.0));
        let order: Vec<usize> = std::iter::from_fn(|| heap.pop().map(|q| q.0.id)).collect();
        assert_eq!(order, vec![2, 3, 1]);
    }

    #[test]
    fn gap_definitions() {
        assert_abs_diff_eq!(termination_gap(0.5, 0.25), 0.25);
        assert_abs_diff_eq!(termination_gap(4.0, 2.0), 0.5);
        assert_abs_diff_eq!(relative_gap(0.5, 0.25), 0.5);
    }
}
