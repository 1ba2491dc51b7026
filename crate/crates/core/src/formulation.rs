//! Network-flow LP, the convex relaxation of the mixed-integer program, flow
//! fixings for branch and bound, solution reconstruction, and the generic
//! relaxation of bilinear constraints `Z = x yᵀ`.

use std::ops::Range;

use thiserror::Error;

use crate::conic::{AffExpr, ConeKind, ConicProgram, LocalBlock, LocalRow, RowKind, RowTag};
use crate::geometry::ConvexSet;
use crate::graph::{Gcs, GcsError, PathResult, PATH_TOL};
use crate::{Matrix, Vector};

/// Flows below this are treated as zero when dividing by them.
pub const FLOW_EPS: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulationError {
    #[error("edge length {value} on edge {edge} must be finite and nonnegative")]
    BadLength { edge: usize, value: f64 },
    #[error("expected {expected} lengths, got {got}")]
    LengthCount { expected: usize, got: usize },
    #[error("edge {0} out of range")]
    EdgeOutOfRange(usize),
    #[error("flow interval [{lo}, {hi}] on edge {edge} is inverted or outside [0, 1]")]
    BadInterval { edge: usize, lo: f64, hi: f64 },
    #[error("the trivial inequality (0, 1) is missing")]
    MissingTrivialInequality,
    #[error("halfspace {0} has the wrong dimension")]
    HalfspaceDimension(usize),
    #[error(transparent)]
    Graph(#[from] GcsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TighteningOptions {
    pub degree: bool,
    pub two_cycle: bool,
}

impl Default for TighteningOptions {
    fn default() -> Self {
        Self { degree: true, two_cycle: true }
    }
}

impl TighteningOptions {
    pub fn none() -> Self {
        Self { degree: false, two_cycle: false }
    }
}

/// Program variables of one edge, stored contiguously as `[y, z, z′, t]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeVars {
    pub y: usize,
    pub z: Range<usize>,
    pub zp: Range<usize>,
    pub t: usize,
}

impl EdgeVars {
    pub fn all(&self) -> Range<usize> {
        self.y..self.t + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VariableLayout {
    pub edges: Vec<EdgeVars>,
    pub num_vars: usize,
}

impl VariableLayout {
    pub fn new(g: &Gcs) -> Self {
        let mut next = 0;
        let edges = g
            .edges()
            .iter()
            .map(|e| {
                let (nu, nv) = (g.dim(e.u), g.dim(e.v));
                let y = next;
                let z = y + 1..y + 1 + nu;
                let zp = z.end..z.end + nv;
                let t = zp.end;
                next = t + 1;
                EdgeVars { y, z, zp, t }
            })
            .collect();
        Self { edges, num_vars: next }
    }

    fn exprs(range: &Range<usize>) -> Vec<AffExpr> {
        range.clone().map(AffExpr::var).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowInterval {
    pub lo: f64,
    pub hi: f64,
}

impl FlowInterval {
    pub const ZERO: FlowInterval = FlowInterval { lo: 0.0, hi: 0.0 };
    pub const ONE: FlowInterval = FlowInterval { lo: 1.0, hi: 1.0 };

    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// The relaxation together with its variable layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationProgram {
    pub program: ConicProgram,
    pub layout: VariableLayout,
    pub tightened: bool,
    /// Active flow intervals per edge, `None` when unrestricted.
    pub fixings: Vec<Option<FlowInterval>>,
}

/// Classical shortest-path LP with scalar edge lengths.
pub fn build_flow_lp(g: &Gcs, lengths: &[f64]) -> Result<ConicProgram, FormulationError> {
    if lengths.len() != g.num_edges() {
        return Err(FormulationError::LengthCount { expected: g.num_edges(), got: lengths.len() });
    }
    if let Some((edge, &value)) = lengths.iter().enumerate().find(|(_, l)| !(**l >= 0.0) || !l.is_finite()) {
        return Err(FormulationError::BadLength { edge, value });
    }
    let mut prog = ConicProgram::new(g.num_edges());
    for (k, &l) in lengths.iter().enumerate() {
        prog.set_objective(k, l);
    }
    let flow = |edges: &[usize]| -> AffExpr {
        let mut e = AffExpr::zero();
        for &k in edges {
            e.add_term(k, 1.0);
        }
        e
    };
    add_flow_rows(g, &mut prog, &flow);
    prog.add_block(
        ConeKind::Nonneg,
        (0..g.num_edges()).map(AffExpr::var).collect(),
        RowTag::new(RowKind::Bound),
    );
    Ok(prog)
}

/// Source, target and scalar conservation rows, with `Σ_out − Σ_in` at
/// interior vertices.
fn add_flow_rows(g: &Gcs, prog: &mut ConicProgram, flow: &dyn Fn(&[usize]) -> AffExpr) {
    let (s, t) = (g.source(), g.target());
    let mut src = flow(g.out_edges(s));
    src.add_constant(-1.0);
    prog.add_block(ConeKind::Zero, vec![src], RowTag::at_vertex(RowKind::SourceTarget, s));
    let mut tgt = flow(g.in_edges(t));
    tgt.add_constant(-1.0);
    prog.add_block(ConeKind::Zero, vec![tgt], RowTag::at_vertex(RowKind::SourceTarget, t));
    for v in 0..g.num_vertices() {
        if v == s || v == t {
            continue;
        }
        let row = flow(g.out_edges(v)).minus(&flow(g.in_edges(v)));
        prog.add_block(ConeKind::Zero, vec![row], RowTag::at_vertex(RowKind::Conservation, v));
    }
}

/// Convex relaxation of the mixed-integer program: integrality dropped,
/// everything else kept. Degree and two-cycle rows are added only when the
/// graph has a cycle and `opts` enables them.
pub fn build_relaxation(g: &Gcs, opts: TighteningOptions) -> RelaxationProgram {
    let layout = VariableLayout::new(g);
    let mut prog = ConicProgram::new(layout.num_vars);
    let ev = &layout.edges;

    for (k, e) in g.edges().iter().enumerate() {
        let vars = &ev[k];
        prog.set_objective(vars.t, 1.0);
        let z = VariableLayout::exprs(&vars.z);
        let zp = VariableLayout::exprs(&vars.zp);
        let y = AffExpr::var(vars.y);
        let epi = e
            .length
            .perspective_epigraph(g.dim(e.u), g.dim(e.v))
            .expect("edge dimensions are validated by the graph");
        let mut local: Vec<AffExpr> = z.iter().chain(&zp).cloned().collect();
        local.push(y.clone());
        local.push(AffExpr::var(vars.t));
        prog.add_local(&epi, &local, RowTag::at_edge(RowKind::Epigraph, k));
        let tag = RowTag { kind: RowKind::PerspectiveMembership, vertex: None, edge: Some(k) };
        g.set(e.u).add_perspective_to(&mut prog, &z, &y, RowTag { vertex: Some(e.u), ..tag });
        g.set(e.v).add_perspective_to(&mut prog, &zp, &y, RowTag { vertex: Some(e.v), ..tag });
    }

    let flow = |edges: &[usize]| -> AffExpr {
        let mut e = AffExpr::zero();
        for &k in edges {
            e.add_term(ev[k].y, 1.0);
        }
        e
    };
    add_flow_rows(g, &mut prog, &flow);

    let (s, t) = (g.source(), g.target());
    for v in 0..g.num_vertices() {
        // For point sets these rows follow from the scalar row and the
        // memberships; emitting them would make the equalities dependent.
        if v == s || v == t || g.set(v).as_point().is_some() {
            continue;
        }
        let rows = (0..g.dim(v))
            .map(|i| {
                let mut r = AffExpr::zero();
                for &k in g.out_edges(v) {
                    r.add_term(ev[k].z.start + i, 1.0);
                }
                for &k in g.in_edges(v) {
                    r.add_term(ev[k].zp.start + i, -1.0);
                }
                r
            })
            .collect();
        prog.add_block(ConeKind::Zero, rows, RowTag::at_vertex(RowKind::ConservationVector, v));
    }

    let tightened = !g.is_acyclic() && (opts.degree || opts.two_cycle);
    if !g.is_acyclic() {
        for v in 0..g.num_vertices() {
            if v == s || v == t {
                continue;
            }
            let out_flow = flow(g.out_edges(v));
            if opts.degree {
                let row = AffExpr::constant(1.0).minus(&out_flow);
                prog.add_block(ConeKind::Nonneg, vec![row], RowTag::at_vertex(RowKind::Degree, v));
            }
            if opts.two_cycle {
                for &e in g.in_edges(v) {
                    let u = g.edges()[e].u;
                    let Some(f) = g.edge_between(v, u) else { continue };
                    let lambda = out_flow.minus(&AffExpr::var(ev[e].y)).minus(&AffExpr::var(ev[f].y));
                    let tag = RowTag { kind: RowKind::TwoCycle, vertex: Some(v), edge: Some(e) };
                    if g.set(v).as_point().is_some() {
                        // Only the scalar part is independent for point sets.
                        prog.add_block(ConeKind::Nonneg, vec![lambda], tag);
                        continue;
                    }
                    let x: Vec<AffExpr> = (0..g.dim(v))
                        .map(|i| {
                            let mut r = AffExpr::zero();
                            for &gk in g.out_edges(v) {
                                r.add_term(ev[gk].z.start + i, 1.0);
                            }
                            r.add_term(ev[e].zp.start + i, -1.0);
                            r.add_term(ev[f].z.start + i, -1.0);
                            r
                        })
                        .collect();
                    g.set(v).add_perspective_to(&mut prog, &x, &lambda, tag);
                }
            }
        }
    }

    RelaxationProgram { program: prog, layout, tightened, fixings: vec![None; g.num_edges()] }
}

/// Copy of `prog` with `y_e` restricted to the given intervals. An edge
/// fixed to zero has all of its variables pinned to zero, which removes its
/// cone blocks from the solve.
pub fn fix_flows(prog: &RelaxationProgram, fixes: &[(usize, FlowInterval)]) -> Result<RelaxationProgram, FormulationError> {
    let mut out = prog.clone();
    let mut zeroed = Vec::new();
    for &(edge, iv) in fixes {
        if edge >= out.layout.edges.len() {
            return Err(FormulationError::EdgeOutOfRange(edge));
        }
        if !(0.0 <= iv.lo && iv.lo <= iv.hi && iv.hi <= 1.0) {
            return Err(FormulationError::BadInterval { edge, lo: iv.lo, hi: iv.hi });
        }
        let merged = match out.fixings[edge] {
            Some(old) => FlowInterval::new(old.lo.max(iv.lo), old.hi.min(iv.hi)),
            None => iv,
        };
        if merged.lo > merged.hi {
            return Err(FormulationError::BadInterval { edge, lo: merged.lo, hi: merged.hi });
        }
        out.fixings[edge] = Some(merged);
        let vars = &out.layout.edges[edge];
        let tag = RowTag::at_edge(RowKind::Bound, edge);
        if merged.hi == 0.0 {
            zeroed.extend(vars.all());
        } else if merged.lo == merged.hi {
            let mut r = AffExpr::var(vars.y);
            r.add_constant(-merged.lo);
            out.program.add_block(ConeKind::Zero, vec![r], tag);
        } else {
            let mut lo = AffExpr::var(vars.y);
            lo.add_constant(-merged.lo);
            let mut hi = AffExpr::term(vars.y, -1.0);
            hi.add_constant(merged.hi);
            out.program.add_block(ConeKind::Nonneg, vec![lo, hi], tag);
        }
    }
    if !zeroed.is_empty() {
        out.program.substitute_zero(&zeroed, RowTag::new(RowKind::Bound));
    }
    Ok(out)
}

/// Primal values of the relaxation mapped back to graph quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSolution {
    pub flows: Vec<f64>,
    pub z: Vec<Vector>,
    pub z_prime: Vec<Vector>,
    pub epigraph: Vec<f64>,
    /// Reconstructed `x_v`; unvisited vertices sit at their Chebyshev center.
    pub positions: Vec<Vector>,
    pub visited: Vec<bool>,
    /// `(z_e / y_e, z′_e / y_e)` for edges with nonnegligible flow.
    pub surrogates: Vec<Option<(Vector, Vector)>>,
    pub objective: f64,
}

pub fn reconstruct(g: &Gcs, prog: &RelaxationProgram, primal: &[f64]) -> FlowSolution {
    let ev = &prog.layout.edges;
    let slice = |r: &Range<usize>| Vector::from_column_slice(&primal[r.clone()]);
    let flows: Vec<f64> = ev.iter().map(|v| primal[v.y]).collect();
    let z: Vec<Vector> = ev.iter().map(|v| slice(&v.z)).collect();
    let z_prime: Vec<Vector> = ev.iter().map(|v| slice(&v.zp)).collect();
    let epigraph = ev.iter().map(|v| primal[v.t]).collect();
    let surrogates = (0..ev.len())
        .map(|k| (flows[k] >= FLOW_EPS).then(|| (&z[k] / flows[k], &z_prime[k] / flows[k])))
        .collect();

    let (s, t) = (g.source(), g.target());
    let mut positions = Vec::with_capacity(g.num_vertices());
    let mut visited = Vec::with_capacity(g.num_vertices());
    for v in 0..g.num_vertices() {
        let n = g.dim(v);
        if v == t {
            let sum = g.in_edges(v).iter().fold(Vector::zeros(n), |acc, &k| acc + &z_prime[k]);
            positions.push(sum);
            visited.push(true);
            continue;
        }
        let mass: f64 = g.out_edges(v).iter().map(|&k| flows[k]).sum();
        let sum = g.out_edges(v).iter().fold(Vector::zeros(n), |acc, &k| acc + &z[k]);
        if v == s {
            positions.push(sum);
            visited.push(true);
        } else if mass >= FLOW_EPS {
            positions.push(sum / mass);
            visited.push(true);
        } else {
            positions.push(g.set(v).chebyshev_center());
            visited.push(false);
        }
    }
    FlowSolution {
        flows,
        z,
        z_prime,
        epigraph,
        positions,
        visited,
        surrogates,
        objective: prog.program.objective_value(primal),
    }
}

impl FlowSolution {
    pub fn is_integral(&self, tol: f64) -> bool {
        self.flows.iter().all(|&y| y <= tol || y >= 1.0 - tol)
    }

    /// Largest distance of a flow from `{0, 1}`.
    pub fn max_fractionality(&self) -> f64 {
        self.flows.iter().map(|&y| y.min(1.0 - y).max(0.0)).fold(0.0, f64::max)
    }

    /// Follows edges with flow at least `1 − tol` from the source.
    pub fn extract_path(&self, g: &Gcs, tol: f64) -> Option<Vec<usize>> {
        let mut path = vec![g.source()];
        let mut seen = vec![false; g.num_vertices()];
        seen[g.source()] = true;
        let mut u = g.source();
        while u != g.target() {
            let k = g.out_edges(u).iter().copied().find(|&k| self.flows[k] >= 1.0 - tol)?;
            u = g.edges()[k].v;
            if seen[u] {
                return None;
            }
            seen[u] = true;
            path.push(u);
        }
        Some(path)
    }

    /// Path of an integral solution with its exact traversal cost.
    pub fn to_path_result(&self, g: &Gcs, tol: f64) -> Option<PathResult> {
        let vertices = self.extract_path(g, tol)?;
        let positions: Vec<Vector> = vertices.iter().map(|&v| self.positions[v].clone()).collect();
        let cost = PathResult::evaluate(g, &vertices, &positions, PATH_TOL).ok()?;
        cost.is_finite().then_some(PathResult { vertices, positions, cost })
    }
}

/// Integral relaxation point induced by a path: `y = 1`, `z = x_u`,
/// `z′ = x_v`, `t = ℓ` on path edges, zero elsewhere.
pub fn lift_path(g: &Gcs, prog: &RelaxationProgram, path: &PathResult) -> Result<Vec<f64>, FormulationError> {
    let mut x = vec![0.0; prog.layout.num_vars];
    for (i, k) in g.path_edges(&path.vertices)?.into_iter().enumerate() {
        let vars = &prog.layout.edges[k];
        let (xu, xv) = (&path.positions[i], &path.positions[i + 1]);
        x[vars.y] = 1.0;
        x[vars.z.clone()].copy_from_slice(xu.as_slice());
        x[vars.zp.clone()].copy_from_slice(xv.as_slice());
        x[vars.t] = g.edges()[k]
            .length
            .evaluate_with_tol(xu.as_slice(), xv.as_slice(), PATH_TOL)
            .map_err(|e| FormulationError::Graph(GcsError::InvalidPath(e.to_string())))?;
    }
    Ok(x)
}

/// Relaxation of `{(x, y, Z) : x ∈ X, y ∈ Y, Z = x yᵀ}` for a polytope
/// `Y = {y : c_jᵀ y + d_j >= 0}`, over local variables `[x, y, vec(Z)]`
/// with `Z` stored column-major.
#[derive(Clone, Debug, PartialEq)]
pub struct BilinearRelaxation {
    pub block: LocalBlock,
    pub n: usize,
    pub m: usize,
    pub halfspaces: Vec<(Vector, f64)>,
}

impl BilinearRelaxation {
    pub fn dim(&self) -> usize {
        self.n + self.m + self.n * self.m
    }

    pub fn x_index(&self, i: usize) -> usize {
        i
    }

    pub fn y_index(&self, j: usize) -> usize {
        self.n + j
    }

    pub fn z_index(&self, i: usize, j: usize) -> usize {
        self.n + self.m + j * self.n + i
    }

    pub fn z_matrix(&self, point: &[f64]) -> Matrix {
        Matrix::from_column_slice(self.n, self.m, &point[self.n + self.m..])
    }

    /// `x := Σ_j (Z c_j + d_j x) / Σ_j (c_jᵀ y + d_j)`.
    pub fn reconstruct_x(&self, point: &[f64]) -> Option<Vector> {
        let x = Vector::from_column_slice(&point[..self.n]);
        let y = Vector::from_column_slice(&point[self.n..self.n + self.m]);
        let zm = self.z_matrix(point);
        let mut num = Vector::zeros(self.n);
        let mut den = 0.0;
        for (c, d) in &self.halfspaces {
            num += &zm * c + &x * *d;
            den += c.dot(&y) + d;
        }
        (den.abs() >= FLOW_EPS).then(|| num / den)
    }
}

pub fn relax_bilinear(x_set: &ConvexSet, halfspaces: &[(Vector, f64)]) -> Result<BilinearRelaxation, FormulationError> {
    let n = x_set.dim();
    let m = halfspaces.first().map_or(0, |(c, _)| c.len());
    if let Some(j) = halfspaces.iter().position(|(c, _)| c.len() != m) {
        return Err(FormulationError::HalfspaceDimension(j));
    }
    if !halfspaces.iter().any(|(c, d)| *d == 1.0 && c.iter().all(|v| *v == 0.0)) {
        return Err(FormulationError::MissingTrivialInequality);
    }
    let dim = n + m + n * m;
    let persp = x_set.perspective();
    let mut block = LocalBlock::new(dim);
    for (c, d) in halfspaces {
        // Local map (x̂, λ) = (Z c + d x, cᵀ y + d).
        let mut map = Vec::with_capacity(n + 1);
        for i in 0..n {
            let mut r = LocalRow::unit(dim, i, *d);
            for j in 0..m {
                r.coeffs[n + m + j * n + i] += c[j];
            }
            map.push(r);
        }
        let mut lam = LocalRow::zeros(dim);
        for j in 0..m {
            lam.coeffs[n + j] = c[j];
        }
        lam.constant = *d;
        map.push(lam);
        let composed = persp.compose(&map, dim);
        for cone in composed.cones() {
            block.push(cone.kind, cone.rows.clone());
        }
    }
    Ok(BilinearRelaxation { block, n, m, halfspaces: halfspaces.to_vec() })
}
