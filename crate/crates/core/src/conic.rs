//! Conic programs over zero, nonnegative, second-order and rotated
//! second-order cones, and the interior-point backend that solves them.
//!
//! Constraints are stored as blocks of affine expressions `(e_1, ..., e_k) ∈ K`:
//!
//! * `Zero`: every `e_i = 0`;
//! * `Nonneg`: every `e_i >= 0`;
//! * `SecondOrder`: `‖(e_2, ..., e_k)‖ <= e_1`;
//! * `RotatedSecondOrder`: `e_1 e_2 >= ‖(e_3, ..., e_k)‖²` with `e_1, e_2 >= 0`.
//!
//! Dual values are reported per row in the same convention: for an optimal
//! solution the objective gradient equals `Σ_i u_i ∇e_i` with `u` in the dual
//! cone of each block, and the dual objective is `-Σ_i u_i e_i(0)`.

use std::fmt::Write as _;
use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConicError {
    #[error("variable index {index} out of range for a program with {num_vars} variables")]
    VariableOutOfRange { index: usize, num_vars: usize },
    #[error("{kind:?} block needs at least {min} rows, got {got}")]
    ConeTooSmall { kind: ConeKind, min: usize, got: usize },
    #[error("non-finite coefficient in block {block}")]
    NonFinite { block: usize },
}

/// Sparse affine expression `Σ coef·x[var] + constant`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AffExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl AffExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { terms: Vec::new(), constant: c }
    }

    pub fn var(index: usize) -> Self {
        Self { terms: vec![(index, 1.0)], constant: 0.0 }
    }

    pub fn term(index: usize, coef: f64) -> Self {
        Self { terms: vec![(index, coef)], constant: 0.0 }
    }

    pub fn add_term(&mut self, index: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((index, coef));
        }
        self
    }

    pub fn add_constant(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &AffExpr, scale: f64) -> &mut Self {
        if scale == 0.0 {
            return self;
        }
        for &(i, c) in &other.terms {
            self.terms.push((i, c * scale));
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn scaled(&self, scale: f64) -> AffExpr {
        let mut out = AffExpr::zero();
        out.add_scaled(self, scale);
        out
    }

    pub fn plus(&self, other: &AffExpr) -> AffExpr {
        let mut out = self.clone();
        out.add_scaled(other, 1.0);
        out
    }

    pub fn minus(&self, other: &AffExpr) -> AffExpr {
        let mut out = self.clone();
        out.add_scaled(other, -1.0);
        out
    }

    /// Merges duplicate variables and drops zero coefficients.
    pub fn compress(&mut self) {
        if self.terms.len() > 1 {
            self.terms.sort_by_key(|&(i, _)| i);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.terms.len());
            for &(i, c) in &self.terms {
                match merged.last_mut() {
                    Some((j, acc)) if *j == i => *acc += c,
                    _ => merged.push((i, c)),
                }
            }
            self.terms = merged;
        }
        self.terms.retain(|&(_, c)| c != 0.0);
    }

    pub fn compressed(mut self) -> Self {
        self.compress();
        self
    }

    /// True when no variable carries a nonzero coefficient.
    pub fn is_constant(&self) -> bool {
        let mut probe = self.clone();
        probe.compress();
        probe.terms.is_empty()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() + self.constant
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConeKind {
    Zero,
    Nonneg,
    SecondOrder,
    RotatedSecondOrder,
}

impl ConeKind {
    fn min_rows(self) -> usize {
        match self {
            ConeKind::Zero | ConeKind::Nonneg | ConeKind::SecondOrder => 1,
            ConeKind::RotatedSecondOrder => 2,
        }
    }

    /// Violation of `values ∈ K`; zero when the point lies in the cone.
    pub fn violation(self, values: &[f64]) -> f64 {
        match self {
            ConeKind::Zero => values.iter().fold(0.0, |m, v| m.max(v.abs())),
            ConeKind::Nonneg => values.iter().fold(0.0, |m, v| m.max(-v)),
            ConeKind::SecondOrder => {
                let tail = values[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
                (tail - values[0]).max(0.0)
            }
            ConeKind::RotatedSecondOrder => {
                let (a, b) = (values[0], values[1]);
                let w2 = values[2..].iter().map(|v| v * v).sum::<f64>();
                let lhs = ((a - b) * (a - b) + 4.0 * w2).sqrt();
                ((lhs - (a + b)) / 2.0).max(-a).max(-b).max(0.0)
            }
        }
    }
}

/// Which family of constraints a block belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RowKind {
    SourceTarget,
    Conservation,
    ConservationVector,
    PerspectiveMembership,
    Degree,
    TwoCycle,
    Epigraph,
    Bound,
    Other,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RowTag {
    pub kind: RowKind,
    pub vertex: Option<usize>,
    pub edge: Option<usize>,
}

impl RowTag {
    pub fn new(kind: RowKind) -> Self {
        Self { kind, vertex: None, edge: None }
    }

    pub fn at_vertex(kind: RowKind, vertex: usize) -> Self {
        Self { kind, vertex: Some(vertex), edge: None }
    }

    pub fn at_edge(kind: RowKind, edge: usize) -> Self {
        Self { kind, vertex: None, edge: Some(edge) }
    }
}

impl Default for RowTag {
    fn default() -> Self {
        RowTag::new(RowKind::Other)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConeBlock {
    pub kind: ConeKind,
    pub rows: Vec<AffExpr>,
    pub tag: RowTag,
}

/// A row of a [`LocalBlock`]: dense coefficients over the block's local
/// variables plus a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalRow {
    pub coeffs: Vector,
    pub constant: f64,
}

impl LocalRow {
    pub fn new(coeffs: Vector, constant: f64) -> Self {
        Self { coeffs, constant }
    }

    pub fn zeros(dim: usize) -> Self {
        Self { coeffs: Vector::zeros(dim), constant: 0.0 }
    }

    pub fn unit(dim: usize, index: usize, coef: f64) -> Self {
        let mut row = Self::zeros(dim);
        row.coeffs[index] = coef;
        row
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.coeffs.iter().zip(point).map(|(c, x)| c * x).sum::<f64>() + self.constant
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalCone {
    pub kind: ConeKind,
    pub rows: Vec<LocalRow>,
}

/// Conic constraints over a small local vector of variables. Used for
/// perspective cones and epigraphs before they are placed into a program.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalBlock {
    dim: usize,
    cones: Vec<LocalCone>,
}

impl LocalBlock {
    pub fn new(dim: usize) -> Self {
        Self { dim, cones: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cones(&self) -> &[LocalCone] {
        &self.cones
    }

    pub fn push(&mut self, kind: ConeKind, rows: Vec<LocalRow>) {
        debug_assert!(rows.iter().all(|r| r.coeffs.len() == self.dim));
        if !rows.is_empty() {
            self.cones.push(LocalCone { kind, rows });
        }
    }

    /// Appends the cones of `other`, sending its local variable `k` to
    /// `remap[k]` in `self`.
    pub fn append_mapped(&mut self, other: &LocalBlock, remap: &[usize]) {
        assert_eq!(remap.len(), other.dim);
        for cone in &other.cones {
            let rows = cone
                .rows
                .iter()
                .map(|r| {
                    let mut row = LocalRow::zeros(self.dim);
                    for (k, &target) in remap.iter().enumerate() {
                        row.coeffs[target] += r.coeffs[k];
                    }
                    row.constant = r.constant;
                    row
                })
                .collect();
            self.push(cone.kind, rows);
        }
    }

    /// Substitutes every local variable `k` by the affine row `map[k]` over
    /// a new local space of dimension `new_dim`.
    pub fn compose(&self, map: &[LocalRow], new_dim: usize) -> LocalBlock {
        assert_eq!(map.len(), self.dim);
        let mut out = LocalBlock::new(new_dim);
        for cone in &self.cones {
            let rows = cone
                .rows
                .iter()
                .map(|r| {
                    let mut row = LocalRow::zeros(new_dim);
                    row.constant = r.constant;
                    for (k, m) in map.iter().enumerate() {
                        let c = r.coeffs[k];
                        if c != 0.0 {
                            row.coeffs.axpy(c, &m.coeffs, 1.0);
                            row.constant += c * m.constant;
                        }
                    }
                    row
                })
                .collect();
            out.push(cone.kind, rows);
        }
        out
    }

    /// Largest cone violation at `point`.
    pub fn violation(&self, point: &[f64]) -> f64 {
        assert_eq!(point.len(), self.dim);
        self.cones
            .iter()
            .map(|c| {
                let values: Vec<f64> = c.rows.iter().map(|r| r.eval(point)).collect();
                c.kind.violation(&values)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, point: &[f64], tol: f64) -> bool {
        self.violation(point) <= tol
    }

    /// Places the block into program space: local variable `k` becomes the
    /// affine expression `vars[k]`.
    pub fn instantiate(&self, vars: &[AffExpr]) -> Vec<(ConeKind, Vec<AffExpr>)> {
        assert_eq!(vars.len(), self.dim);
        self.cones
            .iter()
            .map(|cone| {
                let rows = cone
                    .rows
                    .iter()
                    .map(|r| {
                        let mut e = AffExpr::constant(r.constant);
                        for (k, &c) in r.coeffs.iter().enumerate() {
                            if c != 0.0 {
                                e.add_scaled(&vars[k], c);
                            }
                        }
                        e.compressed()
                    })
                    .collect();
                (cone.kind, rows)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub feas_tol: f64,
    pub gap_tol: f64,
    pub max_iters: u32,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self { feas_tol: 1e-8, gap_tol: 1e-8, max_iters: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub iterations: u32,
    pub wall_time: f64,
    /// Backend stopped at its relaxed accuracy thresholds.
    pub reduced_accuracy: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<f64>,
    /// One dual vector per block, aligned with the block's rows.
    pub duals: Vec<Vec<f64>>,
    pub objective: f64,
    pub dual_objective: f64,
    pub stats: SolveStats,
}

impl ConicSolution {
    fn failed(status: SolveStatus, stats: SolveStats) -> Self {
        Self {
            status,
            primal: Vec::new(),
            duals: Vec::new(),
            objective: f64::NAN,
            dual_objective: f64::NAN,
            stats,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// `minimize cᵀx + c0` subject to conic blocks.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConicProgram {
    num_vars: usize,
    objective: Vec<f64>,
    objective_constant: f64,
    blocks: Vec<ConeBlock>,
}

impl ConicProgram {
    pub fn new(num_vars: usize) -> Self {
        Self { num_vars, objective: vec![0.0; num_vars], ..Default::default() }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.num_vars - 1
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective_constant += c;
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn num_rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows.len()).sum()
    }

    pub fn add_block(&mut self, kind: ConeKind, rows: Vec<AffExpr>, tag: RowTag) {
        if rows.is_empty() {
            return;
        }
        let rows = rows.into_iter().map(AffExpr::compressed).collect();
        self.blocks.push(ConeBlock { kind, rows, tag });
    }

    pub fn add_local(&mut self, block: &LocalBlock, vars: &[AffExpr], tag: RowTag) {
        for (kind, rows) in block.instantiate(vars) {
            self.add_block(kind, rows, tag);
        }
    }

    /// Keeps only the blocks for which `keep` returns true.
    pub fn retain_blocks(&mut self, mut keep: impl FnMut(&ConeBlock) -> bool) {
        self.blocks.retain(|b| keep(b));
    }

    /// Pins `vars` to zero: their terms are removed from every row and one
    /// equality `x = 0` per variable is added under `tag`.
    pub fn substitute_zero(&mut self, vars: &[usize], tag: RowTag) {
        let mut pinned = vec![false; self.num_vars];
        for &v in vars {
            pinned[v] = true;
        }
        for block in &mut self.blocks {
            for row in &mut block.rows {
                row.terms.retain(|&(i, _)| !pinned[i]);
            }
        }
        self.add_block(ConeKind::Zero, vars.iter().map(|&v| AffExpr::var(v)).collect(), tag);
    }

    pub fn validate(&self) -> Result<(), ConicError> {
        for (bi, block) in self.blocks.iter().enumerate() {
            let min = block.kind.min_rows();
            if block.rows.len() < min {
                return Err(ConicError::ConeTooSmall { kind: block.kind, min, got: block.rows.len() });
            }
            for row in &block.rows {
                if !row.constant.is_finite() {
                    return Err(ConicError::NonFinite { block: bi });
                }
                for &(i, c) in &row.terms {
                    if i >= self.num_vars {
                        return Err(ConicError::VariableOutOfRange { index: i, num_vars: self.num_vars });
                    }
                    if !c.is_finite() {
                        return Err(ConicError::NonFinite { block: bi });
                    }
                }
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(ConicError::NonFinite { block: usize::MAX });
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    /// Largest constraint violation of `x` over all blocks.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.blocks
            .iter()
            .map(|b| {
                let values: Vec<f64> = b.rows.iter().map(|r| r.eval(x)).collect();
                b.kind.violation(&values)
            })
            .fold(0.0, f64::max)
    }

    /// Human-readable listing of the objective and every block.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "variables {}", self.num_vars);
        let _ = write!(out, "minimize");
        for (i, c) in self.objective.iter().enumerate() {
            if *c != 0.0 {
                let _ = write!(out, " {c:+}*x{i}");
            }
        }
        let _ = writeln!(out, " {:+}", self.objective_constant);
        for (bi, b) in self.blocks.iter().enumerate() {
            let _ = writeln!(out, "block {bi} {:?} {:?}", b.kind, b.tag);
            for r in &b.rows {
                let _ = write!(out, "  ");
                for &(i, c) in &r.terms {
                    let _ = write!(out, " {c:+}*x{i}");
                }
                let _ = writeln!(out, " {:+}", r.constant);
            }
        }
        out
    }

    /// Solves the program with the embedded interior-point backend.
    /// Like `solve`, but retries a numerical failure at 100x looser
    /// tolerances (never tighter than 1e-6). Degenerate programs without a
    /// strictly feasible point often stall just short of the tight target.
    pub fn solve_retrying(&self, tol: &ToleranceConfig) -> ConicSolution {
        let sol = self.solve(tol);
        if sol.status != SolveStatus::NumericalFailure {
            return sol;
        }
        let loose = ToleranceConfig {
            feas_tol: (tol.feas_tol * 100.0).max(1e-6),
            gap_tol: (tol.gap_tol * 100.0).max(1e-6),
            max_iters: tol.max_iters * 2,
        };
        log::debug!("retrying at feas_tol {:e}", loose.feas_tol);
        self.solve(&loose)
    }

    pub fn solve(&self, tol: &ToleranceConfig) -> ConicSolution {
        let start = Instant::now();
        if let Err(err) = self.validate() {
            log::warn!("rejecting malformed conic program: {err}");
            return ConicSolution::failed(SolveStatus::NumericalFailure, SolveStats::default());
        }

        // Rows without variables are checked here and never reach the
        // backend, where they would be degenerate. Their duals are zero.
        const CONST_TOL: f64 = 1e-12;
        let mut placement: Vec<Vec<Option<usize>>> = Vec::with_capacity(self.blocks.len());

        // Backend form: A x + s = b, s ∈ K. An expression e = aᵀx + c maps
        // to the row (-a, c). Rotated cones are rotated into plain SOCs.
        let mut rows_i = Vec::new();
        let mut cols_j = Vec::new();
        let mut vals = Vec::new();
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(self.blocks.len());
        let mut push_row = |e: &AffExpr, scale: f64, b: &mut Vec<f64>| {
            let row = b.len();
            for &(j, c) in &e.terms {
                rows_i.push(row);
                cols_j.push(j);
                vals.push(-c * scale);
            }
            b.push(e.constant * scale);
            row
        };
        for block in &self.blocks {
            let constant = |e: &AffExpr| e.terms.is_empty();
            match block.kind {
                ConeKind::Zero | ConeKind::Nonneg => {
                    let mut place = Vec::with_capacity(block.rows.len());
                    let mut count = 0;
                    for e in &block.rows {
                        if constant(e) {
                            if block.kind.violation(&[e.constant]) > CONST_TOL {
                                return ConicSolution::failed(SolveStatus::Infeasible, SolveStats::default());
                            }
                            place.push(None);
                        } else {
                            place.push(Some(push_row(e, 1.0, &mut b)));
                            count += 1;
                        }
                    }
                    if count > 0 {
                        cones.push(if block.kind == ConeKind::Zero {
                            SupportedConeT::ZeroConeT(count)
                        } else {
                            SupportedConeT::NonnegativeConeT(count)
                        });
                    }
                    placement.push(place);
                }
                ConeKind::SecondOrder | ConeKind::RotatedSecondOrder => {
                    if block.rows.iter().all(constant) {
                        let values: Vec<f64> = block.rows.iter().map(|e| e.constant).collect();
                        if block.kind.violation(&values) > CONST_TOL {
                            return ConicSolution::failed(SolveStatus::Infeasible, SolveStats::default());
                        }
                        placement.push(vec![None; block.rows.len()]);
                        continue;
                    }
                    let mut place = Vec::with_capacity(block.rows.len());
                    if block.kind == ConeKind::SecondOrder {
                        for e in &block.rows {
                            place.push(Some(push_row(e, 1.0, &mut b)));
                        }
                    } else {
                        let sum = block.rows[0].plus(&block.rows[1]).compressed();
                        let diff = block.rows[0].minus(&block.rows[1]).compressed();
                        place.push(Some(push_row(&sum, 1.0, &mut b)));
                        place.push(Some(push_row(&diff, 1.0, &mut b)));
                        for e in &block.rows[2..] {
                            place.push(Some(push_row(e, 2.0, &mut b)));
                        }
                    }
                    cones.push(SupportedConeT::SecondOrderConeT(block.rows.len()));
                    placement.push(place);
                }
            }
        }

        let m = b.len();
        let n = self.num_vars;
        let a = CscMatrix::new_from_triplets(m, n, rows_i, cols_j, vals);
        let p = CscMatrix::zeros((n, n));
        let settings = DefaultSettings::<f64> {
            max_iter: tol.max_iters,
            tol_feas: tol.feas_tol,
            tol_gap_abs: tol.gap_tol,
            tol_gap_rel: tol.gap_tol,
            verbose: false,
            ..DefaultSettings::default()
        };
        let mut solver = match DefaultSolver::new(&p, &self.objective, &a, &b, &cones, settings) {
            Ok(s) => s,
            Err(err) => {
                log::warn!("backend rejected program: {err:?}");
                return ConicSolution::failed(SolveStatus::NumericalFailure, SolveStats::default());
            }
        };
        solver.solve();
        let sol = &solver.solution;
        let mut stats = SolveStats {
            iterations: sol.iterations,
            wall_time: start.elapsed().as_secs_f64(),
            reduced_accuracy: false,
        };
        log::debug!("backend status {:?} after {} iterations", sol.status, sol.iterations);
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => {
                stats.reduced_accuracy = true;
                SolveStatus::Optimal
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalFailure,
        };
        if status != SolveStatus::Optimal {
            return ConicSolution::failed(status, stats);
        }

        let primal = sol.x.clone();
        let duals: Vec<Vec<f64>> = self
            .blocks
            .iter()
            .zip(&placement)
            .map(|(block, place)| {
                let z: Vec<f64> = place.iter().map(|p| p.map_or(0.0, |i| sol.z[i])).collect();
                match block.kind {
                    ConeKind::RotatedSecondOrder => {
                        let mut u = Vec::with_capacity(z.len());
                        u.push(z[0] + z[1]);
                        u.push(z[0] - z[1]);
                        u.extend(z[2..].iter().map(|v| 2.0 * v));
                        u
                    }
                    _ => z,
                }
            })
            .collect();
        let dual_objective = self.objective_constant
            - self
                .blocks
                .iter()
                .zip(&duals)
                .map(|(blk, u)| blk.rows.iter().zip(u).map(|(r, ui)| r.constant * ui).sum::<f64>())
                .sum::<f64>();
        ConicSolution {
            status,
            objective: self.objective_value(&primal),
            primal,
            duals,
            dual_objective,
            stats,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    #[test]
    fn equality_fixed_scalar() {
        // min y s.t. y >= 0, y = 1
        let mut p = ConicProgram::new(1);
        p.set_objective(0, 1.0);
        p.add_block(ConeKind::Nonneg, vec![AffExpr::var(0)], RowTag::default());
        let mut e = AffExpr::var(0);
        e.add_constant(-1.0);
        p.add_block(ConeKind::Zero, vec![e], RowTag::default());
        let s = p.solve(&tol());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn norm_of_three_four() {
        // min t s.t. ‖(3,4)‖ <= t
        let mut p = ConicProgram::new(1);
        p.set_objective(0, 1.0);
        p.add_block(
            ConeKind::SecondOrder,
            vec![AffExpr::var(0), AffExpr::constant(3.0), AffExpr::constant(4.0)],
            RowTag::default(),
        );
        let s = p.solve(&tol());
        assert_abs_diff_eq!(s.objective, 5.0, epsilon = 1e-7);
    }

    #[test]
    fn rotated_cone_perspective_of_square() {
        // min t s.t. x² <= t y, y = 2, x = 2  → t = 2
        let mut p = ConicProgram::new(3);
        let (t, y, x) = (0, 1, 2);
        p.set_objective(t, 1.0);
        p.add_block(
            ConeKind::RotatedSecondOrder,
            vec![AffExpr::var(t), AffExpr::var(y), AffExpr::var(x)],
            RowTag::default(),
        );
        let mut ey = AffExpr::var(y);
        ey.add_constant(-2.0);
        let mut ex = AffExpr::var(x);
        ex.add_constant(-2.0);
        p.add_block(ConeKind::Zero, vec![ey, ex], RowTag::default());
        let s = p.solve(&tol());
        assert_eq!(s.status, SolveStatus::Optimal);
        assert_abs_diff_eq!(s.objective, 2.0, epsilon = 1e-7);
        assert!(s.dual_objective <= s.objective + 1e-7);
        assert_abs_diff_eq!(s.dual_objective, s.objective, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_and_unbounded_are_reported() {
        let mut p = ConicProgram::new(1);
        p.add_block(ConeKind::Nonneg, vec![AffExpr::term(0, -1.0).plus(&AffExpr::constant(-1.0))], RowTag::default());
        p.add_block(ConeKind::Nonneg, vec![AffExpr::var(0)], RowTag::default());
        assert_eq!(p.solve(&tol()).status, SolveStatus::Infeasible);

        let mut q = ConicProgram::new(1);
        q.set_objective(0, -1.0);
        q.add_block(ConeKind::Nonneg, vec![AffExpr::var(0)], RowTag::default());
        assert_eq!(q.solve(&tol()).status, SolveStatus::Unbounded);
    }

    #[test]
    fn malformed_program_is_numerical_failure() {
        let mut p = ConicProgram::new(1);
        p.add_block(ConeKind::Nonneg, vec![AffExpr::var(3)], RowTag::default());
        assert!(p.validate().is_err());
        assert_eq!(p.solve(&tol()).status, SolveStatus::NumericalFailure);
    }

    #[test]
    fn duals_reproduce_objective_gradient() {
        // min x0 + 2 x1 s.t. x0 + x1 = 1, x >= 0
        let mut p = ConicProgram::new(2);
        p.set_objective(0, 1.0);
        p.set_objective(1, 2.0);
        let mut eq = AffExpr::var(0);
        eq.add_term(1, 1.0).add_constant(-1.0);
        p.add_block(ConeKind::Zero, vec![eq], RowTag::default());
        p.add_block(ConeKind::Nonneg, vec![AffExpr::var(0), AffExpr::var(1)], RowTag::default());
        let s = p.solve(&tol());
        let mut grad = [0.0; 2];
        for (blk, u) in p.blocks().iter().zip(&s.duals) {
            for (row, ui) in blk.rows.iter().zip(u) {
                for &(i, c) in &row.terms {
                    grad[i] += c * ui;
                }
            }
        }
        assert_abs_diff_eq!(grad[0], 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(grad[1], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(s.dual_objective, 1.0, epsilon = 1e-7);
    }

    #[test]
    fn resolve_is_reproducible() {
        let mut p = ConicProgram::new(2);
        p.set_objective(0, 1.0);
        p.add_block(
            ConeKind::SecondOrder,
            vec![AffExpr::var(0), AffExpr::var(1).plus(&AffExpr::constant(-0.3)), AffExpr::constant(0.7)],
            RowTag::default(),
        );
        let a = p.solve(&tol()).objective;
        let b = p.solve(&tol()).objective;
        assert!((a - b).abs() <= 1e-9);
    }

    #[test]
    fn rotated_violation_measure() {
        assert_eq!(ConeKind::RotatedSecondOrder.violation(&[1.0, 1.0, 1.0]), 0.0);
        assert!(ConeKind::RotatedSecondOrder.violation(&[0.5, 1.0, 1.0]) > 0.0);
        assert!(ConeKind::RotatedSecondOrder.violation(&[-1.0, -1.0, 0.0]) > 0.0);
    }
}
