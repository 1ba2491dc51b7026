//! Ground truth by exhaustion: every simple source-target path is priced
//! with its own convex program, and the cheapest one wins.
//!
//! The per-path programs are written directly from set and length
//! definitions, without perspectives or flows, so they share no code with
//! the relaxation they are used to check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::conic::{AffExpr, ConeKind, ConicProgram, RowTag, SolveStatus, ToleranceConfig};
use crate::costs::{AffineEdgeConstraint, EdgeLength, Relation};
use crate::formulation::{relax_bilinear, FormulationError};
use crate::geometry::ConvexSet;
use crate::graph::{Gcs, PathResult, PATH_TOL};
use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("more than {0} source-target paths")]
    Overflow(usize),
    #[error("no path has finite cost")]
    Infeasible,
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub cost: f64,
    pub path: PathResult,
    pub paths_checked: usize,
    /// Paths whose solve ended in neither optimality nor infeasibility.
    pub failures: usize,
}

/// Minimum of `ℓ` along a fixed vertex sequence, as a standalone program.
pub fn solve_fixed_path(g: &Gcs, path: &[usize], tol: &ToleranceConfig) -> (SolveStatus, Option<PathResult>) {
    let Ok(edges) = g.path_edges(path) else {
        return (SolveStatus::Infeasible, None);
    };
    let mut prog = ConicProgram::new(0);
    let xs: Vec<Vec<AffExpr>> = path
        .iter()
        .map(|&v| (0..g.dim(v)).map(|_| AffExpr::var(prog.add_var())).collect())
        .collect();
    for (i, &v) in path.iter().enumerate() {
        add_membership(&mut prog, g.set(v), &xs[i]);
    }
    for (i, &k) in edges.iter().enumerate() {
        let t = prog.add_var();
        prog.set_objective(t, 1.0);
        add_length(&mut prog, &g.edges()[k].length, &xs[i], &xs[i + 1], t);
    }
    let sol = prog.solve_retrying(tol);
    if !sol.is_optimal() {
        return (sol.status, None);
    }
    let positions: Vec<Vector> = xs
        .iter()
        .map(|x| Vector::from_iterator(x.len(), x.iter().map(|e| e.eval(&sol.primal))))
        .collect();
    let cost = match PathResult::evaluate(g, path, &positions, PATH_TOL) {
        Ok(c) if c.is_finite() => c,
        _ => sol.objective,
    };
    (SolveStatus::Optimal, Some(PathResult { vertices: path.to_vec(), positions, cost }))
}

/// Exact optimum over all simple paths, provided there are at most
/// `max_paths` of them.
pub fn certify(g: &Gcs, max_paths: usize) -> Result<OracleResult, OracleError> {
    let paths = g.enumerate_paths(max_paths);
    if paths.overflow {
        return Err(OracleError::Overflow(max_paths));
    }
    let tol = ToleranceConfig::default();
    let solved: Vec<(SolveStatus, Option<PathResult>)> =
        paths.paths.par_iter().map(|p| solve_fixed_path(g, p, &tol)).collect();
    let failures = solved
        .iter()
        .filter(|(s, _)| !matches!(s, SolveStatus::Optimal | SolveStatus::Infeasible))
        .count();
    if failures > 0 {
        log::warn!("oracle: {failures} path solves failed numerically");
    }
    let best = solved
        .into_iter()
        .filter_map(|(_, r)| r)
        .fold(None::<PathResult>, |best, r| match best {
            Some(b) if b.cost <= r.cost => Some(b),
            _ => Some(r),
        })
        .ok_or(OracleError::Infeasible)?;
    Ok(OracleResult { cost: best.cost, path: best, paths_checked: paths.paths.len(), failures })
}

fn add_membership(prog: &mut ConicProgram, set: &ConvexSet, x: &[AffExpr]) {
    let tag = RowTag::default();
    match set {
        ConvexSet::Singleton { theta } => {
            let rows = x.iter().zip(theta.iter()).map(|(e, &c)| e.minus(&AffExpr::constant(c))).collect();
            prog.add_block(ConeKind::Zero, rows, tag);
        }
        ConvexSet::Box { lo, hi } => {
            let mut rows = Vec::with_capacity(2 * x.len());
            for (i, e) in x.iter().enumerate() {
                rows.push(e.minus(&AffExpr::constant(lo[i])));
                rows.push(AffExpr::constant(hi[i]).minus(e));
            }
            prog.add_block(ConeKind::Nonneg, rows, tag);
        }
        ConvexSet::Polyhedron { a, b } => {
            let rows = (0..a.nrows()).map(|i| AffExpr::constant(b[i]).minus(&mat_row(a, i, x))).collect();
            prog.add_block(ConeKind::Nonneg, rows, tag);
        }
        ConvexSet::Ellipsoid { a, b } => {
            let mut rows = vec![AffExpr::constant(1.0)];
            rows.extend((0..a.nrows()).map(|i| mat_row(a, i, x).plus(&AffExpr::constant(b[i]))));
            prog.add_block(ConeKind::SecondOrder, rows, tag);
        }
        ConvexSet::Product(factors) => {
            let mut offset = 0;
            for f in factors {
                add_membership(prog, f, &x[offset..offset + f.dim()]);
                offset += f.dim();
            }
        }
    }
}

fn mat_row(a: &Matrix, i: usize, x: &[AffExpr]) -> AffExpr {
    let mut e = AffExpr::zero();
    for (j, xj) in x.iter().enumerate() {
        e.add_scaled(xj, a[(i, j)]);
    }
    e
}

/// `C [xu; xv] + d`, or `xv − xu` for the plain Euclidean variants.
fn residual(len: &EdgeLength, xu: &[AffExpr], xv: &[AffExpr]) -> Vec<AffExpr> {
    match len {
        EdgeLength::Euclidean | EdgeLength::SqEuclidean => xu.iter().zip(xv).map(|(a, b)| b.minus(a)).collect(),
        EdgeLength::Norm2Affine { c, d }
        | EdgeLength::SqNorm2Affine { c, d }
        | EdgeLength::QuadraticWithConstraint { c, d, .. } => {
            let stacked: Vec<AffExpr> = xu.iter().chain(xv).cloned().collect();
            (0..c.nrows()).map(|i| mat_row(c, i, &stacked).plus(&AffExpr::constant(d[i]))).collect()
        }
        EdgeLength::ConstantWithConstraint { .. } => Vec::new(),
    }
}

/// `t >= s + ‖w‖²` as `((t − s + 1)/2, (t − s − 1)/2, w) ∈ SOC`.
fn add_square_epigraph(prog: &mut ConicProgram, t: usize, shift: f64, w: Vec<AffExpr>) {
    let mut head = AffExpr::term(t, 0.5);
    head.add_constant(0.5 * (1.0 - shift));
    let mut second = AffExpr::term(t, 0.5);
    second.add_constant(-0.5 * (1.0 + shift));
    let mut rows = vec![head, second];
    rows.extend(w);
    prog.add_block(ConeKind::SecondOrder, rows, RowTag::default());
}

fn add_constraint(prog: &mut ConicProgram, k: &AffineEdgeConstraint, xu: &[AffExpr], xv: &[AffExpr]) {
    let rows = (0..k.g.len())
        .map(|i| {
            let lhs = mat_row(&k.e, i, xu).plus(&mat_row(&k.f, i, xv));
            AffExpr::constant(k.g[i]).minus(&lhs)
        })
        .collect();
    let kind = match k.relation {
        Relation::Eq => ConeKind::Zero,
        Relation::Le => ConeKind::Nonneg,
    };
    prog.add_block(kind, rows, RowTag::default());
}

fn add_length(prog: &mut ConicProgram, len: &EdgeLength, xu: &[AffExpr], xv: &[AffExpr], t: usize) {
    match len {
        EdgeLength::Euclidean | EdgeLength::Norm2Affine { .. } => {
            let mut rows = vec![AffExpr::var(t)];
            rows.extend(residual(len, xu, xv));
            prog.add_block(ConeKind::SecondOrder, rows, RowTag::default());
        }
        EdgeLength::SqEuclidean | EdgeLength::SqNorm2Affine { .. } => {
            add_square_epigraph(prog, t, 0.0, residual(len, xu, xv));
        }
        EdgeLength::ConstantWithConstraint { c, constraint } => {
            let mut row = AffExpr::var(t);
            row.add_constant(-c);
            prog.add_block(ConeKind::Nonneg, vec![row], RowTag::default());
            if let Some(k) = constraint {
                add_constraint(prog, k, xu, xv);
            }
        }
        EdgeLength::QuadraticWithConstraint { c0, constraint, .. } => {
            add_square_epigraph(prog, t, *c0, residual(len, xu, xv));
            if let Some(k) = constraint {
                add_constraint(prog, k, xu, xv);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactnessReport {
    pub max_violation: f64,
    pub trials: usize,
    /// Trials whose feasibility program did not solve to optimality.
    pub failed_solves: usize,
    pub passed: bool,
}

pub const EXACTNESS_TOL: f64 = 1e-6;

/// Samples points of the bilinear relaxation with `y` pinned to
/// `y_extreme` by minimizing random linear objectives over `(x, Z)`, and
/// reports the worst `‖Z − x yᵀ‖∞` with `x` reconstructed from `Z`.
pub fn check_extreme_exactness(
    x_set: &ConvexSet,
    halfspaces: &[(Vector, f64)],
    y_extreme: &Vector,
    trials: usize,
    seed: u64,
) -> Result<ExactnessReport, FormulationError> {
    let rel = relax_bilinear(x_set, halfspaces)?;
    if y_extreme.len() != rel.m {
        return Err(FormulationError::HalfspaceDimension(0));
    }
    let mut base = ConicProgram::new(rel.dim());
    let vars: Vec<AffExpr> = (0..rel.dim()).map(AffExpr::var).collect();
    base.add_local(&rel.block, &vars, RowTag::default());
    let pins = (0..rel.m)
        .map(|j| {
            let mut e = AffExpr::var(rel.y_index(j));
            e.add_constant(-y_extreme[j]);
            e
        })
        .collect();
    base.add_block(ConeKind::Zero, pins, RowTag::default());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = ToleranceConfig::default();
    let mut worst: f64 = 0.0;
    let mut failed = 0;
    for _ in 0..trials {
        let mut prog = base.clone();
        for i in 0..rel.n {
            prog.set_objective(rel.x_index(i), rng.gen_range(-1.0..1.0));
            for j in 0..rel.m {
                prog.set_objective(rel.z_index(i, j), rng.gen_range(-1.0..1.0));
            }
        }
        let sol = prog.solve(&tol);
        if !sol.is_optimal() {
            failed += 1;
            continue;
        }
        let Some(x) = rel.reconstruct_x(&sol.primal) else {
            failed += 1;
            continue;
        };
        let zm = rel.z_matrix(&sol.primal);
        let err = (zm - &x * y_extreme.transpose()).amax();
        worst = worst.max(err);
    }
    Ok(ExactnessReport {
        max_violation: worst,
        trials,
        failed_solves: failed,
        passed: failed == 0 && worst <= EXACTNESS_TOL,
    })
}

/// Halfspaces `c_jᵀ y + d_j >= 0` of the unit simplex in `R^m`, including
/// the trivial `0ᵀ y + 1 >= 0`. The equality `Σ y = 1` is split in two.
pub fn simplex_halfspaces(m: usize) -> Vec<(Vector, f64)> {
    let mut hs: Vec<(Vector, f64)> = (0..m)
        .map(|j| {
            let mut c = Vector::zeros(m);
            c[j] = 1.0;
            (c, 0.0)
        })
        .collect();
    hs.push((Vector::repeat(m, 1.0), -1.0));
    hs.push((Vector::repeat(m, -1.0), 1.0));
    hs.push((Vector::zeros(m), 1.0));
    hs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GcsBuilder;
    use approx::assert_abs_diff_eq;

    fn pt(x: &[f64]) -> ConvexSet {
        ConvexSet::point(x).unwrap()
    }

    #[test]
    fn single_edge_is_the_length_at_the_endpoints() {
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(&[0.0, 0.0])).vertex("t", pt(&[3.0, 4.0]));
        b.edge("s", "t", EdgeLength::Euclidean);
        let r = certify(&b.build("s", "t").unwrap(), 10).unwrap();
        assert_abs_diff_eq!(r.cost, 5.0, epsilon = 1e-7);
        assert_eq!(r.paths_checked, 1);
    }

    #[test]
    fn squared_chain_spreads_evenly() {
        // s={0} → a ∈ [0,1] → t={1}: optimum 1/2 at a = 1/2.
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(&[0.0]))
            .vertex("a", ConvexSet::interval_box(&[0.0], &[1.0]).unwrap())
            .vertex("t", pt(&[1.0]));
        b.edge("s", "a", EdgeLength::SqEuclidean).edge("a", "t", EdgeLength::SqEuclidean);
        b.edge("s", "t", EdgeLength::SqEuclidean);
        let r = certify(&b.build("s", "t").unwrap(), 10).unwrap();
        assert_abs_diff_eq!(r.cost, 0.5, epsilon = 1e-7);
        assert_eq!(r.path.vertices, vec![0, 1, 2]);
        assert_abs_diff_eq!(r.path.positions[1][0], 0.5, epsilon = 1e-5);
        assert_eq!(r.paths_checked, 2);
    }

    #[test]
    fn overflow_and_infeasibility() {
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(&[0.0])).vertex("a", pt(&[0.0])).vertex("t", pt(&[1.0]));
        b.edge("s", "a", EdgeLength::Euclidean).edge("a", "t", EdgeLength::Euclidean);
        b.edge("s", "t", EdgeLength::Euclidean);
        let g = b.build("s", "t").unwrap();
        assert_eq!(certify(&g, 1).unwrap_err(), OracleError::Overflow(1));

        let bad = AffineEdgeConstraint::new(
            Matrix::from_element(1, 1, 1.0),
            Matrix::zeros(1, 1),
            Vector::from_element(1, 5.0),
            Relation::Eq,
        )
        .unwrap();
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(&[0.0])).vertex("t", pt(&[1.0]));
        b.edge("s", "t", EdgeLength::constant(1.0, Some(bad)).unwrap());
        assert_eq!(certify(&b.build("s", "t").unwrap(), 10).unwrap_err(), OracleError::Infeasible);
    }

    #[test]
    fn ellipsoid_and_quadratic_lengths() {
        // Unit ball at (3, 2) between (0, 0) and (6, 0), squared legs plus 0.25 each.
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(&[0.0, 0.0]))
            .vertex("a", ConvexSet::ball(&Vector::from_vec(vec![3.0, 2.0]), 1.0).unwrap())
            .vertex("t", pt(&[6.0, 0.0]));
        let q = EdgeLength::quadratic(
            Matrix::from_row_slice(2, 4, &[-1.0, 0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 1.0]),
            Vector::zeros(2),
            0.25,
            None,
        )
        .unwrap();
        b.edge("s", "a", q.clone()).edge("a", "t", q);
        let r = certify(&b.build("s", "t").unwrap(), 10).unwrap();
        // Optimal point (3, 1): two legs of squared length 9 + 1.
        assert_abs_diff_eq!(r.cost, 20.5, epsilon = 1e-6);
    }

    #[test]
    fn simplex_vertices_are_exact() {
        let x = ConvexSet::interval_box(&[-1.0, 0.0], &[1.0, 2.0]).unwrap();
        let hs = simplex_halfspaces(3);
        for j in 0..3 {
            let mut y = Vector::zeros(3);
            y[j] = 1.0;
            let rep = check_extreme_exactness(&x, &hs, &y, 10, j as u64).unwrap();
            assert!(rep.passed, "{rep:?}");
        }
    }

    #[test]
    fn interior_points_are_not_exact() {
        let x = ConvexSet::interval_box(&[-1.0, 0.0], &[1.0, 2.0]).unwrap();
        let y = Vector::repeat(3, 1.0 / 3.0);
        let rep = check_extreme_exactness(&x, &simplex_halfspaces(3), &y, 20, 3).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn unit_interval_at_zero_forces_zero() {
        let x = ConvexSet::interval_box(&[0.0], &[1.0]).unwrap();
        let hs = vec![
            (Vector::from_vec(vec![1.0]), 0.0),
            (Vector::from_vec(vec![-1.0]), 1.0),
            (Vector::zeros(1), 1.0),
        ];
        let rep = check_extreme_exactness(&x, &hs, &Vector::zeros(1), 10, 1).unwrap();
        assert!(rep.passed, "{rep:?}");
    }
}
