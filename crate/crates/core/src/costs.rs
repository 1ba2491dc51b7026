//! Convex edge lengths and their perspective epigraphs.
//!
//! Epigraph blocks live over local variables `[z (n_u), z′ (n_v), y, t]`.

use thiserror::Error;

use crate::conic::{ConeKind, LocalBlock, LocalRow};
use crate::{Matrix, Vector};

/// Default slack when checking an edge constraint in [`EdgeLength::evaluate`].
pub const CONSTRAINT_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("dimension mismatch: {what} expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("constant must be nonnegative, got {0}")]
    NegativeConstant(f64),
    #[error("non-finite data")]
    NonFinite,
}

fn mismatch(what: &'static str, expected: usize, got: usize) -> Result<(), CostError> {
    if expected == got {
        Ok(())
    } else {
        Err(CostError::DimensionMismatch { what, expected, got })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
}

/// `E x_u + F x_v = g`, or `<= g` componentwise.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineEdgeConstraint {
    pub e: Matrix,
    pub f: Matrix,
    pub g: Vector,
    pub relation: Relation,
}

impl AffineEdgeConstraint {
    pub fn new(e: Matrix, f: Matrix, g: Vector, relation: Relation) -> Result<Self, CostError> {
        mismatch("constraint F rows", e.nrows(), f.nrows())?;
        mismatch("constraint g length", e.nrows(), g.len())?;
        if !e.iter().chain(f.iter()).chain(g.iter()).all(|v| v.is_finite()) {
            return Err(CostError::NonFinite);
        }
        Ok(Self { e, f, g, relation })
    }

    fn check_dims(&self, nu: usize, nv: usize) -> Result<(), CostError> {
        mismatch("constraint E columns", nu, self.e.ncols())?;
        mismatch("constraint F columns", nv, self.f.ncols())
    }

    /// Largest violation of the perspective `E z + F z′ (=|<=) g y`.
    pub fn violation(&self, z: &[f64], zp: &[f64], y: f64) -> f64 {
        let r = &self.e * Vector::from_column_slice(z) + &self.f * Vector::from_column_slice(zp) - &self.g * y;
        r.iter()
            .map(|v| match self.relation {
                Relation::Eq => v.abs(),
                Relation::Le => v.max(0.0),
            })
            .fold(0.0, f64::max)
    }

    fn push_rows(&self, block: &mut LocalBlock, nu: usize, nv: usize) {
        let dim = nu + nv + 2;
        let rows: Vec<LocalRow> = (0..self.g.len())
            .map(|i| {
                let mut r = LocalRow::zeros(dim);
                for j in 0..nu {
                    r.coeffs[j] = self.e[(i, j)];
                }
                for j in 0..nv {
                    r.coeffs[nu + j] = self.f[(i, j)];
                }
                r.coeffs[nu + nv] = -self.g[i];
                if self.relation == Relation::Le {
                    r.coeffs.neg_mut();
                }
                r
            })
            .collect();
        let kind = match self.relation {
            Relation::Eq => ConeKind::Zero,
            Relation::Le => ConeKind::Nonneg,
        };
        block.push(kind, rows);
    }
}

/// Convex, nonnegative edge lengths `ℓ(x_u, x_v)`.
#[derive(Clone, Debug, PartialEq)]
pub enum EdgeLength {
    /// `‖x_v − x_u‖`.
    Euclidean,
    /// `‖x_v − x_u‖²`.
    SqEuclidean,
    /// `‖C [x_u; x_v] + d‖`.
    Norm2Affine { c: Matrix, d: Vector },
    /// `‖C [x_u; x_v] + d‖²`.
    SqNorm2Affine { c: Matrix, d: Vector },
    /// `c` on the constraint set, `+∞` elsewhere.
    ConstantWithConstraint { c: f64, constraint: Option<AffineEdgeConstraint> },
    /// `‖C [x_u; x_v] + d‖² + c0` on the constraint set, `+∞` elsewhere.
    QuadraticWithConstraint { c: Matrix, d: Vector, c0: f64, constraint: Option<AffineEdgeConstraint> },
}

impl EdgeLength {
    pub fn constant(c: f64, constraint: Option<AffineEdgeConstraint>) -> Result<Self, CostError> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(CostError::NegativeConstant(c));
        }
        Ok(EdgeLength::ConstantWithConstraint { c, constraint })
    }

    pub fn quadratic(c: Matrix, d: Vector, c0: f64, constraint: Option<AffineEdgeConstraint>) -> Result<Self, CostError> {
        if !(c0 >= 0.0) || !c0.is_finite() {
            return Err(CostError::NegativeConstant(c0));
        }
        mismatch("quadratic d length", c.nrows(), d.len())?;
        Ok(EdgeLength::QuadraticWithConstraint { c, d, c0, constraint })
    }

    pub fn norm2_affine(c: Matrix, d: Vector) -> Result<Self, CostError> {
        mismatch("norm d length", c.nrows(), d.len())?;
        Ok(EdgeLength::Norm2Affine { c, d })
    }

    pub fn sq_norm2_affine(c: Matrix, d: Vector) -> Result<Self, CostError> {
        mismatch("norm d length", c.nrows(), d.len())?;
        Ok(EdgeLength::SqNorm2Affine { c, d })
    }

    /// Checks that the length accepts endpoints of dimensions `nu`, `nv`.
    pub fn check_dims(&self, nu: usize, nv: usize) -> Result<(), CostError> {
        match self {
            EdgeLength::Euclidean | EdgeLength::SqEuclidean => mismatch("endpoint dimension", nu, nv),
            EdgeLength::Norm2Affine { c, .. } | EdgeLength::SqNorm2Affine { c, .. } => {
                mismatch("length matrix columns", nu + nv, c.ncols())
            }
            EdgeLength::ConstantWithConstraint { constraint, .. } => {
                constraint.as_ref().map_or(Ok(()), |k| k.check_dims(nu, nv))
            }
            EdgeLength::QuadraticWithConstraint { c, constraint, .. } => {
                mismatch("length matrix columns", nu + nv, c.ncols())?;
                constraint.as_ref().map_or(Ok(()), |k| k.check_dims(nu, nv))
            }
        }
    }

    pub fn constraint(&self) -> Option<&AffineEdgeConstraint> {
        match self {
            EdgeLength::ConstantWithConstraint { constraint, .. }
            | EdgeLength::QuadraticWithConstraint { constraint, .. } => constraint.as_ref(),
            _ => None,
        }
    }

    /// Affine part `C [a; b] + d·y` of the norm-based variants.
    fn affine(&self, a: &[f64], b: &[f64], y: f64) -> Option<Vector> {
        match self {
            EdgeLength::Euclidean | EdgeLength::SqEuclidean => {
                Some(Vector::from_iterator(a.len(), a.iter().zip(b).map(|(p, q)| q - p)))
            }
            EdgeLength::Norm2Affine { c, d }
            | EdgeLength::SqNorm2Affine { c, d }
            | EdgeLength::QuadraticWithConstraint { c, d, .. } => {
                let stacked = Vector::from_iterator(a.len() + b.len(), a.iter().chain(b).copied());
                Some(c * stacked + d * y)
            }
            EdgeLength::ConstantWithConstraint { .. } => None,
        }
    }

    pub fn evaluate(&self, xu: &[f64], xv: &[f64]) -> Result<f64, CostError> {
        self.evaluate_with_tol(xu, xv, CONSTRAINT_TOL)
    }

    /// Value of the length, `+∞` when the edge constraint is violated by
    /// more than `tol`.
    pub fn evaluate_with_tol(&self, xu: &[f64], xv: &[f64], tol: f64) -> Result<f64, CostError> {
        self.check_dims(xu.len(), xv.len())?;
        if let Some(k) = self.constraint() {
            if k.violation(xu, xv, 1.0) > tol {
                return Ok(f64::INFINITY);
            }
        }
        Ok(match self {
            EdgeLength::Euclidean | EdgeLength::Norm2Affine { .. } => self.affine(xu, xv, 1.0).unwrap().norm(),
            EdgeLength::SqEuclidean | EdgeLength::SqNorm2Affine { .. } => {
                self.affine(xu, xv, 1.0).unwrap().norm_squared()
            }
            EdgeLength::ConstantWithConstraint { c, .. } => *c,
            EdgeLength::QuadraticWithConstraint { c0, .. } => self.affine(xu, xv, 1.0).unwrap().norm_squared() + c0,
        })
    }

    /// Closed-form perspective `y ℓ(z/y, z′/y)`, closed at `y = 0` by the
    /// recession function.
    pub fn perspective_value(&self, z: &[f64], zp: &[f64], y: f64, tol: f64) -> Result<f64, CostError> {
        self.check_dims(z.len(), zp.len())?;
        if y < -tol {
            return Ok(f64::INFINITY);
        }
        let y = y.max(0.0);
        if let Some(k) = self.constraint() {
            if k.violation(z, zp, y) > tol {
                return Ok(f64::INFINITY);
            }
        }
        let sq = |w: Vector| -> f64 {
            let n2 = w.norm_squared();
            if y > 0.0 {
                n2 / y
            } else if n2.sqrt() <= tol {
                0.0
            } else {
                f64::INFINITY
            }
        };
        Ok(match self {
            EdgeLength::Euclidean | EdgeLength::Norm2Affine { .. } => self.affine(z, zp, y).unwrap().norm(),
            EdgeLength::SqEuclidean | EdgeLength::SqNorm2Affine { .. } => sq(self.affine(z, zp, y).unwrap()),
            EdgeLength::ConstantWithConstraint { c, .. } => c * y,
            EdgeLength::QuadraticWithConstraint { c0, .. } => sq(self.affine(z, zp, y).unwrap()) + c0 * y,
        })
    }

    /// Rows `C [z; z′] + d y` over the local epigraph variables.
    fn affine_rows(&self, nu: usize, nv: usize) -> Vec<LocalRow> {
        let dim = nu + nv + 2;
        let y = nu + nv;
        match self {
            EdgeLength::Euclidean | EdgeLength::SqEuclidean => (0..nu)
                .map(|i| {
                    let mut r = LocalRow::unit(dim, nu + i, 1.0);
                    r.coeffs[i] = -1.0;
                    r
                })
                .collect(),
            EdgeLength::Norm2Affine { c, d }
            | EdgeLength::SqNorm2Affine { c, d }
            | EdgeLength::QuadraticWithConstraint { c, d, .. } => (0..c.nrows())
                .map(|i| {
                    let mut r = LocalRow::zeros(dim);
                    for j in 0..nu + nv {
                        r.coeffs[j] = c[(i, j)];
                    }
                    r.coeffs[y] = d[i];
                    r
                })
                .collect(),
            EdgeLength::ConstantWithConstraint { .. } => Vec::new(),
        }
    }

    /// Conic block whose feasible `(z, z′, y, t)` satisfy `t >= ℓ̃(z, z′, y)`,
    /// the perspective of the edge constraint, and `y >= 0`.
    pub fn perspective_epigraph(&self, nu: usize, nv: usize) -> Result<LocalBlock, CostError> {
        self.check_dims(nu, nv)?;
        let dim = nu + nv + 2;
        let (y, t) = (nu + nv, nu + nv + 1);
        let mut block = LocalBlock::new(dim);
        match self {
            EdgeLength::Euclidean | EdgeLength::Norm2Affine { .. } => {
                let mut rows = vec![LocalRow::unit(dim, t, 1.0)];
                rows.extend(self.affine_rows(nu, nv));
                block.push(ConeKind::SecondOrder, rows);
            }
            EdgeLength::SqEuclidean | EdgeLength::SqNorm2Affine { .. } => {
                let mut rows = vec![LocalRow::unit(dim, t, 1.0), LocalRow::unit(dim, y, 1.0)];
                rows.extend(self.affine_rows(nu, nv));
                block.push(ConeKind::RotatedSecondOrder, rows);
            }
            EdgeLength::ConstantWithConstraint { c, constraint } => {
                let mut r = LocalRow::unit(dim, t, 1.0);
                r.coeffs[y] = -c;
                block.push(ConeKind::Nonneg, vec![r]);
                if let Some(k) = constraint {
                    k.push_rows(&mut block, nu, nv);
                }
            }
            EdgeLength::QuadraticWithConstraint { c0, constraint, .. } => {
                let mut head = LocalRow::unit(dim, t, 1.0);
                head.coeffs[y] = -c0;
                let mut rows = vec![head, LocalRow::unit(dim, y, 1.0)];
                rows.extend(self.affine_rows(nu, nv));
                block.push(ConeKind::RotatedSecondOrder, rows);
                if let Some(k) = constraint {
                    k.push_rows(&mut block, nu, nv);
                }
            }
        }
        block.push(ConeKind::Nonneg, vec![LocalRow::unit(dim, y, 1.0)]);
        Ok(block)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{AffExpr, ConicProgram, RowTag, ToleranceConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Minimal feasible t of the epigraph block at fixed (z, z′, y), by a
    /// conic solve; `None` when infeasible.
    fn min_t(len: &EdgeLength, z: &[f64], zp: &[f64], y: f64) -> Option<f64> {
        let (nu, nv) = (z.len(), zp.len());
        let block = len.perspective_epigraph(nu, nv).unwrap();
        let mut prog = ConicProgram::new(1);
        prog.set_objective(0, 1.0);
        let mut vars: Vec<AffExpr> = z.iter().chain(zp).map(|&v| AffExpr::constant(v)).collect();
        vars.push(AffExpr::constant(y));
        vars.push(AffExpr::var(0));
        prog.add_local(&block, &vars, RowTag::default());
        let sol = prog.solve(&ToleranceConfig::default());
        sol.is_optimal().then_some(sol.objective)
    }

    fn integrator() -> EdgeLength {
        // s_v = s_u + a_u on x = (s, a).
        let k = AffineEdgeConstraint::new(
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[-1.0, 0.0]),
            Vector::zeros(1),
            Relation::Eq,
        )
        .unwrap();
        EdgeLength::constant(1.0, Some(k)).unwrap()
    }

    fn variety() -> Vec<EdgeLength> {
        let c = Matrix::from_row_slice(2, 4, &[1.0, 0.0, -1.0, 0.5, 0.0, 2.0, 0.0, -1.0]);
        let d = Vector::from_vec(vec![0.3, -0.2]);
        let k = AffineEdgeConstraint::new(
            Matrix::from_row_slice(1, 2, &[1.0, 1.0]),
            Matrix::from_row_slice(1, 2, &[0.0, -1.0]),
            Vector::from_vec(vec![0.5]),
            Relation::Le,
        )
        .unwrap();
        vec![
            EdgeLength::Euclidean,
            EdgeLength::SqEuclidean,
            EdgeLength::norm2_affine(c.clone(), d.clone()).unwrap(),
            EdgeLength::sq_norm2_affine(c.clone(), d.clone()).unwrap(),
            EdgeLength::constant(0.7, Some(k.clone())).unwrap(),
            EdgeLength::quadratic(c, d, 0.4, Some(k)).unwrap(),
        ]
    }

    #[test]
    fn evaluate_examples() {
        let (a, b) = ([0.0, 0.0], [3.0, 4.0]);
        assert_abs_diff_eq!(EdgeLength::Euclidean.evaluate(&a, &b).unwrap(), 5.0);
        assert_abs_diff_eq!(EdgeLength::SqEuclidean.evaluate(&a, &b).unwrap(), 25.0);
        assert_eq!(integrator().evaluate(&[1.0, 1.0], &[3.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(integrator().evaluate(&[1.0, 1.0], &[2.0, 0.0]).unwrap(), 1.0);
        assert!(EdgeLength::Euclidean.evaluate(&[0.0], &b).is_err());
    }

    #[test]
    fn negative_constants_rejected() {
        assert!(EdgeLength::constant(-1.0, None).is_err());
        assert!(EdgeLength::quadratic(Matrix::zeros(1, 2), Vector::zeros(1), -0.1, None).is_err());
    }

    #[test]
    fn epigraph_examples() {
        let sq = EdgeLength::SqEuclidean;
        assert_abs_diff_eq!(min_t(&sq, &[0.0], &[1.0], 1.0).unwrap(), 1.0, epsilon = 1e-7);
        assert_abs_diff_eq!(min_t(&sq, &[0.0], &[0.5], 0.5).unwrap(), 0.5, epsilon = 1e-7);
        assert_abs_diff_eq!(min_t(&EdgeLength::Euclidean, &[0.0, 0.0], &[3.0, 4.0], 1.0).unwrap(), 5.0, epsilon = 1e-7);
        assert!(min_t(&integrator(), &[1.0, 1.0], &[3.0, 0.0], 1.0).is_none());
        assert_abs_diff_eq!(min_t(&integrator(), &[2.0, 2.0], &[4.0, 0.0], 2.0).unwrap(), 2.0, epsilon = 1e-7);
    }

    #[test]
    fn zero_point_admits_zero_epigraph() {
        for len in variety() {
            let block = len.perspective_epigraph(2, 2).unwrap();
            assert!(block.is_feasible(&[0.0; 6], 0.0), "{len:?}");
        }
    }

    #[test]
    fn squared_norm_closure_at_zero_flow() {
        let block = EdgeLength::SqEuclidean.perspective_epigraph(1, 1).unwrap();
        assert!(!block.is_feasible(&[0.0, 1.0, 0.0, 100.0], 1e-9));
        assert_eq!(EdgeLength::SqEuclidean.perspective_value(&[0.0], &[1.0], 0.0, 1e-9).unwrap(), f64::INFINITY);
    }

    proptest! {
        #[test]
        fn epigraph_slice_and_scaling(idx in 0usize..6, xs in proptest::collection::vec(-1.0f64..1.0, 4), y in 0.1f64..3.0) {
            let len = &variety()[idx];
            let (xu, xv) = (&xs[..2], &xs[2..]);
            let value = len.evaluate(xu, xv).unwrap();
            let z: Vec<f64> = xu.iter().map(|v| v * y).collect();
            let zp: Vec<f64> = xv.iter().map(|v| v * y).collect();
            let closed = len.perspective_value(&z, &zp, y, 1e-9).unwrap();
            // Skip points sitting on the constraint boundary.
            let margin = len.constraint().map_or(1.0, |k| {
                let r = &k.e * Vector::from_column_slice(xu) + &k.f * Vector::from_column_slice(xv) - &k.g;
                r.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min)
            });
            prop_assume!(margin > 1e-4);
            match min_t(len, &z, &zp, y) {
                Some(t) => {
                    prop_assert!(value.is_finite());
                    prop_assert!((t - y * value).abs() <= 1e-6 * (1.0 + y * value));
                    prop_assert!((closed - y * value).abs() <= 1e-9 * (1.0 + closed.abs()));
                    prop_assert!(t >= -1e-7);
                }
                None => {
                    prop_assert!(value.is_infinite());
                    prop_assert!(closed.is_infinite());
                }
            }
        }
    }
}
