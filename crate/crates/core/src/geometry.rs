//! Compact convex sets and their perspective cones.

use rand::Rng;
use thiserror::Error;

use crate::conic::{AffExpr, ConeKind, ConicProgram, LocalBlock, LocalRow, RowTag, SolveStatus, ToleranceConfig};
use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("set must have dimension at least 1")]
    ZeroDimension,
    #[error("box bounds are inverted at coordinate {0}")]
    InvertedBox(usize),
    #[error("polyhedron is empty")]
    Empty,
    #[error("polyhedron is unbounded along coordinate {0}")]
    Unbounded(usize),
    #[error("ellipsoid matrix must have full column rank")]
    RankDeficient,
    #[error("non-finite data")]
    NonFinite,
    #[error("product must have at least one factor")]
    EmptyProduct,
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("support computation failed")]
    NumericalFailure,
}

/// A nonempty compact convex set.
///
/// Build values through the checked constructors; they reject empty or
/// unbounded data.
#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    Singleton { theta: Vector },
    Box { lo: Vector, hi: Vector },
    /// `{x : A x <= b}`.
    Polyhedron { a: Matrix, b: Vector },
    /// `{x : ‖A x + b‖ <= 1}`.
    Ellipsoid { a: Matrix, b: Vector },
    Product(Vec<ConvexSet>),
}

fn finite(values: impl IntoIterator<Item = f64>) -> Result<(), GeometryError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(GeometryError::NonFinite)
    }
}

impl ConvexSet {
    pub fn singleton(theta: Vector) -> Result<Self, GeometryError> {
        if theta.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        finite(theta.iter().copied())?;
        Ok(ConvexSet::Singleton { theta })
    }

    pub fn point(theta: &[f64]) -> Result<Self, GeometryError> {
        Self::singleton(Vector::from_column_slice(theta))
    }

    pub fn boxed(lo: Vector, hi: Vector) -> Result<Self, GeometryError> {
        if lo.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        finite(lo.iter().chain(hi.iter()).copied())?;
        if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
            return Err(GeometryError::InvertedBox(i));
        }
        Ok(ConvexSet::Box { lo, hi })
    }

    pub fn interval_box(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        Self::boxed(Vector::from_column_slice(lo), Vector::from_column_slice(hi))
    }

    /// Axis-aligned cube with the given center and side length.
    pub fn cube(center: &Vector, side: f64) -> Result<Self, GeometryError> {
        let h = Vector::repeat(center.len(), side / 2.0);
        Self::boxed(center - &h, center + &h)
    }

    pub fn polyhedron(a: Matrix, b: Vector) -> Result<Self, GeometryError> {
        if a.ncols() == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        finite(a.iter().chain(b.iter()).copied())?;
        let set = ConvexSet::Polyhedron { a, b };
        set.polyhedron_bounds()?;
        Ok(set)
    }

    pub fn ellipsoid(a: Matrix, b: Vector) -> Result<Self, GeometryError> {
        if a.ncols() == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        if a.nrows() != b.len() {
            return Err(GeometryError::DimensionMismatch { expected: a.nrows(), got: b.len() });
        }
        finite(a.iter().chain(b.iter()).copied())?;
        if a.nrows() < a.ncols() || a.clone().svd(false, false).rank(1e-10) < a.ncols() {
            return Err(GeometryError::RankDeficient);
        }
        let set = ConvexSet::Ellipsoid { a, b };
        let c = set.chebyshev_center();
        if let ConvexSet::Ellipsoid { a, b } = &set {
            if (a * &c + b).norm() > 1.0 + 1e-12 {
                return Err(GeometryError::Empty);
            }
        }
        Ok(set)
    }

    /// Euclidean ball of the given center and radius.
    pub fn ball(center: &Vector, radius: f64) -> Result<Self, GeometryError> {
        if !(radius > 0.0) {
            return Err(GeometryError::RankDeficient);
        }
        let n = center.len();
        let a = Matrix::identity(n, n) / radius;
        let b = -center / radius;
        Self::ellipsoid(a, b)
    }

    pub fn product(factors: Vec<ConvexSet>) -> Result<Self, GeometryError> {
        if factors.is_empty() {
            return Err(GeometryError::EmptyProduct);
        }
        Ok(ConvexSet::Product(factors))
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::Singleton { theta } => theta.len(),
            ConvexSet::Box { lo, .. } => lo.len(),
            ConvexSet::Polyhedron { a, .. } | ConvexSet::Ellipsoid { a, .. } => a.ncols(),
            ConvexSet::Product(fs) => fs.iter().map(ConvexSet::dim).sum(),
        }
    }

    /// The unique point of the set, if the set is a point.
    pub fn as_point(&self) -> Option<Vector> {
        match self {
            ConvexSet::Singleton { theta } => Some(theta.clone()),
            ConvexSet::Box { lo, hi } if lo == hi => Some(lo.clone()),
            ConvexSet::Product(fs) => {
                let parts: Option<Vec<Vector>> = fs.iter().map(ConvexSet::as_point).collect();
                parts.map(|p| concat(&p))
            }
            _ => None,
        }
    }

    fn check_dim(&self, got: usize) -> Result<(), GeometryError> {
        let expected = self.dim();
        if expected == got {
            Ok(())
        } else {
            Err(GeometryError::DimensionMismatch { expected, got })
        }
    }

    /// Membership with additive slack `tol` on every defining row.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, GeometryError> {
        self.check_dim(x.len())?;
        Ok(self.contains_unchecked(x, tol))
    }

    fn contains_unchecked(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConvexSet::Singleton { theta } => theta.iter().zip(x).all(|(t, v)| (t - v).abs() <= tol),
            ConvexSet::Box { lo, hi } => (0..lo.len()).all(|i| x[i] >= lo[i] - tol && x[i] <= hi[i] + tol),
            ConvexSet::Polyhedron { a, b } => {
                let xv = Vector::from_column_slice(x);
                let ax = a * xv;
                (0..b.len()).all(|i| ax[i] <= b[i] + tol)
            }
            ConvexSet::Ellipsoid { a, b } => {
                let xv = Vector::from_column_slice(x);
                (a * xv + b).norm() <= 1.0 + tol
            }
            ConvexSet::Product(fs) => {
                let mut off = 0;
                fs.iter().all(|f| {
                    let d = f.dim();
                    let ok = f.contains_unchecked(&x[off..off + d], tol);
                    off += d;
                    ok
                })
            }
        }
    }

    /// Conic description of the perspective cone over local variables
    /// `(x, λ)`, with `λ` stored last.
    pub fn perspective(&self) -> LocalBlock {
        let n = self.dim();
        let mut block = LocalBlock::new(n + 1);
        self.emit_perspective(&mut block, 0, n);
        block.push(ConeKind::Nonneg, vec![LocalRow::unit(n + 1, n, 1.0)]);
        block
    }

    fn emit_perspective(&self, block: &mut LocalBlock, off: usize, lam: usize) {
        let dim = block.dim();
        match self {
            ConvexSet::Singleton { theta } => {
                let rows = (0..theta.len())
                    .map(|i| {
                        let mut r = LocalRow::unit(dim, off + i, 1.0);
                        r.coeffs[lam] = -theta[i];
                        r
                    })
                    .collect();
                block.push(ConeKind::Zero, rows);
            }
            ConvexSet::Box { lo, hi } => {
                let mut rows = Vec::with_capacity(2 * lo.len());
                for i in 0..lo.len() {
                    if lo[i] == hi[i] {
                        let mut r = LocalRow::unit(dim, off + i, 1.0);
                        r.coeffs[lam] = -lo[i];
                        block.push(ConeKind::Zero, vec![r]);
                        continue;
                    }
                    let mut lower = LocalRow::unit(dim, off + i, 1.0);
                    lower.coeffs[lam] = -lo[i];
                    let mut upper = LocalRow::unit(dim, off + i, -1.0);
                    upper.coeffs[lam] = hi[i];
                    rows.push(lower);
                    rows.push(upper);
                }
                block.push(ConeKind::Nonneg, rows);
            }
            ConvexSet::Polyhedron { a, b } => {
                let rows = (0..a.nrows())
                    .map(|i| {
                        let mut r = LocalRow::zeros(dim);
                        for j in 0..a.ncols() {
                            r.coeffs[off + j] = -a[(i, j)];
                        }
                        r.coeffs[lam] = b[i];
                        r
                    })
                    .collect();
                block.push(ConeKind::Nonneg, rows);
            }
            ConvexSet::Ellipsoid { a, b } => {
                let mut rows = vec![LocalRow::unit(dim, lam, 1.0)];
                for i in 0..a.nrows() {
                    let mut r = LocalRow::zeros(dim);
                    for j in 0..a.ncols() {
                        r.coeffs[off + j] = a[(i, j)];
                    }
                    r.coeffs[lam] = b[i];
                    rows.push(r);
                }
                block.push(ConeKind::SecondOrder, rows);
            }
            ConvexSet::Product(fs) => {
                let mut o = off;
                for f in fs {
                    f.emit_perspective(block, o, lam);
                    o += f.dim();
                }
            }
        }
    }

    /// Emits `(x, λ) ∈ X̃` into `prog` for program-space expressions.
    pub fn add_perspective_to(&self, prog: &mut ConicProgram, x: &[AffExpr], lambda: &AffExpr, tag: RowTag) {
        assert_eq!(x.len(), self.dim());
        let mut vars = x.to_vec();
        vars.push(lambda.clone());
        prog.add_local(&self.perspective(), &vars, tag);
    }

    /// Center of a largest inscribed ball. For ellipsoids this is the
    /// minimizer of `‖A x + b‖`.
    pub fn chebyshev_center(&self) -> Vector {
        match self {
            ConvexSet::Singleton { theta } => theta.clone(),
            ConvexSet::Box { lo, hi } => (lo + hi) / 2.0,
            ConvexSet::Polyhedron { a, b } => chebyshev_lp(a, b).map(|(c, _)| c).unwrap_or_else(|| {
                // Unreachable for validated sets; fall back to the support-box midpoint.
                let (lo, hi) = self.bounding_box();
                (lo + hi) / 2.0
            }),
            ConvexSet::Ellipsoid { a, b } => {
                let svd = a.clone().svd(true, true);
                svd.solve(&(-b), 1e-14).unwrap_or_else(|_| Vector::zeros(a.ncols()))
            }
            ConvexSet::Product(fs) => concat(&fs.iter().map(ConvexSet::chebyshev_center).collect::<Vec<_>>()),
        }
    }

    /// A maximizer of `dᵀx` over the set.
    pub fn support_point(&self, d: &Vector) -> Result<Vector, GeometryError> {
        let n = self.dim();
        if d.len() != n {
            return Err(GeometryError::DimensionMismatch { expected: n, got: d.len() });
        }
        if let Some(theta) = self.as_point() {
            return Ok(theta);
        }
        let mut prog = ConicProgram::new(n);
        for i in 0..n {
            prog.set_objective(i, -d[i]);
        }
        let x: Vec<AffExpr> = (0..n).map(AffExpr::var).collect();
        self.add_perspective_to(&mut prog, &x, &AffExpr::constant(1.0), RowTag::default());
        let sol = prog.solve_retrying(&ToleranceConfig::default());
        match sol.status {
            SolveStatus::Optimal => Ok(Vector::from_column_slice(&sol.primal)),
            SolveStatus::Infeasible => Err(GeometryError::Empty),
            _ => Err(GeometryError::NumericalFailure),
        }
    }

    /// Tight axis-aligned bounds `(lo, hi)`.
    pub fn bounding_box(&self) -> (Vector, Vector) {
        match self {
            ConvexSet::Singleton { theta } => (theta.clone(), theta.clone()),
            ConvexSet::Box { lo, hi } => (lo.clone(), hi.clone()),
            ConvexSet::Polyhedron { .. } => self.polyhedron_bounds().unwrap_or_else(|_| {
                let c = self.chebyshev_center();
                (c.clone(), c)
            }),
            ConvexSet::Ellipsoid { a, b } => {
                let c = self.chebyshev_center();
                let r0 = a * &c + b;
                let rho = (1.0 - r0.norm_squared()).max(0.0).sqrt();
                let gram = a.transpose() * a;
                let inv = gram.try_inverse().unwrap_or_else(|| Matrix::zeros(a.ncols(), a.ncols()));
                let half = Vector::from_iterator(c.len(), (0..c.len()).map(|i| rho * inv[(i, i)].max(0.0).sqrt()));
                (&c - &half, &c + &half)
            }
            ConvexSet::Product(fs) => {
                let (los, his): (Vec<Vector>, Vec<Vector>) = fs.iter().map(ConvexSet::bounding_box).unzip();
                (concat(&los), concat(&his))
            }
        }
    }

    fn polyhedron_bounds(&self) -> Result<(Vector, Vector), GeometryError> {
        let ConvexSet::Polyhedron { a, b } = self else {
            unreachable!("polyhedron_bounds on a non-polyhedron");
        };
        let n = a.ncols();
        let mut lo = Vector::zeros(n);
        let mut hi = Vector::zeros(n);
        for i in 0..n {
            for sign in [1.0, -1.0] {
                let mut prog = ConicProgram::new(n);
                prog.set_objective(i, -sign);
                add_halfspaces(&mut prog, a, b, &(0..n).map(AffExpr::var).collect::<Vec<_>>());
                let sol = prog.solve(&ToleranceConfig::default());
                match sol.status {
                    SolveStatus::Optimal => {}
                    SolveStatus::Infeasible => return Err(GeometryError::Empty),
                    SolveStatus::Unbounded => return Err(GeometryError::Unbounded(i)),
                    SolveStatus::NumericalFailure => return Err(GeometryError::NumericalFailure),
                }
                if sign > 0.0 {
                    hi[i] = sol.primal[i];
                } else {
                    lo[i] = sol.primal[i];
                }
            }
        }
        Ok((lo, hi))
    }

    /// Image of the set under `x ↦ center + σ (x − center)`.
    pub fn scale(&self, sigma: f64, center: &Vector) -> Result<ConvexSet, GeometryError> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(GeometryError::NonPositiveScale(sigma));
        }
        self.check_dim(center.len())?;
        let map = |p: &Vector| center + (p - center) * sigma;
        Ok(match self {
            ConvexSet::Singleton { theta } => ConvexSet::Singleton { theta: map(theta) },
            ConvexSet::Box { lo, hi } => ConvexSet::Box { lo: map(lo), hi: map(hi) },
            ConvexSet::Polyhedron { a, b } => {
                let ac = a * center;
                ConvexSet::Polyhedron { a: a.clone(), b: b * sigma + ac * (1.0 - sigma) }
            }
            ConvexSet::Ellipsoid { a, b } => {
                let ac = a * center;
                ConvexSet::Ellipsoid { a: a / sigma, b: b + ac * (1.0 - 1.0 / sigma) }
            }
            ConvexSet::Product(fs) => {
                let mut off = 0;
                let mut out = Vec::with_capacity(fs.len());
                for f in fs {
                    let d = f.dim();
                    let c = center.rows(off, d).into_owned();
                    out.push(f.scale(sigma, &c)?);
                    off += d;
                }
                ConvexSet::Product(out)
            }
        })
    }

    /// Precomputes what repeated sampling needs.
    pub fn sampler(&self) -> SetSampler<'_> {
        let (lo, hi) = self.bounding_box();
        SetSampler { set: self, lo, hi, center: self.chebyshev_center() }
    }
}

/// Draws points of a set: uniform in its bounding box, pulled toward the
/// center by bisection when the draw falls outside. Boundary points are
/// reached with positive probability.
pub struct SetSampler<'a> {
    set: &'a ConvexSet,
    lo: Vector,
    hi: Vector,
    center: Vector,
}

impl SetSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        let n = self.lo.len();
        let p = Vector::from_iterator(
            n,
            (0..n).map(|i| if self.hi[i] > self.lo[i] { rng.gen_range(self.lo[i]..=self.hi[i]) } else { self.lo[i] }),
        );
        if self.set.contains_unchecked(p.as_slice(), 0.0) {
            return p;
        }
        let dir = &p - &self.center;
        let (mut good, mut bad) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (good + bad);
            let q = &self.center + &dir * mid;
            if self.set.contains_unchecked(q.as_slice(), 0.0) {
                good = mid;
            } else {
                bad = mid;
            }
        }
        &self.center + dir * good
    }
}

pub(crate) fn concat(parts: &[Vector]) -> Vector {
    let n = parts.iter().map(|p| p.len()).sum();
    Vector::from_iterator(n, parts.iter().flat_map(|p| p.iter().copied()))
}

fn add_halfspaces(prog: &mut ConicProgram, a: &Matrix, b: &Vector, x: &[AffExpr]) {
    let rows = (0..a.nrows())
        .map(|i| {
            let mut e = AffExpr::constant(b[i]);
            for j in 0..a.ncols() {
                e.add_scaled(&x[j], -a[(i, j)]);
            }
            e
        })
        .collect();
    prog.add_block(ConeKind::Nonneg, rows, RowTag::default());
}

/// Chebyshev LP: max r s.t. a_iᵀx + ‖a_i‖ r <= b_i, r >= 0.
fn chebyshev_lp(a: &Matrix, b: &Vector) -> Option<(Vector, f64)> {
    let n = a.ncols();
    let mut prog = ConicProgram::new(n + 1);
    prog.set_objective(n, -1.0);
    let rows = (0..a.nrows())
        .map(|i| {
            let mut e = AffExpr::constant(b[i]);
            for j in 0..n {
                e.add_term(j, -a[(i, j)]);
            }
            e.add_term(n, -a.row(i).norm());
            e
        })
        .collect();
    prog.add_block(ConeKind::Nonneg, rows, RowTag::default());
    prog.add_block(ConeKind::Nonneg, vec![AffExpr::var(n)], RowTag::default());
    let sol = prog.solve(&ToleranceConfig::default());
    sol.is_optimal().then(|| (Vector::from_column_slice(&sol.primal[..n]), sol.primal[n]))
}
