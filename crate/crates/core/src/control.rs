//! Optimal control problems posed as shortest paths.
//!
//! Minimum time: a chain of vertices `v_0, ..., v_{T−1}` with sets
//! `S × A` (the first pinned to `s_0`) plus a target `{(0, 0)}`; every edge
//! costs one step and enforces the dynamics. Piecewise affine: `T` layers
//! of one vertex per mode, so a path picks a mode per time step.
//!
//! Vertex positions are `(s, a)` pairs; the control at the target and the
//! source of the layered graph is pinned to zero.

use std::fmt::Write as _;

use thiserror::Error;

use crate::costs::{AffineEdgeConstraint, CostError, EdgeLength, Relation};
use crate::geometry::{ConvexSet, GeometryError};
use crate::graph::{Gcs, GcsBuilder, GcsError, PathResult};
use crate::{Matrix, Vector};

/// Slack when checking that `s_0` lies in a set.
const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("initial state is not in the state set")]
    InitialStateOutside,
    #[error("initial state lies in no mode region")]
    NoInitialMode,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("need at least one mode")]
    NoModes,
    #[error("path does not come from this encoding: {0}")]
    ForeignPath(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Graph(#[from] GcsError),
}

fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<(), ControlError> {
    if ok {
        Ok(())
    } else {
        Err(ControlError::Dimension(what()))
    }
}

/// `s⁺ = A s + B a` with `s ∈ S`, `a ∈ A`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub a: Matrix,
    pub b: Matrix,
    pub state_set: ConvexSet,
    pub control_set: ConvexSet,
    pub s0: Vector,
}

impl LinearSystem {
    pub fn new(a: Matrix, b: Matrix, state_set: ConvexSet, control_set: ConvexSet, s0: Vector) -> Result<Self, ControlError> {
        let q = a.nrows();
        dim_check(a.ncols() == q, || format!("A is {}x{}", a.nrows(), a.ncols()))?;
        dim_check(b.nrows() == q, || format!("B has {} rows, expected {q}", b.nrows()))?;
        dim_check(state_set.dim() == q, || format!("state set has dimension {}", state_set.dim()))?;
        dim_check(control_set.dim() == b.ncols(), || format!("control set has dimension {}", control_set.dim()))?;
        dim_check(s0.len() == q, || format!("s0 has length {}", s0.len()))?;
        if !state_set.contains(s0.as_slice(), MEMBERSHIP_TOL)? {
            return Err(ControlError::InitialStateOutside);
        }
        Ok(Self { a, b, state_set, control_set, s0 })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.b.ncols()
    }
}

/// `E [s; a] + F [s′; a′] = g` encoding `s′ = A s + B a + c`.
fn dynamics_constraint(a: &Matrix, b: &Matrix, c: &Vector) -> Result<AffineEdgeConstraint, ControlError> {
    let (q, r) = (a.nrows(), b.ncols());
    let mut e = Matrix::zeros(q, q + r);
    e.view_mut((0, 0), (q, q)).copy_from(a);
    e.view_mut((0, q), (q, r)).copy_from(b);
    let mut f = Matrix::zeros(q, q + r);
    f.view_mut((0, 0), (q, q)).fill_with_identity();
    f.view_mut((0, 0), (q, q)).neg_mut();
    Ok(AffineEdgeConstraint::new(e, f, -c, Relation::Eq)?)
}

fn pinned(point: &Vector, control_dim: usize) -> Result<ConvexSet, GeometryError> {
    ConvexSet::product(vec![ConvexSet::singleton(point.clone())?, ConvexSet::singleton(Vector::zeros(control_dim))?])
}

pub fn min_time_vertex(k: usize) -> String {
    format!("v{k}")
}

pub fn build_min_time_gcs(sys: &LinearSystem, t_max: usize) -> Result<Gcs, ControlError> {
    if t_max < 1 {
        return Err(ControlError::ZeroHorizon);
    }
    let (q, r) = (sys.state_dim(), sys.control_dim());
    let step = EdgeLength::constant(1.0, Some(dynamics_constraint(&sys.a, &sys.b, &Vector::zeros(q))?))?;
    let mut b = GcsBuilder::new();
    b.vertex(
        min_time_vertex(0),
        ConvexSet::product(vec![ConvexSet::singleton(sys.s0.clone())?, sys.control_set.clone()])?,
    );
    for k in 1..t_max {
        b.vertex(min_time_vertex(k), ConvexSet::product(vec![sys.state_set.clone(), sys.control_set.clone()])?);
    }
    b.vertex("t", ConvexSet::singleton(Vector::zeros(q + r))?);
    for k in 0..t_max {
        if k + 1 < t_max {
            b.edge(min_time_vertex(k), min_time_vertex(k + 1), step.clone());
        }
        b.edge(min_time_vertex(k), "t", step.clone());
    }
    Ok(b.build(&min_time_vertex(0), "t")?)
}

/// States `s_0..s_T`, controls `a_0..a_{T−1}`, and the mode used at each
/// step when the system has several.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub modes: Vec<usize>,
    pub cost: f64,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Rows `τ, s..., a...`; the final state has an empty control.
    pub fn to_csv(&self) -> String {
        let q = self.states.first().map_or(0, |s| s.len());
        let r = self.controls.first().map_or(0, |a| a.len());
        let mut out = String::from("tau");
        for i in 0..q {
            write!(out, ",s{i}").unwrap();
        }
        for i in 0..r {
            write!(out, ",a{i}").unwrap();
        }
        out.push('\n');
        for (tau, s) in self.states.iter().enumerate() {
            write!(out, "{tau}").unwrap();
            for v in s.iter() {
                write!(out, ",{v}").unwrap();
            }
            for i in 0..r {
                match self.controls.get(tau) {
                    Some(a) => write!(out, ",{}", a[i]).unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

fn split(x: &Vector, q: usize) -> (Vector, Vector) {
    (x.rows(0, q).into_owned(), x.rows(q, x.len() - q).into_owned())
}

/// `a_τ = a_{v_τ}`; the horizon is the number of edges.
pub fn extract_min_time(sys: &LinearSystem, path: &PathResult) -> Trajectory {
    let q = sys.state_dim();
    let mut states = Vec::new();
    let mut controls = Vec::new();
    for (i, x) in path.positions.iter().enumerate() {
        let (s, a) = split(x, q);
        states.push(s);
        if i + 1 < path.positions.len() {
            controls.push(a);
        }
    }
    Trajectory { states, controls, modes: Vec::new(), cost: path.cost }
}

/// Largest `‖s_{τ+1} − A s_τ − B a_τ‖∞` along the trajectory.
pub fn min_time_residual(sys: &LinearSystem, traj: &Trajectory) -> f64 {
    (0..traj.horizon())
        .map(|k| (&traj.states[k + 1] - &sys.a * &traj.states[k] - &sys.b * &traj.controls[k]).amax())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaMode {
    pub region: ConvexSet,
    pub a: Matrix,
    pub b: Matrix,
    pub c: Vector,
}

/// `‖C [s; a] + d‖² + c0`, or `‖C s + d‖² + c0` for a terminal cost.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticCost {
    pub c: Matrix,
    pub d: Vector,
    pub c0: f64,
}

impl QuadraticCost {
    pub fn zero(dim: usize) -> Self {
        Self { c: Matrix::zeros(0, dim), d: Vector::zeros(0), c0: 0.0 }
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        (&self.c * x + &self.d).norm_squared() + self.c0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PwaSystem {
    pub modes: Vec<PwaMode>,
    pub control_set: ConvexSet,
    pub stage_cost: QuadraticCost,
    pub horizon: usize,
    pub s0: Vector,
    pub terminal_set: ConvexSet,
    pub terminal_cost: Option<QuadraticCost>,
}

impl PwaSystem {
    /// Checks dimensions and that `s_0` lies in some region. A missing
    /// terminal set defaults to the origin.
    pub fn new(
        modes: Vec<PwaMode>,
        control_set: ConvexSet,
        stage_cost: QuadraticCost,
        horizon: usize,
        s0: Vector,
        terminal_set: Option<ConvexSet>,
        terminal_cost: Option<QuadraticCost>,
    ) -> Result<Self, ControlError> {
        let first = modes.first().ok_or(ControlError::NoModes)?;
        let (q, r) = (first.a.nrows(), first.b.ncols());
        if horizon < 1 {
            return Err(ControlError::ZeroHorizon);
        }
        for (i, m) in modes.iter().enumerate() {
            dim_check(m.a.shape() == (q, q), || format!("mode {i}: A is {:?}", m.a.shape()))?;
            dim_check(m.b.shape() == (q, r), || format!("mode {i}: B is {:?}", m.b.shape()))?;
            dim_check(m.c.len() == q, || format!("mode {i}: c has length {}", m.c.len()))?;
            dim_check(m.region.dim() == q, || format!("mode {i}: region has dimension {}", m.region.dim()))?;
        }
        dim_check(control_set.dim() == r, || format!("control set has dimension {}", control_set.dim()))?;
        dim_check(s0.len() == q, || format!("s0 has length {}", s0.len()))?;
        dim_check(stage_cost.c.ncols() == q + r && stage_cost.d.len() == stage_cost.c.nrows(), || {
            format!("stage cost is {:?} with offset {}", stage_cost.c.shape(), stage_cost.d.len())
        })?;
        if let Some(tc) = &terminal_cost {
            dim_check(tc.c.ncols() == q && tc.d.len() == tc.c.nrows(), || format!("terminal cost is {:?}", tc.c.shape()))?;
        }
        let terminal_set = match terminal_set {
            Some(s) => s,
            None => ConvexSet::singleton(Vector::zeros(q))?,
        };
        dim_check(terminal_set.dim() == q, || format!("terminal set has dimension {}", terminal_set.dim()))?;
        let mut any = false;
        for m in &modes {
            any |= m.region.contains(s0.as_slice(), MEMBERSHIP_TOL)?;
        }
        if !any {
            return Err(ControlError::NoInitialMode);
        }
        Ok(Self { modes, control_set, stage_cost, horizon, s0, terminal_set, terminal_cost })
    }

    pub fn state_dim(&self) -> usize {
        self.modes[0].a.nrows()
    }

    pub fn control_dim(&self) -> usize {
        self.modes[0].b.ncols()
    }
}

pub fn pwa_vertex(layer: usize, mode: usize) -> String {
    format!("x{layer}_{mode}")
}

fn parse_pwa_vertex(id: &str) -> Option<(usize, usize)> {
    let (layer, mode) = id.strip_prefix('x')?.split_once('_')?;
    Some((layer.parse().ok()?, mode.parse().ok()?))
}

/// Stage cost on `x_u` (and terminal cost on the state of `x_v`) as a
/// matrix over `[x_u; x_v]`.
fn edge_cost(sys: &PwaSystem, terminal: bool) -> (Matrix, Vector, f64) {
    let n = sys.state_dim() + sys.control_dim();
    let sc = &sys.stage_cost;
    let tc = if terminal { sys.terminal_cost.as_ref() } else { None };
    let extra = tc.map_or(0, |t| t.c.nrows());
    let mut c = Matrix::zeros(sc.c.nrows() + extra, 2 * n);
    c.view_mut((0, 0), sc.c.shape()).copy_from(&sc.c);
    let mut d = Vector::zeros(sc.c.nrows() + extra);
    d.rows_mut(0, sc.d.len()).copy_from(&sc.d);
    let mut c0 = sc.c0;
    if let Some(t) = tc {
        c.view_mut((sc.c.nrows(), n), t.c.shape()).copy_from(&t.c);
        d.rows_mut(sc.d.len(), t.d.len()).copy_from(&t.d);
        c0 += t.c0;
    }
    (c, d, c0)
}

pub fn build_pwa_gcs(sys: &PwaSystem) -> Result<Gcs, ControlError> {
    let (q, r) = (sys.state_dim(), sys.control_dim());
    let modes = sys.modes.len();
    let horizon = sys.horizon;
    let mut b = GcsBuilder::new();
    b.vertex("s", pinned(&sys.s0, r)?);
    for layer in 0..horizon {
        for (i, m) in sys.modes.iter().enumerate() {
            b.vertex(pwa_vertex(layer, i), ConvexSet::product(vec![m.region.clone(), sys.control_set.clone()])?);
        }
    }
    b.vertex("t", ConvexSet::product(vec![sys.terminal_set.clone(), ConvexSet::singleton(Vector::zeros(r))?])?);

    let mut same_state = Matrix::zeros(q, q + r);
    same_state.view_mut((0, 0), (q, q)).fill_with_identity();
    let copy = AffineEdgeConstraint::new(same_state.clone(), -same_state, Vector::zeros(q), Relation::Eq)?;
    let entry = EdgeLength::constant(0.0, Some(copy))?;
    for i in 0..modes {
        b.edge("s", pwa_vertex(0, i), entry.clone());
    }
    let (ci, di, c0i) = edge_cost(sys, false);
    let (cf, df, c0f) = edge_cost(sys, true);
    for (i, m) in sys.modes.iter().enumerate() {
        let dynamics = dynamics_constraint(&m.a, &m.b, &m.c)?;
        let inner = EdgeLength::quadratic(ci.clone(), di.clone(), c0i, Some(dynamics.clone()))?;
        for layer in 0..horizon - 1 {
            for j in 0..modes {
                b.edge(pwa_vertex(layer, i), pwa_vertex(layer + 1, j), inner.clone());
            }
        }
        b.edge(pwa_vertex(horizon - 1, i), "t", EdgeLength::quadratic(cf.clone(), df.clone(), c0f, Some(dynamics))?);
    }
    Ok(b.build("s", "t")?)
}

/// `a_τ = a_{v_{τ+1}}`: the source only copies `s_0` into the first layer.
pub fn extract_pwa(sys: &PwaSystem, g: &Gcs, path: &PathResult) -> Result<Trajectory, ControlError> {
    let q = sys.state_dim();
    let k = path.vertices.len();
    if k != sys.horizon + 2 {
        return Err(ControlError::ForeignPath(format!("{k} vertices for horizon {}", sys.horizon)));
    }
    let mut states = Vec::with_capacity(sys.horizon + 1);
    let mut controls = Vec::with_capacity(sys.horizon);
    let mut modes = Vec::with_capacity(sys.horizon);
    for (tau, &v) in path.vertices[1..k - 1].iter().enumerate() {
        let (layer, mode) =
            parse_pwa_vertex(g.id(v)).ok_or_else(|| ControlError::ForeignPath(g.id(v).to_string()))?;
        if layer != tau || mode >= sys.modes.len() {
            return Err(ControlError::ForeignPath(g.id(v).to_string()));
        }
        let (s, a) = split(&path.positions[tau + 1], q);
        states.push(s);
        controls.push(a);
        modes.push(mode);
    }
    states.push(split(&path.positions[k - 1], q).0);
    Ok(Trajectory { states, controls, modes, cost: path.cost })
}

/// Largest `‖s_{τ+1} − A_i s_τ − B_i a_τ − c_i‖∞` along the trajectory.
pub fn pwa_residual(sys: &PwaSystem, traj: &Trajectory) -> f64 {
    (0..traj.horizon())
        .map(|k| {
            let m = &sys.modes[traj.modes[k]];
            (&traj.states[k + 1] - &m.a * &traj.states[k] - &m.b * &traj.controls[k] - &m.c).amax()
        })
        .fold(0.0, f64::max)
}

/// Stage costs plus terminal cost of a trajectory.
pub fn pwa_cost(sys: &PwaSystem, traj: &Trajectory) -> f64 {
    let mut total = 0.0;
    for k in 0..traj.horizon() {
        let x = Vector::from_iterator(
            traj.states[k].len() + traj.controls[k].len(),
            traj.states[k].iter().chain(traj.controls[k].iter()).copied(),
        );
        total += sys.stage_cost.eval(&x);
    }
    if let (Some(tc), Some(last)) = (&sys.terminal_cost, traj.states.last()) {
        total += tc.eval(last);
    }
    total
}

/// Planar double integrator `q⁺ = q + v`, `v⁺ = v + η a` over state
/// `(q, v)`, with `‖v‖∞ <= 1` inside each position box.
pub fn double_integrator_mode(lo: [f64; 2], hi: [f64; 2], eta: f64) -> Result<PwaMode, ControlError> {
    let mut a = Matrix::identity(4, 4);
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    let mut b = Matrix::zeros(4, 2);
    b[(2, 0)] = eta;
    b[(3, 1)] = eta;
    let region = ConvexSet::interval_box(&[lo[0], lo[1], -1.0, -1.0], &[hi[0], hi[1], 1.0, 1.0])?;
    Ok(PwaMode { region, a, b, c: Vector::zeros(4) })
}

/// `‖v‖²/5 + ‖a‖²` over `[q; v; a]`.
pub fn double_integrator_cost() -> QuadraticCost {
    let mut c = Matrix::zeros(4, 6);
    let w = (0.2f64).sqrt();
    c[(0, 2)] = w;
    c[(1, 3)] = w;
    c[(2, 4)] = 1.0;
    c[(3, 5)] = 1.0;
    QuadraticCost { c, d: Vector::zeros(4), c0: 0.0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bnb::{solve_micp, BnbConfig, BnbStatus};
    use crate::oracle::certify;
    use approx::assert_abs_diff_eq;

    fn integrator(s0: f64) -> LinearSystem {
        LinearSystem::new(
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            ConvexSet::interval_box(&[-10.0], &[10.0]).unwrap(),
            ConvexSet::interval_box(&[-1.0], &[1.0]).unwrap(),
            Vector::from_element(1, s0),
        )
        .unwrap()
    }

    #[test]
    fn min_time_chain_shape() {
        let g = build_min_time_gcs(&integrator(3.0), 5).unwrap();
        assert_eq!(g.num_vertices(), 6);
        assert_eq!(g.num_edges(), 4 + 5);
        assert!(g.is_acyclic());
        assert!(build_min_time_gcs(&integrator(3.0), 0).is_err());
    }

    #[test]
    fn min_time_integrator() {
        let sys = integrator(3.0);
        let g = build_min_time_gcs(&sys, 6).unwrap();
        let rep = solve_micp(&g, &BnbConfig::default()).unwrap();
        assert_eq!(rep.status, BnbStatus::Optimal);
        assert_abs_diff_eq!(rep.cost().unwrap(), 3.0, epsilon = 1e-6);
        let traj = extract_min_time(&sys, rep.incumbent.as_ref().unwrap());
        assert_eq!(traj.horizon(), 3);
        assert!(min_time_residual(&sys, &traj) <= 1e-6);
        assert!(traj.states.last().unwrap().amax() <= 1e-6);

        let at_goal = integrator(0.0);
        let rep = solve_micp(&build_min_time_gcs(&at_goal, 3).unwrap(), &BnbConfig::default()).unwrap();
        assert_abs_diff_eq!(rep.cost().unwrap(), 1.0, epsilon = 1e-6);

        let far = solve_micp(&build_min_time_gcs(&sys, 2).unwrap(), &BnbConfig::default()).unwrap();
        assert_eq!(far.status, BnbStatus::Infeasible);
    }

    fn scalar_pwa(horizon: usize) -> PwaSystem {
        // Two modes on the line: drift right for s <= 0, left for s >= 0.
        let mode = |lo: f64, hi: f64, c: f64| PwaMode {
            region: ConvexSet::interval_box(&[lo], &[hi]).unwrap(),
            a: Matrix::identity(1, 1),
            b: Matrix::identity(1, 1),
            c: Vector::from_element(1, c),
        };
        let cost = QuadraticCost { c: Matrix::from_row_slice(1, 2, &[0.0, 1.0]), d: Vector::zeros(1), c0: 0.1 };
        PwaSystem::new(
            vec![mode(-5.0, 0.0, 0.5), mode(0.0, 5.0, -0.5)],
            ConvexSet::interval_box(&[-2.0], &[2.0]).unwrap(),
            cost,
            horizon,
            Vector::from_element(1, -2.0),
            None,
            Some(QuadraticCost { c: Matrix::identity(1, 1), d: Vector::zeros(1), c0: 0.0 }),
        )
        .unwrap()
    }

    #[test]
    fn layered_counts() {
        for horizon in 1..4 {
            let sys = scalar_pwa(horizon);
            let g = build_pwa_gcs(&sys).unwrap();
            let m = sys.modes.len();
            assert_eq!(g.num_vertices(), horizon * m + 2);
            assert_eq!(g.num_edges(), m + (horizon - 1) * m * m + m);
            assert!(g.is_acyclic());
        }
    }

    #[test]
    fn pwa_matches_oracle_and_dynamics() {
        for horizon in [1, 3] {
            let sys = scalar_pwa(horizon);
            let g = build_pwa_gcs(&sys).unwrap();
            let rep = solve_micp(&g, &BnbConfig::default()).unwrap();
            let best = certify(&g, 1000).unwrap();
            assert_abs_diff_eq!(rep.cost().unwrap(), best.cost, epsilon = 1e-6 * best.cost.max(1.0));
            let path = rep.incumbent.unwrap();
            assert_eq!(path.vertices.len(), horizon + 2);
            let traj = extract_pwa(&sys, &g, &path).unwrap();
            assert!(pwa_residual(&sys, &traj) <= 1e-6);
            assert!(traj.states.last().unwrap().amax() <= 1e-6);
            assert_abs_diff_eq!(pwa_cost(&sys, &traj), path.cost, epsilon = 1e-6);
        }
    }

    #[test]
    fn construction_errors() {
        let sys = scalar_pwa(2);
        let bad_s0 = PwaSystem::new(
            sys.modes.clone(),
            sys.control_set.clone(),
            sys.stage_cost.clone(),
            2,
            Vector::from_element(1, 9.0),
            None,
            None,
        );
        assert_eq!(bad_s0.unwrap_err(), ControlError::NoInitialMode);
        let outside = LinearSystem::new(
            Matrix::identity(1, 1),
            Matrix::identity(1, 1),
            ConvexSet::interval_box(&[-1.0], &[1.0]).unwrap(),
            ConvexSet::interval_box(&[-1.0], &[1.0]).unwrap(),
            Vector::from_element(1, 3.0),
        );
        assert_eq!(outside.unwrap_err(), ControlError::InitialStateOutside);
    }

    #[test]
    fn csv_has_one_row_per_state() {
        let traj = Trajectory {
            states: vec![Vector::from_element(1, 0.0); 4],
            controls: vec![Vector::from_element(1, 1.0); 3],
            modes: vec![0; 3],
            cost: 0.0,
        };
        let csv = traj.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next().unwrap(), "tau,s0,a0");
        assert_eq!(csv.lines().last().unwrap(), "3,0,");
    }
}
