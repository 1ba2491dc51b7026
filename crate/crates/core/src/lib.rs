//! Shortest paths in graphs of convex sets.
//!
//! A graph of convex sets pairs every vertex with a compact convex set and
//! every edge with a convex length of its endpoints. This crate assembles the
//! perspective-based mixed-integer conic formulation of the shortest-path
//! problem, solves its relaxation, closes the gap with branch and bound, and
//! provides an exhaustive oracle, dual certificates and control encodings.

pub mod bnb;
pub mod conic;
pub mod control;
pub mod costs;
pub mod duals;
pub mod formulation;
pub mod geometry;
pub mod graph;
pub mod instances;
pub mod io;
pub mod oracle;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use bnb::{solve_micp, BnbConfig, BnbReport, BnbStatus};
pub use conic::{ConicProgram, ConicSolution, SolveStatus, ToleranceConfig};
pub use costs::{AffineEdgeConstraint, EdgeLength, Relation};
pub use formulation::{build_flow_lp, build_relaxation, FlowSolution, RelaxationProgram, TighteningOptions};
pub use geometry::ConvexSet;
pub use graph::{Gcs, GcsError, PathResult};
