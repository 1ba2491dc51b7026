//! The graph-of-convex-sets data model.

use std::collections::{HashMap, HashSet, VecDeque};

use thiserror::Error;

use crate::costs::{CostError, EdgeLength};
use crate::geometry::ConvexSet;
use crate::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GcsError {
    #[error("duplicate vertex id {0:?}")]
    DuplicateVertex(String),
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    #[error("source and target are both {0:?}")]
    SourceIsTarget(String),
    #[error("self-loop at {0:?}")]
    SelfLoop(String),
    #[error("duplicate edge ({0:?}, {1:?})")]
    DuplicateEdge(String, String),
    #[error("edge ({u:?}, {v:?}): {source}")]
    EdgeLength { u: String, v: String, source: CostError },
    #[error("invalid path: {0}")]
    InvalidPath(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vertex {
    pub id: String,
    pub set: ConvexSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub length: EdgeLength,
}

/// Accumulates vertices and edges by id before validation.
#[derive(Clone, Debug, Default)]
pub struct GcsBuilder {
    vertices: Vec<(String, ConvexSet)>,
    edges: Vec<(String, String, EdgeLength)>,
}

impl GcsBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, id: impl Into<String>, set: ConvexSet) -> &mut Self {
        self.vertices.push((id.into(), set));
        self
    }

    pub fn edge(&mut self, u: impl Into<String>, v: impl Into<String>, length: EdgeLength) -> &mut Self {
        self.edges.push((u.into(), v.into(), length));
        self
    }

    pub fn build(&self, source: &str, target: &str) -> Result<Gcs, GcsError> {
        Gcs::build(self.vertices.clone(), self.edges.clone(), source, target)
    }
}

/// Validated directed graph whose vertices carry convex sets and whose edges
/// carry convex lengths. Immutable after construction.
#[derive(Clone, Debug)]
pub struct Gcs {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    source: usize,
    target: usize,
    acyclic: bool,
    warnings: Vec<String>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
    index: HashMap<String, usize>,
}

impl PartialEq for Gcs {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
            && self.edges == other.edges
            && self.source == other.source
            && self.target == other.target
    }
}

impl Gcs {
    /// Validates the data. Edges entering the source or leaving the target
    /// are dropped with a warning since no path can use them.
    pub fn build(
        vertices: Vec<(String, ConvexSet)>,
        edges: Vec<(String, String, EdgeLength)>,
        source: &str,
        target: &str,
    ) -> Result<Gcs, GcsError> {
        let mut index = HashMap::with_capacity(vertices.len());
        for (i, (id, _)) in vertices.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(GcsError::DuplicateVertex(id.clone()));
            }
        }
        let lookup = |id: &str| index.get(id).copied().ok_or_else(|| GcsError::UnknownVertex(id.to_string()));
        let s = lookup(source)?;
        let t = lookup(target)?;
        if s == t {
            return Err(GcsError::SourceIsTarget(source.to_string()));
        }
        let vertices: Vec<Vertex> = vertices.into_iter().map(|(id, set)| Vertex { id, set }).collect();

        let mut warnings = Vec::new();
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(edges.len());
        for (u_id, v_id, length) in edges {
            let u = lookup(&u_id)?;
            let v = lookup(&v_id)?;
            if u == v {
                return Err(GcsError::SelfLoop(u_id));
            }
            if !seen.insert((u, v)) {
                return Err(GcsError::DuplicateEdge(u_id, v_id));
            }
            length
                .check_dims(vertices[u].set.dim(), vertices[v].set.dim())
                .map_err(|source| GcsError::EdgeLength { u: u_id.clone(), v: v_id.clone(), source })?;
            if v == s {
                warnings.push(format!("removed edge ({u_id}, {v_id}) entering the source"));
                continue;
            }
            if u == t {
                warnings.push(format!("removed edge ({u_id}, {v_id}) leaving the target"));
                continue;
            }
            kept.push(Edge { u, v, length });
        }
        for w in &warnings {
            log::warn!("{w}");
        }

        let n = vertices.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (k, e) in kept.iter().enumerate() {
            out_edges[e.u].push(k);
            in_edges[e.v].push(k);
        }
        let acyclic = is_acyclic(n, &kept, &out_edges);
        Ok(Gcs { vertices, edges: kept, source: s, target: t, acyclic, warnings, out_edges, in_edges, index })
    }

    /// Inputs that rebuild an identical graph.
    pub fn parts(&self) -> (Vec<(String, ConvexSet)>, Vec<(String, String, EdgeLength)>, String, String) {
        (
            self.vertices.iter().map(|v| (v.id.clone(), v.set.clone())).collect(),
            self.edges
                .iter()
                .map(|e| (self.vertices[e.u].id.clone(), self.vertices[e.v].id.clone(), e.length.clone()))
                .collect(),
            self.vertices[self.source].id.clone(),
            self.vertices[self.target].id.clone(),
        )
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn is_acyclic(&self) -> bool {
        self.acyclic
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn out_edges(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    pub fn in_edges(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub fn set(&self, v: usize) -> &ConvexSet {
        &self.vertices[v].set
    }

    pub fn dim(&self, v: usize) -> usize {
        self.vertices[v].set.dim()
    }

    pub fn id(&self, v: usize) -> &str {
        &self.vertices[v].id
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.out_edges[u].iter().copied().find(|&k| self.edges[k].v == v)
    }

    /// Edge indices along a vertex sequence.
    pub fn path_edges(&self, path: &[usize]) -> Result<Vec<usize>, GcsError> {
        path.windows(2)
            .map(|w| {
                self.edge_between(w[0], w[1]).ok_or_else(|| {
                    GcsError::InvalidPath(format!("no edge ({}, {})", self.id(w[0]), self.id(w[1])))
                })
            })
            .collect()
    }

    /// Simple source-target paths in depth-first order, stopping after
    /// `max_paths`.
    pub fn enumerate_paths(&self, max_paths: usize) -> PathEnumeration {
        let mut out = PathEnumeration { paths: Vec::new(), overflow: false };
        let mut on_path = vec![false; self.num_vertices()];
        let mut path = vec![self.source];
        on_path[self.source] = true;
        self.dfs(&mut path, &mut on_path, max_paths, &mut out);
        out
    }

    fn dfs(&self, path: &mut Vec<usize>, on_path: &mut [bool], max: usize, out: &mut PathEnumeration) {
        let u = *path.last().unwrap();
        if u == self.target {
            if out.paths.len() >= max {
                out.overflow = true;
            } else {
                out.paths.push(path.clone());
            }
            return;
        }
        for &k in &self.out_edges[u] {
            if out.overflow {
                return;
            }
            let v = self.edges[k].v;
            if on_path[v] {
                continue;
            }
            on_path[v] = true;
            path.push(v);
            self.dfs(path, on_path, max, out);
            path.pop();
            on_path[v] = false;
        }
    }
}

fn is_acyclic(n: usize, edges: &[Edge], out_edges: &[Vec<usize>]) -> bool {
    let mut indeg = vec![0usize; n];
    for e in edges {
        indeg[e.v] += 1;
    }
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut visited = 0;
    while let Some(u) = queue.pop_front() {
        visited += 1;
        for &k in &out_edges[u] {
            let v = edges[k].v;
            indeg[v] -= 1;
            if indeg[v] == 0 {
                queue.push_back(v);
            }
        }
    }
    visited == n
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathEnumeration {
    pub paths: Vec<Vec<usize>>,
    pub overflow: bool,
}

/// A source-target path with positions for its vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub vertices: Vec<usize>,
    pub positions: Vec<Vector>,
    pub cost: f64,
}

/// Tolerance for set membership and edge constraints when validating a
/// numerically computed path.
pub const PATH_TOL: f64 = 1e-6;

impl PathResult {
    /// Cost of traversing `vertices` at `positions`, with constraint slack `tol`.
    pub fn evaluate(g: &Gcs, vertices: &[usize], positions: &[Vector], tol: f64) -> Result<f64, GcsError> {
        let edges = g.path_edges(vertices)?;
        let mut cost = 0.0;
        for (i, &k) in edges.iter().enumerate() {
            cost += g.edges[k]
                .length
                .evaluate_with_tol(positions[i].as_slice(), positions[i + 1].as_slice(), tol)
                .map_err(|e| GcsError::InvalidPath(e.to_string()))?;
        }
        Ok(cost)
    }

    pub fn ids<'a>(&self, g: &'a Gcs) -> Vec<&'a str> {
        self.vertices.iter().map(|&v| g.id(v)).collect()
    }

    /// Checks structure, membership, and that `cost` matches the traversed
    /// lengths to relative `1e-6`.
    pub fn validate(&self, g: &Gcs) -> Result<(), GcsError> {
        let bad = |m: String| Err(GcsError::InvalidPath(m));
        if self.vertices.first() != Some(&g.source()) || self.vertices.last() != Some(&g.target()) {
            return bad("path must run from source to target".into());
        }
        if self.positions.len() != self.vertices.len() {
            return bad("one position per vertex required".into());
        }
        let distinct: HashSet<_> = self.vertices.iter().collect();
        if distinct.len() != self.vertices.len() {
            return bad("repeated vertex".into());
        }
        for (&v, x) in self.vertices.iter().zip(&self.positions) {
            if !g.set(v).contains(x.as_slice(), PATH_TOL).map_err(|e| GcsError::InvalidPath(e.to_string()))? {
                return bad(format!("position of {} outside its set", g.id(v)));
            }
        }
        let cost = Self::evaluate(g, &self.vertices, &self.positions, PATH_TOL)?;
        if !cost.is_finite() {
            return bad("infinite cost".into());
        }
        if (cost - self.cost).abs() > 1e-6 * cost.abs().max(1.0) {
            return bad(format!("stored cost {} differs from evaluated {}", self.cost, cost));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64) -> ConvexSet {
        ConvexSet::point(&[x]).unwrap()
    }

    fn chain(ids: &[&str], extra: &[(&str, &str)]) -> Result<Gcs, GcsError> {
        let mut b = GcsBuilder::new();
        for (i, id) in ids.iter().enumerate() {
            b.vertex(*id, pt(i as f64));
        }
        for w in ids.windows(2) {
            b.edge(w[0], w[1], EdgeLength::Euclidean);
        }
        for (u, v) in extra {
            b.edge(*u, *v, EdgeLength::Euclidean);
        }
        b.build(ids[0], ids[ids.len() - 1])
    }

    #[test]
    fn single_edge_is_acyclic() {
        let g = chain(&["s", "t"], &[]).unwrap();
        assert!(g.is_acyclic());
        assert_eq!(g.enumerate_paths(10).paths, vec![vec![0, 1]]);
    }

    #[test]
    fn edges_into_source_are_dropped() {
        let g = chain(&["s", "t"], &[("t", "s")]).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.warnings().len(), 1);
    }

    #[test]
    fn cycle_detection() {
        let g = chain(&["s", "a", "b", "t"], &[("b", "a")]).unwrap();
        assert!(!g.is_acyclic());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(matches!(chain(&["s", "a", "t"], &[("a", "a")]), Err(GcsError::SelfLoop(_))));
        assert!(matches!(chain(&["s", "a", "t"], &[("s", "a")]), Err(GcsError::DuplicateEdge(..))));
        assert!(matches!(chain(&["s", "a", "t"], &[("s", "q")]), Err(GcsError::UnknownVertex(_))));
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(0.0));
        assert!(matches!(b.build("s", "s"), Err(GcsError::SourceIsTarget(_))));
        let mut b = GcsBuilder::new();
        b.vertex("s", pt(0.0)).vertex("t", ConvexSet::point(&[0.0, 0.0]).unwrap());
        b.edge("s", "t", EdgeLength::Euclidean);
        assert!(matches!(b.build("s", "t"), Err(GcsError::EdgeLength { .. })));
    }

    #[test]
    fn enumeration_counts() {
        // Diamond plus a cross edge: s→a→t, s→b→t, s→a→b→t.
        let mut b = GcsBuilder::new();
        for (i, id) in ["s", "a", "b", "t"].iter().enumerate() {
            b.vertex(*id, pt(i as f64));
        }
        for (u, v) in [("s", "a"), ("s", "b"), ("a", "t"), ("b", "t"), ("a", "b"), ("b", "a")] {
            b.edge(u, v, EdgeLength::Euclidean);
        }
        let g = b.build("s", "t").unwrap();
        // s-a-t, s-a-b-t, s-b-t, s-b-a-t
        assert_eq!(g.enumerate_paths(100).paths.len(), 4);
        let capped = g.enumerate_paths(2);
        assert!(capped.overflow);
        assert_eq!(capped.paths.len(), 2);

        let mut b = GcsBuilder::new();
        b.vertex("s", pt(0.0)).vertex("t", pt(1.0));
        assert!(b.build("s", "t").unwrap().enumerate_paths(10).paths.is_empty());
    }

    #[test]
    fn rebuild_is_identity() {
        let g = chain(&["s", "a", "b", "t"], &[("b", "a"), ("t", "a")]).unwrap();
        let (v, e, s, t) = g.parts();
        let h = Gcs::build(v, e, &s, &t).unwrap();
        assert_eq!(g, h);
        assert!(h.warnings().is_empty());
    }

    #[test]
    fn path_validation() {
        let g = chain(&["s", "a", "t"], &[]).unwrap();
        let positions: Vec<Vector> = (0..3).map(|i| Vector::from_vec(vec![i as f64])).collect();
        let p = PathResult { vertices: vec![0, 1, 2], positions: positions.clone(), cost: 2.0 };
        assert!(p.validate(&g).is_ok());
        let wrong = PathResult { cost: 3.0, ..p.clone() };
        assert!(wrong.validate(&g).is_err());
        let skip = PathResult { vertices: vec![0, 2], positions: vec![positions[0].clone(), positions[2].clone()], cost: 2.0 };
        assert!(skip.validate(&g).is_err());
    }
}
