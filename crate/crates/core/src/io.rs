//! JSON documents for instances and control systems.
//!
//! Instances look like
//! `{"vertices": {"<id>": <set>}, "edges": [{"u", "v", "length"}], "source", "target"}`
//! with vertex order preserved. Matrices are lists of rows.

use std::path::Path;

use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{LinearSystem, PwaMode, PwaSystem, QuadraticCost};
use crate::costs::{AffineEdgeConstraint, CostError, EdgeLength, Relation};
use crate::geometry::{ConvexSet, GeometryError};
use crate::graph::{Gcs, GcsError};
use crate::{Matrix, Vector};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: line {line}, column {column}: {message}")]
    Json { path: String, line: usize, column: usize, message: String },
    #[error("matrix `{0}` has rows of different lengths")]
    Ragged(String),
    #[error("vertex `{vertex}`: {source}")]
    Set { vertex: String, source: GeometryError },
    #[error("edge {index} ({u} -> {v}): {source}")]
    Length { index: usize, u: String, v: String, source: CostError },
    #[error("system: {0}")]
    System(String),
    #[error(transparent)]
    Graph(#[from] GcsError),
    #[error("{path}: {source}")]
    File { path: String, source: std::io::Error },
}

/// Deserializes with the JSON path of the failing field in the error.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, IoError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        IoError::Json { path, line: inner.line(), column: inner.column(), message: inner.to_string() }
    })
}

fn read(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

pub type Rows = Vec<Vec<f64>>;

fn to_rows(m: &Matrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Row-major list to matrix; `cols` is used when there are no rows.
fn from_rows(rows: &Rows, cols: usize, what: &str) -> Result<Matrix, IoError> {
    let n = rows.first().map_or(cols, |r| r.len());
    if rows.iter().any(|r| r.len() != n) {
        return Err(IoError::Ragged(what.to_string()));
    }
    Ok(Matrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn vec_of(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetDoc {
    Singleton { theta: Vec<f64> },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Polyhedron { a: Rows, b: Vec<f64> },
    Ellipsoid { a: Rows, b: Vec<f64> },
    Product { factors: Vec<SetDoc> },
}

impl SetDoc {
    pub fn from_set(set: &ConvexSet) -> Self {
        match set {
            ConvexSet::Singleton { theta } => SetDoc::Singleton { theta: vec_of(theta) },
            ConvexSet::Box { lo, hi } => SetDoc::Box { lo: vec_of(lo), hi: vec_of(hi) },
            ConvexSet::Polyhedron { a, b } => SetDoc::Polyhedron { a: to_rows(a), b: vec_of(b) },
            ConvexSet::Ellipsoid { a, b } => SetDoc::Ellipsoid { a: to_rows(a), b: vec_of(b) },
            ConvexSet::Product(fs) => SetDoc::Product { factors: fs.iter().map(SetDoc::from_set).collect() },
        }
    }

    /// Builds through the checked constructors.
    pub fn to_set(&self, vertex: &str) -> Result<ConvexSet, IoError> {
        let geo = |source| IoError::Set { vertex: vertex.to_string(), source };
        match self {
            SetDoc::Singleton { theta } => ConvexSet::point(theta).map_err(geo),
            SetDoc::Box { lo, hi } => ConvexSet::interval_box(lo, hi).map_err(geo),
            SetDoc::Polyhedron { a, b } => {
                ConvexSet::polyhedron(from_rows(a, 0, "a")?, Vector::from_column_slice(b)).map_err(geo)
            }
            SetDoc::Ellipsoid { a, b } => {
                ConvexSet::ellipsoid(from_rows(a, b.len(), "a")?, Vector::from_column_slice(b)).map_err(geo)
            }
            SetDoc::Product { factors } => {
                let fs = factors.iter().map(|f| f.to_set(vertex)).collect::<Result<Vec<_>, _>>()?;
                ConvexSet::product(fs).map_err(geo)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationDoc {
    Eq,
    Le,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintDoc {
    pub e: Rows,
    pub f: Rows,
    pub g: Vec<f64>,
    pub relation: RelationDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LengthDoc {
    Euclidean,
    SqEuclidean,
    Norm2Affine { c: Rows, d: Vec<f64> },
    SqNorm2Affine { c: Rows, d: Vec<f64> },
    Constant {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint: Option<ConstraintDoc>,
    },
    Quadratic {
        c: Rows,
        d: Vec<f64>,
        c0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constraint: Option<ConstraintDoc>,
    },
}

impl ConstraintDoc {
    fn from_constraint(k: &AffineEdgeConstraint) -> Self {
        Self {
            e: to_rows(&k.e),
            f: to_rows(&k.f),
            g: vec_of(&k.g),
            relation: match k.relation {
                Relation::Eq => RelationDoc::Eq,
                Relation::Le => RelationDoc::Le,
            },
        }
    }

    fn to_constraint(&self) -> Result<Result<AffineEdgeConstraint, CostError>, IoError> {
        let relation = match self.relation {
            RelationDoc::Eq => Relation::Eq,
            RelationDoc::Le => Relation::Le,
        };
        Ok(AffineEdgeConstraint::new(
            from_rows(&self.e, 0, "e")?,
            from_rows(&self.f, 0, "f")?,
            Vector::from_column_slice(&self.g),
            relation,
        ))
    }
}

impl LengthDoc {
    pub fn from_length(len: &EdgeLength) -> Self {
        let k = |c: &Option<AffineEdgeConstraint>| c.as_ref().map(ConstraintDoc::from_constraint);
        match len {
            EdgeLength::Euclidean => LengthDoc::Euclidean,
            EdgeLength::SqEuclidean => LengthDoc::SqEuclidean,
            EdgeLength::Norm2Affine { c, d } => LengthDoc::Norm2Affine { c: to_rows(c), d: vec_of(d) },
            EdgeLength::SqNorm2Affine { c, d } => LengthDoc::SqNorm2Affine { c: to_rows(c), d: vec_of(d) },
            EdgeLength::ConstantWithConstraint { c, constraint } => LengthDoc::Constant { c: *c, constraint: k(constraint) },
            EdgeLength::QuadraticWithConstraint { c, d, c0, constraint } => {
                LengthDoc::Quadratic { c: to_rows(c), d: vec_of(d), c0: *c0, constraint: k(constraint) }
            }
        }
    }

    /// Outer error for malformed matrices, inner for rejected data.
    pub fn to_length(&self) -> Result<Result<EdgeLength, CostError>, IoError> {
        let constraint = |c: &Option<ConstraintDoc>| -> Result<Result<Option<AffineEdgeConstraint>, CostError>, IoError> {
            match c {
                None => Ok(Ok(None)),
                Some(doc) => Ok(doc.to_constraint()?.map(Some)),
            }
        };
        Ok(match self {
            LengthDoc::Euclidean => Ok(EdgeLength::Euclidean),
            LengthDoc::SqEuclidean => Ok(EdgeLength::SqEuclidean),
            LengthDoc::Norm2Affine { c, d } => EdgeLength::norm2_affine(from_rows(c, 0, "c")?, Vector::from_column_slice(d)),
            LengthDoc::SqNorm2Affine { c, d } => {
                EdgeLength::sq_norm2_affine(from_rows(c, 0, "c")?, Vector::from_column_slice(d))
            }
            LengthDoc::Constant { c, constraint: k } => constraint(k)?.and_then(|k| EdgeLength::constant(*c, k)),
            LengthDoc::Quadratic { c, d, c0, constraint: k } => {
                let m = from_rows(c, 0, "c")?;
                constraint(k)?.and_then(|k| EdgeLength::quadratic(m, Vector::from_column_slice(d), *c0, k))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeDoc {
    pub u: String,
    pub v: String,
    pub length: LengthDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDoc {
    pub vertices: IndexMap<String, SetDoc>,
    pub edges: Vec<EdgeDoc>,
    pub source: String,
    pub target: String,
}

impl InstanceDoc {
    pub fn from_gcs(g: &Gcs) -> Self {
        let (vertices, edges, source, target) = g.parts();
        Self {
            vertices: vertices.iter().map(|(id, s)| (id.clone(), SetDoc::from_set(s))).collect(),
            edges: edges
                .iter()
                .map(|(u, v, l)| EdgeDoc { u: u.clone(), v: v.clone(), length: LengthDoc::from_length(l) })
                .collect(),
            source,
            target,
        }
    }

    pub fn to_gcs(&self) -> Result<Gcs, IoError> {
        let vertices = self
            .vertices
            .iter()
            .map(|(id, s)| Ok((id.clone(), s.to_set(id)?)))
            .collect::<Result<Vec<_>, IoError>>()?;
        let mut edges = Vec::with_capacity(self.edges.len());
        for (index, e) in self.edges.iter().enumerate() {
            let length = e.length.to_length()?.map_err(|source| IoError::Length {
                index,
                u: e.u.clone(),
                v: e.v.clone(),
                source,
            })?;
            edges.push((e.u.clone(), e.v.clone(), length));
        }
        Ok(Gcs::build(vertices, edges, &self.source, &self.target)?)
    }
}

pub fn gcs_to_json(g: &Gcs) -> String {
    serde_json::to_string_pretty(&InstanceDoc::from_gcs(g)).expect("instance documents always serialize")
}

pub fn gcs_from_json(text: &str) -> Result<Gcs, IoError> {
    parse_json::<InstanceDoc>(text)?.to_gcs()
}

pub fn read_instance(path: &Path) -> Result<Gcs, IoError> {
    gcs_from_json(&read(path)?)
}

pub fn write_instance(path: &Path, g: &Gcs) -> Result<(), IoError> {
    std::fs::write(path, gcs_to_json(g)).map_err(|source| IoError::File { path: path.display().to_string(), source })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostDoc {
    pub c: Rows,
    pub d: Vec<f64>,
    #[serde(default)]
    pub c0: f64,
}

impl CostDoc {
    fn from_cost(c: &QuadraticCost) -> Self {
        Self { c: to_rows(&c.c), d: vec_of(&c.d), c0: c.c0 }
    }

    fn to_cost(&self) -> Result<QuadraticCost, IoError> {
        Ok(QuadraticCost { c: from_rows(&self.c, 0, "c")?, d: Vector::from_column_slice(&self.d), c0: self.c0 })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDoc {
    pub region: SetDoc,
    pub a: Rows,
    pub b: Rows,
    pub c: Vec<f64>,
}

/// Control problems: `{"kind": "mintime", ...}` or `{"kind": "pwa", ...}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemDoc {
    Mintime {
        a: Rows,
        b: Rows,
        state_set: SetDoc,
        control_set: SetDoc,
        s0: Vec<f64>,
        t_max: usize,
    },
    Pwa {
        modes: Vec<ModeDoc>,
        control_set: SetDoc,
        stage_cost: CostDoc,
        horizon: usize,
        s0: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        terminal_set: Option<SetDoc>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        terminal_cost: Option<CostDoc>,
    },
}

pub enum System {
    MinTime { system: LinearSystem, t_max: usize },
    Pwa(PwaSystem),
}

impl SystemDoc {
    pub fn from_min_time(sys: &LinearSystem, t_max: usize) -> Self {
        SystemDoc::Mintime {
            a: to_rows(&sys.a),
            b: to_rows(&sys.b),
            state_set: SetDoc::from_set(&sys.state_set),
            control_set: SetDoc::from_set(&sys.control_set),
            s0: vec_of(&sys.s0),
            t_max,
        }
    }

    pub fn from_pwa(sys: &PwaSystem) -> Self {
        SystemDoc::Pwa {
            modes: sys
                .modes
                .iter()
                .map(|m| ModeDoc { region: SetDoc::from_set(&m.region), a: to_rows(&m.a), b: to_rows(&m.b), c: vec_of(&m.c) })
                .collect(),
            control_set: SetDoc::from_set(&sys.control_set),
            stage_cost: CostDoc::from_cost(&sys.stage_cost),
            horizon: sys.horizon,
            s0: vec_of(&sys.s0),
            terminal_set: Some(SetDoc::from_set(&sys.terminal_set)),
            terminal_cost: sys.terminal_cost.as_ref().map(CostDoc::from_cost),
        }
    }

    pub fn to_system(&self) -> Result<System, IoError> {
        let sys_err = |e: crate::control::ControlError| IoError::System(e.to_string());
        match self {
            SystemDoc::Mintime { a, b, state_set, control_set, s0, t_max } => {
                let system = LinearSystem::new(
                    from_rows(a, 0, "a")?,
                    from_rows(b, 0, "b")?,
                    state_set.to_set("state_set")?,
                    control_set.to_set("control_set")?,
                    Vector::from_column_slice(s0),
                )
                .map_err(sys_err)?;
                Ok(System::MinTime { system, t_max: *t_max })
            }
            SystemDoc::Pwa { modes, control_set, stage_cost, horizon, s0, terminal_set, terminal_cost } => {
                let modes = modes
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        Ok(PwaMode {
                            region: m.region.to_set(&format!("mode {i}"))?,
                            a: from_rows(&m.a, 0, "a")?,
                            b: from_rows(&m.b, 0, "b")?,
                            c: Vector::from_column_slice(&m.c),
                        })
                    })
                    .collect::<Result<Vec<_>, IoError>>()?;
                let terminal_set = terminal_set.as_ref().map(|s| s.to_set("terminal_set")).transpose()?;
                let terminal_cost = terminal_cost.as_ref().map(CostDoc::to_cost).transpose()?;
                let sys = PwaSystem::new(
                    modes,
                    control_set.to_set("control_set")?,
                    stage_cost.to_cost()?,
                    *horizon,
                    Vector::from_column_slice(s0),
                    terminal_set,
                    terminal_cost,
                )
                .map_err(sys_err)?;
                Ok(System::Pwa(sys))
            }
        }
    }
}

pub fn read_system(path: &Path) -> Result<System, IoError> {
    parse_json::<SystemDoc>(&read(path)?)?.to_system()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GcsBuilder;
    use proptest::prelude::*;

    fn sample() -> Gcs {
        let mut b = GcsBuilder::new();
        b.vertex("s", ConvexSet::point(&[0.0, 0.0]).unwrap())
            .vertex("box", ConvexSet::interval_box(&[1.0, -1.0], &[2.0, 1.0]).unwrap())
            .vertex("ball", ConvexSet::ball(&Vector::from_vec(vec![1.5, 3.0]), 0.5).unwrap())
            .vertex(
                "tri",
                ConvexSet::polyhedron(
                    Matrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
                    Vector::from_vec(vec![-3.0, 0.0, 5.0]),
                )
                .unwrap(),
            )
            .vertex("t", ConvexSet::point(&[5.0, 0.1]).unwrap());
        b.edge("s", "box", EdgeLength::Euclidean)
            .edge("s", "ball", EdgeLength::SqEuclidean)
            .edge("box", "tri", EdgeLength::norm2_affine(Matrix::identity(2, 4), Vector::zeros(2)).unwrap())
            .edge("ball", "tri", EdgeLength::sq_norm2_affine(Matrix::identity(2, 4), Vector::zeros(2)).unwrap())
            .edge(
                "tri",
                "t",
                EdgeLength::constant(
                    2.0,
                    Some(
                        AffineEdgeConstraint::new(
                            Matrix::identity(2, 2),
                            -Matrix::identity(2, 2),
                            Vector::repeat(2, 0.5),
                            Relation::Le,
                        )
                        .unwrap(),
                    ),
                )
                .unwrap(),
            )
            .edge("box", "t", EdgeLength::quadratic(Matrix::identity(1, 4), Vector::zeros(1), 0.3, None).unwrap());
        b.build("s", "t").unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let g = sample();
        let text = gcs_to_json(&g);
        assert_eq!(gcs_from_json(&text).unwrap(), g);
        let doc: InstanceDoc = parse_json(&text).unwrap();
        assert_eq!(doc.vertices.keys().collect::<Vec<_>>(), vec!["s", "box", "ball", "tri", "t"]);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = r#"{"vertices": {"s": {"type": "singleton", "theta": [0.0]},
            "t": {"type": "box", "lo": [1.0], "hi": "x"}}, "edges": [], "source": "s", "target": "t"}"#;
        let msg = gcs_from_json(bad).unwrap_err().to_string();
        assert!(msg.contains("vertices.t"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");

        let inverted = r#"{"vertices": {"s": {"type": "singleton", "theta": [0.0]},
            "t": {"type": "box", "lo": [1.0], "hi": [0.0]}}, "edges": [], "source": "s", "target": "t"}"#;
        assert!(matches!(gcs_from_json(inverted), Err(IoError::Set { .. })));

        let unknown = r#"{"vertices": {"s": {"type": "singleton", "theta": [0.0]}}, "edges": [{"u": "s", "v": "q",
            "length": {"type": "euclidean"}}], "source": "s", "target": "s"}"#;
        assert!(matches!(gcs_from_json(unknown), Err(IoError::Graph(_))));
    }

    #[test]
    fn system_documents_round_trip() {
        let doc = SystemDoc::Mintime {
            a: vec![vec![1.0]],
            b: vec![vec![1.0]],
            state_set: SetDoc::Box { lo: vec![-5.0], hi: vec![5.0] },
            control_set: SetDoc::Box { lo: vec![-1.0], hi: vec![1.0] },
            s0: vec![3.0],
            t_max: 4,
        };
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains("\"kind\":\"mintime\""));
        let System::MinTime { system, t_max } = parse_json::<SystemDoc>(&text).unwrap().to_system().unwrap() else {
            panic!("wrong kind");
        };
        assert_eq!(SystemDoc::from_min_time(&system, t_max), doc);
    }

    proptest! {
        #[test]
        fn random_boxes_round_trip(
            pts in proptest::collection::vec((-1e3f64..1e3, 0.0f64..10.0, -1e3f64..1e3, 0.0f64..10.0), 1..6),
            squared in any::<bool>(),
        ) {
            let mut b = GcsBuilder::new();
            b.vertex("s", ConvexSet::point(&[0.0, 0.0]).unwrap());
            for (i, (x, w, y, h)) in pts.iter().enumerate() {
                b.vertex(format!("v{i}"), ConvexSet::interval_box(&[*x, *y], &[x + w, y + h]).unwrap());
            }
            b.vertex("t", ConvexSet::point(&[1.0, 1.0]).unwrap());
            let len = if squared { EdgeLength::SqEuclidean } else { EdgeLength::Euclidean };
            let mut prev = "s".to_string();
            for i in 0..pts.len() {
                b.edge(prev.clone(), format!("v{i}"), len.clone());
                prev = format!("v{i}");
            }
            b.edge(prev, "t", len);
            let g = b.build("s", "t").unwrap();
            prop_assert_eq!(gcs_from_json(&gcs_to_json(&g)).unwrap(), g);
        }
    }
}
