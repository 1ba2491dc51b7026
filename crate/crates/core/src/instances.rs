//! Instance families: the Hamiltonian-path chain, seeded random graphs,
//! small hand-built geometries, and planar footstep control problems.
//!
//! Geometries marked as recreated imitate published figures whose exact
//! coordinates are unknown; checks against them are structural or
//! asymptotic, never exact values.

use std::f64::consts::PI;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{double_integrator_cost, double_integrator_mode, ControlError, PwaSystem};
use crate::costs::EdgeLength;
use crate::geometry::{ConvexSet, GeometryError};
use crate::graph::{Gcs, GcsBuilder, GcsError};
use crate::{Matrix, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("unknown generator `{0}`")]
    UnknownGenerator(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Graph(#[from] GcsError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthKind {
    Euclidean,
    SqEuclidean,
}

impl LengthKind {
    pub fn length(self) -> EdgeLength {
        match self {
            LengthKind::Euclidean => EdgeLength::Euclidean,
            LengthKind::SqEuclidean => EdgeLength::SqEuclidean,
        }
    }
}

fn pt(x: &[f64]) -> Result<ConvexSet, GeometryError> {
    ConvexSet::point(x)
}

/// Source `{0}`, target `{1}`, `m` copies of `[0, 1]`, every admissible
/// edge, squared length. The optimum `1/(m+1)` visits every vertex.
pub fn hpp_chain(m: usize) -> Gcs {
    let mut ids = vec!["s".to_string()];
    ids.extend((1..=m).map(|i| format!("v{i}")));
    ids.push("t".to_string());
    let mut b = GcsBuilder::new();
    b.vertex("s", pt(&[0.0]).unwrap());
    for id in &ids[1..=m] {
        b.vertex(id.clone(), ConvexSet::interval_box(&[0.0], &[1.0]).unwrap());
    }
    b.vertex("t", pt(&[1.0]).unwrap());
    for u in &ids[..=m] {
        for v in &ids[1..] {
            if u != v {
                b.edge(u.clone(), v.clone(), EdgeLength::SqEuclidean);
            }
        }
    }
    b.build("s", "t").expect("chain is well formed")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomParams {
    pub seed: u64,
    pub n: usize,
    pub num_vertices: usize,
    pub num_edges: usize,
    /// Volume of each interior cube.
    pub volume: f64,
    pub length: LengthKind,
    /// Shrink every interior set to its center.
    #[serde(default)]
    pub singletons: bool,
}

impl RandomParams {
    pub fn nominal(seed: u64) -> Self {
        Self { seed, n: 4, num_vertices: 50, num_edges: 100, volume: 0.01, length: LengthKind::Euclidean, singletons: false }
    }
}

/// Source `{0}`, target `{1}`, interior cubes of the given volume with
/// uniformly drawn centers. Edges: the interior vertices are split into
/// source-target paths, then uniformly drawn admissible edges are added
/// until `num_edges` is reached.
///
/// The number of paths is drawn from `[1, min(N, |E| − N)]` with `N`
/// interior vertices, so the path edges alone never exceed `|E|`.
pub fn random_instance(p: &RandomParams) -> Result<Gcs, InstanceError> {
    if p.num_vertices < 3 {
        return Err(InstanceError::Params("need at least 3 vertices".into()));
    }
    if p.n == 0 || !(p.volume > 0.0) || !p.volume.is_finite() {
        return Err(InstanceError::Params("dimension and volume must be positive".into()));
    }
    let interior = p.num_vertices - 2;
    let max_edges = interior * interior + interior + 1;
    if p.num_edges < interior + 1 || p.num_edges > max_edges {
        return Err(InstanceError::Params(format!(
            "{} edges requested, need between {} and {max_edges}",
            p.num_edges,
            interior + 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let side = p.volume.powf(1.0 / p.n as f64);
    let ids: Vec<String> = std::iter::once("s".to_string())
        .chain((1..=interior).map(|i| format!("v{i}")))
        .chain(std::iter::once("t".to_string()))
        .collect();
    let t = interior + 1;

    let mut b = GcsBuilder::new();
    b.vertex("s", ConvexSet::singleton(Vector::zeros(p.n))?);
    for id in &ids[1..=interior] {
        let center = Vector::from_iterator(p.n, (0..p.n).map(|_| rng.gen::<f64>()));
        let set = if p.singletons { ConvexSet::singleton(center)? } else { ConvexSet::cube(&center, side)? };
        b.vertex(id.clone(), set);
    }
    b.vertex("t", ConvexSet::singleton(Vector::repeat(p.n, 1.0))?);

    let paths = rng.gen_range(1..=interior.min(p.num_edges - interior));
    let mut order: Vec<usize> = (1..=interior).collect();
    order.shuffle(&mut rng);
    let mut cuts: Vec<usize> = index::sample(&mut rng, interior - 1, paths - 1).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(interior);

    let mut used = vec![vec![false; t + 1]; t + 1];
    let mut edges = Vec::with_capacity(p.num_edges);
    for w in bounds.windows(2) {
        let mut prev = 0;
        for &v in &order[w[0]..w[1]] {
            edges.push((prev, v));
            prev = v;
        }
        edges.push((prev, t));
    }
    for &(u, v) in &edges {
        used[u][v] = true;
    }
    let mut candidates: Vec<(usize, usize)> = (0..t)
        .flat_map(|u| (1..=t).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v && !used[u][v])
        .collect();
    candidates.shuffle(&mut rng);
    edges.extend(candidates.into_iter().take(p.num_edges - edges.len()));
    for (u, v) in edges {
        b.edge(ids[u].clone(), ids[v].clone(), p.length.length());
    }
    Ok(b.build("s", "t")?)
}

/// Five vertices mirrored across the horizontal axis: singletons `s`,
/// `1`, `2`, `t` and the rectangle `3 = [4, 5] × [−1, 1]`, Euclidean
/// lengths. The relaxation splits its flow between `1` and `2` and uses a
/// different point of `3` for each half, undercutting every path.
pub fn symmetry_instance() -> Gcs {
    let mut b = GcsBuilder::new();
    b.vertex("s", pt(&[0.0, 0.0]).unwrap())
        .vertex("1", pt(&[2.0, 2.0]).unwrap())
        .vertex("2", pt(&[2.0, -2.0]).unwrap())
        .vertex("3", ConvexSet::interval_box(&[4.0, -1.0], &[5.0, 1.0]).unwrap())
        .vertex("t", pt(&[8.0, 0.0]).unwrap());
    for (u, v) in [("s", "1"), ("s", "2"), ("1", "3"), ("2", "3"), ("3", "t")] {
        b.edge(u, v, EdgeLength::Euclidean);
    }
    b.build("s", "t").expect("fixed instance")
}

fn regular_polygon(center: [f64; 2], radius: f64, sides: usize, phase: f64) -> Result<ConvexSet, GeometryError> {
    let mut a = Matrix::zeros(sides, 2);
    let mut b = Vector::zeros(sides);
    for i in 0..sides {
        let phi = phase + 2.0 * PI * i as f64 / sides as f64;
        let (s, c) = phi.sin_cos();
        a[(i, 0)] = c;
        a[(i, 1)] = s;
        b[i] = c * center[0] + s * center[1] + radius;
    }
    ConvexSet::polyhedron(a, b)
}

fn ellipse(center: [f64; 2], rx: f64, ry: f64) -> Result<ConvexSet, GeometryError> {
    let a = Matrix::from_diagonal(&Vector::from_vec(vec![1.0 / rx, 1.0 / ry]));
    let b = -(&a * Vector::from_vec(center.to_vec()));
    ConvexSet::ellipsoid(a, b)
}

/// Vertex identifiers of [`two_dim_example`], source first.
pub const TWO_DIM_IDS: [&str; 9] = ["s", "v1", "v2", "v3", "v4", "v5", "v6", "v7", "t"];

/// Edges of [`two_dim_example`] as index pairs into [`TWO_DIM_IDS`].
pub const TWO_DIM_EDGES: [(usize, usize); 22] = [
    (0, 1), (0, 2), (0, 3), (1, 3), (2, 5), (3, 1), (3, 2), (3, 5), (3, 6), (3, 7), (4, 1),
    (4, 3), (5, 3), (5, 7), (6, 3), (6, 4), (6, 7), (6, 8), (7, 3), (7, 5), (7, 6), (7, 8),
];

/// Planar instance with 9 vertices, 22 edges and several cycles, from
/// `θ_s = (0, 0)` to `θ_t = (9, 0)`. The longest path has 7 edges, one short
/// of Hamiltonian. Interior sets are scaled by `sigma` about their
/// Chebyshev centers.
pub fn two_dim_example(sigma: f64, length: LengthKind) -> Result<Gcs, InstanceError> {
    let interior = [
        ellipse([1.5, 2.0], 0.8, 0.5)?,
        regular_polygon([1.5, -2.0], 0.7, 5, 0.3)?,
        ConvexSet::interval_box(&[3.0, -0.2], &[4.2, 1.2])?,
        regular_polygon([4.0, 3.0], 0.6, 3, PI / 2.0)?,
        ellipse([4.5, -2.5], 0.5, 0.9)?,
        regular_polygon([6.0, 1.5], 0.6, 6, 0.0)?,
        ConvexSet::interval_box(&[6.0, -1.6], &[7.0, -0.4])?,
    ];
    let mut b = GcsBuilder::new();
    b.vertex(TWO_DIM_IDS[0], pt(&[0.0, 0.0])?);
    for (i, set) in interior.iter().enumerate() {
        b.vertex(TWO_DIM_IDS[i + 1], set.scale(sigma, &set.chebyshev_center())?);
    }
    b.vertex(TWO_DIM_IDS[8], pt(&[9.0, 0.0])?);
    for &(u, v) in &TWO_DIM_EDGES {
        b.edge(TWO_DIM_IDS[u], TWO_DIM_IDS[v], length.length());
    }
    Ok(b.build("s", "t")?)
}

/// Planar footstep problem: double integrator over state `(q, v)` with
/// `‖v‖∞ <= 1`, `‖a‖∞ <= 1`, cost `‖v‖²/5 + ‖a‖²` per step, from
/// `q = (0.5, −3.5)` at rest to `(6.5, 3.5)` at rest. Five regions
/// (`η = 1`) form a corridor around two sluggish regions (`η = 0.1`) that
/// cover the direct route. The region layout is a recreation.
pub fn footstep_system(horizon: usize) -> Result<PwaSystem, InstanceError> {
    let regions: [([f64; 2], [f64; 2], f64); 7] = [
        ([0.0, -4.0], [2.0, -1.0], 1.0),
        ([0.0, -1.0], [2.0, 2.0], 1.0),
        ([0.0, 2.0], [4.0, 4.0], 1.0),
        ([4.0, 2.0], [7.0, 4.0], 1.0),
        ([5.0, -4.0], [7.0, 2.0], 1.0),
        ([2.0, -4.0], [5.0, -1.0], 0.1),
        ([2.0, -1.0], [5.0, 2.0], 0.1),
    ];
    pwa_from_regions(&regions, [0.5, -3.5], [6.5, 3.5], horizon)
}

/// Three-region version of [`footstep_system`] on `[0, 3]²`, small enough
/// to enumerate every mode sequence for short horizons.
pub fn footstep_small(horizon: usize) -> Result<PwaSystem, InstanceError> {
    let regions: [([f64; 2], [f64; 2], f64); 3] = [
        ([0.0, 0.0], [1.0, 3.0], 1.0),
        ([0.0, 2.0], [3.0, 3.0], 1.0),
        ([1.0, 0.0], [3.0, 2.0], 0.1),
    ];
    pwa_from_regions(&regions, [0.5, 0.5], [2.5, 2.5], horizon)
}

fn pwa_from_regions(regions: &[([f64; 2], [f64; 2], f64)], start: [f64; 2], goal: [f64; 2], horizon: usize) -> Result<PwaSystem, InstanceError> {
    let modes = regions
        .iter()
        .map(|&(lo, hi, eta)| double_integrator_mode(lo, hi, eta))
        .collect::<Result<Vec<_>, _>>()?;
    let s0 = Vector::from_vec(vec![start[0], start[1], 0.0, 0.0]);
    let goal = ConvexSet::point(&[goal[0], goal[1], 0.0, 0.0])?;
    Ok(PwaSystem::new(
        modes,
        ConvexSet::interval_box(&[-1.0, -1.0], &[1.0, 1.0])?,
        double_integrator_cost(),
        horizon,
        s0,
        Some(goal),
        None,
    )?)
}

/// A generated instance and whether its geometry is a recreation.
#[derive(Clone, Debug)]
pub struct Generated {
    pub gcs: Gcs,
    pub recreated: bool,
}

/// Parses generator specs:
///
/// * `hpp:<m>`
/// * `random:<seed>[:<n>:<|V|>:<|E|>:<volume>[:sq|:point]]`
/// * `symmetry`
/// * `twodim:<sigma>[:sq]`
pub fn generate(spec: &str) -> Result<Generated, InstanceError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || InstanceError::Params(format!("cannot parse generator spec `{spec}`"));
    let num = |i: usize| -> Result<f64, InstanceError> { parts.get(i).ok_or_else(bad)?.parse::<f64>().map_err(|_| bad()) };
    let count = |i: usize| -> Result<usize, InstanceError> { parts.get(i).ok_or_else(bad)?.parse::<usize>().map_err(|_| bad()) };
    match parts[0] {
        "hpp" if parts.len() == 2 => Ok(Generated { gcs: hpp_chain(count(1)?), recreated: false }),
        "random" if parts.len() == 2 || (6..=7).contains(&parts.len()) => {
            let seed = parts[1].parse::<u64>().map_err(|_| bad())?;
            let mut p = RandomParams::nominal(seed);
            if parts.len() > 2 {
                p.n = count(2)?;
                p.num_vertices = count(3)?;
                p.num_edges = count(4)?;
                p.volume = num(5)?;
            }
            match parts.get(6) {
                None => {}
                Some(&"sq") => p.length = LengthKind::SqEuclidean,
                Some(&"point") => p.singletons = true,
                Some(_) => return Err(bad()),
            }
            Ok(Generated { gcs: random_instance(&p)?, recreated: false })
        }
        "symmetry" if parts.len() == 1 => Ok(Generated { gcs: symmetry_instance(), recreated: true }),
        "twodim" if (2..=3).contains(&parts.len()) => {
            let length = match parts.get(2) {
                None => LengthKind::Euclidean,
                Some(&"sq") => LengthKind::SqEuclidean,
                Some(_) => return Err(bad()),
            };
            Ok(Generated { gcs: two_dim_example(num(1)?, length)?, recreated: true })
        }
        "hpp" | "random" | "symmetry" | "twodim" => Err(bad()),
        other => Err(InstanceError::UnknownGenerator(other.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::build_pwa_gcs;

    #[test]
    fn chain_sizes() {
        let g = hpp_chain(0);
        assert_eq!((g.num_vertices(), g.num_edges()), (2, 1));
        let g = hpp_chain(4);
        // s → 4 + t, each interior → 3 others + t.
        assert_eq!(g.num_edges(), 5 + 4 * 4);
        assert!(!g.is_acyclic());
    }

    #[test]
    fn random_is_deterministic_and_exact() {
        let p = RandomParams::nominal(42);
        let a = random_instance(&p).unwrap();
        assert_eq!(a, random_instance(&p).unwrap());
        assert_eq!(a.num_vertices(), 50);
        assert_eq!(a.num_edges(), 100);
        assert!(a.warnings().is_empty());
        assert_ne!(a, random_instance(&RandomParams::nominal(43)).unwrap());
    }

    #[test]
    fn random_vertices_lie_on_source_target_paths() {
        for seed in 0..10 {
            let g = random_instance(&RandomParams { seed, ..RandomParams::nominal(0) }).unwrap();
            let mut reach = vec![false; g.num_vertices()];
            let mut stack = vec![g.source()];
            while let Some(u) = stack.pop() {
                if std::mem::replace(&mut reach[u], true) {
                    continue;
                }
                stack.extend(g.out_edges(u).iter().map(|&k| g.edges()[k].v));
            }
            let mut coreach = vec![false; g.num_vertices()];
            let mut stack = vec![g.target()];
            while let Some(v) = stack.pop() {
                if std::mem::replace(&mut coreach[v], true) {
                    continue;
                }
                stack.extend(g.in_edges(v).iter().map(|&k| g.edges()[k].u));
            }
            assert!(reach.iter().zip(&coreach).all(|(a, b)| *a && *b), "seed {seed}");
        }
    }

    #[test]
    fn random_smallest_case_is_one_path() {
        let p = RandomParams { seed: 1, n: 2, num_vertices: 3, num_edges: 2, volume: 0.1, length: LengthKind::Euclidean, singletons: false };
        let g = random_instance(&p).unwrap();
        assert_eq!(g.enumerate_paths(10).paths, vec![vec![0, 1, 2]]);
        assert!(random_instance(&RandomParams { num_edges: 1, ..p.clone() }).is_err());
        assert!(random_instance(&RandomParams { num_edges: 4, ..p }).is_err());
    }

    #[test]
    fn two_dim_structure() {
        let g = two_dim_example(1.0, LengthKind::SqEuclidean).unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (9, 22));
        assert!(!g.is_acyclic());
        let paths = g.enumerate_paths(100_000);
        let longest = paths.paths.iter().map(|p| p.len() - 1).max().unwrap();
        assert_eq!(longest, 7);
        assert!(two_dim_example(0.0, LengthKind::Euclidean).is_err());
    }

    #[test]
    fn footstep_sizes() {
        let g = build_pwa_gcs(&footstep_system(30).unwrap()).unwrap();
        assert_eq!(g.num_vertices(), 212);
        assert_eq!(g.num_edges(), 1435);
        let g = build_pwa_gcs(&footstep_small(4).unwrap()).unwrap();
        assert_eq!((g.num_vertices(), g.num_edges()), (14, 3 + 3 * 9 + 3));
    }

    #[test]
    fn generator_specs() {
        assert_eq!(generate("hpp:3").unwrap().gcs, hpp_chain(3));
        assert!(generate("symmetry").unwrap().recreated);
        assert!(!generate("random:5:2:6:10:0.1:sq").unwrap().recreated);
        assert!(generate("twodim:2:sq").is_ok());
        assert!(matches!(generate("nope"), Err(InstanceError::UnknownGenerator(_))));
        assert!(generate("hpp:x").is_err());
        assert!(generate("random:1:2:6").is_err());
    }
}
