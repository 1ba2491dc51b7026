use std::path::Path;
use std::process::{Command, Output};

use gcs_core::io::write_instance;
use gcs_core::{AffineEdgeConstraint, ConvexSet, EdgeLength, Gcs, Matrix, Relation, Vector};
use serde_json::Value;

fn gcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gcs")).args(args).env("GCS_LOG", "quiet").output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn hpp_chain_micp_and_relaxation() {
    let out = gcs(&["solve", "--gen", "hpp:4", "--mode", "micp"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let cost = v["cost"].as_f64().unwrap();
    assert!((cost - 0.2).abs() <= 1e-6, "{cost}");
    assert_eq!(v["path"].as_array().unwrap().len(), 6);
    let relax = v["relaxation"].as_f64().unwrap();
    let gap = v["gap"].as_f64().unwrap();
    assert!((gap - (cost - relax) / cost).abs() <= 1e-9);
    assert!(v["certificate"]["weak_duality"].as_bool().unwrap());
    for key in ["bound", "timings", "positions"] {
        assert!(!v[key].is_null(), "{key}");
    }

    let out = gcs(&["solve", "--gen", "hpp:4", "--mode", "relax"]);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["cost"].as_f64().unwrap() <= 0.2 + 1e-9);
}

#[test]
fn untightened_certificate_passes() {
    let out = gcs(&["solve", "--gen", "symmetry", "--no-tighten", "--mode", "relax"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!(v["certificate"]["passed"].as_bool().unwrap(), "{}", v["certificate"]);
    assert_eq!(v["certificate"]["potentials"].as_object().unwrap().len(), 5);
    assert!(v["path"].is_null());
}

#[test]
fn input_errors_exit_one() {
    let out = gcs(&["solve", "missing.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"vertices\": {\"s\": {\"type\": \"box\", \"lo\": [0]}}}").unwrap();
    let out = gcs(&["solve", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 1") && err.contains("vertices"), "{err}");

    assert_eq!(code(&gcs(&["solve", "--no-such-flag"])), 1);
    assert_eq!(code(&gcs(&["solve", "--gen", "nosuch:1"])), 1);
}

#[test]
fn unreachable_min_time_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sys.json");
    let doc = r#"{
        "kind": "mintime",
        "a": [[1.0]], "b": [[1.0]],
        "state_set": {"type": "box", "lo": [-5.0], "hi": [5.0]},
        "control_set": {"type": "box", "lo": [-1.0], "hi": [1.0]},
        "s0": [3.0], "t_max": 2
    }"#;
    std::fs::write(&path, doc).unwrap();
    let out = gcs(&["control", path.to_str().unwrap(), "--kind", "mintime"]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["status"], "infeasible");

    std::fs::write(&path, doc.replace("\"t_max\": 2", "\"t_max\": 5")).unwrap();
    let out = gcs(&["control", path.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["horizon"], 3);
    assert_eq!(code(&gcs(&["control", path.to_str().unwrap(), "--kind", "pwa"])), 1);
}

#[test]
fn single_mode_pwa_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pwa.json");
    let csv = dir.path().join("traj.csv");
    let doc = r#"{
        "kind": "pwa",
        "modes": [{"region": {"type": "box", "lo": [-5.0], "hi": [5.0]}, "a": [[1.0]], "b": [[1.0]], "c": [0.0]}],
        "control_set": {"type": "box", "lo": [-1.0], "hi": [1.0]},
        "stage_cost": {"c": [[1.0, 0.0], [0.0, 1.0]], "d": [0.0, 0.0]},
        "horizon": 3,
        "s0": [2.0]
    }"#;
    std::fs::write(&path, doc).unwrap();
    let out = gcs(&["control", path.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!(v["dynamics_residual"].as_f64().unwrap() <= 1e-6);
    assert!(v["gap"].is_f64());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{text}");
}

fn infeasible_instance(path: &Path) {
    // The edge demands x_t − x_s = 5 between the points 0 and 1.
    let k = AffineEdgeConstraint::new(
        Matrix::from_element(1, 1, -1.0),
        Matrix::from_element(1, 1, 1.0),
        Vector::from_element(1, 5.0),
        Relation::Eq,
    )
    .unwrap();
    let g = Gcs::build(
        vec![("s".into(), ConvexSet::point(&[0.0]).unwrap()), ("t".into(), ConvexSet::point(&[1.0]).unwrap())],
        vec![("s".into(), "t".into(), EdgeLength::constant(1.0, Some(k)).unwrap())],
        "s",
        "t",
    )
    .unwrap();
    write_instance(path, &g).unwrap();
}

#[test]
fn infeasible_solve_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inf.json");
    infeasible_instance(&path);
    let out = gcs(&["solve", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert_eq!(json(&out)["status"], "infeasible");
}

#[test]
fn bench_rows_and_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let inf = dir.path().join("inf.json");
    infeasible_instance(&inf);
    let csv = dir.path().join("bench.csv");
    let args = [
        "bench", "--seeds", "1", "--dims", "2", "--vertices", "7", "--edges", "10", "--instance",
        inf.to_str().unwrap(), "--out", csv.to_str().unwrap(), "--jobs", "2",
    ];
    assert_eq!(code(&gcs(&args)), 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    let header = &lines[0];
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<&Vec<&str>> = lines[1..].iter().filter(|l| l[col("kind")] == "row").collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][col("status")], "optimal");
    assert_eq!(rows[1][col("status")], "infeasible");
    let summaries: Vec<&Vec<&str>> = lines[1..].iter().filter(|l| l[col("kind")] != "row").collect();
    assert_eq!(summaries.len(), 4);
    let flagged = summaries.iter().find(|l| l[col("group")] == inf.to_str().unwrap()).unwrap();
    assert_eq!(flagged[col("status")], "0/1 solved");
    assert_eq!(flagged[col("gap_pct")], "");
}

#[test]
fn export_round_trips_through_solve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sym.json");
    let svg = dir.path().join("sym.svg");
    let out = gcs(&["export", "--gen", "symmetry", "-o", path.to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let from_file = json(&gcs(&["solve", path.to_str().unwrap()]))["cost"].as_f64().unwrap();
    let generated = json(&gcs(&["solve", "--gen", "symmetry"]))["cost"].as_f64().unwrap();
    assert!((from_file - generated).abs() <= 1e-9);
}

#[test]
fn svg_requires_planar_or_projection() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("r.svg");
    let s = svg.to_str().unwrap();
    assert_eq!(code(&gcs(&["solve", "--gen", "random:3:3:6:8:0.05", "--svg", s])), 1);
    assert_eq!(code(&gcs(&["solve", "--gen", "random:3:3:6:8:0.05", "--svg", s, "--proj", "0", "2"])), 0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("stroke-dasharray"));
}

#[test]
fn log_levels() {
    let run = |level: &str| {
        Command::new(env!("CARGO_BIN_EXE_gcs")).args(["solve", "--gen", "hpp:1"]).env("GCS_LOG", level).output().unwrap()
    };
    assert!(run("quiet").stderr.is_empty());
    assert!(String::from_utf8_lossy(&run("info").stderr).contains("INFO"));
    assert!(String::from_utf8_lossy(&run("debug").stderr).contains("DEBUG"));
}
