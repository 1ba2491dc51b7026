use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use gcs_core::instances::{random_instance, LengthKind, RandomParams};
use gcs_core::io::read_instance;
use gcs_core::{solve_micp, BnbConfig, BnbStatus, Gcs};

use crate::options::SolverArgs;
use crate::solve::gap;
use crate::EXIT_OK;

#[derive(Args)]
pub struct BenchArgs {
    /// Seeds per grid point, counting up from --seed.
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub dims: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub vertices: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub edges: Vec<usize>,
    /// Volume of each interior cube.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub volume: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "euclidean", value_parser = parse_length)]
    pub length: Vec<LengthKind>,
    /// Extra instance files, one row each, after the grid.
    #[arg(long)]
    pub instance: Vec<PathBuf>,
    /// CSV path; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

fn parse_length(s: &str) -> Result<LengthKind, String> {
    match s {
        "euclidean" => Ok(LengthKind::Euclidean),
        "sq" | "sq_euclidean" => Ok(LengthKind::SqEuclidean),
        _ => Err(format!("unknown length `{s}`, expected euclidean or sq")),
    }
}

fn length_name(l: LengthKind) -> &'static str {
    match l {
        LengthKind::Euclidean => "euclidean",
        LengthKind::SqEuclidean => "sq",
    }
}

enum Source {
    Random(RandomParams),
    File(PathBuf),
}

struct Job {
    group: String,
    source: Source,
}

#[derive(Serialize, Default, Clone, Debug, PartialEq)]
pub struct Row {
    /// `row`, `median` or `max`.
    pub kind: &'static str,
    pub group: String,
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub vertices: Option<usize>,
    pub edges: Option<usize>,
    pub volume: Option<f64>,
    pub length: Option<&'static str>,
    pub status: String,
    pub relax: Option<f64>,
    pub micp: Option<f64>,
    pub gap_pct: Option<f64>,
    pub nodes: Option<usize>,
    pub time_s: Option<f64>,
}

impl Row {
    fn solved(&self) -> bool {
        self.status == "optimal"
    }
}

fn jobs(args: &BenchArgs) -> Vec<Job> {
    let mut out = Vec::new();
    for &n in &args.dims {
        for &num_vertices in &args.vertices {
            for &num_edges in &args.edges {
                for &volume in &args.volume {
                    for &length in &args.length {
                        let group = format!("n{n}_v{num_vertices}_e{num_edges}_vol{volume}_{}", length_name(length));
                        for seed in args.solver.seed..args.solver.seed + args.seeds {
                            let p = RandomParams { seed, n, num_vertices, num_edges, volume, length, singletons: false };
                            out.push(Job { group: group.clone(), source: Source::Random(p) });
                        }
                    }
                }
            }
        }
    }
    for path in &args.instance {
        out.push(Job { group: path.display().to_string(), source: Source::File(path.clone()) });
    }
    out
}

fn run_job(job: &Job, cfg: &BnbConfig) -> Row {
    let mut row = Row { kind: "row", group: job.group.clone(), ..Row::default() };
    let g: anyhow::Result<Gcs> = match &job.source {
        Source::Random(p) => {
            row.seed = Some(p.seed);
            row.n = Some(p.n);
            row.vertices = Some(p.num_vertices);
            row.edges = Some(p.num_edges);
            row.volume = Some(p.volume);
            row.length = Some(length_name(p.length));
            random_instance(p).map_err(Into::into)
        }
        Source::File(path) => read_instance(path).map_err(Into::into),
    };
    let g = match g {
        Ok(g) => g,
        Err(err) => {
            row.status = format!("error: {err}");
            return row;
        }
    };
    row.n = row.n.or_else(|| Some(g.dim(g.source())));
    row.vertices = Some(g.num_vertices());
    row.edges = Some(g.num_edges());

    let start = Instant::now();
    let report = solve_micp(&g, cfg);
    row.time_s = Some(start.elapsed().as_secs_f64());
    match report {
        Err(err) => row.status = format!("error: {err}"),
        Ok(rep) => {
            row.nodes = Some(rep.nodes);
            row.relax = rep.root_bound.is_finite().then_some(rep.root_bound);
            row.micp = rep.cost();
            row.status = match rep.status {
                BnbStatus::Optimal => "optimal",
                BnbStatus::Infeasible => "infeasible",
                BnbStatus::LimitReached => "limit",
            }
            .into();
            if let (Some(c), Some(r)) = (row.micp, row.relax) {
                row.gap_pct = Some(100.0 * gap(c, r));
            }
        }
    }
    row
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 { values[m] } else { 0.5 * (values[m - 1] + values[m]) })
}

/// Median and max rows per group over solved rows only, in first-seen
/// group order.
pub fn summarize(rows: &[Row]) -> Vec<Row> {
    let mut groups: Vec<&str> = Vec::new();
    for r in rows {
        if !groups.contains(&r.group.as_str()) {
            groups.push(&r.group);
        }
    }
    let mut out = Vec::new();
    for group in groups {
        let members: Vec<&Row> = rows.iter().filter(|r| r.group == group).collect();
        let solved: Vec<&Row> = members.iter().copied().filter(|r| r.solved()).collect();
        let status = format!("{}/{} solved", solved.len(), members.len());
        let collect = |f: fn(&Row) -> Option<f64>| solved.iter().filter_map(|r| f(r)).collect::<Vec<f64>>();
        let mut gaps = collect(|r| r.gap_pct);
        let mut times = collect(|r| r.time_s);
        let mut nodes = collect(|r| r.nodes.map(|n| n as f64));
        let max = |v: &[f64]| v.iter().copied().reduce(f64::max);
        out.push(Row {
            kind: "max",
            group: group.to_string(),
            status: status.clone(),
            gap_pct: max(&gaps),
            time_s: max(&times),
            nodes: max(&nodes).map(|n| n as usize),
            ..Row::default()
        });
        out.push(Row {
            kind: "median",
            group: group.to_string(),
            status,
            gap_pct: median(&mut gaps),
            time_s: median(&mut times),
            nodes: median(&mut nodes).map(|n| n.round() as usize),
            ..Row::default()
        });
        let len = out.len();
        out.swap(len - 2, len - 1);
    }
    out
}

pub fn run(args: &BenchArgs) -> anyhow::Result<u8> {
    let jobs = jobs(args);
    log::info!("benchmark with {} instances on {} threads", jobs.len(), args.solver.jobs);
    let cfg = args.solver.bnb(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.solver.jobs.max(1)).build()?;
    let rows: Vec<Row> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let row = run_job(job, &cfg);
                log::info!("{} seed {:?}: {}", row.group, row.seed, row.status);
                row
            })
            .collect()
    });

    let summary = summarize(&rows);
    let sink: Box<dyn std::io::Write> = match &args.out {
        Some(path) => Box::new(std::fs::File::create(path).with_context(|| path.display().to_string())?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in rows.iter().chain(&summary) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(group: &str, status: &str, gap: f64) -> Row {
        Row { kind: "row", group: group.into(), status: status.into(), gap_pct: Some(gap), time_s: Some(gap), ..Row::default() }
    }

    #[test]
    fn summaries_skip_unsolved_rows() {
        let rows = vec![row("a", "optimal", 1.0), row("a", "infeasible", 50.0), row("a", "optimal", 3.0), row("b", "optimal", 2.0)];
        let s = summarize(&rows);
        assert_eq!(s.len(), 4);
        assert_eq!((s[0].kind, s[0].group.as_str(), s[0].gap_pct), ("median", "a", Some(2.0)));
        assert_eq!((s[1].kind, s[1].gap_pct), ("max", Some(3.0)));
        assert_eq!(s[0].status, "2/3 solved");
        assert_eq!(s[2].gap_pct, Some(2.0));
    }

    #[test]
    fn median_of_even_count_averages() {
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
