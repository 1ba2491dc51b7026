use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, ValueEnum};
use indexmap::IndexMap;
use serde::Serialize;

use gcs_core::duals::{check_certificate, extract_potentials, CertificateOptions, CertificateReport};
use gcs_core::formulation::reconstruct;
use gcs_core::instances::generate;
use gcs_core::io::read_instance;
use gcs_core::{build_relaxation, solve_micp, BnbStatus, Gcs, PathResult, SolveStatus};

use crate::options::SolverArgs;
use crate::{svg, EXIT_ERROR, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_OK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Relax,
    Micp,
}

#[derive(Args)]
pub struct SolveArgs {
    /// Instance JSON file.
    #[arg(required_unless_present = "gen", conflicts_with = "gen")]
    pub instance: Option<PathBuf>,
    /// Instance generator: hpp:M, random:SEED[:N:V:E:VOL[:sq|:point]], symmetry, twodim:SIGMA[:sq].
    #[arg(long)]
    pub gen: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Micp)]
    pub mode: Mode,
    /// Result JSON path; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Render the instance and the solution.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Coordinates drawn by --svg for sets of dimension above 2.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    pub proj: Option<Vec<usize>>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Serialize)]
pub struct Potential {
    pub p: f64,
    pub r: Vec<f64>,
}

#[derive(Serialize)]
pub struct Certificate {
    pub tightened: bool,
    pub potentials: IndexMap<String, Potential>,
    #[serde(flatten)]
    pub report: CertificateReport,
    pub passed: bool,
}

#[derive(Serialize, Default)]
pub struct Timings {
    pub relaxation_s: f64,
    pub micp_s: Option<f64>,
    pub certificate_s: f64,
    pub total_s: f64,
}

#[derive(Serialize)]
pub struct SolveResult {
    pub instance: String,
    pub recreated: bool,
    pub mode: Mode,
    pub status: &'static str,
    pub cost: Option<f64>,
    pub path: Option<Vec<String>>,
    pub positions: Option<Vec<Vec<f64>>>,
    /// Proven lower bound on the shortest path.
    pub bound: Option<f64>,
    pub relaxation: Option<f64>,
    /// `(micp − relaxation) / micp`.
    pub gap: Option<f64>,
    pub nodes: Option<usize>,
    pub certificate: Option<Certificate>,
    pub timings: Timings,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn path_fields(g: &Gcs, path: Option<&PathResult>) -> (Option<Vec<String>>, Option<Vec<Vec<f64>>>) {
    match path {
        Some(p) => (
            Some(p.ids(g).into_iter().map(String::from).collect()),
            Some(p.positions.iter().map(|x| x.as_slice().to_vec()).collect()),
        ),
        None => (None, None),
    }
}

pub fn gap(micp: f64, relaxation: f64) -> f64 {
    if micp == 0.0 {
        0.0
    } else {
        (micp - relaxation) / micp
    }
}

pub fn load(instance: Option<&PathBuf>, gen: Option<&str>) -> anyhow::Result<(Gcs, String, bool)> {
    match (instance, gen) {
        (Some(path), _) => {
            let g = read_instance(path)?;
            Ok((g, path.display().to_string(), false))
        }
        (None, Some(spec)) => {
            let generated = generate(spec).with_context(|| format!("generator `{spec}`"))?;
            Ok((generated.gcs, spec.to_string(), generated.recreated))
        }
        (None, None) => anyhow::bail!("pass an instance path or --gen"),
    }
}

/// Solves the relaxation, extracts potentials and checks them.
fn relax_and_certify(g: &Gcs, args: &SolverArgs, timings: &mut Timings) -> (SolveStatus, f64, Option<PathResult>, Option<Certificate>) {
    let start = Instant::now();
    let rp = build_relaxation(g, args.tightening());
    let sol = rp.program.solve_retrying(&args.tolerances());
    timings.relaxation_s = start.elapsed().as_secs_f64();
    if !sol.is_optimal() {
        return (sol.status, f64::NAN, None, None);
    }
    let flows = reconstruct(g, &rp, &sol.primal);
    let path = flows.to_path_result(g, 1e-6);

    let start = Instant::now();
    let certificate = extract_potentials(g, &rp, &sol).ok().map(|cert| {
        let opts = CertificateOptions { seed: args.seed, ..CertificateOptions::default() };
        let report = check_certificate(&cert, g, &flows, &opts);
        let potentials = (0..g.num_vertices())
            .map(|v| (g.id(v).to_string(), Potential { p: cert.p[v], r: cert.r[v].clone() }))
            .collect();
        Certificate { tightened: cert.tightened, potentials, passed: report.passed(), report }
    });
    timings.certificate_s = start.elapsed().as_secs_f64();
    (sol.status, sol.objective, path, certificate)
}

pub fn run(args: &SolveArgs) -> anyhow::Result<u8> {
    let start = Instant::now();
    let (g, name, recreated) = load(args.instance.as_ref(), args.gen.as_deref())?;
    for w in g.warnings() {
        log::warn!("{w}");
    }
    log::info!("{name}: {} vertices, {} edges", g.num_vertices(), g.num_edges());

    let mut timings = Timings::default();
    let (relax_status, relax_value, relax_path, certificate) = relax_and_certify(&g, &args.solver, &mut timings);
    let mut result = SolveResult {
        instance: name,
        recreated,
        mode: args.mode,
        status: "optimal",
        cost: None,
        path: None,
        positions: None,
        bound: None,
        relaxation: finite(relax_value),
        gap: None,
        nodes: None,
        certificate,
        timings: Timings::default(),
    };
    let mut solution = None;
    let code = match (args.mode, relax_status) {
        (_, SolveStatus::Infeasible) => {
            result.status = "infeasible";
            EXIT_INFEASIBLE
        }
        (_, SolveStatus::Unbounded | SolveStatus::NumericalFailure) => {
            result.status = "solver_failure";
            EXIT_ERROR
        }
        (Mode::Relax, SolveStatus::Optimal) => {
            result.cost = Some(relax_value);
            result.bound = Some(relax_value);
            (result.path, result.positions) = path_fields(&g, relax_path.as_ref());
            solution = relax_path;
            EXIT_OK
        }
        (Mode::Micp, SolveStatus::Optimal) => {
            let report = solve_micp(&g, &args.solver.bnb(args.solver.jobs))?;
            timings.micp_s = Some(report.wall_time);
            result.nodes = Some(report.nodes);
            result.bound = finite(report.lower_bound);
            result.relaxation = finite(report.root_bound);
            result.cost = report.cost();
            (result.path, result.positions) = path_fields(&g, report.incumbent.as_ref());
            if let Some(cost) = report.cost() {
                result.gap = Some(gap(cost, report.root_bound));
            }
            solution = report.incumbent;
            match report.status {
                BnbStatus::Optimal => EXIT_OK,
                BnbStatus::Infeasible => {
                    result.status = "infeasible";
                    EXIT_INFEASIBLE
                }
                BnbStatus::LimitReached => {
                    result.status = "limit";
                    EXIT_LIMIT
                }
            }
        }
    };

    if let Some(path) = &args.svg {
        let proj = args.proj.as_ref().map(|p| (p[0], p[1]));
        std::fs::write(path, svg::render(&g, solution.as_ref(), proj)?).with_context(|| path.display().to_string())?;
    }
    timings.total_s = start.elapsed().as_secs_f64();
    result.timings = timings;
    let text = serde_json::to_string_pretty(&result)?;
    match &args.out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| path.display().to_string())?,
        None => crate::emit(&(text + "\n"))?,
    }
    log::info!("status {} cost {:?}", result.status, result.cost);
    Ok(code)
}
