use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::Serialize;

use gcs_core::control::{
    build_min_time_gcs, build_pwa_gcs, extract_min_time, extract_pwa, min_time_residual, pwa_residual, Trajectory,
};
use gcs_core::instances::{footstep_small, footstep_system};
use gcs_core::io::{read_system, System};
use gcs_core::{solve_micp, BnbStatus};

use crate::options::SolverArgs;
use crate::solve::gap;
use crate::{EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_OK};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Mintime,
    Pwa,
}

#[derive(Args)]
pub struct ControlArgs {
    /// System JSON file.
    #[arg(required_unless_present = "gen", conflicts_with = "gen")]
    pub system: Option<PathBuf>,
    /// Built-in system: footstep:T or footstep-small:T.
    #[arg(long)]
    pub gen: Option<String>,
    /// Expected system kind; checked against the file when given.
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Result JSON path; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Trajectory CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Serialize)]
pub struct ControlResult {
    pub kind: Kind,
    pub status: &'static str,
    pub cost: Option<f64>,
    pub horizon: Option<usize>,
    pub modes: Option<Vec<usize>>,
    pub bound: Option<f64>,
    pub relaxation: Option<f64>,
    /// `(micp − relaxation) / micp`.
    pub gap: Option<f64>,
    pub nodes: usize,
    pub dynamics_residual: Option<f64>,
    pub vertices: usize,
    pub edges: usize,
    pub time_s: f64,
}

fn load(args: &ControlArgs) -> anyhow::Result<System> {
    if let Some(path) = &args.system {
        return Ok(read_system(path)?);
    }
    let spec = args.gen.as_deref().unwrap_or_default();
    let (name, horizon) = spec.split_once(':').context("expected footstep:T or footstep-small:T")?;
    let horizon: usize = horizon.parse().with_context(|| format!("horizon in `{spec}`"))?;
    let sys = match name {
        "footstep" => footstep_system(horizon)?,
        "footstep-small" => footstep_small(horizon)?,
        _ => bail!("unknown system generator `{name}`"),
    };
    Ok(System::Pwa(sys))
}

pub fn run(args: &ControlArgs) -> anyhow::Result<u8> {
    let start = Instant::now();
    let system = load(args)?;
    let kind = match &system {
        System::MinTime { .. } => Kind::Mintime,
        System::Pwa(_) => Kind::Pwa,
    };
    if let Some(expected) = args.kind {
        if expected != kind {
            bail!("--kind {expected:?} does not match the {kind:?} system in the input");
        }
    }
    let g = match &system {
        System::MinTime { system, t_max } => build_min_time_gcs(system, *t_max)?,
        System::Pwa(sys) => build_pwa_gcs(sys)?,
    };
    log::info!("{kind:?} graph with {} vertices and {} edges", g.num_vertices(), g.num_edges());
    let report = solve_micp(&g, &args.solver.bnb(args.solver.jobs))?;

    let trajectory: Option<(Trajectory, f64)> = match (&system, &report.incumbent) {
        (System::MinTime { system, .. }, Some(path)) => {
            let traj = extract_min_time(system, path);
            let residual = min_time_residual(system, &traj);
            Some((traj, residual))
        }
        (System::Pwa(sys), Some(path)) => {
            let traj = extract_pwa(sys, &g, path)?;
            let residual = pwa_residual(sys, &traj);
            Some((traj, residual))
        }
        (_, None) => None,
    };
    let (status, code) = match report.status {
        BnbStatus::Optimal => ("optimal", EXIT_OK),
        BnbStatus::Infeasible => ("infeasible", EXIT_INFEASIBLE),
        BnbStatus::LimitReached => ("limit", EXIT_LIMIT),
    };
    let result = ControlResult {
        kind,
        status,
        cost: report.cost(),
        horizon: trajectory.as_ref().map(|(t, _)| t.horizon()),
        modes: trajectory.as_ref().filter(|_| kind == Kind::Pwa).map(|(t, _)| t.modes.clone()),
        bound: report.lower_bound.is_finite().then_some(report.lower_bound),
        relaxation: report.root_bound.is_finite().then_some(report.root_bound),
        gap: report.cost().map(|c| gap(c, report.root_bound)),
        nodes: report.nodes,
        dynamics_residual: trajectory.as_ref().map(|(_, r)| *r),
        vertices: g.num_vertices(),
        edges: g.num_edges(),
        time_s: start.elapsed().as_secs_f64(),
    };

    if let (Some(path), Some((traj, _))) = (&args.csv, &trajectory) {
        std::fs::write(path, traj.to_csv()).with_context(|| path.display().to_string())?;
    }
    let text = serde_json::to_string_pretty(&result)?;
    match &args.out {
        Some(path) => std::fs::write(path, text + "\n").with_context(|| path.display().to_string())?,
        None => crate::emit(&(text + "\n"))?,
    }
    Ok(code)
}
