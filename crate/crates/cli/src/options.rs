use clap::Args;

use gcs_core::{BnbConfig, TighteningOptions, ToleranceConfig};

#[derive(Args, Clone, Debug)]
pub struct SolverArgs {
    /// Conic solver feasibility tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol_feas: f64,
    /// Relative optimality gap at which branch and bound stops.
    #[arg(long, default_value_t = 1e-6)]
    pub tol_gap: f64,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Worker threads: nodes in flight for solve, rows in flight for bench.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Seed for certificate sampling, and the first seed of a bench battery.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Drop the degree and two-cycle rows on cyclic graphs.
    #[arg(long)]
    pub no_tighten: bool,
}

impl SolverArgs {
    pub fn tightening(&self) -> TighteningOptions {
        if self.no_tighten {
            TighteningOptions::none()
        } else {
            TighteningOptions::default()
        }
    }

    pub fn tolerances(&self) -> ToleranceConfig {
        ToleranceConfig { feas_tol: self.tol_feas, gap_tol: self.tol_feas, ..ToleranceConfig::default() }
    }

    pub fn bnb(&self, threads: usize) -> BnbConfig {
        let defaults = BnbConfig::default();
        BnbConfig {
            rel_gap_tol: self.tol_gap,
            node_limit: self.node_limit.or(defaults.node_limit),
            time_limit: self.time_limit,
            threads: threads.max(1),
            tightening: self.tightening(),
            tol: self.tolerances(),
            ..defaults
        }
    }
}
