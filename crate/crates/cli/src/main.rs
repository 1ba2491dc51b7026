mod bench;
mod control;
mod options;
mod solve;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gcs_core::instances::{footstep_small, footstep_system, generate};
use gcs_core::io::{write_instance, SystemDoc};

use crate::bench::BenchArgs;
use crate::control::ControlArgs;
use crate::solve::SolveArgs;

/// Shortest paths in graphs of convex sets.
#[derive(Parser)]
#[command(name = "gcs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve an instance file or a generated instance.
    Solve(SolveArgs),
    /// Run a battery of random instances and write CSV rows plus summaries.
    Bench(BenchArgs),
    /// Solve a minimum-time or piecewise-affine control problem.
    Control(ControlArgs),
    /// Write a generated instance or control system as JSON.
    Export(ExportArgs),
}

#[derive(clap::Args)]
struct ExportArgs {
    /// Instance generator: hpp:M, random:SEED[:N:V:E:VOL[:sq|:point]], symmetry, twodim:SIGMA[:sq].
    #[arg(long, conflicts_with = "system")]
    gen: Option<String>,
    /// Control system generator: footstep:T or footstep-small:T.
    #[arg(long)]
    system: Option<String>,
    #[arg(long, short)]
    out: PathBuf,
    /// Also render a 2-D instance.
    #[arg(long)]
    svg: Option<PathBuf>,
}

/// Exit codes shared by all subcommands.
pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_LIMIT: u8 = 3;

fn init_logging() {
    let level = match std::env::var("GCS_LOG").as_deref() {
        Ok("quiet") => log::LevelFilter::Error,
        Ok("debug") => log::LevelFilter::Debug,
        Ok("info") | Err(_) => log::LevelFilter::Info,
        Ok(other) => {
            eprintln!("warning: GCS_LOG={other} is not one of quiet, info, debug; using info");
            log::LevelFilter::Info
        }
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
}

fn export(args: &ExportArgs) -> anyhow::Result<u8> {
    if let Some(spec) = &args.system {
        let (name, horizon) = spec.split_once(':').ok_or_else(|| anyhow::anyhow!("expected footstep:T, got `{spec}`"))?;
        let horizon: usize = horizon.parse()?;
        let sys = match name {
            "footstep" => footstep_system(horizon)?,
            "footstep-small" => footstep_small(horizon)?,
            _ => anyhow::bail!("unknown system generator `{name}`"),
        };
        let text = serde_json::to_string_pretty(&SystemDoc::from_pwa(&sys))?;
        std::fs::write(&args.out, text)?;
        return Ok(EXIT_OK);
    }
    let Some(spec) = &args.gen else { anyhow::bail!("pass --gen or --system") };
    let generated = generate(spec)?;
    write_instance(&args.out, &generated.gcs)?;
    if let Some(path) = &args.svg {
        std::fs::write(path, svg::render(&generated.gcs, None, None)?)?;
    }
    Ok(EXIT_OK)
}

/// The error chain joined by colons, skipping causes whose text the outer
/// messages already contain.
fn describe(err: &anyhow::Error) -> String {
    let mut text = err.to_string();
    for cause in err.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

/// Writes to stdout, treating a closed pipe as success.
pub fn emit(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    init_logging();
    // Usage errors exit with 1; clap's own 2 would read as infeasible.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => solve::run(args),
        Command::Bench(args) => bench::run(args),
        Command::Control(args) => control::run(args),
        Command::Export(args) => export(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(EXIT_ERROR)
        }
    }
}
