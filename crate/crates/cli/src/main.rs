//! `stork`: solves, stability scans, convergence studies, NFE sweeps and
//! coefficient dumps, written as CSV or JSON with a reproducibility header.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stork::fields::ProblemSpec;
use stork::stepper::{Method, SubstageMode};

use config::{Command, ConvergenceKind, Format, RunConfig, Schedule};
use error::Failure;

/// Environment variable naming the default output directory.
const OUT_DIR_VAR: &str = "STORK_OUT_DIR";

#[derive(Parser)]
#[command(name = "stork", version, about = "Stabilized Runge-Kutta samplers and their analyses")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Integrate a test problem and write its trajectory.
    Solve(Opts),
    /// Euler, Heun and four-stage RKG2 on the stiff scalar problem.
    DemoStiff(Opts),
    /// Scan |R(z)| over a rectangle and measure the real-axis extent.
    Stability(Opts),
    /// Fit the empirical order of a solver under grid refinement.
    Convergence(Opts),
    /// Endpoint error for every method and NFE budget.
    Sweep(Opts),
    /// Write the recurrence coefficients as param,index,value rows.
    DumpCoeffs(Opts),
}

/// Flags override values from `--config`.
#[derive(Args, Default)]
struct Opts {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; relative paths resolve against $STORK_OUT_DIR.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// stiff-scalar, linear-system, rotation, gaussian-vp or gaussian-flow.
    #[arg(long)]
    problem: Option<String>,
    /// Super-step count; a comma list for `convergence`.
    #[arg(long, value_delimiter = ',')]
    steps: Vec<usize>,
    /// NFE budget; a comma list for `sweep`.
    #[arg(long, value_delimiter = ',')]
    nfe: Vec<usize>,
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    epsilon_floor: Option<f64>,
    #[arg(long)]
    method: Option<Method>,
    /// Methods of a sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    substeps: Option<usize>,
    #[arg(long)]
    taylor_order: Option<usize>,
    #[arg(long)]
    mode: Option<SubstageMode>,
    /// Reject ROCK4 degrees missing from the table.
    #[arg(long)]
    strict: bool,
    /// Chained ROCK4 finishing stages.
    #[arg(long)]
    literal_finishing: bool,
    /// Skip Tweedie finishing in noise solves.
    #[arg(long)]
    no_tweedie: bool,
    /// Record only the endpoints of solves.
    #[arg(long)]
    endpoints_only: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, value_enum)]
    kind: Option<ConvergenceKind>,
    /// Scan rectangle as re_min,re_max,im_min,im_max.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    bounds: Vec<f64>,
    /// Lattice points per axis.
    #[arg(long)]
    resolution: Option<usize>,
}

fn resolve(command: Command, o: Opts) -> Result<RunConfig, Failure> {
    let mut cfg = match &o.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.command = command;
    if let Some(p) = o.out {
        cfg.output.path = Some(p);
    }
    if let Some(f) = o.format {
        cfg.output.format = f;
    }
    if let Some(name) = &o.problem {
        cfg.problem = ProblemSpec::from_name(name)?;
    }
    match (command, o.steps.as_slice()) {
        (_, []) => {}
        (Command::Convergence, list) => cfg.convergence.steps = list.to_vec(),
        (_, [m]) => cfg.grid.steps = Some(*m),
        _ => return Err(Failure::usage("--steps takes one value outside convergence")),
    }
    match (command, o.nfe.as_slice()) {
        (_, []) => {}
        (Command::Sweep, list) => cfg.sweep.nfe = list.to_vec(),
        (_, [b]) => cfg.grid.nfe = Some(*b),
        _ => return Err(Failure::usage("--nfe takes one value outside sweep")),
    }
    if let Some(s) = o.schedule {
        cfg.grid.schedule = s;
    }
    if let Some(s) = o.shift {
        cfg.grid.shift = s;
    }
    if let Some(f) = o.epsilon_floor {
        cfg.grid.epsilon_floor = Some(f);
    }
    if let Some(m) = o.method {
        cfg.solver.method = m;
    }
    if !o.methods.is_empty() {
        cfg.sweep.methods = o.methods;
    }
    if let Some(s) = o.substeps {
        cfg.solver.substeps = s;
    }
    if let Some(n) = o.taylor_order {
        cfg.solver.taylor_order = n;
    }
    if let Some(m) = o.mode {
        cfg.solver.substage_mode = m;
    }
    cfg.solver.strict_degree |= o.strict;
    cfg.solver.literal_finishing |= o.literal_finishing;
    if o.no_tweedie {
        cfg.solver.tweedie = false;
    }
    if o.endpoints_only {
        cfg.solver.record_trajectory = false;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(b) = o.batch {
        cfg.batch = b;
    }
    if let Some(k) = o.kind {
        cfg.convergence.kind = k;
    }
    match o.bounds[..] {
        [] => {}
        [a, b, c, d] => cfg.stability.bounds = stork::analysis::ScanBounds::new(a, b, c, d)?,
        _ => {
            return Err(Failure::usage(format!(
                "--bounds takes re_min,re_max,im_min,im_max, got {} values",
                o.bounds.len()
            )))
        }
    }
    if let Some(r) = o.resolution {
        cfg.stability.nx = r;
        cfg.stability.ny = r;
    }
    Ok(cfg)
}

fn execute(sub: Sub) -> Result<PathBuf, Failure> {
    let (command, opts) = match sub {
        Sub::Solve(o) => (Command::Solve, o),
        Sub::DemoStiff(o) => (Command::DemoStiff, o),
        Sub::Stability(o) => (Command::Stability, o),
        Sub::Convergence(o) => (Command::Convergence, o),
        Sub::Sweep(o) => (Command::Sweep, o),
        Sub::DumpCoeffs(o) => (Command::DumpCoeffs, o),
    };
    let cfg = resolve(command, opts)?;
    let artifact = commands::run(&cfg)?;
    let bytes = output::render(&cfg, &artifact)?;
    let out_dir = std::env::var_os(OUT_DIR_VAR).map(PathBuf::from);
    let path = cfg.output_path(out_dir.as_deref());
    output::write_atomic(&path, &bytes)?;
    Ok(path)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let f = Failure::usage(first.trim_start_matches("error: "));
            eprintln!("{f}");
            return ExitCode::from(f.exit_code() as u8);
        }
    };
    match execute(cli.command) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
