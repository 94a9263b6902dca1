use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use stork::analysis::{
    empirical_order, endpoint_error, real_stability_extent, stability_region_scan, steps_for_budget, taylor_gap,
    write_csv_rows, ConvergenceReport,
};
use stork::coefficients::{rkg2_coeffs, rock4_lookup};
use stork::error::StorkError;
use stork::fields::AnalyticProblem;
use stork::stepper::{solve_flow, solve_noise, Method, SolveReport, SolverConfig, TimeGrid};

use crate::config::{Command, ConvergenceKind, Format, RunConfig, Schedule};
use crate::error::Failure;
use crate::output::Artifact;

pub fn run(cfg: &RunConfig) -> Result<Artifact, Failure> {
    cfg.validate()?;
    match cfg.command {
        Command::Solve => solve(cfg),
        Command::DemoStiff => demo_stiff(),
        Command::Stability => stability(cfg),
        Command::Convergence => convergence(cfg),
        Command::Sweep => sweep(cfg),
        Command::DumpCoeffs => dump_coeffs(cfg),
    }
}

fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    write_csv_rows(&mut buf, rows)?;
    Ok(buf)
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report serializes")
}

/// The configured problem with the epsilon floor applied.
pub fn problem(cfg: &RunConfig) -> Result<AnalyticProblem, Failure> {
    let p = cfg.problem.build()?;
    Ok(match cfg.grid.epsilon_floor {
        Some(floor) => {
            let start = p.t_start();
            p.with_span(start, floor)
        }
        None => p,
    })
}

fn grid(cfg: &RunConfig, problem: &AnalyticProblem, solver: &SolverConfig) -> Result<TimeGrid, Failure> {
    let m = match (cfg.grid.steps, cfg.grid.nfe) {
        (Some(m), _) => m,
        (None, Some(b)) => steps_for_budget(solver, b)?,
        (None, None) => return Err(Failure::config("no step count or NFE budget given")),
    };
    let (a, b) = (problem.t_start(), problem.t_end());
    Ok(match cfg.grid.schedule {
        Schedule::Uniform => TimeGrid::uniform(a, b, m)?,
        Schedule::FlowShift => TimeGrid::flow_shift(a, b, m, cfg.grid.shift)?,
    })
}

fn solve_from(
    problem: &AnalyticProblem,
    x0: &[f64],
    grid: &TimeGrid,
    solver: &SolverConfig,
) -> Result<SolveReport, StorkError> {
    if solver.method == Method::Stork4Noise {
        let model = problem
            .noise_model()
            .ok_or_else(|| StorkError::Config(format!("{} has no noise model", problem.name())))?;
        solve_noise(x0, grid, &model, solver)
    } else {
        solve_flow(x0, grid, &problem.velocity(), solver)
    }
}

/// Sample 0 is the problem's initial state; the rest add standard normal
/// noise drawn from the seeded generator.
pub fn initial_states(problem: &AnalyticProblem, batch: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = problem.initial_state();
    (0..batch)
        .map(|k| {
            if k == 0 {
                base.to_vec()
            } else {
                base.iter()
                    .map(|v| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        v + e
                    })
                    .collect::<Vec<f64>>()
            }
        })
        .collect()
}

fn solve(cfg: &RunConfig) -> Result<Artifact, Failure> {
    let problem = problem(cfg)?;
    let grid = grid(cfg, &problem, &cfg.solver)?;
    let states = initial_states(&problem, cfg.batch, cfg.seed);
    let reports = states
        .par_iter()
        .map(|x0| solve_from(&problem, x0, &grid, &cfg.solver))
        .collect::<Result<Vec<_>, _>>()?;
    let errors: Vec<f64> = states
        .iter()
        .zip(&reports)
        .map(|(x0, r)| {
            let exact = problem.exact(x0, grid.t_start(), grid.t_end());
            stork::analysis::max_norm_diff(stork::analysis::ode_endpoint(r), &exact)
        })
        .collect();
    let first = &reports[0];
    let mut meta = vec![
        ("problem", Value::from(problem.name())),
        ("steps", grid.steps().into()),
        ("nfe", first.nfe.into()),
        ("endpoint_error", errors.iter().copied().fold(0.0, f64::max).into()),
    ];
    if let Some(s) = first.substituted_degree {
        meta.push(("substituted_degree", s.into()));
    }

    let mut csv = String::from("sample,index,t");
    for j in 0..problem.dim() {
        write!(csv, ",x{j}").unwrap();
    }
    csv.push('\n');
    for (k, r) in reports.iter().enumerate() {
        for p in &r.trajectory {
            write!(csv, "{k},{},{}", p.index, p.t).unwrap();
            for v in &p.state {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
    }
    let samples: Vec<Value> = reports
        .iter()
        .zip(&states)
        .zip(&errors)
        .enumerate()
        .map(|(k, ((r, x0), e))| {
            json!({"sample": k, "initial_state": x0, "endpoint_error": e, "report": to_value(r)})
        })
        .collect();
    Ok(Artifact {
        meta,
        csv: csv.into_bytes(),
        data: json!({ "samples": samples }),
    })
}

fn demo_stiff() -> Result<Artifact, Failure> {
    let demo = stork::analysis::stiffness_demo()?;
    let mut csv = Vec::new();
    demo.write_csv(&mut csv)?;
    Ok(Artifact {
        meta: vec![
            ("lambda", demo.lambda.into()),
            ("steps", demo.steps.into()),
            ("max_error_euler", demo.max_errors.euler.into()),
            ("max_error_heun", demo.max_errors.heun.into()),
            ("max_error_rkg2_s4", demo.max_errors.rkg2_s4.into()),
        ],
        csv,
        data: to_value(&demo),
    })
}

fn stability(cfg: &RunConfig) -> Result<Artifact, Failure> {
    let method = cfg.solver.method;
    let s = cfg.solver.substeps;
    let spec = &cfg.stability;
    let scan = stability_region_scan(method, s, spec.bounds, spec.nx, spec.ny)?;
    let extent = real_stability_extent(method, s)?;
    let summary = scan.summary();
    let mut csv = Vec::new();
    if cfg.output.format == Format::Csv {
        scan.write_csv(&mut csv)?;
    }
    Ok(Artifact {
        meta: vec![
            ("method", method.name().into()),
            ("substeps", s.into()),
            ("real_extent", extent.into()),
            ("inside_fraction", summary.inside_fraction.into()),
            ("inside_area", summary.inside_area.into()),
        ],
        csv,
        data: json!({ "summary": to_value(&summary), "real_extent": extent }),
    })
}

fn convergence_meta(r: &ConvergenceReport) -> Vec<(&'static str, Value)> {
    vec![
        ("label", r.label.clone().into()),
        ("problem", r.problem.clone().into()),
        ("fitted_order", r.fitted_order.into()),
        ("r_squared", r.r_squared.into()),
        ("flagged", r.flagged.into()),
    ]
}

fn convergence(cfg: &RunConfig) -> Result<Artifact, Failure> {
    let problem = problem(cfg)?;
    let steps = &cfg.convergence.steps;
    let report = match cfg.convergence.kind {
        ConvergenceKind::Order => empirical_order(&problem, &cfg.solver, steps)?,
        ConvergenceKind::TaylorGap => taylor_gap(&problem, &cfg.solver, steps)?,
    };
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    Ok(Artifact {
        meta: convergence_meta(&report),
        csv,
        data: to_value(&report),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub method: Method,
    pub nfe: usize,
    pub steps: Option<usize>,
    pub nfe_used: Option<usize>,
    pub error: Option<f64>,
    /// `ok`, `unstable` (non-finite state) or `error`.
    pub status: &'static str,
    pub message: Option<String>,
}

fn sweep_cell(cfg: &RunConfig, problem: &AnalyticProblem, method: Method, nfe: usize) -> SweepCell {
    let solver = SolverConfig {
        method,
        ..cfg.solver.clone()
    };
    let mut cell = SweepCell {
        method,
        nfe,
        steps: None,
        nfe_used: None,
        error: None,
        status: "ok",
        message: None,
    };
    let cfg_cell = RunConfig {
        grid: crate::config::GridSpec {
            steps: None,
            nfe: Some(nfe),
            ..cfg.grid.clone()
        },
        ..cfg.clone()
    };
    let outcome = grid(&cfg_cell, problem, &solver).and_then(|g| {
        cell.steps = Some(g.steps());
        let r = solve_from(problem, problem.initial_state(), &g, &solver)?;
        Ok((endpoint_error(problem, &g, &r), r.nfe))
    });
    match outcome {
        Ok((e, used)) if e.is_finite() => {
            cell.error = Some(e);
            cell.nfe_used = Some(used);
        }
        Ok((_, used)) => {
            cell.nfe_used = Some(used);
            cell.status = "unstable";
        }
        Err(f) => {
            cell.status = if f.kind == "non-finite" { "unstable" } else { "error" };
            cell.message = Some(f.message);
        }
    }
    cell
}

fn sweep(cfg: &RunConfig) -> Result<Artifact, Failure> {
    let problem = problem(cfg)?;
    let pairs: Vec<(Method, usize)> = cfg
        .sweep
        .methods
        .iter()
        .flat_map(|&m| cfg.sweep.nfe.iter().map(move |&b| (m, b)))
        .collect();
    let cells: Vec<SweepCell> = pairs
        .par_iter()
        .map(|&(m, b)| sweep_cell(cfg, &problem, m, b))
        .collect();
    let failed = cells.iter().filter(|c| c.status != "ok").count();
    Ok(Artifact {
        meta: vec![
            ("problem", problem.name().into()),
            ("cells", cells.len().into()),
            ("failed_cells", failed.into()),
        ],
        csv: csv_bytes(&cells)?,
        data: json!({ "cells": to_value(&cells) }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffRow {
    pub param: &'static str,
    pub index: usize,
    pub value: f64,
}

fn rows_from<'a>(param: &'static str, values: &'a [f64], first: usize) -> impl Iterator<Item = CoeffRow> + 'a {
    values
        .iter()
        .enumerate()
        .skip(first)
        .map(move |(index, &value)| CoeffRow { param, index, value })
}

/// `param,index,value` rows of the recurrence coefficients.
pub fn coefficient_rows(solver: &SolverConfig) -> Result<(Vec<CoeffRow>, Value, Option<usize>), Failure> {
    let s = solver.substeps;
    match solver.method {
        Method::Stork2 => {
            let c = rkg2_coeffs(s)?;
            let mut rows = vec![CoeffRow {
                param: "w1",
                index: 0,
                value: c.w1(),
            }];
            rows.extend(rows_from("a", c.a(), 0));
            rows.extend(rows_from("b", c.b(), 0));
            rows.extend(rows_from("mu", c.mu(), 2));
            rows.extend(rows_from("nu", c.nu(), 2));
            rows.extend(rows_from("mu_tilde", c.mu_tilde(), 1));
            rows.extend(rows_from("gamma_tilde", c.gamma_tilde(), 2));
            rows.extend(rows_from("c", c.abscissae(), 0));
            Ok((rows, to_value(&c), None))
        }
        Method::Stork4 | Method::Stork4Noise => {
            let l = rock4_lookup(s, solver.strict_degree)?;
            let sub = l.substituted();
            let c = l.coeffs;
            let mut rows = Vec::new();
            rows.extend(rows_from("mu", c.mu(), 1));
            rows.extend(rows_from("nu", c.nu(), 2));
            rows.extend(rows_from("kappa", c.kappa(), 2));
            rows.extend(rows_from("finishing_a", &c.finishing().a, 0));
            rows.extend(rows_from("finishing_b", &c.finishing().b, 0));
            rows.extend(c.literal_finishing().iter().enumerate().map(|(k, &value)| CoeffRow {
                param: "literal_mu",
                index: k + 1,
                value,
            }));
            rows.extend(rows_from("w4_root", c.w4_roots(), 0));
            rows.extend(rows_from("w4", c.w4(), 0));
            rows.push(CoeffRow {
                param: "stability_extent",
                index: 0,
                value: c.stability_extent(),
            });
            rows.extend(rows_from("c", c.abscissae(), 0));
            Ok((rows, to_value(&c), sub))
        }
        other => Err(Failure::config(format!("{other} has no recurrence coefficients"))),
    }
}

fn dump_coeffs(cfg: &RunConfig) -> Result<Artifact, Failure> {
    let (rows, coeffs, sub) = coefficient_rows(&cfg.solver)?;
    let mut meta = vec![
        ("method", cfg.solver.method.name().into()),
        ("substeps", cfg.solver.substeps.into()),
    ];
    if let Some(s) = sub {
        meta.push(("substituted_degree", s.into()));
    }
    Ok(Artifact {
        meta,
        csv: csv_bytes(&rows)?,
        data: json!({ "rows": to_value(&rows), "coefficients": coeffs }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use stork::fields::ProblemSpec;

    fn cfg(command: Command) -> RunConfig {
        RunConfig {
            command,
            ..RunConfig::default()
        }
    }

    #[test]
    fn w1_row_for_four_stages() {
        let (rows, _, _) = coefficient_rows(&SolverConfig::stork2(4)).unwrap();
        let w1 = rows.iter().find(|r| r.param == "w1").unwrap();
        assert_eq!(w1.value, 0.25);
    }

    #[test]
    fn baselines_have_no_coefficients() {
        let err = coefficient_rows(&SolverConfig::new(Method::Euler)).unwrap_err();
        assert_eq!(err.kind, "config");
    }

    #[test]
    fn sweep_has_one_cell_per_pair_in_order() {
        let mut c = cfg(Command::Sweep);
        c.problem = ProblemSpec::from_name("linear-system").unwrap();
        let art = run(&c).unwrap();
        let cells = art.data["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 15);
        let order: Vec<(String, u64)> = cells
            .iter()
            .map(|v| (v["method"].as_str().unwrap().to_string(), v["nfe"].as_u64().unwrap()))
            .collect();
        assert_eq!(order[0], ("euler".to_string(), 10));
        assert_eq!(order[4], ("euler".to_string(), 50));
        assert_eq!(order[5], ("stork2".to_string(), 10));
        assert_eq!(order[14], ("stork4".to_string(), 50));
    }

    #[test]
    fn sweep_cell_failures_stay_local() {
        let mut c = cfg(Command::Sweep);
        c.sweep.methods = vec![Method::Stork4Noise, Method::Euler];
        c.sweep.nfe = vec![10];
        let art = run(&c).unwrap();
        let cells = art.data["cells"].as_array().unwrap();
        assert_eq!(cells[0]["status"], "error");
        assert_eq!(cells[1]["status"], "ok");
    }

    #[test]
    fn batch_states_are_seeded() {
        let p = ProblemSpec::Rotation.build().unwrap();
        let a = initial_states(&p, 4, 11);
        assert_eq!(a, initial_states(&p, 4, 11));
        assert_ne!(a, initial_states(&p, 4, 12));
        assert_eq!(a[0], p.initial_state());
    }

    #[test]
    fn validation_precedes_compute() {
        let mut c = cfg(Command::Solve);
        assert_eq!(run(&c).unwrap_err().kind, "config");
        c.grid.steps = Some(10);
        c.solver.substeps = 1;
        assert_eq!(run(&c).unwrap_err().kind, "config");
    }
}
