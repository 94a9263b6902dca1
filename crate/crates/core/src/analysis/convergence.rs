use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result, StorkError};
use crate::fields::AnalyticProblem;
use crate::stepper::{solve_flow, solve_noise, Method, SolveReport, SolverConfig, TimeGrid};

/// Fits with `r^2` below this are flagged.
pub const MIN_R_SQUARED: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowStatus {
    Ok,
    /// The solve produced a non-finite state.
    Unstable,
    /// Zero error, which a log-log fit cannot use.
    ExactHit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub steps: usize,
    /// Largest step magnitude of the grid.
    pub h: f64,
    pub nfe: Option<usize>,
    pub error: Option<f64>,
    pub status: RowStatus,
}

/// Errors against grid refinement and the fitted slope of `log error`
/// against `log h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub problem: String,
    pub rows: Vec<ConvergenceRow>,
    pub fitted_order: Option<f64>,
    pub r_squared: Option<f64>,
    /// Set when the fit is missing or `r^2 < MIN_R_SQUARED`.
    pub flagged: bool,
    pub notes: Vec<String>,
}

/// Least-squares slope and `r^2` of `log y` against `log x`.
pub fn fit_log_slope(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Uniform grid over the problem's default span.
pub fn problem_grid(problem: &AnalyticProblem, steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(problem.t_start(), problem.t_end(), steps)
}

/// Runs `cfg` on `problem` from its default initial state: noise-model
/// solves for `stork4-noise`, flow solves on the velocity otherwise.
pub fn solve_problem(problem: &AnalyticProblem, grid: &TimeGrid, cfg: &SolverConfig) -> Result<SolveReport> {
    let x0 = problem.initial_state();
    if cfg.method == Method::Stork4Noise {
        let model = problem
            .noise_model()
            .ok_or_else(|| StorkError::Config(format!("{} has no noise model", problem.name())))?;
        solve_noise(x0, grid, &model, cfg)
    } else {
        solve_flow(x0, grid, &problem.velocity(), cfg)
    }
}

/// The ODE state at the end of the grid: the pre-Tweedie state when
/// Tweedie finishing was applied.
pub fn ode_endpoint(report: &SolveReport) -> &[f64] {
    report.state_at_floor.as_deref().unwrap_or(&report.final_state)
}

/// Max-norm distance between two states.
pub fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Max-norm endpoint error of a solve against the problem's oracle.
pub fn endpoint_error(problem: &AnalyticProblem, grid: &TimeGrid, report: &SolveReport) -> f64 {
    let exact = problem.exact(problem.initial_state(), grid.t_start(), grid.t_end());
    max_norm_diff(ode_endpoint(report), &exact)
}

/// Super-step count that spends `budget` real evaluations.
///
/// Taylor-mode flow solves use `M = B - 1`, noise solves `M = B - 3` (with
/// Tweedie finishing) and exact-mode solves `M = B / s`. Baselines divide
/// the budget by their evaluations per step. Errors when no step fits.
pub fn steps_for_budget(cfg: &SolverConfig, budget: usize) -> Result<usize> {
    let m = match cfg.method {
        Method::Euler | Method::Ab2 | Method::Heun | Method::Rk4 => {
            budget / cfg.method.baseline_nfe().expect("baseline")
        }
        _ if !cfg.uses_taylor() => budget / cfg.substeps.max(1),
        Method::Stork4Noise => budget.saturating_sub(if cfg.tweedie { 3 } else { 2 }),
        _ => budget.saturating_sub(1),
    };
    if m == 0 {
        return config(format!("NFE budget {budget} is too small for {}", cfg.method));
    }
    Ok(m)
}

fn check_counts(step_counts: &[usize]) -> Result<()> {
    let (lo, hi) = (
        step_counts.iter().copied().min().unwrap_or(0),
        step_counts.iter().copied().max().unwrap_or(0),
    );
    if step_counts.len() < 4 || lo == 0 || hi < 8 * lo {
        return config(format!(
            "order studies need at least 4 positive step counts spanning 8x, got {step_counts:?}"
        ));
    }
    Ok(())
}

fn label(cfg: &SolverConfig) -> String {
    if cfg.method.is_baseline() {
        cfg.method.to_string()
    } else {
        let mode = if cfg.uses_taylor() {
            format!("taylor{}", cfg.taylor_order)
        } else {
            "exact".to_string()
        };
        format!("{}(s={},{mode})", cfg.method, cfg.substeps)
    }
}

fn assemble(label: String, problem: &AnalyticProblem, rows: Vec<ConvergenceRow>) -> ConvergenceReport {
    let mut notes = Vec::new();
    for r in &rows {
        match r.status {
            RowStatus::Unstable => notes.push(format!("M={} unstable, excluded from fit", r.steps)),
            RowStatus::ExactHit => notes.push(format!("M={} hit the oracle exactly, excluded from fit", r.steps)),
            RowStatus::Ok => {}
        }
    }
    let (hs, es): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.status == RowStatus::Ok)
        .map(|r| (r.h, r.error.expect("ok rows carry an error")))
        .unzip();
    let fit = fit_log_slope(&hs, &es);
    let flagged = fit.is_none_or(|(_, r2)| r2 < MIN_R_SQUARED);
    if flagged {
        notes.push(format!("fit quality below r^2 = {MIN_R_SQUARED} or too few points"));
    }
    ConvergenceReport {
        label,
        problem: problem.name().to_string(),
        rows,
        fitted_order: fit.map(|f| f.0),
        r_squared: fit.map(|f| f.1),
        flagged,
        notes,
    }
}

fn classify(steps: usize, h: f64, nfe: Option<usize>, err: Option<f64>) -> ConvergenceRow {
    let status = match err {
        None => RowStatus::Unstable,
        Some(e) if !e.is_finite() => RowStatus::Unstable,
        Some(e) if e == 0.0 => RowStatus::ExactHit,
        Some(_) => RowStatus::Ok,
    };
    ConvergenceRow {
        steps,
        h,
        nfe,
        error: err.filter(|e| e.is_finite()),
        status,
    }
}

/// Endpoint error against the oracle at each step count, with the fitted
/// order. Diverging solves are recorded as unstable and left out of the fit.
pub fn empirical_order(
    problem: &AnalyticProblem,
    cfg: &SolverConfig,
    step_counts: &[usize],
) -> Result<ConvergenceReport> {
    check_counts(step_counts)?;
    cfg.validate()?;
    let rows: Vec<Result<ConvergenceRow>> = step_counts
        .par_iter()
        .map(|&m| {
            let grid = problem_grid(problem, m)?;
            match solve_problem(problem, &grid, cfg) {
                Ok(rep) => Ok(classify(m, grid.max_step(), Some(rep.nfe), Some(endpoint_error(problem, &grid, &rep)))),
                Err(StorkError::NonFinite { .. }) => Ok(classify(m, grid.max_step(), None, None)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(label(cfg), problem, rows))
}

/// Largest distance over shared grid points between the taylor-mode and
/// exact-mode trajectories of the same stabilized method, at each step
/// count, with the fitted order of that gap.
pub fn taylor_gap(problem: &AnalyticProblem, cfg: &SolverConfig, step_counts: &[usize]) -> Result<ConvergenceReport> {
    check_counts(step_counts)?;
    if cfg.method.is_baseline() {
        return config("the taylor gap is defined for stabilized methods only");
    }
    let taylor = SolverConfig {
        substage_mode: crate::stepper::SubstageMode::Taylor,
        record_trajectory: true,
        ..cfg.clone()
    };
    let exact = taylor.clone().exact();
    taylor.validate()?;
    let rows: Vec<Result<ConvergenceRow>> = step_counts
        .par_iter()
        .map(|&m| {
            let grid = problem_grid(problem, m)?;
            let a = solve_problem(problem, &grid, &taylor);
            let b = solve_problem(problem, &grid, &exact);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    let gap = a
                        .trajectory
                        .iter()
                        .filter_map(|p| b.state_at(p.index).map(|q| max_norm_diff(&p.state, q)))
                        .fold(0.0, f64::max);
                    Ok(classify(m, grid.max_step(), Some(a.nfe), Some(gap)))
                }
                (Err(StorkError::NonFinite { .. }), _) | (_, Err(StorkError::NonFinite { .. })) => {
                    Ok(classify(m, grid.max_step(), None, None))
                }
                (Err(e), _) | (_, Err(e)) => Err(e),
            }
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(assemble(format!("gap:{}", label(&taylor)), problem, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_rotation;

    #[test]
    fn slope_fit_recovers_power_law() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let es: Vec<f64> = hs.iter().map(|h: &f64| 3.0 * h.powi(2)).collect();
        let (p, r2) = fit_log_slope(&hs, &es).unwrap();
        assert!((p - 2.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(fit_log_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn budgets() {
        assert_eq!(steps_for_budget(&SolverConfig::stork2(9), 20).unwrap(), 19);
        assert_eq!(steps_for_budget(&SolverConfig::stork4_noise(9), 20).unwrap(), 17);
        assert_eq!(steps_for_budget(&SolverConfig::new(Method::Euler), 20).unwrap(), 20);
        assert_eq!(steps_for_budget(&SolverConfig::new(Method::Rk4), 20).unwrap(), 5);
        assert_eq!(steps_for_budget(&SolverConfig::stork2(4).exact(), 20).unwrap(), 5);
        assert!(steps_for_budget(&SolverConfig::new(Method::Rk4), 3).is_err());
    }

    #[test]
    fn rk4_and_euler_orders() {
        let p = make_rotation();
        let counts = [10, 20, 40, 80];
        let r = empirical_order(&p, &SolverConfig::new(Method::Rk4), &counts).unwrap();
        assert!((3.8..4.3).contains(&r.fitted_order.unwrap()), "{r:?}");
        let e = empirical_order(&p, &SolverConfig::new(Method::Euler), &counts).unwrap();
        assert!((0.9..1.2).contains(&e.fitted_order.unwrap()), "{e:?}");
        assert!(!e.flagged);
        assert!(empirical_order(&p, &SolverConfig::new(Method::Rk4), &[10, 20, 40]).is_err());
    }
}
