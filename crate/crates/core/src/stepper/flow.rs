use crate::coefficients::{rkg2_coeffs, rock4_lookup, Rkg2Coefficients, Rock4Coefficients};
use crate::error::{config, Result, StorkError};
use crate::fields::{Batched, VelocityField};

use super::baseline::BaselineStepper;
use super::config::{Method, SolverConfig, SubstageMode};
use super::derivatives::DerivativeCache;
use super::grid::TimeGrid;
use super::report::{SolveReport, StepPhase, StepRecord, TrajectoryPoint};
use super::superstep::{stork2_superstep, stork4_superstep, SuperStep};

/// Coefficients resolved for a stabilized solve.
#[derive(Debug, Clone)]
pub(crate) enum Stabilized {
    Rkg2(Rkg2Coefficients),
    Rock4 {
        coeffs: Rock4Coefficients,
        substituted: Option<usize>,
    },
}

impl Stabilized {
    pub(crate) fn resolve(cfg: &SolverConfig) -> Result<Self> {
        match cfg.method {
            Method::Stork2 => Ok(Stabilized::Rkg2(rkg2_coeffs(cfg.substeps)?)),
            Method::Stork4 | Method::Stork4Noise => {
                let l = rock4_lookup(cfg.substeps, cfg.strict_degree)?;
                Ok(Stabilized::Rock4 {
                    substituted: l.substituted(),
                    coeffs: l.coeffs,
                })
            }
            other => config(format!("{other} is not a stabilized method")),
        }
    }

    fn substituted(&self) -> Option<usize> {
        match self {
            Stabilized::Rkg2(_) => None,
            Stabilized::Rock4 { substituted, .. } => *substituted,
        }
    }

    fn superstep<F: VelocityField + ?Sized>(
        &self,
        y0: &[f64],
        t0: f64,
        h: f64,
        cache: &mut DerivativeCache,
        field: &F,
        mode: SubstageMode,
        literal: bool,
    ) -> Result<SuperStep> {
        match self {
            Stabilized::Rkg2(c) => stork2_superstep(y0, t0, h, c, cache, field, mode),
            Stabilized::Rock4 { coeffs, .. } => {
                stork4_superstep(y0, t0, h, coeffs, cache, field, mode, literal)
            }
        }
    }
}

/// Builds a [`SolveReport`] step by step.
pub(crate) struct Recorder {
    report: SolveReport,
    record_all: bool,
}

impl Recorder {
    pub(crate) fn new(cfg: &SolverConfig, grid: &TimeGrid, x_init: &[f64], substituted: Option<usize>) -> Self {
        let stabilized = !cfg.method.is_baseline();
        let m = grid.steps();
        Self {
            report: SolveReport {
                method: cfg.method,
                substeps_requested: stabilized.then_some(cfg.substeps),
                substituted_degree: substituted,
                taylor_order: cfg.uses_taylor().then_some(cfg.taylor_order),
                substage_mode: stabilized.then_some(cfg.substage_mode),
                schedule: grid.kind(),
                steps: m,
                nfe: 0,
                trajectory: vec![TrajectoryPoint {
                    index: m,
                    t: grid.time(m),
                    state: x_init.to_vec(),
                }],
                per_step: Vec::with_capacity(m),
                final_state: x_init.to_vec(),
                state_at_floor: None,
            },
            record_all: cfg.record_trajectory,
        }
    }

    /// Records the step from `index` to `index - 1`. Errors when the new
    /// state is not finite.
    pub(crate) fn step(
        &mut self,
        grid: &TimeGrid,
        index: usize,
        phase: StepPhase,
        nfe: usize,
        max_stage_abs: f64,
        state: &[f64],
    ) -> Result<()> {
        self.report.nfe += nfe;
        self.report.per_step.push(StepRecord {
            index,
            t_from: grid.time(index),
            t_to: grid.time(index - 1),
            phase,
            nfe,
            max_stage_abs,
        });
        if state.iter().any(|v| !v.is_finite()) {
            return Err(StorkError::NonFinite { index: index - 1 });
        }
        if self.record_all || index == 1 {
            self.report.trajectory.push(TrajectoryPoint {
                index: index - 1,
                t: grid.time(index - 1),
                state: state.to_vec(),
            });
        }
        self.report.final_state.copy_from_slice(state);
        Ok(())
    }

    pub(crate) fn add_nfe(&mut self, nfe: usize) {
        self.report.nfe += nfe;
    }

    pub(crate) fn finish(self) -> SolveReport {
        self.report
    }

    pub(crate) fn finish_with(mut self, final_state: Vec<f64>, at_floor: Vec<f64>) -> SolveReport {
        self.report.final_state = final_state;
        self.report.state_at_floor = Some(at_floor);
        self.report
    }
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// State and cache handed from the start-up phase to the main phase.
#[derive(Debug, Clone, PartialEq)]
pub struct Startup {
    /// State at grid index `index = M - n`.
    pub state: Vec<f64>,
    pub index: usize,
    /// Holds the `n + 1` start-up evaluations, anchored at the newest.
    pub cache: DerivativeCache,
    pub nfe: usize,
    /// `(grid index, state, nfe)` after each start-up step.
    pub steps: Vec<(usize, Vec<f64>, usize)>,
}

/// The start-up phase: a half Euler step, a two-step Adams-Bashforth step
/// on the half grid to `t_{M-1}`, then variable-step Adams-Bashforth steps
/// to `t_{M-2}` (and `t_{M-3}` for order 3). Spends `n + 1` evaluations.
pub fn startup_flow<F: VelocityField + ?Sized>(
    x_init: &[f64],
    grid: &TimeGrid,
    field: &F,
    taylor_order: usize,
) -> Result<Startup> {
    let n = taylor_order;
    if !(2..=3).contains(&n) {
        return config(format!("taylor order must be 2 or 3, got {n}"));
    }
    let m = grid.steps();
    if m < n + 1 {
        return config(format!("order-{n} start-up needs at least {} grid steps, got {m}", n + 1));
    }
    if x_init.len() != field.dim() {
        return Err(StorkError::Dimension {
            expected: field.dim(),
            got: x_init.len(),
        });
    }
    let d = x_init.len();
    let eval = |x: &[f64], t: f64| {
        let mut o = vec![0.0; d];
        field.eval(x, t, &mut o);
        o
    };
    let mut cache = DerivativeCache::new(n)?;
    let mut steps = Vec::with_capacity(n);

    let h = grid.step(m);
    let t_m = grid.time(m);
    let e_m = eval(x_init, t_m);
    let x_half: Vec<f64> = (0..d).map(|i| x_init[i] - 0.5 * h * e_m[i]).collect();
    let t_half = t_m - 0.5 * h;
    let e_half = eval(&x_half, t_half);
    let x1: Vec<f64> = (0..d)
        .map(|i| x_half[i] - 0.75 * h * e_half[i] + 0.25 * h * e_m[i])
        .collect();
    cache.push(t_m, e_m.clone())?;
    cache.push(t_half, e_half)?;
    steps.push((m - 1, x1.clone(), 2));

    let mut x = x1;
    let mut e_prev = e_m;
    let mut h_prev = h;
    for k in 1..n {
        let i = m - k;
        let t_i = grid.time(i);
        let e_i = eval(&x, t_i);
        let hk = grid.step(i);
        let r = hk * hk / (2.0 * h_prev);
        let next: Vec<f64> = (0..d)
            .map(|j| x[j] - (r + hk) * e_i[j] + r * e_prev[j])
            .collect();
        cache.push(t_i, e_i.clone())?;
        steps.push((i - 1, next.clone(), 1));
        x = next;
        e_prev = e_i;
        h_prev = hk;
    }
    cache.refresh()?;
    Ok(Startup {
        state: x,
        index: m - n,
        cache,
        nfe: n + 1,
        steps,
    })
}

fn check_inputs<F: VelocityField + ?Sized>(
    x_init: &[f64],
    grid: &TimeGrid,
    field: &F,
    cfg: &SolverConfig,
) -> Result<()> {
    cfg.validate()?;
    if x_init.len() != field.dim() {
        return Err(StorkError::Dimension {
            expected: field.dim(),
            got: x_init.len(),
        });
    }
    if cfg.method == Method::Stork4Noise {
        return config("stork4-noise runs through solve_noise on a noise model");
    }
    if cfg.uses_taylor() && grid.steps() < cfg.taylor_order + 1 {
        return config(format!(
            "taylor-mode solves with order {} need at least {} grid steps, got {}",
            cfg.taylor_order,
            cfg.taylor_order + 1,
            grid.steps()
        ));
    }
    Ok(())
}

/// Solves `dx/dt = v(x, t)` from grid index `M` down to index 0.
///
/// Stabilized methods in taylor mode run the start-up phase and then one
/// real evaluation per super-step, for `M + 1` evaluations in total. Exact
/// mode skips the start-up phase and spends `s` evaluations per super-step.
/// Baselines take plain steps. All configuration errors surface before the
/// first field evaluation.
pub fn solve_flow<F: VelocityField + ?Sized>(
    x_init: &[f64],
    grid: &TimeGrid,
    field: &F,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    check_inputs(x_init, grid, field, cfg)?;
    let m = grid.steps();

    if cfg.method.is_baseline() {
        let mut rec = Recorder::new(cfg, grid, x_init, None);
        let mut stepper = BaselineStepper::new(cfg.method)?;
        let mut x = x_init.to_vec();
        for i in (1..=m).rev() {
            let out = stepper.step(&x, grid.time(i), grid.step(i), field)?;
            x = out.state;
            rec.step(grid, i, StepPhase::Baseline, out.nfe, max_abs(&x), &x)?;
        }
        return Ok(rec.finish());
    }

    let coeffs = Stabilized::resolve(cfg)?;
    let mut rec = Recorder::new(cfg, grid, x_init, coeffs.substituted());
    let (mut x, mut cache, first) = if cfg.uses_taylor() {
        let st = startup_flow(x_init, grid, field, cfg.taylor_order)?;
        for (idx, state, nfe) in &st.steps {
            rec.step(grid, idx + 1, StepPhase::Startup, *nfe, max_abs(state), state)?;
        }
        (st.state, st.cache, st.index)
    } else {
        (x_init.to_vec(), DerivativeCache::new(cfg.taylor_order)?, m)
    };
    let phase = if cfg.uses_taylor() {
        StepPhase::Main
    } else {
        StepPhase::Exact
    };
    for i in (1..=first).rev() {
        let out = coeffs.superstep(
            &x,
            grid.time(i),
            grid.step(i),
            &mut cache,
            field,
            cfg.substage_mode,
            cfg.literal_finishing,
        )?;
        x = out.state;
        rec.step(grid, i, phase, out.nfe, out.max_stage_abs, &x)?;
    }
    Ok(rec.finish())
}

/// A batched solve and the final state of every member.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchReport {
    /// Report on the concatenated state; `nfe` counts batched calls.
    pub report: SolveReport,
    pub final_states: Vec<Vec<f64>>,
}

/// Solves many initial states on one grid, handing the whole batch to
/// [`VelocityField::eval_batch`] once per real evaluation.
pub fn solve_flow_batch<F: VelocityField>(
    x_inits: &[Vec<f64>],
    grid: &TimeGrid,
    field: F,
    cfg: &SolverConfig,
) -> Result<BatchReport> {
    let d = field.dim();
    if let Some(bad) = x_inits.iter().find(|x| x.len() != d) {
        return Err(StorkError::Dimension {
            expected: d,
            got: bad.len(),
        });
    }
    let batched = Batched::new(field, x_inits.len())?;
    let flat: Vec<f64> = x_inits.concat();
    let report = solve_flow(&flat, grid, &batched, cfg)?;
    let final_states = report.final_state.chunks_exact(d).map(<[f64]>::to_vec).collect();
    Ok(BatchReport {
        report,
        final_states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{FnField, ZeroField};

    fn constant(c: f64) -> impl VelocityField {
        FnField::new(2, "c", move |_x: &[f64], _t: f64, o: &mut [f64]| o.fill(c))
    }

    #[test]
    fn startup_transports_constants_exactly() {
        for n in [2, 3] {
            let g = TimeGrid::uniform(1.0, 0.0, 10).unwrap();
            let st = startup_flow(&[0.0, 1.0], &g, &constant(2.0), n).unwrap();
            assert_eq!(st.nfe, n + 1);
            assert_eq!(st.index, 10 - n);
            let span = g.time(10) - g.time(10 - n);
            assert!((st.state[0] + 2.0 * span).abs() < 1e-14);
            assert!((st.state[1] - 1.0 + 2.0 * span).abs() < 1e-14);
            assert_eq!(st.cache.len(), n + 1);
        }
        let g = TimeGrid::uniform(1.0, 0.0, 3).unwrap();
        assert!(startup_flow(&[0.0, 0.0], &g, &constant(1.0), 3).is_err());
    }

    #[test]
    fn startup_zero_field() {
        let g = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        let st = startup_flow(&[3.0, -4.0], &g, &ZeroField { dim: 2 }, 2).unwrap();
        assert_eq!(st.state, vec![3.0, -4.0]);
        assert_eq!(st.nfe, 3);
    }

    #[test]
    fn startup_second_order_on_decay() {
        let lam = -2.0;
        let f = FnField::new(1, "lin", move |x: &[f64], _t: f64, o: &mut [f64]| o[0] = lam * x[0]);
        let err = |h: f64| {
            let g = TimeGrid::from_points(vec![3.0 * h, 2.0 * h, h, 0.0]).unwrap();
            let st = startup_flow(&[1.0], &g, &f, 2).unwrap();
            (st.state[0] - (lam * 2.0 * h).exp()).abs()
        };
        // the half Euler step leaves an O(h^2) error that the later steps carry
        for h in [0.1, 0.05, 0.025, 0.0125] {
            assert!(err(h) < 0.6 * h * h, "{h}");
        }
        let r = err(0.025) / err(0.0125);
        assert!(r > 3.0 && r < 4.5, "{r}");
    }

    #[test]
    fn nfe_accounting() {
        let f = constant(0.5);
        for n in [2, 3] {
            for m in [n + 1, 20] {
                let g = TimeGrid::uniform(0.0, 1.0, m).unwrap();
                for cfg in [SolverConfig::stork2(5), SolverConfig::stork4(9)] {
                    let r = solve_flow(&[0.0, 0.0], &g, &f, &cfg.with_taylor_order(n)).unwrap();
                    assert_eq!(r.nfe, m + 1);
                    assert!((r.final_state[0] - 0.5).abs() < 1e-12);
                }
            }
        }
        let g = TimeGrid::uniform(0.0, 1.0, 7).unwrap();
        let r = solve_flow(&[0.0, 0.0], &g, &f, &SolverConfig::stork4(9).exact()).unwrap();
        assert_eq!(r.nfe, 63);
        let r = solve_flow(&[0.0, 0.0], &g, &f, &SolverConfig::new(Method::Heun)).unwrap();
        assert_eq!(r.nfe, 14);
    }

    #[test]
    fn rejects_before_evaluating() {
        let count = std::sync::atomic::AtomicUsize::new(0);
        let f = FnField::new(1, "count", |_x: &[f64], _t: f64, o: &mut [f64]| {
            count.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            o[0] = 0.0;
        });
        let g = TimeGrid::uniform(0.0, 1.0, 3).unwrap();
        assert!(solve_flow(&[0.0], &g, &f, &SolverConfig::stork4(9)).is_err());
        assert!(solve_flow(&[0.0], &g, &f, &SolverConfig::stork4(4)).is_err());
        assert!(solve_flow(&[0.0, 1.0], &g, &f, &SolverConfig::stork2(4)).is_err());
        assert!(solve_flow(&[0.0], &g, &f, &SolverConfig::stork4_noise(9)).is_err());
        assert!(solve_flow(&[0.0], &g, &f, &SolverConfig::stork4(66).with_strict_degree(true)).is_err());
        assert_eq!(count.load(std::sync::atomic::Ordering::SeqCst), 0);
    }

    #[test]
    fn substitution_is_reported() {
        let g = TimeGrid::uniform(0.0, 1.0, 6).unwrap();
        let r = solve_flow(&[0.0, 0.0], &g, &constant(1.0), &SolverConfig::stork4(66)).unwrap();
        assert_eq!(r.substituted_degree, Some(68));
        assert_eq!(r.substeps_used(), Some(68));
    }

    #[test]
    fn non_finite_states_are_errors() {
        let f = FnField::new(1, "blow", |x: &[f64], _t: f64, o: &mut [f64]| o[0] = 1e200 * x[0] * x[0]);
        let g = TimeGrid::uniform(0.0, 1.0, 4).unwrap();
        let e = solve_flow(&[1.0], &g, &f, &SolverConfig::new(Method::Euler)).unwrap_err();
        assert!(matches!(e, StorkError::NonFinite { .. }));
    }

    #[test]
    fn batch_matches_individual_solves() {
        let f = FnField::new(2, "rot", |x: &[f64], t: f64, o: &mut [f64]| {
            o[0] = -x[1] + t;
            o[1] = x[0];
        });
        let g = TimeGrid::flow_shift(0.0, 1.0, 12, 3.0).unwrap();
        let cfg = SolverConfig::stork2(6);
        let xs = vec![vec![1.0, 0.0], vec![0.2, -0.4], vec![3.0, 1.0]];
        let b = solve_flow_batch(&xs, &g, &f, &cfg).unwrap();
        assert_eq!(b.report.nfe, 13);
        for (x, got) in xs.iter().zip(&b.final_states) {
            let single = solve_flow(x, &g, &f, &cfg).unwrap();
            assert_eq!(&single.final_state, got);
        }
    }
}
