//! The solver engine.
//!
//! Solves run down a [`TimeGrid`] from index `M` to index 0 with the update
//! convention `x <- x - h v`. Stabilized methods spend one real field
//! evaluation per super-step in taylor mode and replace every other stage
//! value by a Taylor expansion built from recent real evaluations
//! ([`DerivativeCache`]); exact mode evaluates the field at every stage.

mod baseline;
mod config;
mod derivatives;
mod flow;
mod grid;
mod noise;
mod report;
mod superstep;

pub use baseline::{baseline_step, Ab2History, BaselineOutcome, BaselineStepper};
pub use config::{
    Method, SolverConfig, SubstageMode, DEFAULT_SUBSTEPS, GUIDED_TAYLOR_ORDER,
    UNCONDITIONAL_TAYLOR_ORDER,
};
pub use derivatives::{
    fd_derivatives_3pt, fd_derivatives_4pt_uniform, fd_weights, taylor_eval, DerivativeCache,
};
pub use flow::{solve_flow, solve_flow_batch, startup_flow, BatchReport, Startup};
pub use grid::{flow_shift_warp, ScheduleKind, TimeGrid, DEFAULT_FLOW_SHIFT};
pub use noise::{solve_noise, stork4_noise_onestep, tweedie_finish};
pub use report::{SolveReport, StepPhase, StepRecord, TrajectoryPoint};
pub use superstep::{rkg2_stages, rock4_stages, stork2_superstep, stork4_superstep, SuperStep};
