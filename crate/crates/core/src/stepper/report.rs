use serde::{Deserialize, Serialize};

use super::config::{Method, SubstageMode};
use super::grid::ScheduleKind;

/// Which part of a solve produced a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepPhase {
    Startup,
    Main,
    Exact,
    Baseline,
}

/// Diagnostics for the step from grid index `index` to `index - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub index: usize,
    pub t_from: f64,
    pub t_to: f64,
    pub phase: StepPhase,
    pub nfe: usize,
    pub max_stage_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub index: usize,
    pub t: f64,
    pub state: Vec<f64>,
}

/// Everything a solve produced.
///
/// `nfe` counts real field evaluations only, including a Tweedie evaluation
/// when one was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    pub substeps_requested: Option<usize>,
    /// Stage count actually run, when it differs from the request.
    pub substituted_degree: Option<usize>,
    pub taylor_order: Option<usize>,
    pub substage_mode: Option<SubstageMode>,
    pub schedule: ScheduleKind,
    pub steps: usize,
    pub nfe: usize,
    /// States at grid points in solve order, or just the two endpoints.
    pub trajectory: Vec<TrajectoryPoint>,
    pub per_step: Vec<StepRecord>,
    pub final_state: Vec<f64>,
    /// State at the terminal time before Tweedie finishing.
    pub state_at_floor: Option<Vec<f64>>,
}

impl SolveReport {
    /// Stage count in effect.
    pub fn substeps_used(&self) -> Option<usize> {
        self.substituted_degree.or(self.substeps_requested)
    }

    /// Largest stage magnitude over the whole solve.
    pub fn max_stage_abs(&self) -> f64 {
        self.per_step.iter().fold(0.0, |m, r| m.max(r.max_stage_abs))
    }

    /// Recorded state at grid index `index`, if any.
    pub fn state_at(&self, index: usize) -> Option<&[f64]> {
        self.trajectory
            .iter()
            .find(|p| p.index == index)
            .map(|p| p.state.as_slice())
    }
}
