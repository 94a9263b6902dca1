//! Stability regions, real-axis extents, convergence orders and the stiff
//! scalar demo, as plain data with CSV and JSON output.

mod convergence;
mod output;
mod stability;
mod stiffness;

pub use convergence::{
    empirical_order, endpoint_error, fit_log_slope, max_norm_diff, ode_endpoint, problem_grid,
    solve_problem, steps_for_budget, taylor_gap, ConvergenceReport, ConvergenceRow, RowStatus,
    MIN_R_SQUARED,
};
pub use output::{write_csv_rows, ScanSummary};
pub use stability::{
    amplification_factor, real_stability_extent, stability_region_scan, Amplifier, ScanBounds,
    StabilityScan, DEFAULT_SCAN_RESOLUTION, EXTENT_ACCURACY, EXTENT_SAMPLES, INSIDE_TOLERANCE,
};
pub use stiffness::{
    stiffness_demo, StiffnessDemo, StiffnessErrors, StiffnessRow, DEMO_LAMBDA, DEMO_STEPS,
};
