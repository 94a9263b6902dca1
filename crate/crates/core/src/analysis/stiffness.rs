use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::make_stiff_scalar;
use crate::stepper::{solve_flow, Method, SolverConfig, TimeGrid};

/// Rate of the stiff scalar demo.
pub const DEMO_LAMBDA: f64 = -20.0;

/// Uniform steps over `[0, 1]` in the demo.
pub const DEMO_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessRow {
    pub t: f64,
    pub exact: f64,
    pub euler: f64,
    pub heun: f64,
    pub rkg2_s4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessErrors {
    pub euler: f64,
    pub heun: f64,
    pub rkg2_s4: f64,
}

/// Trajectories of `dx/dt = -20 x`, `x(0) = 1` on ten steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StiffnessDemo {
    pub lambda: f64,
    pub steps: usize,
    pub rows: Vec<StiffnessRow>,
    /// Max absolute trajectory error of each method.
    pub max_errors: StiffnessErrors,
}

/// Runs Euler, Heun and four-stage RKG2 (real stage evaluations) on the
/// stiff scalar problem and tabulates them next to the exact solution.
pub fn stiffness_demo() -> Result<StiffnessDemo> {
    let problem = make_stiff_scalar(DEMO_LAMBDA);
    let grid = TimeGrid::uniform(0.0, 1.0, DEMO_STEPS)?;
    let field = problem.velocity();
    let run = |cfg: SolverConfig| -> Result<Vec<f64>> {
        let rep = solve_flow(&[1.0], &grid, &field, &cfg.with_trajectory(true))?;
        Ok(rep.trajectory.iter().map(|p| p.state[0]).collect())
    };
    let euler = run(SolverConfig::new(Method::Euler))?;
    let heun = run(SolverConfig::new(Method::Heun))?;
    let rkg2 = run(SolverConfig::stork2(4).exact())?;
    let mut errs = StiffnessErrors {
        euler: 0.0,
        heun: 0.0,
        rkg2_s4: 0.0,
    };
    let rows = (0..=DEMO_STEPS)
        .map(|k| {
            let t = grid.time(DEMO_STEPS - k);
            let exact = (DEMO_LAMBDA * t).exp();
            errs.euler = errs.euler.max((euler[k] - exact).abs());
            errs.heun = errs.heun.max((heun[k] - exact).abs());
            errs.rkg2_s4 = errs.rkg2_s4.max((rkg2[k] - exact).abs());
            StiffnessRow {
                t,
                exact,
                euler: euler[k],
                heun: heun[k],
                rkg2_s4: rkg2[k],
            }
        })
        .collect();
    Ok(StiffnessDemo {
        lambda: DEMO_LAMBDA,
        steps: DEMO_STEPS,
        rows,
        max_errors: errs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_table_shape_and_values() {
        let d = stiffness_demo().unwrap();
        assert_eq!(d.rows.len(), 11);
        assert_eq!(d.rows[0].t, 0.0);
        assert_eq!(d.rows[10].t, 1.0);
        assert!((d.rows[10].exact - 2.061_153_622_438_558e-9).abs() < 1e-20);
        for (k, r) in d.rows.iter().enumerate() {
            assert!((r.euler.abs() - 1.0).abs() < 1e-12);
            assert_eq!(r.euler.signum(), if k % 2 == 0 { 1.0 } else { -1.0 });
        }
        assert!(d.max_errors.euler >= 0.9);
        // four-stage RKG2 damps each step by R(-2) = 11/32
        assert!((d.rows[1].rkg2_s4 - 11.0 / 32.0).abs() < 1e-12);
    }
}
