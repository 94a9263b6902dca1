use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// How the grid points were generated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    Uniform,
    /// Uniform fractions warped by `u -> shift u / (1 + (shift - 1) u)`.
    FlowShift { shift: f64 },
    Custom,
}

/// Default warp parameter of the flow-shift schedule.
pub const DEFAULT_FLOW_SHIFT: f64 = 3.0;

/// Super-step grid `t_0, ..., t_M`.
///
/// Solves start at index `M` and finish at index 0, updating
/// `x <- x - h_i v` with `h_i = t_i - t_{i-1}`. A diffusion solve that runs
/// from noise at large `t` down to data therefore has positive steps, and a
/// flow solve running forward in time has negative ones. All steps of a grid
/// share one sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
    kind: ScheduleKind,
}

fn check_span(t_start: f64, t_end: f64, m: usize) -> Result<()> {
    if m == 0 {
        return config("a grid needs at least one step");
    }
    if !(t_start.is_finite() && t_end.is_finite()) || t_start == t_end {
        return config(format!(
            "grid span must be finite and nonempty, got {t_start} -> {t_end}"
        ));
    }
    Ok(())
}

/// The flow-shift warp of a fraction `u` in `[0, 1]`.
pub fn flow_shift_warp(u: f64, shift: f64) -> f64 {
    shift * u / (1.0 + (shift - 1.0) * u)
}

impl TimeGrid {
    /// `m` equal steps from `t_start` (index `m`) to `t_end` (index 0).
    pub fn uniform(t_start: f64, t_end: f64, m: usize) -> Result<Self> {
        check_span(t_start, t_end, m)?;
        let points = (0..=m)
            .map(|i| {
                if i == m {
                    t_start
                } else {
                    t_end + (t_start - t_end) * (i as f64 / m as f64)
                }
            })
            .collect();
        Ok(Self {
            points,
            kind: ScheduleKind::Uniform,
        })
    }

    /// `m` steps whose fractions of the span are flow-shift warped, which
    /// concentrates points near `t_start` for `shift > 1`.
    pub fn flow_shift(t_start: f64, t_end: f64, m: usize, shift: f64) -> Result<Self> {
        check_span(t_start, t_end, m)?;
        if !(shift.is_finite() && shift > 0.0) {
            return config(format!("flow shift must be positive, got {shift}"));
        }
        let points = (0..=m)
            .map(|i| {
                if i == m {
                    t_start
                } else {
                    t_end + (t_start - t_end) * flow_shift_warp(i as f64 / m as f64, shift)
                }
            })
            .collect();
        Ok(Self {
            points,
            kind: ScheduleKind::FlowShift { shift },
        })
    }

    /// A grid from explicit points, index 0 first. Points must be finite
    /// and strictly monotone.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return config("a grid needs at least two points");
        }
        if points.iter().any(|t| !t.is_finite()) {
            return config("grid points must be finite");
        }
        let increasing = points[1] > points[0];
        let monotone = points
            .windows(2)
            .all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
        if !monotone {
            return config("grid points must be strictly monotone");
        }
        Ok(Self {
            points,
            kind: ScheduleKind::Custom,
        })
    }

    /// Number of super-steps `M`.
    pub fn steps(&self) -> usize {
        self.points.len() - 1
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn time(&self, i: usize) -> f64 {
        self.points[i]
    }

    /// `h_i = t_i - t_{i-1}` for `1 <= i <= M`.
    pub fn step(&self, i: usize) -> f64 {
        self.points[i] - self.points[i - 1]
    }

    pub fn t_start(&self) -> f64 {
        self.points[self.steps()]
    }

    pub fn t_end(&self) -> f64 {
        self.points[0]
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// True when solving moves to smaller `t` (positive steps).
    pub fn runs_backward(&self) -> bool {
        self.points[1] > self.points[0]
    }

    /// True when all steps agree to 1e-9 relative.
    pub fn is_uniform(&self) -> bool {
        let h = self.step(self.steps());
        (1..=self.steps()).all(|i| (self.step(i) - h).abs() <= 1e-9 * h.abs())
    }

    /// Largest step magnitude.
    pub fn max_step(&self) -> f64 {
        (1..=self.steps())
            .map(|i| self.step(i).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_endpoints_are_exact() {
        let g = TimeGrid::uniform(0.95, 1e-3, 40).unwrap();
        assert_eq!(g.t_start(), 0.95);
        assert_eq!(g.t_end(), 1e-3);
        assert!(g.is_uniform());
        assert!(g.runs_backward());
        assert!((g.step(7) - (0.95 - 1e-3) / 40.0).abs() < 1e-15);

        let f = TimeGrid::uniform(0.0, 1.0, 10).unwrap();
        assert!(!f.runs_backward());
        assert!((f.step(1) + 0.1).abs() < 1e-15);
    }

    #[test]
    fn flow_shift_warp_properties() {
        assert_eq!(flow_shift_warp(0.0, 3.0), 0.0);
        assert_eq!(flow_shift_warp(1.0, 3.0), 1.0);
        assert_eq!(flow_shift_warp(0.5, 3.0), 0.75);
        assert_eq!(flow_shift_warp(0.3, 1.0), 0.3);
        let g = TimeGrid::flow_shift(1.0, 0.0, 20, DEFAULT_FLOW_SHIFT).unwrap();
        assert!(!g.is_uniform());
        // small steps near the start, large near the end
        assert!(g.step(20).abs() < g.step(1).abs());
        assert_eq!(g.kind(), ScheduleKind::FlowShift { shift: 3.0 });
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TimeGrid::uniform(1.0, 1.0, 5).is_err());
        assert!(TimeGrid::uniform(1.0, 0.0, 0).is_err());
        assert!(TimeGrid::flow_shift(1.0, 0.0, 5, 0.0).is_err());
        assert!(TimeGrid::from_points(vec![0.0, 0.5, 0.4]).is_err());
        assert!(TimeGrid::from_points(vec![0.0]).is_err());
        assert!(TimeGrid::from_points(vec![0.0, f64::NAN]).is_err());
        assert!(TimeGrid::from_points(vec![1.0, 0.5, 0.0]).is_ok());
    }
}
