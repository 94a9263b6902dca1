use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{config, Result, StorkError};

/// Solver families.
///
/// A first-order stabilized variant is deliberately absent: it performs
/// poorly as a sampler and is not offered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Euler,
    Heun,
    Rk4,
    Ab2,
    Stork2,
    Stork4,
    Stork4Noise,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Euler,
        Method::Heun,
        Method::Rk4,
        Method::Ab2,
        Method::Stork2,
        Method::Stork4,
        Method::Stork4Noise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Euler => "euler",
            Method::Heun => "heun",
            Method::Rk4 => "rk4",
            Method::Ab2 => "ab2",
            Method::Stork2 => "stork2",
            Method::Stork4 => "stork4",
            Method::Stork4Noise => "stork4-noise",
        }
    }

    pub fn is_baseline(self) -> bool {
        matches!(self, Method::Euler | Method::Heun | Method::Rk4 | Method::Ab2)
    }

    /// Real evaluations per step of a baseline method.
    pub fn baseline_nfe(self) -> Option<usize> {
        match self {
            Method::Euler | Method::Ab2 => Some(1),
            Method::Heun => Some(2),
            Method::Rk4 => Some(4),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = StorkError;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| {
                StorkError::Config(format!(
                    "unknown method '{s}' (expected one of euler, heun, rk4, ab2, stork2, stork4, stork4-noise)"
                ))
            })
    }
}

/// How stabilized methods obtain field values at internal stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubstageMode {
    /// Taylor expansion around the super-step anchor (virtual evaluations).
    Taylor,
    /// A real field evaluation at every stage.
    Exact,
}

impl FromStr for SubstageMode {
    type Err = StorkError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "taylor" => Ok(SubstageMode::Taylor),
            "exact" => Ok(SubstageMode::Exact),
            other => config(format!("unknown substage mode '{other}' (expected taylor or exact)")),
        }
    }
}

/// Taylor order for unconditional and noise-model sampling.
pub const UNCONDITIONAL_TAYLOR_ORDER: usize = 3;

/// Taylor order for guided flow sampling.
pub const GUIDED_TAYLOR_ORDER: usize = 2;

/// Default sub-step count.
pub const DEFAULT_SUBSTEPS: usize = 9;

/// Solver selection and options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Stage count `s` of the stabilized methods.
    pub substeps: usize,
    /// Taylor order `n` (2 or 3) of the virtual evaluations.
    pub taylor_order: usize,
    pub substage_mode: SubstageMode,
    /// Reject ROCK4 degrees missing from the table instead of rounding up.
    pub strict_degree: bool,
    /// Use the chained finishing form `Y_j = Y_{s-4} - h mu_j v(Y_{j-1})`
    /// instead of the full four-stage block.
    pub literal_finishing: bool,
    /// Apply Tweedie finishing at the end of noise-model solves.
    pub tweedie: bool,
    /// Record the state at every grid point rather than just the endpoints.
    pub record_trajectory: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Stork4,
            substeps: DEFAULT_SUBSTEPS,
            taylor_order: UNCONDITIONAL_TAYLOR_ORDER,
            substage_mode: SubstageMode::Taylor,
            strict_degree: false,
            literal_finishing: false,
            tweedie: true,
            record_trajectory: true,
        }
    }
}

impl SolverConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn stork2(substeps: usize) -> Self {
        Self {
            method: Method::Stork2,
            substeps,
            ..Self::default()
        }
    }

    pub fn stork4(substeps: usize) -> Self {
        Self {
            method: Method::Stork4,
            substeps,
            ..Self::default()
        }
    }

    pub fn stork4_noise(substeps: usize) -> Self {
        Self {
            method: Method::Stork4Noise,
            substeps,
            ..Self::default()
        }
    }

    /// Default Taylor order for guided (2) or unguided (3) sampling.
    pub fn default_taylor_order(guided: bool) -> usize {
        if guided {
            GUIDED_TAYLOR_ORDER
        } else {
            UNCONDITIONAL_TAYLOR_ORDER
        }
    }

    pub fn with_taylor_order(mut self, n: usize) -> Self {
        self.taylor_order = n;
        self
    }

    pub fn with_mode(mut self, mode: SubstageMode) -> Self {
        self.substage_mode = mode;
        self
    }

    pub fn exact(self) -> Self {
        self.with_mode(SubstageMode::Exact)
    }

    pub fn with_strict_degree(mut self, strict: bool) -> Self {
        self.strict_degree = strict;
        self
    }

    pub fn with_literal_finishing(mut self, literal: bool) -> Self {
        self.literal_finishing = literal;
        self
    }

    pub fn with_tweedie(mut self, tweedie: bool) -> Self {
        self.tweedie = tweedie;
        self
    }

    pub fn with_trajectory(mut self, record: bool) -> Self {
        self.record_trajectory = record;
        self
    }

    /// Checks option ranges that do not depend on the grid or field.
    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.taylor_order) {
            return config(format!("taylor_order must be 2 or 3, got {}", self.taylor_order));
        }
        match self.method {
            Method::Stork2 if self.substeps < 2 => {
                config(format!("stork2 needs substeps >= 2, got {}", self.substeps))
            }
            Method::Stork4 | Method::Stork4Noise if self.substeps < 5 => {
                config(format!("{} needs substeps >= 5, got {}", self.method, self.substeps))
            }
            _ => Ok(()),
        }
    }

    /// Whether the solve uses the start-up phase and Taylor virtual stages.
    pub fn uses_taylor(&self) -> bool {
        matches!(self.method, Method::Stork2 | Method::Stork4 | Method::Stork4Noise)
            && self.substage_mode == SubstageMode::Taylor
    }
}
