use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stork::analysis::{ScanBounds, DEFAULT_SCAN_RESOLUTION};
use stork::fields::ProblemSpec;
use stork::stepper::{Method, SolverConfig, DEFAULT_FLOW_SHIFT};

use crate::error::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    DemoStiff,
    Stability,
    Convergence,
    Sweep,
    DumpCoeffs,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::DemoStiff => "demo-stiff",
            Command::Stability => "stability",
            Command::Convergence => "convergence",
            Command::Sweep => "sweep",
            Command::DumpCoeffs => "dump-coeffs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    Uniform,
    FlowShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    /// Super-step count `M`. Takes precedence over `nfe`.
    pub steps: Option<usize>,
    /// Real-evaluation budget, translated to `M` per method.
    pub nfe: Option<usize>,
    pub schedule: Schedule,
    pub shift: f64,
    /// Terminal time of the solve; defaults to the problem's own.
    pub epsilon_floor: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            steps: None,
            nfe: None,
            schedule: Schedule::Uniform,
            shift: DEFAULT_FLOW_SHIFT,
            epsilon_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Relative paths resolve against `STORK_OUT_DIR` when it is set.
    #[serde(skip_serializing)]
    pub path: Option<PathBuf>,
    pub format: Format,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            path: None,
            format: Format::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    pub bounds: ScanBounds,
    pub nx: usize,
    pub ny: usize,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        Self {
            bounds: ScanBounds::WIDE,
            nx: DEFAULT_SCAN_RESOLUTION,
            ny: DEFAULT_SCAN_RESOLUTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceKind {
    /// Endpoint error against the oracle.
    Order,
    /// Distance between taylor-mode and exact-mode trajectories.
    TaylorGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    pub kind: ConvergenceKind,
    pub steps: Vec<usize>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            kind: ConvergenceKind::Order,
            steps: vec![10, 20, 40, 80],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub methods: Vec<Method>,
    pub nfe: Vec<usize>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            methods: vec![Method::Euler, Method::Stork2, Method::Stork4],
            nfe: vec![10, 20, 30, 40, 50],
        }
    }
}

/// Everything a run depends on. The resolved value is echoed into every
/// output header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub solver: SolverConfig,
    pub output: OutputSpec,
    /// Seeds the perturbed initial states of batch solves.
    pub seed: u64,
    /// Number of initial states in a solve. Sample 0 is the problem default.
    pub batch: usize,
    pub stability: StabilitySpec,
    pub convergence: ConvergenceSpec,
    pub sweep: SweepSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Solve,
            problem: ProblemSpec::Rotation,
            grid: GridSpec::default(),
            solver: SolverConfig::default(),
            output: OutputSpec::default(),
            seed: 0,
            batch: 1,
            stability: StabilitySpec::default(),
            convergence: ConvergenceSpec::default(),
            sweep: SweepSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::config(format!("config file: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::io(format!("reading {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks everything that can be checked without computing.
    pub fn validate(&self) -> Result<(), Failure> {
        self.problem.build()?;
        if self.batch == 0 {
            return Err(Failure::config("batch must be at least 1"));
        }
        if !(self.grid.shift.is_finite() && self.grid.shift > 0.0) {
            return Err(Failure::config("shift must be positive"));
        }
        if let Some(f) = self.grid.epsilon_floor {
            if !f.is_finite() {
                return Err(Failure::config("epsilon floor must be finite"));
            }
        }
        match self.command {
            Command::Solve | Command::Convergence | Command::DumpCoeffs => self.solver.validate()?,
            Command::Stability => {
                self.stability.bounds.validate()?;
                if self.stability.nx < 2 || self.stability.ny < 2 {
                    return Err(Failure::config("scan resolution must be at least 2x2"));
                }
            }
            Command::Sweep => {
                if self.sweep.methods.is_empty() || self.sweep.nfe.is_empty() {
                    return Err(Failure::config("sweep needs at least one method and one budget"));
                }
                for &method in &self.sweep.methods {
                    SolverConfig {
                        method,
                        ..self.solver.clone()
                    }
                    .validate()?;
                }
            }
            Command::DemoStiff => {}
        }
        if self.command == Command::Solve && self.grid.steps.is_none() && self.grid.nfe.is_none() {
            return Err(Failure::config("solve needs --steps or --nfe"));
        }
        Ok(())
    }

    /// Canonical JSON of the config with keys sorted, output path excluded.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.canonical_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Output file location: the configured path (made absolute against
    /// `out_dir` when relative) or `<out_dir>/<command>.<ext>`.
    pub fn output_path(&self, out_dir: Option<&Path>) -> PathBuf {
        let dir = out_dir.unwrap_or(Path::new("."));
        match &self.output.path {
            Some(p) if p.is_absolute() => p.clone(),
            Some(p) => dir.join(p),
            None => dir.join(format!("{}.{}", self.command.name(), self.output.format.extension())),
        }
    }
}
