//! Analytic test problems with exact-solution oracles.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{NoiseAsVelocity, SemiLinearNoiseModel, VelocityField};
use crate::error::{config, Result};

/// Exact solution map `(x, t_init, t_final) -> x(t_final)`.
pub trait Oracle: Send + Sync {
    fn exact(&self, x: &[f64], t_init: f64, t_final: f64) -> Vec<f64>;
}

impl<F> Oracle for F
where
    F: Fn(&[f64], f64, f64) -> Vec<f64> + Send + Sync,
{
    fn exact(&self, x: &[f64], t_init: f64, t_final: f64) -> Vec<f64> {
        self(x, t_init, t_final)
    }
}

/// The right-hand side of an analytic problem.
#[derive(Clone)]
pub enum ProblemField {
    Velocity(Arc<dyn VelocityField>),
    Noise(Arc<dyn SemiLinearNoiseModel>),
}

impl ProblemField {
    pub fn dim(&self) -> usize {
        match self {
            ProblemField::Velocity(v) => v.dim(),
            ProblemField::Noise(m) => m.dim(),
        }
    }
}

/// A test problem: a field, its exact solution, and a default solve span.
#[derive(Clone)]
pub struct AnalyticProblem {
    name: String,
    field: ProblemField,
    oracle: Arc<dyn Oracle>,
    stiffness_scale: f64,
    t_start: f64,
    t_end: f64,
    initial_state: Vec<f64>,
}

/// Alternating `1, -0.5, 1, -0.5, ...`, the default initial state.
fn default_state(dim: usize) -> Vec<f64> {
    (0..dim).map(|k| if k % 2 == 0 { 1.0 } else { -0.5 }).collect()
}

impl std::fmt::Debug for AnalyticProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticProblem")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("stiffness_scale", &self.stiffness_scale)
            .field("t_start", &self.t_start)
            .field("t_end", &self.t_end)
            .finish()
    }
}

impl AnalyticProblem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn field(&self) -> &ProblemField {
        &self.field
    }

    /// Largest rate magnitude of the problem. Informational only.
    pub fn stiffness_scale(&self) -> f64 {
        self.stiffness_scale
    }

    /// Default time at which the solve starts (grid index `M`).
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    /// Default time at which the solve ends (grid index 0).
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Default state at `t_start`.
    pub fn initial_state(&self) -> &[f64] {
        &self.initial_state
    }

    /// Overrides the default initial state.
    pub fn with_initial_state(mut self, x: Vec<f64>) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(crate::error::StorkError::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        self.initial_state = x;
        Ok(self)
    }

    /// Overrides the default solve span.
    pub fn with_span(mut self, t_start: f64, t_end: f64) -> Self {
        self.t_start = t_start;
        self.t_end = t_end;
        self
    }

    pub fn exact(&self, x: &[f64], t_init: f64, t_final: f64) -> Vec<f64> {
        if t_init == t_final {
            return x.to_vec();
        }
        self.oracle.exact(x, t_init, t_final)
    }

    /// The field as a velocity field. Noise models are wrapped so that the
    /// velocity is the assembled probability-flow right-hand side.
    pub fn velocity(&self) -> Arc<dyn VelocityField> {
        match &self.field {
            ProblemField::Velocity(v) => v.clone(),
            ProblemField::Noise(m) => Arc::new(NoiseAsVelocity(m.clone())),
        }
    }

    pub fn noise_model(&self) -> Option<Arc<dyn SemiLinearNoiseModel>> {
        match &self.field {
            ProblemField::Noise(m) => Some(m.clone()),
            ProblemField::Velocity(_) => None,
        }
    }
}

/// `v(x, t) = A x`.
#[derive(Debug, Clone)]
pub struct LinearField {
    matrix: DMatrix<f64>,
    name: String,
}

impl LinearField {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl VelocityField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let n = self.matrix.nrows();
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let mut acc = 0.0;
            for (j, &xj) in x.iter().enumerate() {
                acc += self.matrix[(i, j)] * xj;
            }
            *o = acc;
        }
    }
    fn name(&self) -> &str {
        &self.name
    }
}

/// Scalar test equation `dx/dt = lambda x`.
pub fn make_stiff_scalar(lambda: f64) -> AnalyticProblem {
    let field = LinearField {
        matrix: DMatrix::from_element(1, 1, lambda),
        name: format!("stiff-scalar(lambda={lambda})"),
    };
    AnalyticProblem {
        name: field.name.clone(),
        field: ProblemField::Velocity(Arc::new(field)),
        oracle: Arc::new(move |x: &[f64], t0: f64, t1: f64| {
            vec![x[0] * (lambda * (t1 - t0)).exp()]
        }),
        stiffness_scale: lambda.abs(),
        t_start: 0.0,
        t_end: 1.0,
        initial_state: vec![1.0],
    }
}

/// Linear system `dx/dt = A x`, with the matrix exponential as oracle.
pub fn make_linear_system(matrix: DMatrix<f64>) -> Result<AnalyticProblem> {
    if !matrix.is_square() || matrix.nrows() == 0 {
        return config(format!(
            "linear system matrix must be square and nonempty, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        ));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return config("linear system matrix has non-finite entries");
    }
    let stiffness_scale = spectral_radius(&matrix);
    let x0 = default_state(matrix.nrows());
    let field = LinearField {
        matrix: matrix.clone(),
        name: format!("linear-system({}x{})", matrix.nrows(), matrix.ncols()),
    };
    let oracle = move |x: &[f64], t0: f64, t1: f64| {
        let propagator = (&matrix * (t1 - t0)).exp();
        (propagator * DVector::from_column_slice(x))
            .iter()
            .copied()
            .collect::<Vec<f64>>()
    };
    Ok(AnalyticProblem {
        name: field.name.clone(),
        field: ProblemField::Velocity(Arc::new(field)),
        oracle: Arc::new(oracle),
        stiffness_scale,
        t_start: 0.0,
        t_end: 1.0,
        initial_state: x0,
    })
}

/// The 2x2 rotation generator `[[0, -1], [1, 0]]`.
pub fn make_rotation() -> AnalyticProblem {
    let mut p = make_linear_system(DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]))
        .expect("rotation matrix is square");
    p.name = "rotation".to_string();
    p.initial_state = vec![1.0, 0.0];
    p
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Variance-preserving diffusion of Gaussian data `N(mu0, s0^2 I)`, with
/// `alpha_bar(t) = cos(pi t / 2)` and `sigma(t) = sin(pi t / 2)`.
///
/// The noise predictor is the exact optimal one for Gaussian data. `f(t)`
/// diverges at `t = 1`, so solves start slightly below it.
#[derive(Debug, Clone)]
pub struct GaussianVp {
    mu0: Vec<f64>,
    s0: f64,
}

impl GaussianVp {
    /// Marginal standard deviation `sqrt(alpha^2 s0^2 + sigma^2)`.
    pub fn marginal_std(&self, t: f64) -> f64 {
        let a = self.alpha_bar(t);
        let s = self.sigma(t);
        (a * a * self.s0 * self.s0 + s * s).sqrt()
    }

    pub fn mu0(&self) -> &[f64] {
        &self.mu0
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }
}

impl SemiLinearNoiseModel for GaussianVp {
    fn dim(&self) -> usize {
        self.mu0.len()
    }
    fn drift(&self, t: f64) -> f64 {
        -FRAC_PI_2 * (FRAC_PI_2 * t).tan()
    }
    fn diffusion(&self, t: f64) -> f64 {
        (std::f64::consts::PI * (FRAC_PI_2 * t).tan()).sqrt()
    }
    fn sigma(&self, t: f64) -> f64 {
        (FRAC_PI_2 * t).sin()
    }
    fn alpha_bar(&self, t: f64) -> f64 {
        (FRAC_PI_2 * t).cos()
    }
    fn eps(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let a = self.alpha_bar(t);
        let s = self.sigma(t);
        let var = a * a * self.s0 * self.s0 + s * s;
        for ((o, &xi), &m) in out.iter_mut().zip(x).zip(&self.mu0) {
            *o = s * (xi - a * m) / var;
        }
    }
    fn name(&self) -> &str {
        "gaussian-vp"
    }
}

/// Default start time for VP solves (the drift is singular at 1).
pub const GAUSSIAN_VP_T_MAX: f64 = 0.95;

/// Default terminal time for VP solves.
pub const GAUSSIAN_VP_FLOOR: f64 = 1e-3;

/// Noise-model problem for Gaussian data under the VP cosine schedule.
///
/// The probability flow of a Gaussian family keeps the standardized variable
/// `(x - alpha_bar mu0) / std(t)` constant, which gives the oracle.
pub fn make_gaussian_vp(mu0: Vec<f64>, s0: f64) -> Result<AnalyticProblem> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return config(format!("gaussian_vp requires s0 > 0, got {s0}"));
    }
    if mu0.is_empty() {
        return config("gaussian_vp requires a nonempty mean");
    }
    let model = GaussianVp { mu0, s0 };
    let oracle_model = model.clone();
    let oracle = move |x: &[f64], t0: f64, t1: f64| {
        let m = &oracle_model;
        let ratio = m.marginal_std(t1) / m.marginal_std(t0);
        let (a0, a1) = (m.alpha_bar(t0), m.alpha_bar(t1));
        x.iter()
            .zip(&m.mu0)
            .map(|(&xi, &mu)| a1 * mu + ratio * (xi - a0 * mu))
            .collect::<Vec<f64>>()
    };
    let stiffness_scale = model.drift(GAUSSIAN_VP_T_MAX).abs();
    let x0 = default_state(model.mu0.len());
    Ok(AnalyticProblem {
        name: "gaussian-vp".to_string(),
        field: ProblemField::Noise(Arc::new(model)),
        oracle: Arc::new(oracle),
        stiffness_scale,
        t_start: GAUSSIAN_VP_T_MAX,
        t_end: GAUSSIAN_VP_FLOOR,
        initial_state: x0,
    })
}

/// Marginal velocity of the linear interpolant `x_t = (1 - t) z + t x1`
/// between `z ~ N(0, I)` and `x1 ~ N(mu1, s1^2 I)`:
///
/// ```text
/// v(x, t) = mu1 + (t s1^2 - (1 - t)) / ((1 - t)^2 + t^2 s1^2) * (x - t mu1)
/// ```
///
/// Note that `mu1 = 0, s1 = 1` does not give the zero field: the marginal
/// variance dips to 1/2 at `t = 1/2` and the flow contracts then expands.
#[derive(Debug, Clone)]
pub struct GaussianFlow {
    mu1: Vec<f64>,
    s1: f64,
}

impl GaussianFlow {
    pub fn marginal_var(&self, t: f64) -> f64 {
        let u = 1.0 - t;
        u * u + t * t * self.s1 * self.s1
    }

    /// `(t s1^2 - (1 - t)) / var(t)`, the contraction rate of the flow.
    pub fn rate(&self, t: f64) -> f64 {
        (t * self.s1 * self.s1 - (1.0 - t)) / self.marginal_var(t)
    }
}

impl VelocityField for GaussianFlow {
    fn dim(&self) -> usize {
        self.mu1.len()
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let k = self.rate(t);
        for ((o, &xi), &m) in out.iter_mut().zip(x).zip(&self.mu1) {
            *o = m + k * (xi - t * m);
        }
    }
    fn name(&self) -> &str {
        "gaussian-flow"
    }
}

/// Velocity-field problem transporting `N(0, I)` at `t = 0` to
/// `N(mu1, s1^2 I)` at `t = 1`. Solves run forward in time by default.
pub fn make_gaussian_flow(mu1: Vec<f64>, s1: f64) -> Result<AnalyticProblem> {
    if !(s1 > 0.0 && s1.is_finite()) {
        return config(format!("gaussian_flow requires s1 > 0, got {s1}"));
    }
    if mu1.is_empty() {
        return config("gaussian_flow requires a nonempty mean");
    }
    let field = GaussianFlow { mu1, s1 };
    let f = field.clone();
    let oracle = move |x: &[f64], t0: f64, t1: f64| {
        let ratio = (f.marginal_var(t1) / f.marginal_var(t0)).sqrt();
        x.iter()
            .zip(&f.mu1)
            .map(|(&xi, &m)| t1 * m + ratio * (xi - t0 * m))
            .collect::<Vec<f64>>()
    };
    let stiffness_scale = (0..=100)
        .map(|i| field.rate(i as f64 / 100.0).abs())
        .fold(0.0, f64::max);
    let x0 = default_state(field.mu1.len());
    Ok(AnalyticProblem {
        name: "gaussian-flow".to_string(),
        field: ProblemField::Velocity(Arc::new(field)),
        oracle: Arc::new(oracle),
        stiffness_scale,
        t_start: 0.0,
        t_end: 1.0,
        initial_state: x0,
    })
}

/// Classical fourth-order Runge-Kutta with `steps` uniform steps from
/// `t_init` to `t_final` (either direction). Used as the independent
/// reference integrator for oracles.
pub fn reference_solve(
    field: &dyn VelocityField,
    x: &[f64],
    t_init: f64,
    t_final: f64,
    steps: usize,
) -> Vec<f64> {
    let n = x.len();
    let steps = steps.max(1);
    let h = (t_final - t_init) / steps as f64;
    let mut y = x.to_vec();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for i in 0..steps {
        let t = t_init + h * i as f64;
        field.eval(&y, t, &mut k1);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        field.eval(&tmp, t + 0.5 * h, &mut k2);
        for j in 0..n {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        field.eval(&tmp, t + 0.5 * h, &mut k3);
        for j in 0..n {
            tmp[j] = y[j] + h * k3[j];
        }
        field.eval(&tmp, t + h, &mut k4);
        for j in 0..n {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    y
}

/// Problems selectable by name, as used in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ProblemSpec {
    StiffScalar {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    LinearSystem {
        /// Row-major square matrix. Defaults to `diag(-1, -100)`.
        #[serde(default = "default_matrix")]
        matrix: Vec<Vec<f64>>,
    },
    Rotation,
    GaussianVp {
        #[serde(default = "default_vp_mean")]
        mu0: Vec<f64>,
        #[serde(default = "default_vp_std")]
        s0: f64,
    },
    GaussianFlow {
        #[serde(default = "default_flow_mean")]
        mu1: Vec<f64>,
        #[serde(default = "default_flow_std")]
        s1: f64,
    },
}

fn default_lambda() -> f64 {
    -20.0
}
fn default_matrix() -> Vec<Vec<f64>> {
    vec![vec![-1.0, 0.0], vec![0.0, -100.0]]
}
fn default_vp_mean() -> Vec<f64> {
    vec![2.0, 0.0]
}
fn default_vp_std() -> f64 {
    0.5
}
fn default_flow_mean() -> Vec<f64> {
    vec![1.0, -2.0]
}
fn default_flow_std() -> f64 {
    0.5
}

impl ProblemSpec {
    /// Builds a spec from a bare problem name with default parameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "stiff-scalar" => ProblemSpec::StiffScalar {
                lambda: default_lambda(),
            },
            "linear-system" => ProblemSpec::LinearSystem {
                matrix: default_matrix(),
            },
            "rotation" => ProblemSpec::Rotation,
            "gaussian-vp" => ProblemSpec::GaussianVp {
                mu0: default_vp_mean(),
                s0: default_vp_std(),
            },
            "gaussian-flow" => ProblemSpec::GaussianFlow {
                mu1: default_flow_mean(),
                s1: default_flow_std(),
            },
            other => {
                return config(format!(
                    "unknown problem '{other}' (expected stiff-scalar, linear-system, rotation, gaussian-vp or gaussian-flow)"
                ))
            }
        })
    }

    pub fn build(&self) -> Result<AnalyticProblem> {
        match self {
            ProblemSpec::StiffScalar { lambda } => {
                if *lambda == 0.0 || !lambda.is_finite() {
                    return config("stiff-scalar requires a finite nonzero lambda");
                }
                Ok(make_stiff_scalar(*lambda))
            }
            ProblemSpec::LinearSystem { matrix } => {
                let n = matrix.len();
                if matrix.iter().any(|row| row.len() != n) {
                    return config("linear-system matrix must be square");
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                make_linear_system(DMatrix::from_row_slice(n, n, &flat))
            }
            ProblemSpec::Rotation => Ok(make_rotation()),
            ProblemSpec::GaussianVp { mu0, s0 } => make_gaussian_vp(mu0.clone(), *s0),
            ProblemSpec::GaussianFlow { mu1, s1 } => make_gaussian_flow(mu1.clone(), *s1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
        num / den
    }

    #[test]
    fn stiff_scalar_examples() {
        let p = make_stiff_scalar(-20.0);
        let x = p.exact(&[1.0], 0.0, 1.0)[0];
        assert!((x - (-20.0f64).exp()).abs() < 1e-22);
        assert!((x - 2.0612e-9).abs() < 1e-12);
        assert_eq!(p.exact(&[1.0], 0.0, 0.0), vec![1.0]);
        let z = make_stiff_scalar(0.0);
        assert_eq!(z.exact(&[3.25], 0.0, 7.0), vec![3.25]);
    }

    #[test]
    fn linear_system_examples() {
        let p = make_linear_system(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -100.0])).unwrap();
        let x = p.exact(&[1.0, 1.0], 0.0, 1.0);
        assert!(rel_err(&x[..1], &[(-1.0f64).exp()]) < 1e-12);
        assert!(rel_err(&x[1..], &[(-100.0f64).exp()]) < 1e-10);

        let zero = make_linear_system(DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(zero.exact(&[1.0, 2.0, 3.0], 0.0, 5.0), vec![1.0, 2.0, 3.0]);

        let rot = make_rotation();
        let y = rot.exact(&[1.0, 0.0], 0.0, FRAC_PI_2);
        assert!(y[0].abs() < 1e-10 && (y[1] - 1.0).abs() < 1e-10);
        assert!((rot.stiffness_scale() - 1.0).abs() < 1e-12);

        assert!(make_linear_system(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn linear_oracle_semigroup() {
        let m = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.3, 0.0, -5.0, 1.0, 0.5, -0.2, -0.7]);
        let p = make_linear_system(m).unwrap();
        let x = [0.4, -1.1, 2.0];
        let direct = p.exact(&x, 0.1, 0.9);
        let composed = p.exact(&p.exact(&x, 0.1, 0.35), 0.35, 0.9);
        assert!(rel_err(&composed, &direct) < 1e-10);
    }

    #[test]
    fn gaussian_vp_eps_simplifies_for_standard_data() {
        let p = make_gaussian_vp(vec![0.0, 0.0], 1.0).unwrap();
        let m = p.noise_model().unwrap();
        let x = [0.7, -1.3];
        for &t in &[0.1, 0.5, 0.9] {
            let mut eps = [0.0; 2];
            m.eps(&x, t, &mut eps);
            let s = m.sigma(t);
            for i in 0..2 {
                assert!((eps[i] - s * x[i]).abs() < 1e-15);
            }
        }
        let mut eps = [1.0; 2];
        m.eps(&x, 0.0, &mut eps);
        assert_eq!(eps, [0.0, 0.0]);
    }

    #[test]
    fn gaussian_vp_eps_matches_score() {
        // eps = -sigma * score, score of N(alpha mu0, (alpha^2 s0^2 + sigma^2) I)
        let p = make_gaussian_vp(vec![2.0, 0.0], 0.5).unwrap();
        let m = p.noise_model().unwrap();
        let x = [0.83, -0.41];
        let t: f64 = 0.5;
        let alpha = (std::f64::consts::PI * t / 2.0).cos();
        let sigma = (std::f64::consts::PI * t / 2.0).sin();
        let var = alpha * alpha * 0.25 + sigma * sigma;
        let score = [-(x[0] - alpha * 2.0) / var, -x[1] / var];
        let mut eps = [0.0; 2];
        m.eps(&x, t, &mut eps);
        for i in 0..2 {
            assert!((eps[i] + sigma * score[i]).abs() < 1e-14);
        }
        assert!(make_gaussian_vp(vec![0.0], 0.0).is_err());
    }

    #[test]
    fn vp_schedule_is_variance_preserving() {
        let p = make_gaussian_vp(vec![1.0], 0.3).unwrap();
        let m = p.noise_model().unwrap();
        for i in 1..100 {
            let t = i as f64 / 100.0;
            let (a, s) = (m.alpha_bar(t), m.sigma(t));
            assert!((a * a + s * s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn closed_form_oracles_match_reference_integrator() {
        let vp = make_gaussian_vp(vec![2.0, 0.0], 0.5).unwrap();
        let x = [0.3, -1.2];
        let v = vp.velocity();
        let want = reference_solve(v.as_ref(), &x, vp.t_start(), vp.t_end(), 20_000);
        let got = vp.exact(&x, vp.t_start(), vp.t_end());
        assert!(rel_err(&got, &want) < 1e-9, "{got:?} vs {want:?}");

        let fl = make_gaussian_flow(vec![1.0, -2.0], 0.5).unwrap();
        let want = reference_solve(fl.velocity().as_ref(), &x, 0.0, 1.0, 20_000);
        let got = fl.exact(&x, 0.0, 1.0);
        assert!(rel_err(&got, &want) < 1e-10);
    }

    #[test]
    fn reference_integrator_is_step_halving_consistent() {
        let problems = [
            make_gaussian_vp(vec![2.0, 0.0], 0.5).unwrap(),
            make_gaussian_flow(vec![1.0, -2.0], 0.5).unwrap(),
            make_rotation(),
            make_linear_system(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -100.0])).unwrap(),
        ];
        let x = [0.3, -1.2];
        for p in &problems {
            let v = p.velocity();
            let a = reference_solve(v.as_ref(), &x, p.t_start(), p.t_end(), 10_000);
            let b = reference_solve(v.as_ref(), &x, p.t_start(), p.t_end(), 20_000);
            let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-12);
            let diff = a.iter().zip(&b).map(|(u, w)| (u - w).abs()).fold(0.0, f64::max);
            assert!(diff / scale < 1e-8, "{}: {}", p.name(), diff / scale);
        }
    }

    #[test]
    fn gaussian_flow_standard_case_is_not_zero() {
        let p = make_gaussian_flow(vec![0.0], 1.0).unwrap();
        let v = p.velocity();
        let mut out = [0.0];
        v.eval(&[1.0], 0.5, &mut out);
        assert_eq!(out[0], 0.0);
        v.eval(&[1.0], 0.25, &mut out);
        // (2t - 1) / ((1-t)^2 + t^2) at t = 1/4 is -0.8
        assert!((out[0] + 0.8).abs() < 1e-15);
    }

    #[test]
    fn gaussian_flow_small_variance_limit_points_at_mean() {
        let p = make_gaussian_flow(vec![2.0, -1.0], 1e-6).unwrap();
        let v = p.velocity();
        let x = [0.5, 0.5];
        let t = 0.999_999;
        let mut out = [0.0; 2];
        v.eval(&x, t, &mut out);
        // straight-line transport toward mu1: v ~ (mu1 - x) / (1 - t)
        for i in 0..2 {
            let dir = [2.0, -1.0][i] - x[i];
            assert!(out[i].signum() == dir.signum());
        }
        let mut out = [0.0; 2];
        v.eval(&[2.0, -1.0], 1.0, &mut out);
        assert!((out[0] - 2.0).abs() < 1e-12 && (out[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_flow_matches_monte_carlo_regression() {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let (mu1, s1, t) = (1.5f64, 0.5f64, 0.4f64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let x1 = mu1 + s1 * e;
            let xt = (1.0 - t) * z + t * x1;
            let target = x1 - z;
            sx += xt;
            sy += target;
            sxx += xt * xt;
            sxy += xt * target;
        }
        let nf = n as f64;
        let slope = (sxy - sx * sy / nf) / (sxx - sx * sx / nf);
        let intercept = (sy - slope * sx) / nf;
        let f = make_gaussian_flow(vec![mu1], s1).unwrap();
        let ProblemField::Velocity(v) = f.field() else { unreachable!() };
        let mut at0 = [0.0];
        let mut at1 = [0.0];
        v.eval(&[0.0], t, &mut at0);
        v.eval(&[1.0], t, &mut at1);
        assert!((at1[0] - at0[0] - slope).abs() < 0.02, "slope {slope}");
        assert!((at0[0] - intercept).abs() < 0.02, "intercept {intercept}");
    }

    #[test]
    fn problem_spec_roundtrip_and_errors() {
        for name in ["stiff-scalar", "linear-system", "rotation", "gaussian-vp", "gaussian-flow"] {
            let spec = ProblemSpec::from_name(name).unwrap();
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<ProblemSpec>(&json).unwrap(), spec);
            let p = spec.build().unwrap();
            assert!(p.dim() >= 1);
        }
        assert!(ProblemSpec::from_name("lorenz").is_err());
        let bad = ProblemSpec::LinearSystem {
            matrix: vec![vec![1.0, 2.0], vec![3.0]],
        };
        assert!(bad.build().is_err());
    }
}
