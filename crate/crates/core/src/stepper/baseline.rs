use crate::error::{config, Result};
use crate::fields::VelocityField;

use super::config::Method;

/// Result of one baseline step.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub state: Vec<f64>,
    /// Field value at the starting point, reusable as AB2 history.
    pub v_start: Vec<f64>,
    pub nfe: usize,
}

/// Previous step data for two-step Adams-Bashforth.
#[derive(Debug, Clone, Copy)]
pub struct Ab2History<'a> {
    pub h_prev: f64,
    pub v_prev: &'a [f64],
}

fn axpy(x: &[f64], a: f64, v: &[f64]) -> Vec<f64> {
    x.iter().zip(v).map(|(xi, vi)| xi + a * vi).collect()
}

/// One textbook step from `(x, t)` to `t - h` with `x <- x - h v`.
///
/// AB2 uses the variable-step form
/// `x - h ((1 + h / (2 h_prev)) v_n - h / (2 h_prev) v_{n-1})` and needs
/// `history`; the other methods ignore it.
pub fn baseline_step<F: VelocityField + ?Sized>(
    method: Method,
    x: &[f64],
    t: f64,
    h: f64,
    field: &F,
    history: Option<Ab2History<'_>>,
) -> Result<BaselineOutcome> {
    let n = x.len();
    let eval = |y: &[f64], tt: f64| {
        let mut o = vec![0.0; n];
        field.eval(y, tt, &mut o);
        o
    };
    let k1 = eval(x, t);
    let (state, nfe) = match method {
        Method::Euler => (axpy(x, -h, &k1), 1),
        Method::Heun => {
            let k2 = eval(&axpy(x, -h, &k1), t - h);
            let s: Vec<f64> = k1.iter().zip(&k2).map(|(a, b)| a + b).collect();
            (axpy(x, -0.5 * h, &s), 2)
        }
        Method::Rk4 => {
            let k2 = eval(&axpy(x, -0.5 * h, &k1), t - 0.5 * h);
            let k3 = eval(&axpy(x, -0.5 * h, &k2), t - 0.5 * h);
            let k4 = eval(&axpy(x, -h, &k3), t - h);
            let s: Vec<f64> = (0..n)
                .map(|i| k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                .collect();
            (axpy(x, -h / 6.0, &s), 4)
        }
        Method::Ab2 => {
            let Some(hist) = history else {
                return config("ab2 needs one prior evaluation");
            };
            if hist.v_prev.len() != n {
                return config("ab2 history has the wrong dimension");
            }
            let r = h / (2.0 * hist.h_prev);
            let s: Vec<f64> = (0..n).map(|i| (1.0 + r) * k1[i] - r * hist.v_prev[i]).collect();
            (axpy(x, -h, &s), 1)
        }
        other => return config(format!("{other} is not a baseline method")),
    };
    Ok(BaselineOutcome {
        state,
        v_start: k1,
        nfe,
    })
}

/// Runs a baseline method step by step, keeping AB2 history. The first AB2
/// step has no history and falls back to Euler.
#[derive(Debug, Clone)]
pub struct BaselineStepper {
    method: Method,
    prev: Option<(f64, Vec<f64>)>,
}

impl BaselineStepper {
    pub fn new(method: Method) -> Result<Self> {
        if !method.is_baseline() {
            return config(format!("{method} is not a baseline method"));
        }
        Ok(Self { method, prev: None })
    }

    pub fn step<F: VelocityField + ?Sized>(
        &mut self,
        x: &[f64],
        t: f64,
        h: f64,
        field: &F,
    ) -> Result<BaselineOutcome> {
        let method = match (self.method, &self.prev) {
            (Method::Ab2, None) => Method::Euler,
            (m, _) => m,
        };
        let hist = self.prev.as_ref().map(|(hp, vp)| Ab2History {
            h_prev: *hp,
            v_prev: vp,
        });
        let out = baseline_step(method, x, t, h, field, hist)?;
        if self.method == Method::Ab2 {
            self.prev = Some((h, out.v_start.clone()));
        }
        Ok(out)
    }
}
