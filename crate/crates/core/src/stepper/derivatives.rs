use std::collections::VecDeque;

use crate::error::{config, Result};

/// Finite-difference weights for derivatives `0..=max_deriv` at `anchor` from
/// values at `nodes` (Fornberg's recursion). `w[k][j]` multiplies the value
/// at `nodes[j]` in the estimate of the `k`-th derivative.
pub fn fd_weights(anchor: f64, nodes: &[f64], max_deriv: usize) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut c = vec![vec![0.0; n]; max_deriv + 1];
    if n == 0 {
        return c;
    }
    let mut c1 = 1.0;
    let mut c4 = nodes[0] - anchor;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(max_deriv);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = nodes[i] - anchor;
        for j in 0..i {
            let c3 = nodes[i] - nodes[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

fn combine(weights: &[f64], values: &[&[f64]]) -> Vec<f64> {
    let d = values[0].len();
    let mut out = vec![0.0; d];
    for (w, v) in weights.iter().zip(values) {
        for (o, &x) in out.iter_mut().zip(v.iter()) {
            *o += w * x;
        }
    }
    out
}

fn check_distinct(times: &[f64]) -> Result<()> {
    for i in 0..times.len() {
        if !times[i].is_finite() {
            return config("finite-difference times must be finite");
        }
        for j in 0..i {
            if times[i] == times[j] {
                return config(format!("coincident finite-difference times at t = {}", times[i]));
            }
        }
    }
    Ok(())
}

/// First and second derivative at `anchor_time` from three samples. Works on
/// any spacing and reduces to `(-3, 4, -1) / (2 dt)` and `(1, -2, 1) / dt^2`
/// on equally spaced samples starting at the anchor.
pub fn fd_derivatives_3pt(evals: &[(f64, &[f64]); 3], anchor_time: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let times: Vec<f64> = evals.iter().map(|e| e.0).collect();
    check_distinct(&times)?;
    let values: Vec<&[f64]> = evals.iter().map(|e| e.1).collect();
    let w = fd_weights(anchor_time, &times, 2);
    Ok((combine(&w[1], &values), combine(&w[2], &values)))
}

/// First, second and third derivative at `evals[0].0` from four samples
/// spaced `h` apart (`h` may be negative), with the stencils
/// `(-11, 18, -9, 2) / (6h)`, `(2, -5, 4, -1) / h^2`, `(-1, 3, -3, 1) / h^3`.
pub fn fd_derivatives_4pt_uniform(
    evals: &[(f64, &[f64]); 4],
    h: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if !(h.is_finite() && h != 0.0) {
        return config(format!("stencil spacing must be finite and nonzero, got {h}"));
    }
    let t0 = evals[0].0;
    for (k, e) in evals.iter().enumerate() {
        let want = t0 + k as f64 * h;
        if (e.0 - want).abs() > 1e-9 * h.abs() {
            return config(format!(
                "four-point stencil needs uniform spacing {h}: sample {k} at {} instead of {want}",
                e.0
            ));
        }
    }
    let v: Vec<&[f64]> = evals.iter().map(|e| e.1).collect();
    Ok(uniform4(&v, h))
}

pub(crate) fn uniform4(v: &[&[f64]], h: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let w1 = [-11.0 / (6.0 * h), 18.0 / (6.0 * h), -9.0 / (6.0 * h), 2.0 / (6.0 * h)];
    let h2 = h * h;
    let w2 = [2.0 / h2, -5.0 / h2, 4.0 / h2, -1.0 / h2];
    let h3 = h2 * h;
    let w3 = [-1.0 / h3, 3.0 / h3, -3.0 / h3, 1.0 / h3];
    (combine(&w1, v), combine(&w2, v), combine(&w3, v))
}

pub(crate) fn uniform3(v: &[&[f64]], h: f64) -> (Vec<f64>, Vec<f64>) {
    let w1 = [-3.0 / (2.0 * h), 4.0 / (2.0 * h), -1.0 / (2.0 * h)];
    let h2 = h * h;
    let w2 = [1.0 / h2, -2.0 / h2, 1.0 / h2];
    (combine(&w1, v), combine(&w2, v))
}

/// Recent real field evaluations and the derivative estimates built from
/// them at the newest one (the anchor).
///
/// Holds at most `order + 1` evaluations. Times must keep moving in one
/// direction, so every stored sample lies on the same side of the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeCache {
    order: usize,
    history: VecDeque<(f64, Vec<f64>)>,
    anchor_time: f64,
    anchor_value: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    d3: Option<Vec<f64>>,
    ready: bool,
}

impl DerivativeCache {
    /// An empty cache for Taylor order 2 or 3.
    pub fn new(order: usize) -> Result<Self> {
        if !(2..=3).contains(&order) {
            return config(format!("taylor order must be 2 or 3, got {order}"));
        }
        Ok(Self {
            order,
            history: VecDeque::with_capacity(order + 1),
            anchor_time: f64::NAN,
            anchor_value: Vec::new(),
            d1: Vec::new(),
            d2: Vec::new(),
            d3: None,
            ready: false,
        })
    }

    /// A ready cache from explicit derivative estimates. The order is 3 when
    /// `d3` is given and 2 otherwise.
    pub fn from_parts(
        anchor_time: f64,
        anchor_value: Vec<f64>,
        d1: Vec<f64>,
        d2: Vec<f64>,
        d3: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = anchor_value.len();
        if d1.len() != n || d2.len() != n || d3.as_ref().is_some_and(|d| d.len() != n) {
            return config("derivative estimates must match the anchor dimension");
        }
        let order = if d3.is_some() { 3 } else { 2 };
        let mut history = VecDeque::new();
        history.push_back((anchor_time, anchor_value.clone()));
        Ok(Self {
            order,
            history,
            anchor_time,
            anchor_value,
            d1,
            d2,
            d3,
            ready: true,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored evaluations.
    pub fn len(&self) -> usize {
        self.history.len()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty()
    }

    /// Stored sample times, oldest first.
    pub fn times(&self) -> Vec<f64> {
        self.history.iter().map(|e| e.0).collect()
    }

    /// Stored samples, oldest first.
    pub fn samples(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.history.iter().map(|(t, v)| (*t, v.as_slice()))
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }

    pub fn anchor_time(&self) -> f64 {
        self.anchor_time
    }

    pub fn anchor_value(&self) -> &[f64] {
        &self.anchor_value
    }

    pub fn d1(&self) -> &[f64] {
        &self.d1
    }

    pub fn d2(&self) -> &[f64] {
        &self.d2
    }

    pub fn d3(&self) -> Option<&[f64]> {
        self.d3.as_deref()
    }

    /// Stores a real evaluation as the newest sample. The derivative
    /// estimates are stale until [`refresh`](Self::refresh).
    pub fn push(&mut self, t: f64, value: Vec<f64>) -> Result<()> {
        if !t.is_finite() {
            return config("cache times must be finite");
        }
        if let Some(&(last, ref v)) = self.history.back() {
            if v.len() != value.len() {
                return config("cached evaluations must share one dimension");
            }
            if t == last {
                return config(format!("duplicate cache time {t}"));
            }
            if self.history.len() >= 2 {
                let prev = self.history[self.history.len() - 2].0;
                if (t - last).signum() != (last - prev).signum() {
                    return config("cache times must move in one direction");
                }
            }
        }
        self.history.push_back((t, value));
        while self.history.len() > self.order + 1 {
            self.history.pop_front();
        }
        self.ready = false;
        Ok(())
    }

    /// Re-anchors at the newest sample and rebuilds the derivative estimates
    /// from the `order + 1` most recent samples.
    pub fn refresh(&mut self) -> Result<()> {
        let need = self.order + 1;
        if self.history.len() < need {
            return config(format!(
                "order-{} derivatives need {need} samples, cache holds {}",
                self.order,
                self.history.len()
            ));
        }
        // newest first: anchor, then increasingly older samples
        let recent: Vec<(f64, &[f64])> = self
            .history
            .iter()
            .rev()
            .take(need)
            .map(|(t, v)| (*t, v.as_slice()))
            .collect();
        let times: Vec<f64> = recent.iter().map(|e| e.0).collect();
        let values: Vec<&[f64]> = recent.iter().map(|e| e.1).collect();
        let dt = times[1] - times[0];
        let uniform = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.abs());
        self.anchor_time = times[0];
        self.anchor_value = values[0].to_vec();
        if uniform && self.order == 3 {
            let (d1, d2, d3) = uniform4(&values, dt);
            self.d1 = d1;
            self.d2 = d2;
            self.d3 = Some(d3);
        } else if uniform {
            let (d1, d2) = uniform3(&values, dt);
            self.d1 = d1;
            self.d2 = d2;
            self.d3 = None;
        } else {
            let w = fd_weights(times[0], &times, self.order);
            self.d1 = combine(&w[1], &values);
            self.d2 = combine(&w[2], &values);
            self.d3 = (self.order == 3).then(|| combine(&w[3], &values));
        }
        self.ready = true;
        Ok(())
    }

    /// Writes the Taylor approximation `v0 + dt v' + dt^2/2 v'' (+ dt^3/6 v''')`
    /// into `out`.
    pub fn taylor_into(&self, order: usize, dt: f64, out: &mut [f64]) -> Result<()> {
        if !self.ready {
            return config("derivative cache is not primed");
        }
        if !(2..=3).contains(&order) {
            return config(format!("taylor order must be 2 or 3, got {order}"));
        }
        let d3 = match (order, &self.d3) {
            (3, Some(d3)) => Some(d3),
            (3, None) => return config("order-3 expansion requested from an order-2 cache"),
            _ => None,
        };
        let a = dt;
        let b = dt * dt / 2.0;
        let c = dt * dt * dt / 6.0;
        for (i, o) in out.iter_mut().enumerate() {
            let mut v = self.anchor_value[i] + a * self.d1[i] + b * self.d2[i];
            if let Some(d3) = d3 {
                v += c * d3[i];
            }
            *o = v;
        }
        Ok(())
    }
}

/// Taylor approximation of the field at `anchor_time + dt`.
pub fn taylor_eval(cache: &DerivativeCache, order: usize, dt: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; cache.anchor_value().len()];
    cache.taylor_into(order, dt, &mut out)?;
    Ok(out)
}
