use crate::coefficients::Rock4Coefficients;
use crate::error::{config, Result, StorkError};
use crate::fields::{NoiseAsVelocity, SemiLinearNoiseModel};

use super::config::{Method, SolverConfig, SubstageMode};
use super::derivatives::{uniform3, uniform4, DerivativeCache};
use super::flow::{Recorder, Stabilized};
use super::grid::TimeGrid;
use super::report::{SolveReport, StepPhase};
use super::superstep::{rock4_stages, stork4_superstep};

/// Tweedie finishing `(x - sigma(t) eps(x, t)) / alpha_bar(t)`. One real
/// evaluation.
pub fn tweedie_finish<M: SemiLinearNoiseModel + ?Sized>(x: &[f64], t_floor: f64, model: &M) -> Result<Vec<f64>> {
    let a = model.alpha_bar(t_floor);
    if a == 0.0 || !a.is_finite() {
        return config(format!("alpha_bar({t_floor}) = {a}, Tweedie finishing is undefined"));
    }
    let sigma = model.sigma(t_floor);
    let mut eps = vec![0.0; x.len()];
    model.eps(x, t_floor, &mut eps);
    Ok(x.iter().zip(&eps).map(|(xi, ei)| (xi - sigma * ei) / a).collect())
}

fn eval_eps<M: SemiLinearNoiseModel + ?Sized>(model: &M, x: &[f64], t: f64) -> Vec<f64> {
    let mut e = vec![0.0; x.len()];
    model.eps(x, t, &mut e);
    e
}

fn rhs<M: SemiLinearNoiseModel + ?Sized>(model: &M, x: &[f64], eps: &[f64], t: f64) -> Vec<f64> {
    let mut f = vec![0.0; x.len()];
    model.rhs(x, eps, t, &mut f);
    f
}

/// One noise-model super-step from `(x, t)` with step `h`, given the noise
/// prediction and its derivative estimates at `(x, t)` packed in `cache`.
///
/// Every stage feeds the Taylor-expanded noise into
/// `F(eps, t) = f(t) Y + g(t)^2 / (2 sigma_t) eps`, the first stage included.
pub fn stork4_noise_onestep<M: SemiLinearNoiseModel + ?Sized>(
    x: &[f64],
    t: f64,
    h: f64,
    coeffs: &Rock4Coefficients,
    cache: &DerivativeCache,
    model: &M,
    literal: bool,
) -> Result<(Vec<f64>, f64)> {
    let f0 = rhs(model, x, cache.anchor_value(), t);
    let c = if literal {
        coeffs.literal_abscissae()
    } else {
        coeffs.abscissae()
    };
    let order = cache.order();
    let mut eps = vec![0.0; x.len()];
    rock4_stages(x, &f0, h, coeffs, literal, |j, y, out| {
        let dt = -h * c[j];
        cache.taylor_into(order, dt, &mut eps)?;
        model.rhs(y, &eps, t + dt, out);
        Ok(())
    })
}

fn check_noise_inputs<M: SemiLinearNoiseModel + ?Sized>(
    x_init: &[f64],
    grid: &TimeGrid,
    model: &M,
    cfg: &SolverConfig,
) -> Result<()> {
    cfg.validate()?;
    if cfg.method != Method::Stork4Noise {
        return config(format!("solve_noise runs stork4-noise, got {}", cfg.method));
    }
    if x_init.len() != model.dim() {
        return Err(StorkError::Dimension {
            expected: model.dim(),
            got: x_init.len(),
        });
    }
    if !grid.is_uniform() {
        return config("the noise-model solver needs a uniform grid");
    }
    if !grid.runs_backward() {
        return config("the noise-model solver runs from large to small t");
    }
    let floor = grid.t_end();
    if !(floor > 0.0) {
        return config(format!("terminal time must be positive, got {floor}"));
    }
    let sigma = model.sigma(floor);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return config(format!("sigma({floor}) = {sigma}, the terminal time needs positive noise"));
    }
    if cfg.tweedie {
        let a = model.alpha_bar(floor);
        if a == 0.0 || !a.is_finite() {
            return config(format!("alpha_bar({floor}) = {a}, Tweedie finishing is undefined"));
        }
    }
    Ok(())
}

/// Solves the probability-flow ODE of a noise model down a uniform grid
/// with the noise-based STORK-4 scheme, then optionally applies Tweedie
/// finishing at the terminal time.
///
/// The first step spends three evaluations (at `x_M`, at a half Euler
/// step and at a provisional `x_{M-1}`) to build first and second
/// derivative estimates, then restarts from `x_M`. Every later step spends
/// one evaluation at the current state and reuses stored ones: three-point
/// stencils for the next two steps and four-point stencils afterwards. The
/// total is `M + 2`, plus one for Tweedie. Exact mode instead runs ROCK4
/// with a real evaluation at every stage.
pub fn solve_noise<M: SemiLinearNoiseModel + ?Sized>(
    x_init: &[f64],
    grid: &TimeGrid,
    model: &M,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    check_noise_inputs(x_init, grid, model, cfg)?;
    let Stabilized::Rock4 { coeffs, substituted } = Stabilized::resolve(cfg)? else {
        unreachable!("stork4-noise resolves to ROCK4 coefficients");
    };
    let m = grid.steps();
    let h = grid.step(m);
    let literal = cfg.literal_finishing;
    let c = if literal {
        coeffs.literal_abscissae()
    } else {
        coeffs.abscissae()
    };
    let c_max = c.iter().copied().fold(0.0, f64::max);
    let t_low = grid.t_end() + h * (1.0 - c_max);
    let sigma = model.sigma(t_low);
    if !(sigma > 0.0 && sigma.is_finite()) {
        return config(format!(
            "the last step evaluates the model at t = {t_low}, where sigma = {sigma}; use more steps or a larger terminal time"
        ));
    }
    let mut rec = Recorder::new(cfg, grid, x_init, substituted);
    let mut x = x_init.to_vec();

    if cfg.substage_mode == SubstageMode::Exact {
        let field = NoiseAsVelocity(model);
        let mut unused = DerivativeCache::new(cfg.taylor_order)?;
        for i in (1..=m).rev() {
            let out = stork4_superstep(&x, grid.time(i), grid.step(i), &coeffs, &mut unused, &field, SubstageMode::Exact, literal)?;
            x = out.state;
            rec.step(grid, i, StepPhase::Exact, out.nfe, out.max_stage_abs, &x)?;
        }
    } else {
        // eps at grid index i, for the stencils of later steps
        let mut stored: Vec<Option<Vec<f64>>> = vec![None; m + 1];
        let mut eps_half = Vec::new();
        for i in (1..=m).rev() {
            let t = grid.time(i);
            let e_i = eval_eps(model, &x, t);
            let mut nfe = 1;
            let cache = if i == m {
                let f_m = rhs(model, &x, &e_i, t);
                let t_half = t - 0.5 * h;
                let x_half: Vec<f64> = x.iter().zip(&f_m).map(|(a, f)| a - 0.5 * h * f).collect();
                eps_half = eval_eps(model, &x_half, t_half);
                let f_half = rhs(model, &x_half, &eps_half, t_half);
                let x_tilde: Vec<f64> = (0..x.len())
                    .map(|k| x_half[k] - 0.75 * h * f_half[k] + 0.25 * h * f_m[k])
                    .collect();
                let e_tilde = eval_eps(model, &x_tilde, grid.time(i - 1));
                nfe += 2;
                let (d1, d2) = uniform3(&[&e_i, &eps_half, &e_tilde], -0.5 * h);
                DerivativeCache::from_parts(t, e_i.clone(), d1, d2, None)?
            } else if i + 1 == m || i + 2 == m {
                let (mid, far, dt) = if i + 1 == m {
                    (eps_half.as_slice(), stored[m].as_deref().expect("stored"), 0.5 * h)
                } else {
                    (
                        stored[m - 1].as_deref().expect("stored"),
                        stored[m].as_deref().expect("stored"),
                        h,
                    )
                };
                let (d1, d2) = uniform3(&[&e_i, mid, far], dt);
                DerivativeCache::from_parts(t, e_i.clone(), d1, d2, None)?
            } else {
                let prev: Vec<&[f64]> = (i + 1..=i + 3)
                    .map(|k| stored[k].as_deref().expect("stored"))
                    .collect();
                let (d1, d2, d3) = uniform4(&[&e_i, prev[0], prev[1], prev[2]], h);
                let d3 = (cfg.taylor_order == 3).then_some(d3);
                DerivativeCache::from_parts(t, e_i.clone(), d1, d2, d3)?
            };
            stored[i] = Some(e_i);
            if i + 4 <= m {
                stored[i + 4] = None;
            }
            let (next, peak) = stork4_noise_onestep(&x, t, h, &coeffs, &cache, model, literal)?;
            x = next;
            rec.step(grid, i, StepPhase::Main, nfe, peak, &x)?;
        }
    }

    if cfg.tweedie {
        let clean = tweedie_finish(&x, grid.t_end(), model)?;
        rec.add_nfe(1);
        if clean.iter().any(|v| !v.is_finite()) {
            return Err(StorkError::NonFinite { index: 0 });
        }
        Ok(rec.finish_with(clean, x))
    } else {
        Ok(rec.finish())
    }
}
