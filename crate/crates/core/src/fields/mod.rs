//! Right-hand sides consumed by the solvers.
//!
//! Two kinds of field exist:
//!
//! * [`VelocityField`]: a flow-matching style field `dx/dt = v(x, t)`.
//! * [`SemiLinearNoiseModel`]: a noise-predicting diffusion model whose
//!   probability-flow ODE is `dx/dt = f(t) x + g(t)^2 / (2 sigma_t) eps(x, t)`.
//!
//! All implementations are pure: evaluating the same `(x, t)` twice yields
//! bitwise-identical output, and nothing mutates after construction.

mod problems;

pub use problems::{
    make_gaussian_flow, make_gaussian_vp, make_linear_system, make_rotation, make_stiff_scalar,
    reference_solve, AnalyticProblem, GaussianFlow, GaussianVp, LinearField, Oracle,
    ProblemField, ProblemSpec,
};

use crate::error::{config, Result, StorkError};

/// A velocity field `v(x, t)` on `R^dim`.
pub trait VelocityField: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `v(x, t)` into `out`. Both slices have length [`dim`](Self::dim).
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]);

    /// Evaluates a batch of states stored back to back. Vectorized fields
    /// should override this; the default loops over the batch.
    fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) {
        let d = self.dim();
        for (x, o) in xs.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.eval(x, t, o);
        }
    }

    fn name(&self) -> &str {
        "velocity"
    }
}

/// A noise-predicting model together with its forward-process schedule.
pub trait SemiLinearNoiseModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Drift coefficient `f(t)`.
    fn drift(&self, t: f64) -> f64;

    /// Diffusion coefficient `g(t)`.
    fn diffusion(&self, t: f64) -> f64;

    /// Noise scale `sigma_t`.
    fn sigma(&self, t: f64) -> f64;

    /// Signal scale used by Tweedie finishing.
    fn alpha_bar(&self, t: f64) -> f64;

    /// Noise prediction `eps(x, t)`.
    fn eps(&self, x: &[f64], t: f64, out: &mut [f64]);

    fn name(&self) -> &str {
        "noise"
    }

    /// Coefficient multiplying `eps` in the probability-flow ODE.
    fn eps_coefficient(&self, t: f64) -> f64 {
        let g = self.diffusion(t);
        g * g / (2.0 * self.sigma(t))
    }

    /// Assembles `F(eps, t) = f(t) x + g(t)^2 / (2 sigma_t) eps`.
    fn rhs(&self, x: &[f64], eps: &[f64], t: f64, out: &mut [f64]) {
        let f = self.drift(t);
        let k = self.eps_coefficient(t);
        for ((o, &xi), &ei) in out.iter_mut().zip(x).zip(eps) {
            *o = f * xi + k * ei;
        }
    }
}

impl<T: VelocityField + ?Sized> VelocityField for std::sync::Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval(x, t, out)
    }
    fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval_batch(xs, t, out)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

macro_rules! forward_velocity {
    ($($ptr:ty),*) => {$(
        impl<T: VelocityField + ?Sized> VelocityField for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
                (**self).eval(x, t, out)
            }
            fn eval_batch(&self, xs: &[f64], t: f64, out: &mut [f64]) {
                (**self).eval_batch(xs, t, out)
            }
            fn name(&self) -> &str {
                (**self).name()
            }
        }
    )*};
}

forward_velocity!(&T, Box<T>);

macro_rules! forward_noise {
    ($($ptr:ty),*) => {$(
        impl<T: SemiLinearNoiseModel + ?Sized> SemiLinearNoiseModel for $ptr {
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn drift(&self, t: f64) -> f64 {
                (**self).drift(t)
            }
            fn diffusion(&self, t: f64) -> f64 {
                (**self).diffusion(t)
            }
            fn sigma(&self, t: f64) -> f64 {
                (**self).sigma(t)
            }
            fn alpha_bar(&self, t: f64) -> f64 {
                (**self).alpha_bar(t)
            }
            fn eps(&self, x: &[f64], t: f64, out: &mut [f64]) {
                (**self).eps(x, t, out)
            }
            fn name(&self) -> &str {
                (**self).name()
            }
        }
    )*};
}

forward_noise!(std::sync::Arc<T>, &T, Box<T>);

/// A field given by a closure. Handy for tests and quick experiments.
pub struct FnField<F> {
    dim: usize,
    name: String,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, name: impl Into<String>, f: F) -> Self {
        Self {
            dim,
            name: name.into(),
            f,
        }
    }
}

impl<F> VelocityField for FnField<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.f)(x, t, out)
    }
    fn name(&self) -> &str {
        &self.name
    }
}

/// The identically zero field.
#[derive(Debug, Clone, Copy)]
pub struct ZeroField {
    pub dim: usize,
}

impl VelocityField for ZeroField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, _x: &[f64], _t: f64, out: &mut [f64]) {
        out.fill(0.0);
    }
    fn name(&self) -> &str {
        "zero"
    }
}

/// Classifier-free guidance: `scale * cond + (1 - scale) * uncond`.
///
/// The scale is called `guidance_scale` throughout so it cannot be confused
/// with the sub-step count of the stabilized solvers.
#[derive(Debug, Clone)]
pub struct Guided<F> {
    cond: F,
    uncond: F,
    guidance_scale: f64,
}

/// Writes the guidance combination of two field outputs into `out`.
pub fn cfg_combine(guidance_scale: f64, cond: &[f64], uncond: &[f64], out: &mut [f64]) {
    let w = 1.0 - guidance_scale;
    for ((o, &c), &u) in out.iter_mut().zip(cond).zip(uncond) {
        *o = guidance_scale * c + w * u;
    }
}

impl<F> Guided<F> {
    pub fn guidance_scale(&self) -> f64 {
        self.guidance_scale
    }
    pub fn cond(&self) -> &F {
        &self.cond
    }
    pub fn uncond(&self) -> &F {
        &self.uncond
    }
}

fn check_scale(guidance_scale: f64) -> Result<()> {
    if !(guidance_scale.is_finite() && guidance_scale >= 0.0) {
        return config(format!(
            "guidance_scale must be finite and nonnegative, got {guidance_scale}"
        ));
    }
    Ok(())
}

impl<F: VelocityField> Guided<F> {
    pub fn new(cond: F, uncond: F, guidance_scale: f64) -> Result<Self> {
        if cond.dim() != uncond.dim() {
            return Err(StorkError::Dimension {
                expected: cond.dim(),
                got: uncond.dim(),
            });
        }
        check_scale(guidance_scale)?;
        Ok(Self {
            cond,
            uncond,
            guidance_scale,
        })
    }

    /// Guided output at `(x, t)` as a fresh vector.
    pub fn combine(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cond.dim()];
        self.eval(x, t, &mut out);
        out
    }
}

impl<F: VelocityField> VelocityField for Guided<F> {
    fn dim(&self) -> usize {
        self.cond.dim()
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let d = self.cond.dim();
        let mut c = vec![0.0; d];
        let mut u = vec![0.0; d];
        self.cond.eval(x, t, &mut c);
        self.uncond.eval(x, t, &mut u);
        cfg_combine(self.guidance_scale, &c, &u, out);
    }
    fn name(&self) -> &str {
        "guided"
    }
}

/// Guidance over noise predictions. The schedule (`f`, `g`, `sigma`,
/// `alpha_bar`) is taken from the conditional model.
#[derive(Debug, Clone)]
pub struct GuidedNoise<M>(Guided<M>);

impl<M: SemiLinearNoiseModel> GuidedNoise<M> {
    pub fn new(cond: M, uncond: M, guidance_scale: f64) -> Result<Self> {
        if cond.dim() != uncond.dim() {
            return Err(StorkError::Dimension {
                expected: cond.dim(),
                got: uncond.dim(),
            });
        }
        check_scale(guidance_scale)?;
        Ok(Self(Guided {
            cond,
            uncond,
            guidance_scale,
        }))
    }
}

impl<M: SemiLinearNoiseModel> SemiLinearNoiseModel for GuidedNoise<M> {
    fn dim(&self) -> usize {
        self.0.cond.dim()
    }
    fn drift(&self, t: f64) -> f64 {
        self.0.cond.drift(t)
    }
    fn diffusion(&self, t: f64) -> f64 {
        self.0.cond.diffusion(t)
    }
    fn sigma(&self, t: f64) -> f64 {
        self.0.cond.sigma(t)
    }
    fn alpha_bar(&self, t: f64) -> f64 {
        self.0.cond.alpha_bar(t)
    }
    fn eps(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let d = self.dim();
        let mut c = vec![0.0; d];
        let mut u = vec![0.0; d];
        self.0.cond.eps(x, t, &mut c);
        self.0.uncond.eps(x, t, &mut u);
        cfg_combine(self.0.guidance_scale, &c, &u, out);
    }
    fn name(&self) -> &str {
        "guided-noise"
    }
}

/// Views a noise model as a plain velocity field by assembling `F` with the
/// true noise prediction. Lets the generic flow solvers run on noise models.
pub struct NoiseAsVelocity<M>(pub M);

impl<M: SemiLinearNoiseModel> VelocityField for NoiseAsVelocity<M> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        let mut eps = vec![0.0; x.len()];
        self.0.eps(x, t, &mut eps);
        self.0.rhs(x, &eps, t, out);
    }
    fn name(&self) -> &str {
        self.0.name()
    }
}

/// Treats `batch` independent states of dimension `inner.dim()` as one
/// state vector, forwarding each evaluation as a single batched call.
pub struct Batched<F> {
    inner: F,
    batch: usize,
}

impl<F: VelocityField> Batched<F> {
    pub fn new(inner: F, batch: usize) -> Result<Self> {
        if batch == 0 {
            return config("batch size must be positive");
        }
        Ok(Self { inner, batch })
    }
    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl<F: VelocityField> VelocityField for Batched<F> {
    fn dim(&self) -> usize {
        self.inner.dim() * self.batch
    }
    fn eval(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.inner.eval_batch(x, t, out)
    }
    fn name(&self) -> &str {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(dim: usize, value: f64) -> FnField<impl Fn(&[f64], f64, &mut [f64]) + Send + Sync> {
        FnField::new(dim, "const", move |_x: &[f64], _t: f64, out: &mut [f64]| out.fill(value))
    }

    #[test]
    fn guidance_endpoints_are_exact() {
        let cond = FnField::new(3, "c", |x: &[f64], t: f64, o: &mut [f64]| {
            for (oi, xi) in o.iter_mut().zip(x) {
                *oi = xi.sin() * t + 0.1;
            }
        });
        let uncond = FnField::new(3, "u", |x: &[f64], t: f64, o: &mut [f64]| {
            for (oi, xi) in o.iter_mut().zip(x) {
                *oi = xi.cos() - t / 3.0;
            }
        });
        let x = [0.3, -1.7, 2.9];
        let t = 0.37;
        let mut want_c = [0.0; 3];
        let mut want_u = [0.0; 3];
        cond.eval(&x, t, &mut want_c);
        uncond.eval(&x, t, &mut want_u);

        let g1 = Guided::new(&cond as &dyn VelocityField, &uncond, 1.0).unwrap();
        assert_eq!(g1.combine(&x, t), want_c);
        let g0 = Guided::new(&cond as &dyn VelocityField, &uncond, 0.0).unwrap();
        assert_eq!(g0.combine(&x, t), want_u);
    }

    #[test]
    fn default_guidance_scale_example() {
        let g = Guided::new(constant(2, 1.0), constant(2, 0.0), 4.5).unwrap();
        assert_eq!(g.combine(&[0.0, 0.0], 0.5), vec![4.5, 4.5]);
    }

    #[test]
    fn guidance_rejects_mismatched_dims() {
        let err = Guided::new(
            Box::new(ZeroField { dim: 2 }) as Box<dyn VelocityField>,
            Box::new(ZeroField { dim: 3 }),
            1.0,
        )
        .err()
        .unwrap();
        assert_eq!(err, StorkError::Dimension { expected: 2, got: 3 });
        assert!(Guided::new(ZeroField { dim: 2 }, ZeroField { dim: 2 }, -1.0).is_err());
    }

    #[test]
    fn batched_field_forwards_whole_batch() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        struct Counting(AtomicUsize);
        impl VelocityField for Counting {
            fn dim(&self) -> usize {
                2
            }
            fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
                out.copy_from_slice(x);
            }
            fn eval_batch(&self, xs: &[f64], _t: f64, out: &mut [f64]) {
                self.0.fetch_add(1, Ordering::SeqCst);
                out.copy_from_slice(xs);
            }
        }
        let b = Batched::new(Counting(AtomicUsize::new(0)), 5).unwrap();
        assert_eq!(b.dim(), 10);
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let mut out = vec![0.0; 10];
        b.eval(&x, 0.0, &mut out);
        assert_eq!(out, x);
        assert_eq!(b.inner.0.load(Ordering::SeqCst), 1);
    }
}
