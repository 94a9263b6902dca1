use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};
use crate::fields::VelocityField;
use crate::stepper::{
    baseline_step, stork2_superstep, stork4_superstep, DerivativeCache, Method, SolverConfig,
    SubstageMode,
};

/// `|R| <= 1 + INSIDE_TOLERANCE` counts as stable.
pub const INSIDE_TOLERANCE: f64 = 1e-8;

/// Real-axis samples per candidate interval in [`real_stability_extent`].
pub const EXTENT_SAMPLES: usize = 200;

/// Absolute accuracy of [`real_stability_extent`].
pub const EXTENT_ACCURACY: f64 = 1e-3;

// dx/dt = z x for complex z, as a real 2x2 system
struct ComplexRate(Complex64);

impl VelocityField for ComplexRate {
    fn dim(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], _t: f64, out: &mut [f64]) {
        let (a, b) = (self.0.re, self.0.im);
        out[0] = a * x[0] - b * x[1];
        out[1] = b * x[0] + a * x[1];
    }
}

/// Scalar amplification of one step of a method, obtained by running a real
/// step on `dx/dt = z x` over unit time.
///
/// Stabilized methods use exact substages, so this is the stability
/// polynomial of the underlying RKG2 or ROCK4 scheme. AB2 has no one-step
/// factor; its dominant characteristic root is returned instead.
#[derive(Debug, Clone)]
pub struct Amplifier {
    method: Method,
    cfg: SolverConfig,
    coeffs: Option<Coeffs>,
}

#[derive(Debug, Clone)]
enum Coeffs {
    Rkg2(crate::coefficients::Rkg2Coefficients),
    Rock4(crate::coefficients::Rock4Coefficients),
}

impl Amplifier {
    /// Resolves coefficients once. ROCK4 degrees must be tabulated exactly.
    pub fn new(method: Method, substeps: usize) -> Result<Self> {
        let cfg = SolverConfig {
            method,
            substeps,
            strict_degree: true,
            ..SolverConfig::default()
        };
        let coeffs = match method {
            Method::Stork2 => Some(Coeffs::Rkg2(crate::coefficients::rkg2_coeffs(substeps)?)),
            Method::Stork4 | Method::Stork4Noise => {
                Some(Coeffs::Rock4(crate::coefficients::rock4_coeffs(substeps)?))
            }
            _ => None,
        };
        Ok(Self { method, cfg, coeffs })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    /// Stage count, for stabilized methods.
    pub fn substeps(&self) -> Option<usize> {
        self.coeffs.as_ref().map(|_| self.cfg.substeps)
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        if self.method == Method::Ab2 {
            // zeta^2 - (1 + 3z/2) zeta + z/2 = 0
            let b = -(1.0 + 1.5 * z);
            let c = 0.5 * z;
            let disc = (b * b - 4.0 * c).sqrt();
            let r1 = (-b + disc) * 0.5;
            let r2 = (-b - disc) * 0.5;
            return if r1.norm() >= r2.norm() { r1 } else { r2 };
        }
        let field = ComplexRate(z);
        let x0 = [1.0, 0.0];
        let mut cache = DerivativeCache::new(2).expect("order 2 is valid");
        let y = match &self.coeffs {
            Some(Coeffs::Rkg2(c)) => {
                stork2_superstep(&x0, 0.0, -1.0, c, &mut cache, &field, SubstageMode::Exact)
                    .map(|s| s.state)
            }
            Some(Coeffs::Rock4(c)) => {
                stork4_superstep(&x0, 0.0, -1.0, c, &mut cache, &field, SubstageMode::Exact, false)
                    .map(|s| s.state)
            }
            None => baseline_step(self.method, &x0, 0.0, -1.0, &field, None).map(|o| o.state),
        }
        .expect("dimensions are fixed");
        Complex64::new(y[0], y[1])
    }
}

/// Amplification factor `R(z)` of `method` with `substeps` stages.
pub fn amplification_factor(method: Method, substeps: usize, z: Complex64) -> Result<Complex64> {
    Ok(Amplifier::new(method, substeps)?.eval(z))
}

/// Rectangle of the complex plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanBounds {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl ScanBounds {
    /// Default window for large stage counts.
    pub const WIDE: ScanBounds = ScanBounds {
        re_min: -80.0,
        re_max: 5.0,
        im_min: -20.0,
        im_max: 20.0,
    };

    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        let b = Self {
            re_min,
            re_max,
            im_min,
            im_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.re_min, self.re_max, self.im_min, self.im_max];
        if all.iter().any(|v| !v.is_finite()) || self.re_min >= self.re_max || self.im_min >= self.im_max {
            return config(format!("invalid scan bounds {self:?}"));
        }
        Ok(())
    }
}

/// Default scan resolution per axis.
pub const DEFAULT_SCAN_RESOLUTION: usize = 600;

/// `|R(z)|` on an `nx` by `ny` lattice covering `bounds`, edges included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityScan {
    pub method: Method,
    pub substeps: Option<usize>,
    pub bounds: ScanBounds,
    pub nx: usize,
    pub ny: usize,
    /// Row-major by imaginary part: entry `iy * nx + ix`.
    pub magnitudes: Vec<f64>,
    pub inside_count: usize,
}

impl StabilityScan {
    pub fn re(&self, ix: usize) -> f64 {
        let b = &self.bounds;
        b.re_min + (b.re_max - b.re_min) * ix as f64 / (self.nx - 1) as f64
    }

    pub fn im(&self, iy: usize) -> f64 {
        let b = &self.bounds;
        b.im_min + (b.im_max - b.im_min) * iy as f64 / (self.ny - 1) as f64
    }

    pub fn magnitude(&self, ix: usize, iy: usize) -> f64 {
        self.magnitudes[iy * self.nx + ix]
    }

    pub fn inside_fraction(&self) -> f64 {
        self.inside_count as f64 / self.magnitudes.len() as f64
    }

    /// Area estimate of the stable region: stable nodes times cell area.
    pub fn inside_area(&self) -> f64 {
        let b = &self.bounds;
        let dx = (b.re_max - b.re_min) / (self.nx - 1) as f64;
        let dy = (b.im_max - b.im_min) / (self.ny - 1) as f64;
        self.inside_count as f64 * dx * dy
    }
}

/// Scans `|R(z)|` over a lattice. Rows are computed in parallel and
/// assembled in order, so results do not depend on scheduling.
pub fn stability_region_scan(
    method: Method,
    substeps: usize,
    bounds: ScanBounds,
    nx: usize,
    ny: usize,
) -> Result<StabilityScan> {
    bounds.validate()?;
    if nx < 2 || ny < 2 {
        return config(format!("scan resolution must be at least 2 per axis, got {nx}x{ny}"));
    }
    let amp = Amplifier::new(method, substeps)?;
    let mut scan = StabilityScan {
        method,
        substeps: amp.substeps(),
        bounds,
        nx,
        ny,
        magnitudes: Vec::new(),
        inside_count: 0,
    };
    let rows: Vec<Vec<f64>> = (0..ny)
        .into_par_iter()
        .map(|iy| {
            let im = scan.im(iy);
            (0..nx).map(|ix| amp.eval(Complex64::new(scan.re(ix), im)).norm()).collect()
        })
        .collect();
    scan.magnitudes = rows.concat();
    scan.inside_count = scan
        .magnitudes
        .iter()
        .filter(|&&m| m <= 1.0 + INSIDE_TOLERANCE)
        .count();
    Ok(scan)
}

fn stable_on(amp: &Amplifier, l: f64) -> bool {
    (1..=EXTENT_SAMPLES).all(|k| {
        let z = -l * k as f64 / EXTENT_SAMPLES as f64;
        amp.eval(Complex64::new(z, 0.0)).norm() <= 1.0 + INSIDE_TOLERANCE
    })
}

/// Largest `l` such that `|R| <= 1 + 1e-8` at every sampled point of
/// `[-l, 0)`, by doubling and then bisection to `1e-3`.
pub fn real_stability_extent(method: Method, substeps: usize) -> Result<f64> {
    let amp = Amplifier::new(method, substeps)?;
    let (mut lo, mut hi) = (0.0, 0.5);
    while stable_on(&amp, hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e9 {
            return config(format!("{method} appears stable on the whole negative axis"));
        }
    }
    while hi - lo > EXTENT_ACCURACY {
        let mid = 0.5 * (lo + hi);
        if stable_on(&amp, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
