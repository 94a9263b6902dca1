use num_complex::Complex64;
use serde::Serialize;

use super::{Rkg2Coefficients, Rock4Coefficients};

/// Anything with a scalar amplification factor and a nominal order.
pub trait StabilityFunction {
    fn label(&self) -> String;
    fn order(&self) -> usize;
    fn amplification(&self, z: Complex64) -> Complex64;
}

impl StabilityFunction for Rkg2Coefficients {
    fn label(&self) -> String {
        format!("rkg2(s={})", self.substeps())
    }
    fn order(&self) -> usize {
        2
    }
    fn amplification(&self, z: Complex64) -> Complex64 {
        Rkg2Coefficients::amplification(self, z)
    }
}

impl StabilityFunction for Rock4Coefficients {
    fn label(&self) -> String {
        format!("rock4(s={})", self.substeps())
    }
    fn order(&self) -> usize {
        4
    }
    fn amplification(&self, z: Complex64) -> Complex64 {
        Rock4Coefficients::amplification(self, z)
    }
}

/// Tolerance on the Taylor coefficients of second-order methods.
pub const SECOND_ORDER_TOLERANCE: f64 = 1e-7;

/// Tolerance on the Taylor coefficients of fourth-order methods.
pub const FOURTH_ORDER_TOLERANCE: f64 = 1e-6;

/// Derivatives of the amplification factor at `z = 0` compared with those
/// of `exp(z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub label: String,
    pub order: usize,
    /// `R^(k)(0) / k!` for `k = 0..=order`, by contour integration.
    pub taylor: Vec<f64>,
    /// `1 / k!`.
    pub targets: Vec<f64>,
    /// `|taylor[k] - targets[k]|`.
    pub deviations: Vec<f64>,
    /// `R(0), R'(0), R''(0)` by Richardson-refined central differences.
    pub finite_difference: [f64; 3],
    pub tolerance: f64,
    pub passed: bool,
}

/// Taylor coefficients `R^(k)(0) / k!` for `k = 0..=kmax` by the trapezoidal
/// rule on the circle `|z| = radius` with `points` nodes.
pub fn contour_taylor<F: Fn(Complex64) -> Complex64>(
    f: F,
    kmax: usize,
    radius: f64,
    points: usize,
) -> Vec<f64> {
    let vals: Vec<Complex64> = (0..points)
        .map(|j| f(Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * j as f64 / points as f64)))
        .collect();
    (0..=kmax)
        .map(|k| {
            let sum = vals.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (j, v)| {
                let th = -2.0 * std::f64::consts::PI * (j * k % points) as f64 / points as f64;
                acc + v * Complex64::from_polar(1.0, th)
            });
            sum.re / points as f64 / radius.powi(k as i32)
        })
        .collect()
}

/// `f(0), f'(0), f''(0)` by central differences with step `h`, refined by one
/// Richardson extrapolation against step `h/2`.
pub fn central_differences<F: Fn(f64) -> f64>(f: F, h: f64) -> [f64; 3] {
    let f0 = f(0.0);
    let d = |h: f64| {
        let (p, m) = (f(h), f(-h));
        ((p - m) / (2.0 * h), (p - 2.0 * f0 + m) / (h * h))
    };
    let (d1a, d2a) = d(h);
    let (d1b, d2b) = d(h / 2.0);
    [f0, (4.0 * d1b - d1a) / 3.0, (4.0 * d2b - d2a) / 3.0]
}

/// Step used by the finite-difference route.
pub const FD_STEP: f64 = 1e-4;

/// Checks the consistency conditions `R^(k)(0) = 1` up to the method's order.
/// Out-of-tolerance results are reported, not raised.
pub fn validate_consistency(method: &dyn StabilityFunction) -> ConsistencyReport {
    let order = method.order();
    let taylor = contour_taylor(|z| method.amplification(z), order, 0.5, 64);
    let mut targets = Vec::with_capacity(order + 1);
    let mut fact = 1.0;
    for k in 0..=order {
        if k > 0 {
            fact *= k as f64;
        }
        targets.push(1.0 / fact);
    }
    let deviations: Vec<f64> = taylor.iter().zip(&targets).map(|(a, b)| (a - b).abs()).collect();
    let tolerance = if order >= 4 {
        FOURTH_ORDER_TOLERANCE
    } else {
        SECOND_ORDER_TOLERANCE
    };
    let finite_difference =
        central_differences(|x| method.amplification(Complex64::new(x, 0.0)).re, FD_STEP);
    let passed = deviations.iter().all(|&d| d < tolerance);
    ConsistencyReport {
        label: method.label(),
        order,
        taylor,
        targets,
        deviations,
        finite_difference,
        tolerance,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{rkg2_coeffs, rock4_coeffs};

    #[test]
    fn contour_recovers_polynomial_coefficients() {
        let p = |z: Complex64| z * z * z * 0.25 - z * 2.0 + 3.0;
        let t = contour_taylor(p, 4, 0.5, 64);
        let want = [3.0, -2.0, 0.0, 0.25, 0.0];
        for (a, b) in t.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn rkg2_small_and_moderate_degrees() {
        for s in [2, 10] {
            let r = validate_consistency(&rkg2_coeffs(s).unwrap());
            assert!(r.passed, "{r:?}");
            assert!(r.deviations.iter().all(|&d| d < 1e-7));
        }
    }

    #[test]
    fn finite_differences_agree_with_contour() {
        let r = validate_consistency(&rkg2_coeffs(10).unwrap());
        assert!((r.finite_difference[0] - r.taylor[0]).abs() < 1e-12);
        assert!((r.finite_difference[1] - r.taylor[1]).abs() < 1e-8);
        assert!((r.finite_difference[2] - 2.0 * r.taylor[2]).abs() < 1e-5);
    }

    #[test]
    fn rock4_nine_stages() {
        let r = validate_consistency(&rock4_coeffs(9).unwrap());
        assert!(r.passed, "{r:?}");
        assert_eq!(r.taylor.len(), 5);
    }

    #[test]
    fn detects_an_inconsistent_method() {
        struct Euler;
        impl StabilityFunction for Euler {
            fn label(&self) -> String {
                "euler-as-2nd".into()
            }
            fn order(&self) -> usize {
                2
            }
            fn amplification(&self, z: Complex64) -> Complex64 {
                z + 1.0
            }
        }
        let r = validate_consistency(&Euler);
        assert!(!r.passed);
        assert!((r.deviations[2] - 0.5).abs() < 1e-12);
    }
}
