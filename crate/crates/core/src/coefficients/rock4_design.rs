//! Construction of fourth-order orthogonal Runge-Kutta-Chebyshev methods.
//!
//! The stability polynomial is `R(z) = w4(z) P_m(z)` with `m = s - 4`:
//!
//! * `w4(z) = prod_k (1 - z/z_k)(1 - z/conj(z_k))` over two complex root
//!   pairs;
//! * `P_m(1 + z/c)` is orthogonal on `[-1, 1]` for the weight
//!   `w4(c(x - 1))^2 / sqrt(1 - x^2)` and normalized to `P_m(0) = 1`.
//!
//! For a fixed map scale `c` the four root parameters are found by Newton's
//! method so that `R` matches `exp` through `z^4`. The scale is then pushed
//! up by continuation to the largest value with `|R| <= 1` on `[-2c, 0]`,
//! which gives the real stability extent `l_s = 2c`.
//!
//! The three-term recurrence of `P_m` gives the first `m` stages. The last
//! four stages form an explicit Runge-Kutta block whose ten coefficients are
//! fitted (Levenberg-Marquardt) to the eight fourth-order conditions of the
//! composite method, continuing in `m` from the classical RK4 tableau.

use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use rayon::prelude::*;

use crate::error::{Result, StorkError};

use super::rock4::FINISHING_LAST_ABSCISSA;

/// Recurrence coefficients and root parameters of one designed degree.
#[derive(Debug, Clone, PartialEq)]
pub struct Rock4Design {
    pub m: usize,
    /// Map scale `c`; the stability extent is `2c`.
    pub scale: f64,
    /// `(re1, im1, re2, im2)` of the two upper-half-plane roots of `w4`.
    pub roots: [f64; 4],
    /// Stage coefficients indexed `1..=m` (index 0 unused).
    pub mu: Vec<f64>,
    /// Indexed `2..=m`.
    pub nu: Vec<f64>,
    /// Indexed `2..=m`.
    pub kappa: Vec<f64>,
}

/// `[a21, a31, a32, a41, a42, a43, b1, b2, b3, b4]`.
pub type FinishingParams = [f64; 10];

/// The classical fourth-order tableau, the starting point of the finishing
/// continuation.
pub const CLASSICAL_RK4: FinishingParams = [
    0.5,
    0.0,
    0.5,
    0.0,
    0.0,
    1.0,
    1.0 / 6.0,
    1.0 / 3.0,
    1.0 / 3.0,
    1.0 / 6.0,
];

const FACT: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

/// Ascending coefficients of `w4` for the given root parameters.
pub fn w4_poly(roots: &[f64; 4]) -> [f64; 5] {
    let mut p = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut deg = 0;
    for k in 0..2 {
        let (re, im) = (roots[2 * k], roots[2 * k + 1]);
        let m2 = re * re + im * im;
        let quad = [1.0, -2.0 * re / m2, 1.0 / m2];
        let mut next = [0.0; 5];
        for i in 0..=deg {
            for (j, &qj) in quad.iter().enumerate() {
                next[i + j] += p[i] * qj;
            }
        }
        p = next;
        deg += 2;
    }
    p
}

fn poly_eval(p: &[f64], z: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * z + c)
}

/// Monic recurrence `(alpha_j, beta_j)` of the orthogonal family for the
/// weight `w4(c(x-1))^2 / sqrt(1-x^2)`, by the discrete Stieltjes procedure
/// on `m + 12` Gauss-Chebyshev nodes (exact for every inner product used).
pub fn orthogonal_recurrence(m: usize, scale: f64, roots: &[f64; 4]) -> (Vec<f64>, Vec<f64>) {
    let n = m + 12;
    let w4 = w4_poly(roots);
    let nodes: Vec<f64> = (1..=n)
        .map(|k| ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
        .collect();
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let q = poly_eval(&w4, scale * (x - 1.0));
            std::f64::consts::PI / n as f64 * q * q
        })
        .collect();
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; m];
    let mut p_prev = vec![0.0; n];
    let mut p_cur = vec![1.0; n];
    let mut norm_prev = 1.0;
    let mut norm_cur: f64 = weights.iter().sum();
    for j in 0..m {
        let num: f64 = (0..n).map(|k| weights[k] * nodes[k] * p_cur[k] * p_cur[k]).sum();
        alpha[j] = num / norm_cur;
        beta[j] = if j > 0 { norm_cur / norm_prev } else { 0.0 };
        let p_next: Vec<f64> = (0..n)
            .map(|k| (nodes[k] - alpha[j]) * p_cur[k] - beta[j] * p_prev[k])
            .collect();
        p_prev = std::mem::replace(&mut p_cur, p_next);
        norm_prev = norm_cur;
        norm_cur = (0..n).map(|k| weights[k] * p_cur[k] * p_cur[k]).sum();
    }
    (alpha, beta)
}

/// Stage coefficients of the normalized polynomials `P_j(z) = p_j(1 + z/c) / p_j(1)`
/// written as `P_j = mu_j z P_{j-1} - nu_j P_{j-1} - kappa_j P_{j-2}`.
pub fn stage_coefficients(
    m: usize,
    scale: f64,
    alpha: &[f64],
    beta: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut r = vec![0.0; m + 1];
    let mut mu = vec![0.0; m + 1];
    let mut nu = vec![0.0; m + 1];
    let mut kappa = vec![0.0; m + 1];
    if m == 0 {
        return (mu, nu, kappa);
    }
    r[1] = 1.0 - alpha[0];
    mu[1] = 1.0 / (scale * r[1]);
    for j in 2..=m {
        r[j] = (1.0 - alpha[j - 1]) - beta[j - 1] / r[j - 1];
        mu[j] = 1.0 / (scale * r[j]);
        nu[j] = -(1.0 - alpha[j - 1]) / r[j];
        kappa[j] = beta[j - 1] / (r[j] * r[j - 1]);
    }
    (mu, nu, kappa)
}

/// Taylor coefficients through `z^4` of `P_m`.
pub fn first_part_taylor(m: usize, mu: &[f64], nu: &[f64], kappa: &[f64]) -> [f64; 5] {
    let mut prev2 = [1.0, 0.0, 0.0, 0.0, 0.0];
    if m == 0 {
        return prev2;
    }
    let mut prev = [1.0, mu[1], 0.0, 0.0, 0.0];
    for j in 2..=m {
        let mut next = [0.0; 5];
        for k in 0..5 {
            let shifted = if k > 0 { prev[k - 1] } else { 0.0 };
            next[k] = mu[j] * shifted - nu[j] * prev[k] - kappa[j] * prev2[k];
        }
        prev2 = prev;
        prev = next;
    }
    prev
}

fn mul_trunc(a: &[f64; 5], b: &[f64; 5]) -> [f64; 5] {
    let mut out = [0.0; 5];
    for i in 0..5 {
        for j in 0..5 - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn design_parts(m: usize, scale: f64, roots: &[f64; 4]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (alpha, beta) = orthogonal_recurrence(m, scale, roots);
    stage_coefficients(m, scale, &alpha, &beta)
}

/// Deviations of the Taylor coefficients 1..4 of `w4 P_m` from `1/k!`.
pub fn order_residual(m: usize, scale: f64, roots: &[f64; 4]) -> [f64; 4] {
    let (mu, nu, kappa) = design_parts(m, scale, roots);
    let p = first_part_taylor(m, &mu, &nu, &kappa);
    let r = mul_trunc(&p, &w4_poly(roots));
    [
        r[1] - 1.0 / FACT[1],
        r[2] - 1.0 / FACT[2],
        r[3] - 1.0 / FACT[3],
        r[4] - 1.0 / FACT[4],
    ]
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Newton iteration on the root parameters for a fixed scale.
/// Returns the refined roots and the final max residual.
pub fn newton_roots(m: usize, scale: f64, guess: [f64; 4]) -> ([f64; 4], f64) {
    let mut theta = guess;
    let mut res = order_residual(m, scale, &theta);
    for _ in 0..60 {
        let f = max_abs(&res);
        if f < 1e-15 || !f.is_finite() {
            break;
        }
        let mut jac = SMatrix::<f64, 4, 4>::zeros();
        for i in 0..4 {
            let e = 1e-7 * theta[i].abs().max(1.0);
            let mut tp = theta;
            let mut tm = theta;
            tp[i] += e;
            tm[i] -= e;
            let rp = order_residual(m, scale, &tp);
            let rm = order_residual(m, scale, &tm);
            for k in 0..4 {
                jac[(k, i)] = (rp[k] - rm[k]) / (2.0 * e);
            }
        }
        let rhs = -SVector::<f64, 4>::from_column_slice(&res);
        let Ok(step) = jac.svd(true, true).solve(&rhs, 1e-300) else {
            break;
        };
        let mut lam = 1.0;
        let mut accepted = None;
        while lam > 1e-4 {
            let mut t2 = theta;
            for i in 0..4 {
                t2[i] += lam * step[i];
            }
            let r2 = order_residual(m, scale, &t2);
            if max_abs(&r2) < f {
                accepted = Some((t2, r2));
                break;
            }
            lam /= 2.0;
        }
        match accepted {
            Some((t2, r2)) => {
                theta = t2;
                res = r2;
            }
            None => break,
        }
    }
    (theta, max_abs(&res))
}

/// Root guess for a scale: take `P_m` for roots far away (where `w4 ~ 1`),
/// truncate `exp(z) / P_m(z)` at degree 4 and use the roots of that quartic.
pub fn initial_roots(m: usize, scale: f64) -> Result<[f64; 4]> {
    let far = [-1e3, 1e3, -1e3, 2e3];
    let (mu, nu, kappa) = design_parts(m, scale, &far);
    let p = first_part_taylor(m, &mu, &nu, &kappa);
    let mut w = [0.0; 5];
    for k in 0..5 {
        let acc: f64 = (0..k).map(|i| w[i] * p[k - i]).sum();
        w[k] = (1.0 / FACT[k] - acc) / p[0];
    }
    // companion matrix of the monic quartic
    let mut comp = DMatrix::<f64>::zeros(4, 4);
    for i in 0..4 {
        comp[(0, i)] = -w[3 - i] / w[4];
    }
    for i in 1..4 {
        comp[(i, i - 1)] = 1.0;
    }
    let mut upper: Vec<_> = comp
        .complex_eigenvalues()
        .iter()
        .copied()
        .filter(|z| z.im > 1e-12)
        .collect();
    if upper.len() != 2 {
        return Err(StorkError::Table(format!(
            "degree {}: initial quartic does not have two complex root pairs",
            m + 4
        )));
    }
    upper.sort_by(|a, b| a.re.total_cmp(&b.re));
    Ok([upper[0].re, upper[0].im, upper[1].re, upper[1].im])
}

/// Evaluates `R(z) = w4(z) P_m(z)` on real `z` by the stage recurrence.
pub fn design_amplification(d: &Rock4Design, z: f64) -> f64 {
    let mut prev2 = 1.0;
    let mut prev = if d.m >= 1 { 1.0 + d.mu[1] * z } else { 1.0 };
    for j in 2..=d.m {
        let next = d.mu[j] * z * prev - d.nu[j] * prev - d.kappa[j] * prev2;
        prev2 = prev;
        prev = next;
    }
    prev * poly_eval(&w4_poly(&d.roots), z)
}

fn build_design(m: usize, scale: f64, roots: [f64; 4]) -> Rock4Design {
    let (mu, nu, kappa) = design_parts(m, scale, &roots);
    Rock4Design {
        m,
        scale,
        roots,
        mu,
        nu,
        kappa,
    }
}

/// Number of real samples used for the feasibility scan of degree `s`.
pub fn scan_samples(s: usize) -> usize {
    (40 * s * s).max(4000)
}

/// Max of `|R|` over `samples` evenly spaced points of `[-2c, 0)`, with
/// every sampled local maximum near 1 refined by golden-section search.
pub fn max_modulus_on_extent(d: &Rock4Design, samples: usize) -> f64 {
    let l = 2.0 * d.scale;
    let dz = l / samples as f64;
    let at = |k: usize| -l + dz * k as f64;
    let vals: Vec<f64> = (0..=samples)
        .into_par_iter()
        .map(|k| design_amplification(d, at(k)).abs())
        .collect();
    let coarse = vals[..samples].iter().copied().fold(0.0, f64::max);
    (1..samples)
        .filter(|&k| vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1] && vals[k] > 1.0 - 1e-3)
        .map(|k| refine_peak(d, at(k - 1), at(k + 1)))
        .fold(coarse, f64::max)
}

fn refine_peak(d: &Rock4Design, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |z: f64| design_amplification(d, z).abs();
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    f1.max(f2)
}

fn feasible(d: &Rock4Design) -> bool {
    max_modulus_on_extent(d, scan_samples(d.m + 4)) <= 1.0 + 1e-10
}

/// Designs degree `s = m + 4` with the largest feasible stability extent.
pub fn design_degree(m: usize) -> Result<Rock4Design> {
    if m == 0 {
        return Err(StorkError::Table("ROCK4 needs at least 5 stages".into()));
    }
    let s2 = ((m + 4) * (m + 4)) as f64;
    let mut scale = 0.05 * s2;
    let (mut roots, res) = newton_roots(m, scale, initial_roots(m, scale)?);
    if res > 1e-13 || !feasible(&build_design(m, scale, roots)) {
        return Err(StorkError::Table(format!(
            "degree {}: no feasible starting point (residual {res:e})",
            m + 4
        )));
    }
    let step = 0.005 * s2;
    loop {
        let (r2, res) = newton_roots(m, scale + step, roots);
        if res < 1e-13 && feasible(&build_design(m, scale + step, r2)) {
            scale += step;
            roots = r2;
        } else {
            break;
        }
    }
    let (mut lo, mut hi) = (scale, scale + step);
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let (r2, res) = newton_roots(m, mid, roots);
        if res < 1e-13 && feasible(&build_design(m, mid, r2)) {
            lo = mid;
            roots = r2;
        } else {
            hi = mid;
        }
    }
    // re-polish at the accepted scale so the stored roots are converged there
    let (roots, res) = newton_roots(m, lo, roots);
    if res > 1e-13 {
        return Err(StorkError::Table(format!(
            "degree {}: root polish failed (residual {res:e})",
            m + 4
        )));
    }
    Ok(build_design(m, lo, roots))
}

/// Butcher matrix of the first `m` stages plus the output row, in the
/// forward convention `Y_j = Y_0 + h sum_k A[j][k] f(Y_k)`.
pub fn first_part_tableau(m: usize, mu: &[f64], nu: &[f64], kappa: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
    if m >= 1 {
        a[(1, 0)] = mu[1];
    }
    for j in 2..=m {
        for k in 0..=m {
            a[(j, k)] = -nu[j] * a[(j - 1, k)] - kappa[j] * a[(j - 2, k)];
        }
        a[(j, j - 1)] += mu[j];
    }
    a
}

/// Full `s`-stage tableau `(A, b)` of first part plus finishing block.
pub fn composite_tableau(
    m: usize,
    first: &DMatrix<f64>,
    x: &FinishingParams,
) -> (DMatrix<f64>, DVector<f64>) {
    let s = m + 4;
    let mut a = DMatrix::<f64>::zeros(s, s);
    for i in 0..m {
        for k in 0..m {
            a[(i, k)] = first[(i, k)];
        }
    }
    let fin: [&[f64]; 4] = [&[], &x[0..1], &x[1..3], &x[3..6]];
    for (i, row) in fin.iter().enumerate() {
        for k in 0..m {
            a[(m + i, k)] = first[(m, k)];
        }
        for (l, &v) in row.iter().enumerate() {
            a[(m + i, m + l)] += v;
        }
    }
    let mut b = DVector::<f64>::zeros(s);
    for k in 0..m {
        b[k] = first[(m, k)];
    }
    for i in 0..4 {
        b[m + i] = x[6 + i];
    }
    (a, b)
}

/// Residuals of the eight fourth-order conditions for a tableau.
pub fn order_conditions(a: &DMatrix<f64>, b: &DVector<f64>) -> [f64; 8] {
    let n = b.len();
    let e = DVector::<f64>::from_element(n, 1.0);
    let c = a * &e;
    let ac = a * &c;
    let c2 = c.component_mul(&c);
    let c3 = c2.component_mul(&c);
    let cac = c.component_mul(&ac);
    let ac2 = a * &c2;
    let aac = a * &ac;
    [
        b.dot(&e) - 1.0,
        b.dot(&c) - 0.5,
        b.dot(&c2) - 1.0 / 3.0,
        b.dot(&ac) - 1.0 / 6.0,
        b.dot(&c3) - 0.25,
        b.dot(&cac) - 0.125,
        b.dot(&ac2) - 1.0 / 12.0,
        b.dot(&aac) - 1.0 / 24.0,
    ]
}

/// Order conditions plus a pin on the abscissa of the last finishing stage.
fn finishing_residual(m: usize, first: &DMatrix<f64>, x: &FinishingParams) -> [f64; 9] {
    let (a, b) = composite_tableau(m, first, x);
    let oc = order_conditions(&a, &b);
    let last = a.row(m + 3).sum();
    let mut r = [0.0; 9];
    r[..8].copy_from_slice(&oc);
    r[8] = last - FINISHING_LAST_ABSCISSA;
    r
}

/// Levenberg-Marquardt fit of the finishing block starting from `x0`.
pub fn fit_finishing(m: usize, first: &DMatrix<f64>, x0: FinishingParams) -> (FinishingParams, f64) {
    let mut x = x0;
    let mut lam = 1e-3;
    let mut f = finishing_residual(m, first, &x);
    let sq = |r: &[f64; 9]| r.iter().map(|v| v * v).sum::<f64>();
    for _ in 0..500 {
        if max_abs(&f) < 1e-15 {
            break;
        }
        let mut jac = SMatrix::<f64, 9, 10>::zeros();
        for i in 0..10 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += 1e-7;
            xm[i] -= 1e-7;
            let rp = finishing_residual(m, first, &xp);
            let rm = finishing_residual(m, first, &xm);
            for k in 0..9 {
                jac[(k, i)] = (rp[k] - rm[k]) / 2e-7;
            }
        }
        let fv = SVector::<f64, 9>::from_column_slice(&f);
        let jtj = jac.transpose() * jac + SMatrix::<f64, 10, 10>::identity() * lam;
        let rhs = -(jac.transpose() * fv);
        let Some(dx) = jtj.lu().solve(&rhs) else {
            lam *= 4.0;
            continue;
        };
        let mut x2 = x;
        for i in 0..10 {
            x2[i] += dx[i];
        }
        let f2 = finishing_residual(m, first, &x2);
        if sq(&f2) < sq(&f) {
            x = x2;
            f = f2;
            lam = (lam / 3.0).max(1e-12);
        } else {
            lam *= 4.0;
            if lam > 1e12 {
                break;
            }
        }
    }
    (x, max_abs(&f))
}

/// A fully designed degree: recurrence plus finishing block.
#[derive(Debug, Clone, PartialEq)]
pub struct Rock4Degree {
    pub design: Rock4Design,
    pub finishing: FinishingParams,
    pub finishing_residual: f64,
}

/// Designs every degree `5..=max_s`, continuing the finishing fit through
/// each one, and returns those listed in `keep`.
pub fn design_table(max_s: usize, keep: &[usize]) -> Result<Vec<Rock4Degree>> {
    if max_s < 5 {
        return Err(StorkError::Table("largest degree must be at least 5".into()));
    }
    let designs: Vec<Result<Rock4Design>> = (1..=max_s - 4).into_par_iter().map(design_degree).collect();
    let mut x = CLASSICAL_RK4;
    let mut out = Vec::new();
    for d in designs {
        let d = d?;
        let first = first_part_tableau(d.m, &d.mu, &d.nu, &d.kappa);
        let (x2, res) = fit_finishing(d.m, &first, x);
        if res > 1e-13 {
            return Err(StorkError::Table(format!(
                "degree {}: finishing fit stalled at residual {res:e}",
                d.m + 4
            )));
        }
        x = x2;
        if keep.contains(&(d.m + 4)) {
            out.push(Rock4Degree {
                design: d,
                finishing: x2,
                finishing_residual: res,
            });
        }
    }
    Ok(out)
}
