use num_complex::Complex64;
use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::Serialize;

use super::gegenbauer::gegenbauer_c32;
use crate::error::{config, Result};

type Q = Ratio<i128>;

/// Second-order Runge-Kutta-Gegenbauer coefficients for `s` stages.
///
/// Arrays are indexed by stage number `j` and have length `s + 1`. Entries
/// outside a coefficient's defined range are zero: `mu` and `nu` and
/// `gamma_tilde` start at `j = 2`, `mu_tilde` at `j = 1`.
///
/// The printed `b_j` formula vanishes at `j = 1`, so the low indices follow
/// the usual convention `b_0 = b_1 = b_2`, `a_0 = 1 - b_0`, `a_1 = 1 - 3 b_1`
/// and `mu_tilde_1 = 3 w1 b_1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rkg2Coefficients {
    substeps: usize,
    w1: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    mu: Vec<f64>,
    mu_tilde: Vec<f64>,
    nu: Vec<f64>,
    gamma_tilde: Vec<f64>,
    c: Vec<f64>,
}

/// The same coefficients in exact rational arithmetic.
#[derive(Debug, Clone, PartialEq)]
pub struct Rkg2Exact {
    pub w1: Q,
    pub a: Vec<Q>,
    pub b: Vec<Q>,
    pub mu: Vec<Q>,
    pub mu_tilde: Vec<Q>,
    pub nu: Vec<Q>,
    pub gamma_tilde: Vec<Q>,
}

fn q(n: i128, d: i128) -> Q {
    Q::new(n, d)
}

fn b_formula(j: i128) -> Q {
    q(4 * (j - 1) * (j + 4), 3 * j * (j + 1) * (j + 2) * (j + 3))
}

/// Exact rational RKG2 coefficients.
pub fn rkg2_exact(substeps: usize) -> Result<Rkg2Exact> {
    if substeps < 2 {
        return config(format!("RKG2 needs at least 2 sub-steps, got {substeps}"));
    }
    if substeps > 10_000 {
        return config(format!("RKG2 sub-step count {substeps} is unreasonably large"));
    }
    let s = substeps as i128;
    let n = substeps + 1;
    let zero = Q::from_integer(0);
    let one = Q::from_integer(1);
    let w1 = q(6, (s + 4) * (s - 1));

    let mut b = vec![zero; n];
    for (j, bj) in b.iter_mut().enumerate().skip(2) {
        *bj = b_formula(j as i128);
    }
    b[0] = b[2];
    b[1] = b[2];

    let mut a = vec![zero; n];
    a[0] = one - b[0];
    a[1] = one - b[1] * 3;
    for j in 2..n {
        let ji = j as i128;
        a[j] = one - q((ji + 1) * (ji + 2), 2) * b[j];
    }

    let mut mu = vec![zero; n];
    let mut mu_tilde = vec![zero; n];
    let mut nu = vec![zero; n];
    let mut gamma_tilde = vec![zero; n];
    mu_tilde[1] = w1 * b[1] * 3;
    for j in 2..n {
        let ji = j as i128;
        mu[j] = q(2 * ji + 1, ji) * b[j] / b[j - 1];
        mu_tilde[j] = mu[j] * w1;
        nu[j] = -q(ji + 1, ji) * b[j] / b[j - 2];
        gamma_tilde[j] = -mu_tilde[j] * a[j - 1];
    }
    Ok(Rkg2Exact {
        w1,
        a,
        b,
        mu,
        mu_tilde,
        nu,
        gamma_tilde,
    })
}

fn to_f64(v: &[Q]) -> Vec<f64> {
    v.iter()
        .map(|r| r.to_f64().expect("rational fits in f64"))
        .collect()
}

/// RKG2 coefficients for `substeps >= 2` stages.
pub fn rkg2_coeffs(substeps: usize) -> Result<Rkg2Coefficients> {
    let e = rkg2_exact(substeps)?;
    let mut out = Rkg2Coefficients {
        substeps,
        w1: e.w1.to_f64().expect("w1 fits in f64"),
        a: to_f64(&e.a),
        b: to_f64(&e.b),
        mu: to_f64(&e.mu),
        mu_tilde: to_f64(&e.mu_tilde),
        nu: to_f64(&e.nu),
        gamma_tilde: to_f64(&e.gamma_tilde),
        c: Vec::new(),
    };
    out.c = out.unit_rate_stages();
    Ok(out)
}

impl Rkg2Coefficients {
    pub fn substeps(&self) -> usize {
        self.substeps
    }
    pub fn w1(&self) -> f64 {
        self.w1
    }
    pub fn a(&self) -> &[f64] {
        &self.a
    }
    pub fn b(&self) -> &[f64] {
        &self.b
    }
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn mu_tilde(&self) -> &[f64] {
        &self.mu_tilde
    }
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }
    pub fn gamma_tilde(&self) -> &[f64] {
        &self.gamma_tilde
    }

    /// Stage abscissae `c_0..c_s`; stage `j` sits at time `t0 - h c_j`.
    pub fn abscissae(&self) -> &[f64] {
        &self.c
    }

    /// Real-axis stability extent `2 / w1 = (s + 4)(s - 1) / 3`.
    pub fn nominal_extent(&self) -> f64 {
        2.0 / self.w1
    }

    // Runs the recurrence on dx/dt = 1 with unit step; stage j then sits at -c_j.
    fn unit_rate_stages(&self) -> Vec<f64> {
        let s = self.substeps;
        let mut c = vec![0.0; s + 1];
        c[1] = self.mu_tilde[1];
        for j in 2..=s {
            c[j] = self.mu[j] * c[j - 1]
                + self.nu[j] * c[j - 2]
                + self.mu_tilde[j]
                + self.gamma_tilde[j];
        }
        c
    }

    /// Scalar amplification `Y_s / Y_0` on `dx/dt = lambda x` with
    /// `z = lambda * (step length)`, computed by running the stage recurrence.
    pub fn amplification(&self, z: Complex64) -> Complex64 {
        let s = self.substeps;
        let one = Complex64::new(1.0, 0.0);
        let mut prev2 = one;
        let mut prev = one + z * self.mu_tilde[1];
        for j in 2..=s {
            let (mu, nu) = (self.mu[j], self.nu[j]);
            let next = prev * mu + prev2 * nu + one * (1.0 - mu - nu)
                + z * prev * self.mu_tilde[j]
                + z * self.gamma_tilde[j];
            prev2 = prev;
            prev = next;
        }
        prev
    }
}

/// Closed-form stability polynomial `a_s + b_s C_s^(3/2)(1 + w1 z)`.
pub fn rkg2_stability_poly(coeffs: &Rkg2Coefficients, z: Complex64) -> Complex64 {
    let s = coeffs.substeps;
    let x = Complex64::new(1.0, 0.0) + z * coeffs.w1;
    gegenbauer_c32(s, x) * coeffs.b[s] + coeffs.a[s]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printed_examples() {
        assert_eq!(rkg2_coeffs(4).unwrap().w1(), 0.25);
        let e = rkg2_exact(3).unwrap();
        assert_eq!(e.b[3], q(7, 135));
        assert_eq!(e.a[3], q(13, 27));
        assert!(rkg2_coeffs(1).is_err());
        assert!(rkg2_coeffs(0).is_err());
    }

    #[test]
    fn a_b_identity_is_exact() {
        for s in 2..60 {
            let e = rkg2_exact(s).unwrap();
            for j in 2..=s {
                let ji = j as i128;
                assert_eq!(e.a[j] + q((ji + 1) * (ji + 2), 2) * e.b[j], Q::from_integer(1));
            }
        }
    }

    #[test]
    fn low_index_convention() {
        let e = rkg2_exact(6).unwrap();
        assert_eq!(e.b[0], e.b[2]);
        assert_eq!(e.b[1], e.b[2]);
        assert_eq!(e.mu[2], q(5, 2));
        assert_eq!(e.nu[2], q(-3, 2));
        assert_eq!(e.mu_tilde[1], e.w1 * e.b[1] * 3);
    }

    #[test]
    fn recurrence_reproduces_closed_form() {
        for s in [2, 3, 4, 7, 12, 30] {
            let c = rkg2_coeffs(s).unwrap();
            let r = 2.0 / c.w1();
            for k in 0..50 {
                let th = k as f64 * 0.37;
                let z = Complex64::from_polar(r * (k as f64 / 50.0), th);
                let a = c.amplification(z);
                let b = rkg2_stability_poly(&c, z);
                assert!((a - b).norm() <= 1e-10 * b.norm().max(1.0), "s={s} z={z}");
            }
        }
    }

    #[test]
    fn abscissae_end_on_one() {
        for s in 2..=100 {
            let c = rkg2_coeffs(s).unwrap();
            let ab = c.abscissae();
            assert_eq!(ab[0], 0.0);
            assert!((ab[s] - 1.0).abs() < 1e-12, "s={s}: {}", ab[s]);
            assert!(ab.iter().all(|&x| (-0.1..=1.1).contains(&x)));
        }
    }

    #[test]
    fn stage_one_abscissa_matches_closed_form() {
        // c_j = b_j w1 C_j'(1) for j >= 1 under the chosen convention
        let c = rkg2_coeffs(10).unwrap();
        let d = super::super::gegenbauer::gegenbauer_c32_derivatives(10, 1.0);
        for j in 1..=10 {
            let want = c.b()[j] * c.w1() * d[j];
            assert!((c.abscissae()[j] - want).abs() < 1e-13, "j={j}");
        }
    }

    #[test]
    fn deterministic() {
        assert_eq!(rkg2_coeffs(17).unwrap(), rkg2_coeffs(17).unwrap());
    }
}
