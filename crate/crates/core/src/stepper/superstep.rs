use crate::coefficients::{Rkg2Coefficients, Rock4Coefficients};
use crate::error::Result;
use crate::fields::VelocityField;

use super::config::SubstageMode;
use super::derivatives::DerivativeCache;

/// Outcome of one super-step.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperStep {
    pub state: Vec<f64>,
    /// Real field evaluations spent.
    pub nfe: usize,
    /// Largest stage component magnitude, `max_j |Y_j|_inf`.
    pub max_stage_abs: f64,
}

fn max_abs(y: &[f64]) -> f64 {
    y.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn offset(y0: &[f64], d: &[f64], out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(y0).zip(d) {
        *o = a + b;
    }
}

/// Runs the RKG2 stage recurrence from `y0` with step `h`.
///
/// `v0` is the field at `y0`. `stage(j, y, out)` must write the field value
/// at evaluation point `j` (time `t0 - h c_j`, `1 <= j < s`) for stage state
/// `y`. Stages are carried as differences `Y_j - Y_0`, so a vanishing field
/// returns `y0` exactly. Returns `(Y_s, max_j |Y_j|_inf)`.
pub fn rkg2_stages<S>(
    y0: &[f64],
    v0: &[f64],
    h: f64,
    coeffs: &Rkg2Coefficients,
    mut stage: S,
) -> Result<(Vec<f64>, f64)>
where
    S: FnMut(usize, &[f64], &mut [f64]) -> Result<()>,
{
    let s = coeffs.substeps();
    let (mu, nu, mt, gt) = (coeffs.mu(), coeffs.nu(), coeffs.mu_tilde(), coeffs.gamma_tilde());
    let n = y0.len();
    let mut d2 = vec![0.0; n];
    let mut d1: Vec<f64> = v0.iter().map(|v| -h * mt[1] * v).collect();
    let mut y = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut peak = max_abs(y0);
    for j in 2..=s {
        offset(y0, &d1, &mut y);
        peak = peak.max(max_abs(&y));
        stage(j - 1, &y, &mut v)?;
        for i in 0..n {
            d2[i] = mu[j] * d1[i] + nu[j] * d2[i] - h * mt[j] * v[i] - h * gt[j] * v0[i];
        }
        std::mem::swap(&mut d1, &mut d2);
    }
    offset(y0, &d1, &mut y);
    peak = peak.max(max_abs(&y));
    Ok((y, peak))
}

/// Runs the ROCK4 recurrence and finishing stages from `y0` with step `h`.
///
/// Same conventions as [`rkg2_stages`]; evaluation points run over
/// `1 <= j < s`, the last four being the finishing stages. With `literal`,
/// the chained finishing form `Y_{m+k} = Y_m - h mu'_k v(Y_{m+k-1})` replaces
/// the full finishing block and its abscissae must be used by `stage`.
pub fn rock4_stages<S>(
    y0: &[f64],
    v0: &[f64],
    h: f64,
    coeffs: &Rock4Coefficients,
    literal: bool,
    mut stage: S,
) -> Result<(Vec<f64>, f64)>
where
    S: FnMut(usize, &[f64], &mut [f64]) -> Result<()>,
{
    let m = coeffs.recurrence_stages();
    let (mu, nu, kappa) = (coeffs.mu(), coeffs.nu(), coeffs.kappa());
    let n = y0.len();
    let mut d2 = vec![0.0; n];
    let mut d1: Vec<f64> = v0.iter().map(|v| -h * mu[1] * v).collect();
    let mut y = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut peak = max_abs(y0);
    for j in 2..=m {
        offset(y0, &d1, &mut y);
        peak = peak.max(max_abs(&y));
        stage(j - 1, &y, &mut v)?;
        for i in 0..n {
            d2[i] = -h * mu[j] * v[i] - nu[j] * d1[i] - kappa[j] * d2[i];
        }
        std::mem::swap(&mut d1, &mut d2);
    }
    let base = d1;
    let mut out = base.clone();
    if literal {
        let mut cur = base.clone();
        for (k, &mk) in coeffs.literal_finishing().iter().enumerate() {
            offset(y0, &cur, &mut y);
            peak = peak.max(max_abs(&y));
            stage(m + k, &y, &mut v)?;
            for i in 0..n {
                cur[i] = base[i] - h * mk * v[i];
            }
        }
        out = cur;
    } else {
        let fin = coeffs.finishing();
        let mut ks: Vec<Vec<f64>> = Vec::with_capacity(4);
        let mut z = vec![0.0; n];
        for k in 0..4 {
            z.copy_from_slice(&base);
            for (l, &a) in fin.row(k).iter().enumerate() {
                for i in 0..n {
                    z[i] += a * ks[l][i];
                }
            }
            offset(y0, &z, &mut y);
            peak = peak.max(max_abs(&y));
            stage(m + k, &y, &mut v)?;
            ks.push(v.iter().map(|vi| -h * vi).collect());
        }
        for (kk, &b) in ks.iter().zip(&fin.b) {
            for i in 0..n {
                out[i] += b * kk[i];
            }
        }
    }
    offset(y0, &out, &mut y);
    peak = peak.max(max_abs(&y));
    Ok((y, peak))
}

fn check_dims<F: VelocityField + ?Sized>(y0: &[f64], field: &F) -> Result<()> {
    if y0.len() != field.dim() {
        return Err(crate::error::StorkError::Dimension {
            expected: field.dim(),
            got: y0.len(),
        });
    }
    Ok(())
}

// Evaluates v(y0, t0) and, in taylor mode, re-anchors the cache there.
fn anchor<F: VelocityField + ?Sized>(
    y0: &[f64],
    t0: f64,
    cache: &mut DerivativeCache,
    field: &F,
    mode: SubstageMode,
) -> Result<Vec<f64>> {
    check_dims(y0, field)?;
    let mut v0 = vec![0.0; y0.len()];
    field.eval(y0, t0, &mut v0);
    if mode == SubstageMode::Taylor {
        cache.push(t0, v0.clone())?;
        cache.refresh()?;
    }
    Ok(v0)
}

fn stage_fn<'a, F: VelocityField + ?Sized>(
    t0: f64,
    h: f64,
    c: &'a [f64],
    cache: &'a DerivativeCache,
    field: &'a F,
    mode: SubstageMode,
    nfe: &'a mut usize,
) -> impl FnMut(usize, &[f64], &mut [f64]) -> Result<()> + 'a {
    move |j, y, out| match mode {
        SubstageMode::Exact => {
            field.eval(y, t0 - h * c[j], out);
            *nfe += 1;
            Ok(())
        }
        SubstageMode::Taylor => cache.taylor_into(cache.order(), -h * c[j], out),
    }
}

/// One STORK-2 super-step from `(y0, t0)` to `t0 - h`.
///
/// Spends one real evaluation at `(y0, t0)`. In taylor mode that evaluation
/// is pushed into `cache`, which is then re-anchored; every other stage uses
/// the Taylor expansion at its abscissa, so the cache must already hold the
/// `n` previous evaluations. In exact mode every stage is a real evaluation
/// and the cache is left untouched.
pub fn stork2_superstep<F: VelocityField + ?Sized>(
    y0: &[f64],
    t0: f64,
    h: f64,
    coeffs: &Rkg2Coefficients,
    cache: &mut DerivativeCache,
    field: &F,
    mode: SubstageMode,
) -> Result<SuperStep> {
    let v0 = anchor(y0, t0, cache, field, mode)?;
    let mut nfe = 1;
    let (state, max_stage_abs) = {
        let stage = stage_fn(t0, h, coeffs.abscissae(), cache, field, mode, &mut nfe);
        rkg2_stages(y0, &v0, h, coeffs, stage)?
    };
    Ok(SuperStep {
        state,
        nfe,
        max_stage_abs,
    })
}

/// One STORK-4 super-step from `(y0, t0)` to `t0 - h`, with the same cache
/// contract as [`stork2_superstep`].
pub fn stork4_superstep<F: VelocityField + ?Sized>(
    y0: &[f64],
    t0: f64,
    h: f64,
    coeffs: &Rock4Coefficients,
    cache: &mut DerivativeCache,
    field: &F,
    mode: SubstageMode,
    literal: bool,
) -> Result<SuperStep> {
    let v0 = anchor(y0, t0, cache, field, mode)?;
    let c = if literal {
        coeffs.literal_abscissae()
    } else {
        coeffs.abscissae()
    };
    let mut nfe = 1;
    let (state, max_stage_abs) = {
        let stage = stage_fn(t0, h, c, cache, field, mode, &mut nfe);
        rock4_stages(y0, &v0, h, coeffs, literal, stage)?
    };
    Ok(SuperStep {
        state,
        nfe,
        max_stage_abs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{rkg2_coeffs, rkg2_stability_poly, rock4_coeffs};
    use crate::fields::{FnField, ZeroField};
    use num_complex::Complex64;

    fn scalar(lambda: f64) -> impl VelocityField {
        FnField::new(1, "lin", move |x: &[f64], _t: f64, o: &mut [f64]| o[0] = lambda * x[0])
    }

    #[test]
    fn exact_mode_matches_closed_form() {
        let c = rkg2_coeffs(6).unwrap();
        let mut cache = DerivativeCache::new(2).unwrap();
        for z in [-0.5, -3.0, -12.0, -20.0] {
            // x <- x - h v with h = -1 advances dx/dt = z x by one unit
            let out = stork2_superstep(&[1.0], 0.0, -1.0, &c, &mut cache, &scalar(z), SubstageMode::Exact).unwrap();
            let want = rkg2_stability_poly(&c, Complex64::new(z, 0.0)).re;
            assert!((out.state[0] - want).abs() <= 1e-9 * want.abs().max(1e-3), "{z}");
            assert_eq!(out.nfe, 6);
        }
        assert!(cache.is_empty());
    }

    #[test]
    fn rock4_exact_matches_amplification() {
        let c = rock4_coeffs(9).unwrap();
        let mut cache = DerivativeCache::new(3).unwrap();
        for literal in [false, true] {
            for z in [-0.7, -5.0, -15.0] {
                let out = stork4_superstep(&[1.0], 0.0, -1.0, &c, &mut cache, &scalar(z), SubstageMode::Exact, literal)
                    .unwrap();
                let want = c.amplification_with(Complex64::new(z, 0.0), literal).re;
                assert!((out.state[0] - want).abs() <= 1e-10, "{z} {literal}");
                assert_eq!(out.nfe, 9);
            }
        }
    }

    #[test]
    fn zero_field_is_conserved() {
        let y0 = [0.3, -7.25, 1e-9];
        let zero = ZeroField { dim: 3 };
        let mut cache = DerivativeCache::new(2).unwrap();
        for t in [0.3, 0.2] {
            cache.push(t, vec![0.0; 3]).unwrap();
        }
        let a = stork2_superstep(&y0, 0.1, 0.1, &rkg2_coeffs(17).unwrap(), &mut cache, &zero, SubstageMode::Taylor)
            .unwrap();
        assert_eq!(a.state, y0.to_vec());
        assert_eq!(a.nfe, 1);
        let b = stork4_superstep(&y0, 0.0, 0.1, &rock4_coeffs(12).unwrap(), &mut cache, &zero, SubstageMode::Exact, false)
            .unwrap();
        assert_eq!(b.state, y0.to_vec());
    }

    #[test]
    fn taylor_stages_follow_time_dependence() {
        // v = 2t is reproduced exactly by a quadratic expansion, so the
        // taylor super-step agrees with the exact one
        let f = FnField::new(1, "t", |_x: &[f64], t: f64, o: &mut [f64]| o[0] = 2.0 * t);
        let c = rock4_coeffs(7).unwrap();
        let mut cache = DerivativeCache::new(2).unwrap();
        for t in [0.3, 0.2] {
            cache.push(t, vec![2.0 * t]).unwrap();
        }
        let mut unused = DerivativeCache::new(2).unwrap();
        let tay = stork4_superstep(&[0.0], 0.1, 0.1, &c, &mut cache, &f, SubstageMode::Taylor, false).unwrap();
        let ex = stork4_superstep(&[0.0], 0.1, 0.1, &c, &mut unused, &f, SubstageMode::Exact, false).unwrap();
        assert!((tay.state[0] - ex.state[0]).abs() < 1e-14);
        // x(0) = x(0.1) - (0.1^2 - 0)
        assert!((ex.state[0] + 0.01).abs() < 1e-14);
        assert_eq!(tay.nfe, 1);
    }
}
