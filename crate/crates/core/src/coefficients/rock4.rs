use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rock4_design::{composite_tableau, first_part_tableau, order_conditions, w4_poly};
use crate::error::{config, Result, StorkError};

const TABLE_JSON: &str = include_str!("../../data/rock4_table.json");

/// Identifier stored in the table's `format` field.
pub const TABLE_FORMAT: &str = "stork-rock4";

/// Table layout version understood by this build.
pub const TABLE_VERSION: u32 = 1;

/// On-disk layout of the coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTable {
    pub format: String,
    pub version: u32,
    pub degrees: Vec<RawDegree>,
}

/// One degree as stored on disk. Stage arrays start at their first defined
/// index: `mu` at `j = 1`, `nu` and `kappa` at `j = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDegree {
    pub s: usize,
    pub scale: f64,
    pub stability_extent: f64,
    pub w4_roots: [f64; 4],
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub finishing_a: [f64; 6],
    pub finishing_b: [f64; 4],
}

/// The last four stages: an explicit block
/// `Z_1 = Y_m`, `Z_k = Y_m - h sum_{l<k} a_kl v(Z_l)`,
/// `Y_s = Y_m - h sum_k b_k v(Z_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FinishingBlock {
    /// `[a21, a31, a32, a41, a42, a43]`.
    pub a: [f64; 6],
    pub b: [f64; 4],
}

impl FinishingBlock {
    /// Row `k` (0-based, `k < 4`) of the strictly lower triangular matrix.
    pub fn row(&self, k: usize) -> &[f64] {
        match k {
            0 => &[],
            1 => &self.a[0..1],
            2 => &self.a[1..3],
            _ => &self.a[3..6],
        }
    }
}

/// Fourth-order orthogonal Runge-Kutta-Chebyshev coefficients for `s` stages.
///
/// Arrays are indexed by stage number and have length `m + 1` with
/// `m = s - 4`; `mu` is defined from `j = 1`, `nu` and `kappa` from `j = 2`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rock4Coefficients {
    substeps: usize,
    mu: Vec<f64>,
    nu: Vec<f64>,
    kappa: Vec<f64>,
    finishing: FinishingBlock,
    literal_finishing: [f64; 4],
    w4_roots: [f64; 4],
    w4: [f64; 5],
    stability_extent: f64,
    c: Vec<f64>,
    c_literal: Vec<f64>,
}

impl Rock4Coefficients {
    fn from_raw(raw: &RawDegree) -> Result<Self> {
        let s = raw.s;
        if s < 5 {
            return Err(StorkError::Table(format!("degree {s} below the minimum of 5")));
        }
        let m = s - 4;
        if raw.mu.len() != m || raw.nu.len() != m - 1 || raw.kappa.len() != m - 1 {
            return Err(StorkError::Table(format!(
                "degree {s}: stage arrays have lengths {}/{}/{}, expected {m}/{}/{}",
                raw.mu.len(),
                raw.nu.len(),
                raw.kappa.len(),
                m - 1,
                m - 1
            )));
        }
        let all_finite = raw
            .mu
            .iter()
            .chain(&raw.nu)
            .chain(&raw.kappa)
            .chain(&raw.finishing_a)
            .chain(&raw.finishing_b)
            .chain(&raw.w4_roots)
            .all(|v| v.is_finite());
        if !all_finite || !(raw.stability_extent > 0.0) {
            return Err(StorkError::Table(format!("degree {s}: non-finite entries")));
        }
        let mut mu = vec![0.0; m + 1];
        let mut nu = vec![0.0; m + 1];
        let mut kappa = vec![0.0; m + 1];
        mu[1..].copy_from_slice(&raw.mu);
        nu[2..].copy_from_slice(&raw.nu);
        kappa[2..].copy_from_slice(&raw.kappa);
        let w4 = w4_poly(&raw.w4_roots);
        // Y_{m+k} = Y_m - h mu'_k v(Y_{m+k-1}) telescopes to w4 when
        // mu'_4 = w4[1], mu'_3 = w4[2]/w4[1], mu'_2 = w4[3]/w4[2], mu'_1 = w4[4]/w4[3].
        let literal_finishing = [w4[4] / w4[3], w4[3] / w4[2], w4[2] / w4[1], w4[1]];
        let mut out = Self {
            substeps: s,
            mu,
            nu,
            kappa,
            finishing: FinishingBlock {
                a: raw.finishing_a,
                b: raw.finishing_b,
            },
            literal_finishing,
            w4_roots: raw.w4_roots,
            w4,
            stability_extent: raw.stability_extent,
            c: Vec::new(),
            c_literal: Vec::new(),
        };
        out.c = out.unit_rate_stages(false);
        out.c_literal = out.unit_rate_stages(true);
        out.validate()?;
        Ok(out)
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    /// Number of recurrence stages before the finishing block, `s - 4`.
    pub fn recurrence_stages(&self) -> usize {
        self.substeps - 4
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }
    pub fn nu(&self) -> &[f64] {
        &self.nu
    }
    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }
    pub fn finishing(&self) -> &FinishingBlock {
        &self.finishing
    }

    /// Coefficients `mu'_1..mu'_4` of the chained finishing form
    /// `Y_{m+k} = Y_m - h mu'_k v(Y_{m+k-1})`.
    pub fn literal_finishing(&self) -> &[f64; 4] {
        &self.literal_finishing
    }

    pub fn w4_roots(&self) -> &[f64; 4] {
        &self.w4_roots
    }

    /// Ascending coefficients of the composition polynomial `w4`.
    pub fn w4(&self) -> &[f64; 5] {
        &self.w4
    }

    /// Length of the real interval `[-l_s, 0]` on which `|R| <= 1`.
    pub fn stability_extent(&self) -> f64 {
        self.stability_extent
    }

    /// Abscissae of the evaluation points `c_0..c_{s-1}` followed by the
    /// output `c_s = 1`. Indices `m..m+3` are the finishing stages.
    pub fn abscissae(&self) -> &[f64] {
        &self.c
    }

    /// Abscissae for the chained finishing form.
    pub fn literal_abscissae(&self) -> &[f64] {
        &self.c_literal
    }

    fn unit_rate_stages(&self, literal: bool) -> Vec<f64> {
        let m = self.recurrence_stages();
        let mut c = vec![0.0; self.substeps + 1];
        if m >= 1 {
            c[1] = self.mu[1];
        }
        for j in 2..=m {
            c[j] = self.mu[j] - self.nu[j] * c[j - 1] - self.kappa[j] * c[j - 2];
        }
        let base = c[m];
        for k in 1..=4 {
            c[m + k] = if literal {
                base + self.literal_finishing[k - 1]
            } else if k < 4 {
                base + self.finishing.row(k).iter().sum::<f64>()
            } else {
                base + self.finishing.b.iter().sum::<f64>()
            };
        }
        c
    }

    /// Scalar amplification `Y_s / Y_0` on `dx/dt = lambda x` with
    /// `z = lambda * (step length)`.
    pub fn amplification(&self, z: Complex64) -> Complex64 {
        self.amplification_with(z, false)
    }

    /// As [`amplification`](Self::amplification), optionally for the chained
    /// finishing form. Both share the stability polynomial `w4 P_{s-4}`.
    pub fn amplification_with(&self, z: Complex64, literal: bool) -> Complex64 {
        let m = self.recurrence_stages();
        let one = Complex64::new(1.0, 0.0);
        let mut prev2 = one;
        let mut prev = if m >= 1 { one + z * self.mu[1] } else { one };
        for j in 2..=m {
            let next = z * prev * self.mu[j] - prev * self.nu[j] - prev2 * self.kappa[j];
            prev2 = prev;
            prev = next;
        }
        let base = prev;
        if literal {
            let mut y = base;
            for &mu in &self.literal_finishing {
                y = base + z * y * mu;
            }
            return y;
        }
        let mut k = [Complex64::new(0.0, 0.0); 4];
        for i in 0..4 {
            let mut zi = base;
            for (l, &a) in self.finishing.row(i).iter().enumerate() {
                zi += k[l] * a;
            }
            k[i] = z * zi;
        }
        base + k
            .iter()
            .zip(&self.finishing.b)
            .fold(Complex64::new(0.0, 0.0), |acc, (ki, &b)| acc + ki * b)
    }

    /// Taylor coefficients through `z^4` of the stability polynomial, from the
    /// recurrence as truncated power series.
    pub fn taylor_coefficients(&self) -> [f64; 5] {
        let m = self.recurrence_stages();
        let p = super::rock4_design::first_part_taylor(m, &self.mu, &self.nu, &self.kappa);
        let mut out = [0.0; 5];
        for i in 0..5 {
            for j in 0..5 - i {
                out[i + j] += p[i] * self.w4[j];
            }
        }
        out
    }

    /// Residuals of the eight fourth-order tree conditions of the full
    /// `s`-stage tableau.
    pub fn order_condition_residuals(&self) -> [f64; 8] {
        let m = self.recurrence_stages();
        let first = first_part_tableau(m, &self.mu, &self.nu, &self.kappa);
        let f = &self.finishing;
        let x = [
            f.a[0], f.a[1], f.a[2], f.a[3], f.a[4], f.a[5], f.b[0], f.b[1], f.b[2], f.b[3],
        ];
        let (a, b) = composite_tableau(m, &first, &x);
        order_conditions(&a, &b)
    }

    /// Max of `|R(z)|` over `samples` evenly spaced real points in
    /// `[-stability_extent, 0)`.
    pub fn max_modulus_on_extent(&self, samples: usize) -> f64 {
        let l = self.stability_extent;
        (0..samples)
            .map(|k| {
                let z = -l + l * k as f64 / samples as f64;
                self.amplification(Complex64::new(z, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    fn validate(&self) -> Result<()> {
        let s = self.substeps;
        let fail = |what: String| Err(StorkError::Table(format!("degree {s}: {what}")));
        for j in 2..=self.recurrence_stages() {
            if (1.0 + self.nu[j] + self.kappa[j]).abs() > 1e-12 {
                return fail(format!("stage {j} is not affine (nu + kappa != -1)"));
            }
        }
        let targets = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
        for (k, (&got, &want)) in self.taylor_coefficients().iter().zip(&targets).enumerate() {
            if (got - want).abs() > 1e-9 {
                return fail(format!("Taylor coefficient {k} is {got}, expected {want}"));
            }
        }
        let worst = self
            .order_condition_residuals()
            .iter()
            .fold(0.0f64, |a, b| a.max(b.abs()));
        if worst > 1e-10 {
            return fail(format!("order conditions violated by {worst:e}"));
        }
        let peak = self.max_modulus_on_extent(VALIDATION_SAMPLES);
        if peak > 1.0 + 1e-8 {
            return fail(format!("|R| reaches {peak} inside the stability extent"));
        }
        if (self.c[s] - 1.0).abs() > 1e-10 {
            return fail(format!("output abscissa {} != 1", self.c[s]));
        }
        if let Some(c) = self.c.iter().find(|c| !(-1e-10..=FINISHING_LAST_ABSCISSA + 1e-10).contains(*c)) {
            return fail(format!("stage abscissa {c} lies outside [0, {FINISHING_LAST_ABSCISSA}]"));
        }
        Ok(())
    }
}

/// Abscissa of the last finishing stage. The fourth-order finishing family
/// has no member with every abscissa in `[0, 1]` once `s >= 7`, so the last
/// stage sits just past the end of the step.
pub const FINISHING_LAST_ABSCISSA: f64 = 1.002;

/// Real samples used by the load-time `|R| <= 1` scan.
pub const VALIDATION_SAMPLES: usize = 2000;

struct Table {
    degrees: Vec<Rock4Coefficients>,
    checksum: String,
}

fn table() -> &'static std::result::Result<Table, StorkError> {
    static TABLE: OnceLock<std::result::Result<Table, StorkError>> = OnceLock::new();
    TABLE.get_or_init(|| load_table(TABLE_JSON))
}

fn load_table(json: &str) -> Result<Table> {
    let raw: RawTable =
        serde_json::from_str(json).map_err(|e| StorkError::Table(format!("parse error: {e}")))?;
    if raw.format != TABLE_FORMAT || raw.version != TABLE_VERSION {
        return Err(StorkError::Table(format!(
            "unexpected table {} v{}, this build reads {TABLE_FORMAT} v{TABLE_VERSION}",
            raw.format, raw.version
        )));
    }
    if raw.degrees.windows(2).any(|w| w[0].s >= w[1].s) {
        return Err(StorkError::Table("degrees are not strictly increasing".into()));
    }
    let degrees = raw
        .degrees
        .iter()
        .map(Rock4Coefficients::from_raw)
        .collect::<Result<Vec<_>>>()?;
    Ok(Table {
        degrees,
        checksum: sha256_hex(json.as_bytes()),
    })
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn loaded() -> Result<&'static Table> {
    table().as_ref().map_err(Clone::clone)
}

/// SHA-256 of the embedded coefficient table.
pub fn table_checksum() -> Result<&'static str> {
    Ok(&loaded()?.checksum)
}

/// Raw JSON text of the embedded coefficient table.
pub fn table_json() -> &'static str {
    TABLE_JSON
}

/// Degrees present in the embedded table, ascending.
pub fn supported_degrees() -> Result<Vec<usize>> {
    Ok(loaded()?.degrees.iter().map(|d| d.substeps).collect())
}

/// Result of a degree lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Rock4Lookup {
    pub requested: usize,
    pub coeffs: Rock4Coefficients,
}

impl Rock4Lookup {
    /// The degree actually used when it differs from the requested one.
    pub fn substituted(&self) -> Option<usize> {
        (self.coeffs.substeps != self.requested).then_some(self.coeffs.substeps)
    }
}

fn nearest(degrees: &[Rock4Coefficients], s: usize) -> (Option<usize>, Option<usize>) {
    let below = degrees.iter().rev().map(|d| d.substeps).find(|&d| d < s);
    let above = degrees.iter().map(|d| d.substeps).find(|&d| d > s);
    (below, above)
}

/// Coefficients for `substeps`, rounding up to the next supported degree when
/// the exact one is not tabulated. With `strict`, any substitution is an error.
pub fn rock4_lookup(substeps: usize, strict: bool) -> Result<Rock4Lookup> {
    let t = loaded()?;
    if let Some(d) = t.degrees.iter().find(|d| d.substeps == substeps) {
        return Ok(Rock4Lookup {
            requested: substeps,
            coeffs: d.clone(),
        });
    }
    let (below, above) = nearest(&t.degrees, substeps);
    match above {
        Some(up) if !strict && substeps >= 5 => {
            let coeffs = t
                .degrees
                .iter()
                .find(|d| d.substeps == up)
                .expect("degree listed")
                .clone();
            Ok(Rock4Lookup {
                requested: substeps,
                coeffs,
            })
        }
        _ => Err(StorkError::UnsupportedDegree {
            requested: substeps,
            below,
            above,
        }),
    }
}

/// Coefficients for exactly `substeps`, erroring on any unsupported degree.
pub fn rock4_coeffs(substeps: usize) -> Result<Rock4Coefficients> {
    if substeps < 5 {
        return config(format!("ROCK4 needs at least 5 sub-steps, got {substeps}"));
    }
    Ok(rock4_lookup(substeps, true)?.coeffs)
}

/// Parses and validates a table from JSON text, as done for the embedded one.
pub fn parse_table(json: &str) -> Result<Vec<Rock4Coefficients>> {
    Ok(load_table(json)?.degrees)
}
