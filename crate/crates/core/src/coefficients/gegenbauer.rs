use std::ops::{Add, Div, Mul, Sub};

/// Scalars the Gegenbauer recurrence can run on: `f64` and `Complex64`.
pub trait Scalar:
    Copy
    + From<f64>
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
}

impl<T> Scalar for T where
    T: Copy
        + From<f64>
        + Add<Output = T>
        + Sub<Output = T>
        + Mul<Output = T>
        + Mul<f64, Output = T>
        + Div<f64, Output = T>
{
}

/// Gegenbauer polynomial `C_n^(3/2)(x)` by the three-term recurrence
/// `C_j = (2x(j + 1/2) C_{j-1} - (j + 1) C_{j-2}) / j`, `C_0 = 1`, `C_1 = 3x`.
pub fn gegenbauer_c32<T: Scalar>(degree: usize, x: T) -> T {
    gegenbauer_c32_all(degree, x)[degree]
}

/// All values `C_0^(3/2)(x), ..., C_n^(3/2)(x)`.
pub fn gegenbauer_c32_all<T: Scalar>(degree: usize, x: T) -> Vec<T> {
    let mut out = Vec::with_capacity(degree + 1);
    out.push(T::from(1.0));
    if degree >= 1 {
        out.push(x * 3.0);
    }
    for j in 2..=degree {
        let jf = j as f64;
        let next = (x * out[j - 1] * (2.0 * jf + 1.0) - out[j - 2] * (jf + 1.0)) / jf;
        out.push(next);
    }
    out
}

/// Derivatives `d/dx C_j^(3/2)(x)` for `j = 0..=degree`, from the
/// differentiated recurrence.
pub fn gegenbauer_c32_derivatives(degree: usize, x: f64) -> Vec<f64> {
    let c = gegenbauer_c32_all(degree, x);
    let mut d = Vec::with_capacity(degree + 1);
    d.push(0.0);
    if degree >= 1 {
        d.push(3.0);
    }
    for j in 2..=degree {
        let jf = j as f64;
        d.push(((2.0 * jf + 1.0) * (c[j - 1] + x * d[j - 1]) - (jf + 1.0) * d[j - 2]) / jf);
    }
    d
}
