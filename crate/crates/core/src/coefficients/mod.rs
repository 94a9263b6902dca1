//! Recurrence coefficients of the stabilized Runge-Kutta families.
//!
//! * [`rkg2_coeffs`] builds second-order Runge-Kutta-Gegenbauer coefficients
//!   from closed-form expressions in exact rational arithmetic.
//! * [`rock4_lookup`] serves fourth-order orthogonal Runge-Kutta-Chebyshev
//!   coefficients from an embedded, checksummed table that is validated when
//!   first loaded. The table is produced by [`rock4_design`].
//!
//! Both expose stage abscissae and a scalar amplification factor computed by
//! running the stage recurrence, which [`validate_consistency`] inspects.

mod consistency;
mod gegenbauer;
mod rkg2;
mod rock4;
pub mod rock4_design;

pub use consistency::{
    central_differences, contour_taylor, validate_consistency, ConsistencyReport,
    StabilityFunction, FD_STEP, FOURTH_ORDER_TOLERANCE, SECOND_ORDER_TOLERANCE,
};
pub use gegenbauer::{gegenbauer_c32, gegenbauer_c32_all, gegenbauer_c32_derivatives, Scalar};
pub use rkg2::{rkg2_coeffs, rkg2_exact, rkg2_stability_poly, Rkg2Coefficients, Rkg2Exact};
pub use rock4::{
    parse_table, rock4_coeffs, rock4_lookup, supported_degrees, table_checksum, table_json,
    FinishingBlock, RawDegree, RawTable, Rock4Coefficients, Rock4Lookup, TABLE_FORMAT,
    TABLE_VERSION, VALIDATION_SAMPLES, FINISHING_LAST_ABSCISSA,
};

/// Stage abscissae of either family: stage `j` is evaluated at `t0 - h c_j`.
pub trait StageAbscissae {
    fn stage_abscissae(&self) -> &[f64];
}

impl StageAbscissae for Rkg2Coefficients {
    fn stage_abscissae(&self) -> &[f64] {
        self.abscissae()
    }
}

impl StageAbscissae for Rock4Coefficients {
    fn stage_abscissae(&self) -> &[f64] {
        self.abscissae()
    }
}

