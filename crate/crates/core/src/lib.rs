pub mod coefficients;
pub mod error;
pub mod fields;
pub mod stepper;
pub mod analysis;
