//! The guide in `book/src`, compiled so that its snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/time-grids.md")]
pub mod time_grids {}

#[doc = include_str!("../../../book/src/stabilized-steps.md")]
pub mod stabilized_steps {}

#[doc = include_str!("../../../book/src/virtual-evaluations.md")]
pub mod virtual_evaluations {}

#[doc = include_str!("../../../book/src/noise-models.md")]
pub mod noise_models {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
