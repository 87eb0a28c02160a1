//! Desk-scale model of a Kerr-free, three-wave-mixing Josephson traveling-wave
//! parametric amplifier used as a source of two-mode squeezed microwaves.
//!
//! The crate follows the signal chain end to end:
//!
//! - [`snail`]: SNAIL potential, its Taylor coefficients at the potential
//!   minimum, the renormalized coefficients of an array, and the search for
//!   flux points where the effective Kerr term vanishes.
//! - [`propagation`]: distributed gain and loss along the line, the lumped
//!   input-output channel, and the resulting output covariance.
//! - [`gaussian`]: covariance matrices, symplectic spectra, partial
//!   transposition, logarithmic negativity, purity, entanglement of formation
//!   and squeezing.
//! - [`calibration`]: from raw quadrature voltages to vacuum-referenced
//!   covariances, Johnson-Nyquist gain fits, Gaussianity checks and
//!   uncertainty propagation.
//! - [`synth`]: seeded synthetic records drawn from a known output state,
//!   for validating the calibration path.
//!
//! Library APIs take linear quantities. Decibel conversions live in
//! [`units`] and at the config/CLI boundary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod error;
pub mod gaussian;
pub mod io;
pub mod propagation;
pub mod snail;
pub mod stats;
pub mod synth;
pub mod units;

pub use error::{Error, Result};
pub use gaussian::CovarianceMatrix;

// Guide chapters, compiled so their snippets run under `cargo test --doc`.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/gaussian.md")]
pub mod book_gaussian {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/snail.md")]
pub mod book_snail {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/propagation.md")]
pub mod book_propagation {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/calibration.md")]
pub mod book_calibration {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/synthetic.md")]
pub mod book_synthetic {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/formats.md")]
pub mod book_formats {}
