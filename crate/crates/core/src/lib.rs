//! Numerical laboratory for the massless Dirac-Klein-Gordon system in two
//! space dimensions.
//!
//! The crate is organized bottom-up:
//!
//! * [`grid`]: periodic lattices, spectral fields and Fourier multipliers.
//! * [`dirac`]: Dirac matrices, half-wave projections and the null symbol.
//! * [`norms`]: Sobolev, `X^{s,b}`-type and mixed Lebesgue norms.
//! * [`waves`]: free flows, the wave Duhamel formula, dyadic pieces and
//!   Strichartz-type ratios.
//! * [`solver`]: the pseudo-spectral integrator, Picard iterates and the
//!   first-iterate regularity probe.
//! * [`harness`]: bilinear null-form estimates, the sharpness families and
//!   slope fitting.
//! * [`report`]: CSV, JSON manifest and binary snapshot formats.

pub mod dirac;
pub mod error;
mod fft;
pub mod grid;
pub mod harness;
pub mod norms;
pub mod report;
pub mod solver;
pub mod waves;

pub use error::{Error, Result};
