//! Discrete line-spectrum reconstruction from spectra blurred by a known
//! instrument function.
//!
//! The measured spectrum is deconvolved by zero-order Tikhonov
//! regularization with the parameter picked by the discrepancy principle.
//! The tallest maxima of that solution fix line frequencies, and a small
//! least-squares system then gives intensities and background.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod kernels;
pub mod metrics;
pub mod peaks;
pub mod pipeline;
pub mod refine;
pub mod regularize;
pub mod smoothing;
pub mod spectrum;

pub use error::{Error, Result};
pub use nalgebra;
