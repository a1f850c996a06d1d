//! Shape from polarization.
//!
//! Polarization-image fitting, Fresnel inversion, a physics reconstruction
//! pipeline, a synthetic renderer, a small U-Net trained on a hand-rolled
//! autodiff core, dataset I/O and mean-angular-error reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod fresnel;
pub mod net;
pub mod normals;
pub mod physics;
pub mod polar;
pub mod synth;

pub use error::{Error, Result};
