//! Superbifurcation toolkit for Marangoni convection.
//!
//! The crate is organised along the pipeline: [`spectral`] solves the linear stability problem,
//! [`design`] places zero eigenvalues at chosen wave numbers, [`normal_form`] projects the
//! nonlinearity on the critical modes, [`dynamics`] integrates and embeds quadratic systems and
//! [`pattern`] turns amplitudes back into surface temperature fields.

pub mod cplx;
pub mod design;
pub mod dynamics;
pub mod error;
pub mod normal_form;
pub mod pattern;
pub mod profile;
pub mod quad;
pub mod spectral;
pub mod tridiag;

pub use error::{Error, Result};
