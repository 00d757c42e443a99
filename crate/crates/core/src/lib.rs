//! Forward simulation and inverse inference for entangled two-photon
//! absorption (ETPA) observed through Hong-Ou-Mandel (HOM) interference.
//!
//! The crate is organised bottom-up:
//!
//! * [`spectral`] builds the biphoton model (pump, phase matching, filter,
//!   sample notch) and evaluates the joint spectral intensity.
//! * [`numeric`] integrates the HOM coincidence integral by brute-force 2D
//!   quadrature and extracts dip metrics from any interferogram.
//! * [`closed_form`] evaluates the two-Gaussian closed-form interferogram and
//!   the analytic Gaussian reduction of the coincidence integral.
//! * [`inference`] fits ETPA efficiencies to interferograms and runs
//!   concentration series.
//! * [`transmittance`] reduces pump-power sweeps to ETPA cross-sections.
//! * [`synth`] generates seeded Poisson datasets from the forward model.
//! * [`validation`] compares quadrature and closed form over a model battery.
//!
//! Units: angular frequency in rad/fs and time in fs everywhere inside the
//! crate. Wavelengths in nm are converted at the boundary by [`units`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod inference;
pub mod io;
mod lsq;
pub mod numeric;
pub mod spectral;
pub mod synth;
pub mod transmittance;
pub mod units;
pub mod validation;

pub use error::{Error, Result};
