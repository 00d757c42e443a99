//! Boundary conversions between laboratory units (nm, FWHM) and the internal
//! rad/fs, Gaussian-sigma representation.

use serde::{Deserialize, Serialize};

/// Speed of light in nm/fs.
pub const SPEED_OF_LIGHT_NM_PER_FS: f64 = 299.792_458;

/// Ratio FWHM / sigma of a Gaussian, 2·sqrt(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Avogadro constant, 1/mol.
pub const AVOGADRO: f64 = 6.022_140_76e23;

/// Angular frequency (rad/fs) of light with vacuum wavelength `lambda_nm`.
pub fn wavelength_to_omega(lambda_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_FS / lambda_nm
}

/// Vacuum wavelength (nm) for angular frequency `omega` (rad/fs).
pub fn omega_to_wavelength(omega: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_FS / omega
}

/// Small-bandwidth conversion Δω = 2πcΔλ/λ².
pub fn wavelength_width_to_omega(lambda_nm: f64, width_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_FS * width_nm / (lambda_nm * lambda_nm)
}

pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / FWHM_PER_SIGMA
}

pub fn sigma_to_fwhm(sigma: f64) -> f64 {
    sigma * FWHM_PER_SIGMA
}

/// A spectral width tagged with its unit convention.
///
/// In JSON this is either `{"fwhm_nm": 40.0}` or `{"sigma_radfs": 0.05}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    FwhmNm(f64),
    SigmaRadfs(f64),
}

impl Bandwidth {
    /// Gaussian sigma in rad/fs. `lambda_nm` is the wavelength at which an
    /// FWHM-in-nm value is converted.
    pub fn sigma_radfs(self, lambda_nm: f64) -> f64 {
        match self {
            Bandwidth::FwhmNm(w) => fwhm_to_sigma(wavelength_width_to_omega(lambda_nm, w)),
            Bandwidth::SigmaRadfs(s) => s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fwhm_sigma_constant() {
        assert_relative_eq!(FWHM_PER_SIGMA, 2.0 * (2.0 * 2f64.ln()).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn wavelength_roundtrip() {
        let w = wavelength_to_omega(403.0);
        assert_relative_eq!(omega_to_wavelength(w), 403.0, max_relative = 1e-14);
        // 403 nm pump is about 4.674 rad/fs
        assert!((w - 4.674).abs() < 1e-3);
    }

    #[test]
    fn forty_nm_filter_sigma() {
        // hand evaluation: 2π·299.792458·40/800² = 0.117749 rad/fs FWHM
        let fwhm = 2.0 * std::f64::consts::PI * 299.792_458 * 40.0 / 640_000.0;
        let sigma = Bandwidth::FwhmNm(40.0).sigma_radfs(800.0);
        assert_relative_eq!(sigma, fwhm / 2.354_820_045, max_relative = 1e-9);
        assert!((sigma - 0.050_00).abs() < 1e-4);
    }
}
