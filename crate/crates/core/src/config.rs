//! JSON model configuration. Units are part of every key name.
//!
//! ```json
//! {
//!   "pump": { "lambda_nm": 403.0, "fwhm_nm": 1.0 },
//!   "phase_matching": { "calibrate_to": { "fwhm_fs": 70.0, "visibility": 0.61 } },
//!   "filter": { "center_nm": 800.0, "fwhm_nm": 40.0 },
//!   "sample": { "eta": 0.0, "lambda_H_nm": 403.0, "width": { "sigma_radfs": 0.01 } },
//!   "geometry": { "concentration_molar": 0.1, "length_cm": 1.0, "spot_diameter_um": 58.0 }
//! }
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::closed_form::calibrate_phase_matching;
use crate::error::{Error, Result};
use crate::spectral::{BiphotonModel, FilterSpec, PhaseMatchSpec, PumpSpec, SampleSpec, DEFAULT_GAMMA};
use crate::synth::NoiseSpec;
use crate::transmittance::GeometrySpec;
use crate::units::{omega_to_wavelength, wavelength_to_omega, Bandwidth};

/// Notch width used when a config omits the sample section, rad/fs.
pub const DEFAULT_NOTCH_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PumpConfig {
    pub lambda_nm: f64,
    #[serde(flatten)]
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationTarget {
    pub fwhm_fs: f64,
    /// Visibility (max−min)/(max+min) of the reference dip, in (0, 1).
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseMatchConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_s_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_i_fs: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Derive τs, τi from a reference dip instead of giving them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate_to: Option<CalibrationTarget>,
}

fn default_gamma() -> f64 {
    DEFAULT_GAMMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub center_nm: f64,
    #[serde(flatten)]
    pub bandwidth: Bandwidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(default)]
    pub eta: f64,
    /// Two-photon transition wavelength (a sum frequency, ≈ the pump).
    #[serde(default, rename = "lambda_H_nm", skip_serializing_if = "Option::is_none")]
    pub lambda_h_nm: Option<f64>,
    #[serde(default, rename = "omega_H_radfs", skip_serializing_if = "Option::is_none")]
    pub omega_h_radfs: Option<f64>,
    /// Notch width; an FWHM in nm is taken at the transition wavelength.
    pub width: Bandwidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub concentration_molar: f64,
    pub length_cm: f64,
    pub spot_diameter_um: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericConfig {
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default = "default_delay_min")]
    pub delay_min_fs: f64,
    #[serde(default = "default_delay_max")]
    pub delay_max_fs: f64,
    #[serde(default = "default_delay_step")]
    pub delay_step_fs: f64,
}

fn default_grid_n() -> usize {
    1024
}

fn default_delay_min() -> f64 {
    -500.0
}

fn default_delay_max() -> f64 {
    500.0
}

fn default_delay_step() -> f64 {
    2.0
}

impl Default for NumericConfig {
    fn default() -> Self {
        Self {
            grid_n: default_grid_n(),
            delay_min_fs: default_delay_min(),
            delay_max_fs: default_delay_max(),
            delay_step_fs: default_delay_step(),
        }
    }
}

impl NumericConfig {
    /// Uniform delays from min to max inclusive (max is included when it lies
    /// on the step lattice).
    pub fn delays(&self) -> Result<Vec<f64>> {
        if !(self.delay_step_fs > 0.0) {
            return Err(Error::invalid("delay_step_fs", "must be positive"));
        }
        if !(self.delay_max_fs > self.delay_min_fs) {
            return Err(Error::invalid("delay_max_fs", "must exceed delay_min_fs"));
        }
        let n = ((self.delay_max_fs - self.delay_min_fs) / self.delay_step_fs + 1e-9).floor() as usize;
        Ok((0..=n)
            .map(|k| self.delay_min_fs + k as f64 * self.delay_step_fs)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub pump: PumpConfig,
    pub phase_matching: PhaseMatchConfig,
    pub filter: FilterConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default)]
    pub numeric: NumericConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSpec>,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn pump(&self) -> Result<PumpSpec> {
        let l = self.pump.lambda_nm;
        if !(l > 0.0) {
            return Err(Error::invalid("pump.lambda_nm", "must be positive"));
        }
        PumpSpec::new(wavelength_to_omega(l), self.pump.bandwidth.sigma_radfs(l))
    }

    pub fn filter(&self) -> Result<FilterSpec> {
        let l = self.filter.center_nm;
        if !(l > 0.0) {
            return Err(Error::invalid("filter.center_nm", "must be positive"));
        }
        FilterSpec::new(wavelength_to_omega(l), self.filter.bandwidth.sigma_radfs(l))
    }

    pub fn sample(&self, pump: &PumpSpec) -> Result<SampleSpec> {
        let Some(s) = &self.sample else {
            return SampleSpec::transparent(pump.omega_p(), DEFAULT_NOTCH_SIGMA);
        };
        let omega_h = match (s.lambda_h_nm, s.omega_h_radfs) {
            (Some(l), None) if l > 0.0 => wavelength_to_omega(l),
            (None, Some(w)) => w,
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "sample",
                    "give either lambda_H_nm or omega_H_radfs, not both",
                ))
            }
            (None, None) => pump.omega_p(),
            (Some(_), None) => return Err(Error::invalid("sample.lambda_H_nm", "must be positive")),
        };
        let width = s.width.sigma_radfs(omega_to_wavelength(omega_h));
        SampleSpec::new(s.eta, omega_h, width)
    }

    /// Builds the model, calibrating the phase matching when requested.
    pub fn model(&self) -> Result<BiphotonModel> {
        let pump = self.pump()?;
        let filter = self.filter()?;
        let sample = self.sample(&pump)?;
        let pm_cfg = &self.phase_matching;
        let pm = match (pm_cfg.tau_s_fs, pm_cfg.tau_i_fs, pm_cfg.calibrate_to) {
            (Some(ts), Some(ti), None) => PhaseMatchSpec::new(ts, ti, pm_cfg.gamma)?,
            (None, None, Some(target)) => {
                let placeholder = PhaseMatchSpec::new(0.0, 0.0, pm_cfg.gamma)?;
                let m = BiphotonModel::new(pump, placeholder, filter, sample);
                calibrate_phase_matching(&m, target.fwhm_fs, target.visibility)?
            }
            _ => {
                return Err(Error::invalid(
                    "phase_matching",
                    "give both tau_s_fs and tau_i_fs, or calibrate_to",
                ))
            }
        };
        Ok(BiphotonModel::new(pump, pm, filter, sample))
    }

    pub fn geometry(&self) -> Result<Option<GeometrySpec>> {
        self.geometry
            .map(|g| GeometrySpec::new(g.concentration_molar, g.length_cm, g.spot_diameter_um))
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{closed_form_fwhm, derive_params, predicted_visibility};
    use approx::assert_relative_eq;

    const REFERENCE: &str = r#"{
        "pump": { "lambda_nm": 403.0, "fwhm_nm": 1.0 },
        "phase_matching": { "calibrate_to": { "fwhm_fs": 70.0, "visibility": 0.61 } },
        "filter": { "center_nm": 800.0, "fwhm_nm": 40.0 },
        "sample": { "eta": 0.0, "lambda_H_nm": 403.0, "width": { "sigma_radfs": 0.01 } },
        "geometry": { "concentration_molar": 0.1, "length_cm": 1.0, "spot_diameter_um": 58.0 }
    }"#;

    #[test]
    fn reference_config_builds_calibrated_model() {
        let cfg = ModelConfig::from_json(REFERENCE).unwrap();
        let m = cfg.model().unwrap();
        let p = derive_params(&m).unwrap();
        assert_relative_eq!(closed_form_fwhm(&p).unwrap(), 70.0, max_relative = 1e-9);
        assert_relative_eq!(predicted_visibility(&p).unwrap(), 0.61, max_relative = 1e-9);
        assert_relative_eq!(m.sample().delta_omega_h(), 0.01);
        assert!(cfg.geometry().unwrap().is_some());
        assert_eq!(cfg.numeric.grid_n, 1024);
    }

    #[test]
    fn explicit_taus_and_omega_h() {
        let text = r#"{
            "pump": { "lambda_nm": 403.0, "sigma_radfs": 0.005 },
            "phase_matching": { "tau_s_fs": 789.5, "tau_i_fs": 669.5 },
            "filter": { "center_nm": 806.0, "sigma_radfs": 0.05 },
            "sample": { "eta": 0.1, "omega_H_radfs": 4.6, "width": { "fwhm_nm": 2.0 } }
        }"#;
        let m = ModelConfig::from_json(text).unwrap().model().unwrap();
        assert_eq!(m.phase_matching().tau_s(), 789.5);
        assert_eq!(m.phase_matching().gamma(), DEFAULT_GAMMA);
        assert_eq!(m.sample().omega_h(), 4.6);
        assert_eq!(m.pump().delta_omega_p(), 0.005);
    }

    #[test]
    fn rejects_ambiguous_sections() {
        let both = REFERENCE.replace(
            r#""calibrate_to""#,
            r#""tau_s_fs": 1.0, "tau_i_fs": 2.0, "calibrate_to""#,
        );
        assert!(ModelConfig::from_json(&both).unwrap().model().is_err());
        let unknown = REFERENCE.replace(r#""length_cm""#, r#""length_mm": 3, "length_cm""#);
        assert!(ModelConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn delay_lattice() {
        let n = NumericConfig {
            delay_min_fs: -4.0,
            delay_max_fs: 4.0,
            delay_step_fs: 2.0,
            ..Default::default()
        };
        assert_eq!(n.delays().unwrap(), vec![-4.0, -2.0, 0.0, 2.0, 4.0]);
        let bad = NumericConfig {
            delay_step_fs: 0.0,
            ..n
        };
        assert!(bad.delays().is_err());
    }
}
