//! Pump-power sweeps: linear-loss correction, slope through the origin and
//! the ETPA cross-section.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::units::AVOGADRO;

/// Minimum number of power points for a slope fit.
pub const MIN_SWEEP_POINTS: usize = 5;

/// Coincidence rates (counts/s) of solvent and sample at δt = 0 and at the
/// delayed channel (167 fs in the measurements).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSweep {
    powers_mw: Vec<f64>,
    r_sol_0: Vec<f64>,
    r_sam_0: Vec<f64>,
    r_sol_167: Vec<f64>,
    r_sam_167: Vec<f64>,
    #[serde(default)]
    loss_corrected: bool,
}

impl PowerSweep {
    pub fn new(
        powers_mw: Vec<f64>,
        r_sol_0: Vec<f64>,
        r_sam_0: Vec<f64>,
        r_sol_167: Vec<f64>,
        r_sam_167: Vec<f64>,
    ) -> Result<Self> {
        let n = powers_mw.len();
        if [&r_sol_0, &r_sam_0, &r_sol_167, &r_sam_167]
            .iter()
            .any(|c| c.len() != n)
        {
            return Err(Error::InvalidData("sweep columns differ in length".into()));
        }
        if powers_mw.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidData("powers must be strictly increasing".into()));
        }
        if powers_mw.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidData("powers must be finite and non-negative".into()));
        }
        for col in [&r_sol_0, &r_sam_0, &r_sol_167, &r_sam_167] {
            if let Some(r) = col.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
                return Err(Error::InvalidData(format!(
                    "rates must be finite and non-negative, found {r}"
                )));
            }
        }
        Ok(Self {
            powers_mw,
            r_sol_0,
            r_sam_0,
            r_sol_167,
            r_sam_167,
            loss_corrected: false,
        })
    }

    pub fn len(&self) -> usize {
        self.powers_mw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers_mw.is_empty()
    }

    pub fn powers_mw(&self) -> &[f64] {
        &self.powers_mw
    }

    pub fn r_sol_0(&self) -> &[f64] {
        &self.r_sol_0
    }

    pub fn r_sam_0(&self) -> &[f64] {
        &self.r_sam_0
    }

    pub fn r_sol_167(&self) -> &[f64] {
        &self.r_sol_167
    }

    pub fn r_sam_167(&self) -> &[f64] {
        &self.r_sam_167
    }

    pub fn loss_corrected(&self) -> bool {
        self.loss_corrected
    }

    /// (solvent, sample) rates of one delay channel.
    pub fn channel(&self, channel: DelayChannel) -> (&[f64], &[f64]) {
        match channel {
            DelayChannel::Zero => (&self.r_sol_0, &self.r_sam_0),
            DelayChannel::Delayed => (&self.r_sol_167, &self.r_sam_167),
        }
    }

    /// Multiplies every rate by `k` (unit changes, detector efficiency).
    pub fn scaled(&self, k: f64) -> Result<Self> {
        let s = |v: &[f64]| v.iter().map(|x| x * k).collect::<Vec<_>>();
        let mut out = Self::new(
            self.powers_mw.clone(),
            s(&self.r_sol_0),
            s(&self.r_sam_0),
            s(&self.r_sol_167),
            s(&self.r_sam_167),
        )?;
        out.loss_corrected = self.loss_corrected;
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayChannel {
    /// δt = 0.
    #[serde(rename = "0fs")]
    Zero,
    /// δt = 167 fs, outside the dip.
    #[serde(rename = "167fs")]
    Delayed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// One offset per power point (losses scale with flux).
    #[default]
    PerPoint,
    /// The mean offset over all points.
    GlobalMean,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCorrection {
    pub sweep: PowerSweep,
    /// Offset added to the sample channels at each power point.
    pub offsets: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Shifts the sample channels so that the delayed-channel difference
/// R_sol − R_sam vanishes; solvent channels are untouched.
pub fn loss_correct(sweep: &PowerSweep, mode: OffsetMode) -> Result<LossCorrection> {
    let raw: Vec<f64> = sweep
        .r_sol_167
        .iter()
        .zip(&sweep.r_sam_167)
        .map(|(s, m)| s - m)
        .collect();
    let offsets = match mode {
        OffsetMode::PerPoint => raw.clone(),
        OffsetMode::GlobalMean => {
            let mean = if raw.is_empty() {
                0.0
            } else {
                raw.iter().sum::<f64>() / raw.len() as f64
            };
            vec![mean; raw.len()]
        }
    };

    let mut warnings = Vec::new();
    let negative: Vec<f64> = sweep
        .powers_mw
        .iter()
        .zip(&raw)
        .filter(|(_, d)| **d < 0.0)
        .map(|(p, _)| *p)
        .collect();
    if !negative.is_empty() {
        let msg = format!(
            "negative offset: sample exceeds solvent at the delayed channel for {} point(s), first at {} mW",
            negative.len(),
            negative[0]
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let shift = |v: &[f64]| -> Vec<f64> { v.iter().zip(&offsets).map(|(x, o)| x + o).collect() };
    let mut corrected = PowerSweep::new(
        sweep.powers_mw.clone(),
        sweep.r_sol_0.clone(),
        shift(&sweep.r_sam_0),
        sweep.r_sol_167.clone(),
        match mode {
            // exact zero difference, free of rounding in x + (s − x)
            OffsetMode::PerPoint => sweep.r_sol_167.clone(),
            OffsetMode::GlobalMean => shift(&sweep.r_sam_167),
        },
    )?;
    corrected.loss_corrected = true;
    Ok(LossCorrection {
        sweep: corrected,
        offsets,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub channel: DelayChannel,
    /// m_δt in R_TPA = m·R_sol.
    pub slope: f64,
    /// 95% half-width on the slope.
    pub slope_ci95: f64,
    /// Per-point 95% prediction bounds (lower, upper) of R_TPA.
    pub prediction_bounds: Vec<(f64, f64)>,
    /// Intercept of an affine fit, reported as a diagnostic only.
    pub affine_intercept: f64,
    /// Points where the sample rate exceeds the solvent rate.
    pub sample_above_solvent: usize,
    pub n_points: usize,
    pub loss_corrected: bool,
}

/// Regresses R_TPA = |R_sol − R_sam| on R_sol through the origin.
pub fn fit_slope(sweep: &PowerSweep, channel: DelayChannel) -> Result<SlopeFit> {
    let n = sweep.len();
    if n < MIN_SWEEP_POINTS {
        return Err(Error::InsufficientPoints {
            required: MIN_SWEEP_POINTS,
            got: n,
        });
    }
    let (x, sam) = sweep.channel(channel);
    let y: Vec<f64> = x.iter().zip(sam).map(|(s, m)| (s - m).abs()).collect();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidData("solvent rates are all zero".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let slope = sxy / sxx;

    let dof = n - 1;
    let s2 = x.iter().zip(&y).map(|(a, b)| (b - slope * a).powi(2)).sum::<f64>() / dof as f64;
    let tq = StudentsT::new(0.0, 1.0, dof as f64)
        .map(|d| d.inverse_cdf(0.975))
        .map_err(|e| Error::InvalidData(e.to_string()))?;
    let slope_ci95 = tq * (s2 / sxx).sqrt();
    let prediction_bounds = x
        .iter()
        .map(|a| {
            let half = tq * (s2 * (1.0 + a * a / sxx)).sqrt();
            (slope * a - half, slope * a + half)
        })
        .collect();

    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let cxx: f64 = x.iter().map(|a| (a - xm).powi(2)).sum();
    let affine_intercept = if cxx > 0.0 {
        let cxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xm) * (b - ym)).sum();
        ym - cxy / cxx * xm
    } else {
        f64::NAN
    };

    Ok(SlopeFit {
        channel,
        slope,
        slope_ci95,
        prediction_bounds,
        affine_intercept,
        sample_above_solvent: x.iter().zip(sam).filter(|(s, m)| m > s).count(),
        n_points: n,
        loss_corrected: sweep.loss_corrected,
    })
}

/// Sample cell geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    concentration_molar: f64,
    length_cm: f64,
    spot_diameter_um: f64,
}

impl GeometrySpec {
    pub fn new(concentration_molar: f64, length_cm: f64, spot_diameter_um: f64) -> Result<Self> {
        for (name, v) in [
            ("concentration_molar", concentration_molar),
            ("length_cm", length_cm),
            ("spot_diameter_um", spot_diameter_um),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self {
            concentration_molar,
            length_cm,
            spot_diameter_um,
        })
    }

    pub fn concentration_molar(&self) -> f64 {
        self.concentration_molar
    }

    pub fn length_cm(&self) -> f64 {
        self.length_cm
    }

    pub fn spot_diameter_um(&self) -> f64 {
        self.spot_diameter_um
    }

    /// π(W₀/2)² in cm².
    pub fn area_cm2(&self) -> f64 {
        let radius_cm = 0.5 * self.spot_diameter_um * 1e-4;
        std::f64::consts::PI * radius_cm * radius_cm
    }

    pub fn volume_cm3(&self) -> f64 {
        self.area_cm2() * self.length_cm
    }

    /// Number density in molecules/cm³.
    pub fn number_density(&self) -> f64 {
        self.concentration_molar * AVOGADRO / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionResult {
    pub slope: f64,
    /// cm²/molecule.
    pub sigma_e: f64,
    /// Relative 95% half-width of the slope, in percent.
    pub ci95_percent: f64,
    pub loss_corrected: bool,
}

/// σₑ = m·A/(C·V·N_A) with C in molecules/cm³.
pub fn cross_section(fit: &SlopeFit, geom: &GeometrySpec) -> Result<CrossSectionResult> {
    if !(fit.slope >= 0.0) {
        return Err(Error::invalid(
            "slope",
            format!("must be non-negative, got {}", fit.slope),
        ));
    }
    let sigma_e = fit.slope * geom.area_cm2() / (geom.number_density() * geom.volume_cm3());
    let ci95_percent = if fit.slope > 0.0 {
        100.0 * fit.slope_ci95 / fit.slope
    } else {
        f64::INFINITY
    };
    Ok(CrossSectionResult {
        slope: fit.slope,
        sigma_e,
        ci95_percent,
        loss_corrected: fit.loss_corrected,
    })
}
