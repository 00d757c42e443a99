//! Fitting the closed-form interferogram to data.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::closed_form::{self, ClosedFormParams, KappaMode};
use crate::error::{Error, Result};
use crate::lsq::{self, Problem};
use crate::numeric::{self, Interferogram};
use crate::units::FWHM_PER_SIGMA;

/// Condition number of the column-normalised Jacobian above which a fit is
/// flagged as poorly identified.
pub const IDENTIFIABILITY_LIMIT: f64 = 1e8;

/// Deterministic η starting points.
pub const ETA_STARTS: [f64; 3] = [0.01, 0.1, 0.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    Eta,
    Kappa,
    DeltaOmegaLambda,
    #[serde(rename = "delta_omega_J")]
    DeltaOmegaJ,
}

impl FreeParam {
    pub const ALL: [FreeParam; 4] = [
        FreeParam::Eta,
        FreeParam::Kappa,
        FreeParam::DeltaOmegaLambda,
        FreeParam::DeltaOmegaJ,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FreeParam::Eta => "eta",
            FreeParam::Kappa => "kappa",
            FreeParam::DeltaOmegaLambda => "delta_omega_lambda",
            FreeParam::DeltaOmegaJ => "delta_omega_J",
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FreeParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FreeParam::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid("free", format!("unknown parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: ClosedFormParams,
    pub free_names: Vec<FreeParam>,
    pub residual_rms: f64,
    /// 95% half-widths keyed by parameter name.
    pub ci95: BTreeMap<String, f64>,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
    pub condition_number: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn value(&self, p: FreeParam) -> f64 {
        match p {
            FreeParam::Eta => self.params.eta(),
            FreeParam::Kappa => self.params.kappa(),
            FreeParam::DeltaOmegaLambda => self.params.delta_omega_lambda(),
            FreeParam::DeltaOmegaJ => self.params.delta_omega_j(),
        }
    }
}

/// Closed-form curve with η′ = c₀·η·Δω_J/Δω_Λ, c₀ = J₀/J_Λ held fixed.
struct CurveProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    inv_sigma: Option<Vec<f64>>,
    free: &'a [FreeParam],
    base: [f64; 4],
    c0: f64,
}

impl CurveProblem<'_> {
    fn full(&self, p: &[f64]) -> [f64; 4] {
        let mut v = self.base;
        for (k, f) in self.free.iter().enumerate() {
            v[*f as usize] = p[k];
        }
        v
    }
}

impl Problem for CurveProblem<'_> {
    fn n_params(&self) -> usize {
        self.free.len()
    }

    fn n_residuals(&self) -> usize {
        self.t.len()
    }

    fn evaluate(&self, p: &[f64], res: &mut [f64], jac: &mut [f64]) {
        let [eta, kappa, lam, j] = self.full(p);
        let np = self.free.len();
        for (k, (&t, &y)) in self.t.iter().zip(self.y).enumerate() {
            let t2 = t * t;
            let gl = (-0.5 * lam * lam * t2).exp();
            let gj = (-0.5 * j * j * t2).exp();
            let w = self.inv_sigma.as_ref().map_or(1.0, |s| s[k]);
            let model = 1.0 - kappa * gl + self.c0 * eta * (j / lam) * gj;
            res[k] = w * (model - y);
            for (c, f) in self.free.iter().enumerate() {
                let d = match f {
                    FreeParam::Eta => self.c0 * (j / lam) * gj,
                    FreeParam::Kappa => -gl,
                    FreeParam::DeltaOmegaLambda => kappa * lam * t2 * gl - self.c0 * eta * j / (lam * lam) * gj,
                    FreeParam::DeltaOmegaJ => self.c0 * eta / lam * gj * (1.0 - j * j * t2),
                };
                jac[np * k + c] = w * d;
            }
        }
    }

    fn project(&self, p: &mut [f64]) {
        let lam = self
            .free
            .iter()
            .position(|f| *f == FreeParam::DeltaOmegaLambda)
            .map_or(self.base[2], |k| {
                p[k] = p[k].abs().max(1e-9);
                p[k]
            });
        for (k, f) in self.free.iter().enumerate() {
            match f {
                FreeParam::Eta | FreeParam::Kappa => p[k] = p[k].clamp(0.0, 1.0),
                FreeParam::DeltaOmegaJ => p[k] = p[k].abs().clamp(1e-12, lam),
                FreeParam::DeltaOmegaLambda => {}
            }
        }
    }
}

fn student_t_975(dof: usize) -> f64 {
    match StudentsT::new(0.0, 1.0, dof.max(1) as f64) {
        Ok(d) => d.inverse_cdf(0.975),
        Err(_) => 1.959_963_984_540_054,
    }
}

/// Weighted least squares of the closed-form curve against `ig`, with the
/// parameters outside `free` fixed at their values in `fixed`.
pub fn fit_eta(ig: &Interferogram, fixed: &ClosedFormParams, free: &[FreeParam]) -> Result<FitReport> {
    if !ig.normalized() {
        return Err(Error::NotNormalized);
    }
    let mut free: Vec<FreeParam> = free.to_vec();
    free.sort();
    free.dedup();
    if free.is_empty() {
        return Err(Error::invalid("free", "at least one parameter must be free"));
    }
    let n = ig.len();
    if n <= free.len() {
        return Err(Error::InsufficientPoints {
            required: free.len() + 1,
            got: n,
        });
    }

    let base = [
        fixed.eta(),
        fixed.kappa(),
        fixed.delta_omega_lambda(),
        fixed.delta_omega_j(),
    ];
    let problem = CurveProblem {
        t: ig.delays(),
        y: ig.rates(),
        inv_sigma: ig.variances().map(|v| v.iter().map(|x| 1.0 / x.sqrt()).collect()),
        free: &free,
        base,
        c0: fixed.j0() / fixed.j_lambda(),
    };

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let plain: Vec<f64> = free.iter().map(|f| base[*f as usize]).collect();
    if free.contains(&FreeParam::Eta) {
        let k = free.iter().position(|f| *f == FreeParam::Eta).unwrap_or(0);
        for eta in ETA_STARTS {
            let mut s = plain.clone();
            s[k] = eta;
            starts.push(s);
        }
    } else {
        starts.push(plain);
    }

    let eta_of = |p: &[f64]| problem.full(p)[0];
    let mut best: Option<lsq::Solution> = None;
    for start in &starts {
        let sol = lsq::minimize(&problem, start, lsq::Options::default());
        best = Some(match best {
            None => sol,
            Some(b) => {
                let tie = (sol.cost - b.cost).abs() <= 1e-12 * (1.0 + b.cost.abs());
                if (tie && eta_of(&sol.params) < eta_of(&b.params)) || (!tie && sol.cost < b.cost) {
                    sol
                } else {
                    b
                }
            }
        });
    }
    let sol = best.expect("at least one start");
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
        });
    }

    let [eta, kappa, lam, j] = problem.full(&sol.params);
    let mode = if free.contains(&FreeParam::Kappa) {
        KappaMode::Fitted
    } else {
        fixed.kappa_mode()
    };
    let params = fixed
        .with_kappa(kappa, mode)?
        .with_fitted_widths(lam, j)?
        .with_eta(eta)?;

    let residual_rms = {
        let sum: f64 = ig
            .delays()
            .iter()
            .zip(ig.rates())
            .map(|(t, y)| (params.rate(*t) - y).powi(2))
            .sum();
        (sum / n as f64).sqrt()
    };

    let dof = n - free.len();
    let scale = if problem.inv_sigma.is_some() {
        1.0
    } else {
        2.0 * sol.cost / dof as f64
    };
    let tq = student_t_975(dof);
    let cov = sol.normal_matrix().try_inverse();
    let mut ci95 = BTreeMap::new();
    for (k, f) in free.iter().enumerate() {
        let half = match &cov {
            Some(c) => tq * (scale * c[(k, k)]).max(0.0).sqrt(),
            None => f64::INFINITY,
        };
        ci95.insert(f.name().to_string(), half);
    }

    let condition_number = sol.condition_number();
    let mut warnings = Vec::new();
    if condition_number > IDENTIFIABILITY_LIMIT {
        let msg = format!(
            "identifiability: Jacobian condition number {condition_number:.3e} exceeds {IDENTIFIABILITY_LIMIT:e} for free set {:?}",
            free.iter().map(|f| f.name()).collect::<Vec<_>>()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    Ok(FitReport {
        params,
        free_names: free,
        residual_rms,
        ci95,
        n_points: n,
        converged: sol.converged,
        iterations: sol.iterations,
        condition_number,
        warnings,
    })
}

/// Fits κ and Δω_Λ to a free-space reference dip with η pinned to 0.
///
/// `template` supplies ω_Λ, J_Λ and the notch used to re-derive Δω_J and J₀
/// from the fitted Δω_Λ.
pub fn calibrate_reference(ig: &Interferogram, template: &ClosedFormParams) -> Result<ClosedFormParams> {
    let metrics = numeric::dip_metrics(ig)?;
    let kappa0 = (1.0 - metrics.min_rate / metrics.max_rate).clamp(1e-3, 1.0);
    let lambda0 = FWHM_PER_SIGMA / metrics.fwhm;
    let start = template
        .with_eta(0.0)?
        .with_delta_omega_lambda(lambda0)?
        .with_kappa(kappa0, KappaMode::Fitted)?;
    let report = fit_eta(ig, &start, &[FreeParam::Kappa, FreeParam::DeltaOmegaLambda])?;
    report
        .params
        .with_delta_omega_lambda(report.params.delta_omega_lambda())?
        .with_kappa(report.params.kappa(), KappaMode::Fitted)
}

#[derive(Debug, Clone)]
pub struct SeriesInput {
    pub label: String,
    /// mol/L; zero marks the solvent entry.
    pub concentration_molar: f64,
    pub interferogram: Interferogram,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesEntry {
    pub label: String,
    pub concentration_molar: f64,
    pub fit: FitReport,
    /// Visibility (max−min)/(max+min) of the fitted curve (signed if the dip inverted).
    pub visibility: f64,
    pub fwhm_fs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeriesFailure {
    pub label: String,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationSeries {
    pub entries: Vec<SeriesEntry>,
    pub failures: Vec<SeriesFailure>,
    pub warnings: Vec<String>,
}

/// One η-only fit per entry against the shared `baseline` (κ, Δω_Λ and the
/// notch frozen). Entry failures are collected and do not stop the series.
pub fn run_series(baseline: &ClosedFormParams, inputs: &[SeriesInput]) -> Result<ConcentrationSeries> {
    if inputs.is_empty() {
        return Err(Error::InsufficientPoints { required: 1, got: 0 });
    }
    if inputs
        .windows(2)
        .any(|w| !(w[1].concentration_molar > w[0].concentration_molar))
    {
        return Err(Error::InvalidData("concentrations must be strictly increasing".into()));
    }
    if inputs[0].concentration_molar != 0.0 {
        return Err(Error::InvalidData(
            "series needs a solvent entry (concentration 0)".into(),
        ));
    }
    if let Some(bad) = inputs
        .iter()
        .find(|i| i.interferogram.delays() != inputs[0].interferogram.delays())
    {
        log::warn!("entry `{}` uses a different delay grid from the solvent", bad.label);
    }

    let results: Vec<std::result::Result<SeriesEntry, SeriesFailure>> = inputs
        .par_iter()
        .map(|input| {
            let fail = |e: Error| SeriesFailure {
                label: input.label.clone(),
                kind: e.kind(),
                message: e.to_string(),
            };
            let fit = fit_eta(&input.interferogram, baseline, &[FreeParam::Eta]).map_err(fail)?;
            let visibility = match closed_form::predicted_visibility(&fit.params) {
                Ok(v) | Err(Error::NonDipRegime { visibility: v }) => v,
                Err(e) => return Err(fail(e)),
            };
            let fwhm_fs = closed_form::closed_form_fwhm(&fit.params).unwrap_or(f64::NAN);
            Ok(SeriesEntry {
                label: input.label.clone(),
                concentration_molar: input.concentration_molar,
                fit,
                visibility,
                fwhm_fs,
            })
        })
        .collect();

    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(e) => entries.push(e),
            Err(f) => {
                log::warn!("series entry `{}` failed: {}", f.label, f.message);
                failures.push(f);
            }
        }
    }

    let mut warnings = Vec::new();
    for w in entries.windows(2) {
        if w[1].fit.params.eta() < w[0].fit.params.eta() {
            let msg = format!(
                "eta decreases from `{}` ({:.6}) to `{}` ({:.6}) although concentration rises",
                w[0].label,
                w[0].fit.params.eta(),
                w[1].label,
                w[1].fit.params.eta()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    Ok(ConcentrationSeries {
        entries,
        failures,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::closed_form_interferogram;
    use crate::numeric::Source;
    use approx::assert_relative_eq;

    fn baseline() -> ClosedFormParams {
        ClosedFormParams::new(
            0.7578,
            FWHM_PER_SIGMA / 70.0,
            2.3426,
            1.0,
            0.0,
            4.6741,
            0.01,
            KappaMode::Fitted,
        )
        .unwrap()
    }

    fn delays(step: f64) -> Vec<f64> {
        let n = (400.0 / step) as i64;
        (-n..=n).map(|k| k as f64 * step).collect()
    }

    #[test]
    fn free_param_names_roundtrip() {
        for p in FreeParam::ALL {
            assert_eq!(p.name().parse::<FreeParam>().unwrap(), p);
        }
        assert!("gamma".parse::<FreeParam>().is_err());
    }

    #[test]
    fn noiseless_roundtrip() {
        for eta in [0.005, 0.0069, 0.0294, 0.1247, 0.5, 0.9] {
            let truth = baseline().with_eta(eta).unwrap();
            let ig = closed_form_interferogram(&truth, &delays(2.0)).unwrap();
            let report = fit_eta(&ig, &baseline(), &[FreeParam::Eta]).unwrap();
            assert!(
                (report.params.eta() - eta).abs() < 1e-6,
                "{eta}: {}",
                report.params.eta()
            );
            assert!(report.residual_rms < 1e-10);
            assert!(report.ci95.contains_key("eta"));
        }
    }

    #[test]
    fn joint_fit_recovers_all_four() {
        let truth = baseline()
            .with_kappa(0.7, KappaMode::Fitted)
            .unwrap()
            .with_delta_omega_j(0.012)
            .unwrap()
            .with_eta(0.3)
            .unwrap();
        let ig = closed_form_interferogram(&truth, &delays(1.0)).unwrap();
        let start = truth
            .with_kappa(0.5, KappaMode::Fitted)
            .unwrap()
            .with_fitted_widths(0.03, 0.009)
            .unwrap();
        let report = fit_eta(&ig, &start, &FreeParam::ALL).unwrap();
        assert_relative_eq!(report.params.eta(), 0.3, max_relative = 1e-5);
        assert_relative_eq!(report.params.kappa(), 0.7, max_relative = 1e-6);
        assert_relative_eq!(report.params.delta_omega_j(), 0.012, max_relative = 1e-5);
    }

    #[test]
    fn kappa_and_eta_jointly_flagged() {
        // a notch as wide as the photon band makes the two Gaussians coincide
        let p = ClosedFormParams::new(0.7578, 0.0336, 2.337, 1.0, 0.1, 4.674, 1000.0, KappaMode::Fitted).unwrap();
        let ig = closed_form_interferogram(&p, &delays(2.0)).unwrap();
        let report = fit_eta(&ig, &p, &[FreeParam::Eta, FreeParam::Kappa]).unwrap();
        assert!(report.condition_number > IDENTIFIABILITY_LIMIT);
        assert!(!report.warnings.is_empty());
    }

    #[test]
    fn reference_calibration_roundtrip() {
        let truth = baseline()
            .with_kappa(0.74, KappaMode::Fitted)
            .unwrap()
            .with_delta_omega_lambda(0.035)
            .unwrap();
        let ig = closed_form_interferogram(&truth, &delays(2.0)).unwrap();
        let cal = calibrate_reference(&ig, &baseline()).unwrap();
        assert_relative_eq!(cal.kappa(), 0.74, max_relative = 1e-3);
        assert_relative_eq!(cal.delta_omega_lambda(), 0.035, max_relative = 1e-3);
        assert_eq!(cal.eta(), 0.0);
        assert_relative_eq!(
            cal.delta_omega_j(),
            closed_form::joint_bandwidth(cal.delta_omega_lambda(), cal.delta_omega_h()),
            max_relative = 1e-15
        );
    }

    #[test]
    fn calibration_needs_a_dip() {
        let d = delays(2.0);
        let flat = Interferogram::new(d.clone(), vec![1.0; d.len()], true, Source::Measured).unwrap();
        assert!(matches!(
            calibrate_reference(&flat, &baseline()),
            Err(Error::NoDip { .. })
        ));
    }

    #[test]
    fn ci_shrinks_with_sample_count() {
        let truth = baseline().with_eta(0.1247).unwrap();
        let ci = |step: f64| {
            let d = delays(step);
            let ig = closed_form_interferogram(&truth, &d).unwrap();
            let var: Vec<f64> = ig.rates().iter().map(|r| r / 1e4).collect();
            let ig = ig.with_variances(var).unwrap();
            fit_eta(&ig, &baseline(), &[FreeParam::Eta]).unwrap().ci95["eta"]
        };
        let ratio = ci(2.0) / ci(0.5);
        assert!(ratio > 1.0 / 0.55 && ratio < 1.0 / 0.45, "{ratio}");
    }

    #[test]
    fn series_orders_and_reports() {
        let etas = [0.0069, 0.0294, 0.05, 0.1247];
        let inputs: Vec<SeriesInput> = etas
            .iter()
            .enumerate()
            .map(|(k, eta)| SeriesInput {
                label: format!("c{k}"),
                concentration_molar: k as f64 * 0.01,
                interferogram: closed_form_interferogram(&baseline().with_eta(*eta).unwrap(), &delays(2.0)).unwrap(),
            })
            .collect();
        let series = run_series(&baseline(), &inputs).unwrap();
        assert_eq!(series.entries.len(), 4);
        assert!(series.failures.is_empty());
        assert!(series.warnings.is_empty());
        for (e, eta) in series.entries.iter().zip(etas) {
            assert!((e.fit.params.eta() - eta).abs() < 1e-6);
        }
        assert!(series.entries.windows(2).all(|w| w[1].visibility < w[0].visibility));
    }

    #[test]
    fn series_survives_bad_entry_and_flags_order() {
        let d = delays(2.0);
        let good = closed_form_interferogram(&baseline().with_eta(0.1).unwrap(), &d).unwrap();
        let lower = closed_form_interferogram(&baseline().with_eta(0.01).unwrap(), &d).unwrap();
        let raw = Interferogram::new(d.clone(), vec![1.0; d.len()], false, Source::Measured).unwrap();
        let inputs = vec![
            SeriesInput {
                label: "solvent".into(),
                concentration_molar: 0.0,
                interferogram: good,
            },
            SeriesInput {
                label: "broken".into(),
                concentration_molar: 1e-6,
                interferogram: raw,
            },
            SeriesInput {
                label: "low".into(),
                concentration_molar: 1e-3,
                interferogram: lower,
            },
        ];
        let series = run_series(&baseline(), &inputs).unwrap();
        assert_eq!(series.entries.len(), 2);
        assert_eq!(series.failures.len(), 1);
        assert_eq!(series.failures[0].kind, "not_normalized");
        assert_eq!(series.warnings.len(), 1);
    }

    #[test]
    fn solvent_only_series() {
        let ig = closed_form_interferogram(&baseline().with_eta(0.0069).unwrap(), &delays(2.0)).unwrap();
        let inputs = vec![SeriesInput {
            label: "solvent".into(),
            concentration_molar: 0.0,
            interferogram: ig,
        }];
        let series = run_series(&baseline(), &inputs).unwrap();
        assert_eq!(series.entries.len(), 1);
        assert!(series.warnings.is_empty());
    }

    #[test]
    fn series_requires_increasing_concentration() {
        let ig = closed_form_interferogram(&baseline(), &delays(2.0)).unwrap();
        let inputs = vec![
            SeriesInput {
                label: "a".into(),
                concentration_molar: 0.0,
                interferogram: ig.clone(),
            },
            SeriesInput {
                label: "b".into(),
                concentration_molar: 0.0,
                interferogram: ig,
            },
        ];
        assert!(run_series(&baseline(), &inputs).is_err());
    }
}
