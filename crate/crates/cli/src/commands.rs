use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use etpa_hom::closed_form::{
    closed_form_fwhm, closed_form_interferogram, derive_params, derive_params_fitted, predicted_visibility,
    ClosedFormParams,
};
use etpa_hom::config::{ModelConfig, NumericConfig, SampleConfig, DEFAULT_NOTCH_SIGMA};
use etpa_hom::inference::{calibrate_reference, fit_eta, run_series, FreeParam};
use etpa_hom::io;
use etpa_hom::numeric::{dip_metrics, hom_integral_with, DipMetrics, HomOptions, QuadratureReport, Source};
use etpa_hom::spectral::{jsi, FrequencyGrid};
use etpa_hom::synth::{
    measured_powers, synth_interferogram, synth_power_sweep, synth_power_sweep_from_slopes, Forward, NoiseSpec,
    ScenarioSpec, SweepScenario, SynthTruth,
};
use etpa_hom::transmittance::{
    cross_section, fit_slope, loss_correct, CrossSectionResult, DelayChannel, GeometrySpec, OffsetMode, SlopeFit,
};
use etpa_hom::units::Bandwidth;
use etpa_hom::validation::{default_battery, run_battery};

use crate::{Cli, Command, ForwardArg, GlobalArgs, KappaArg, OffsetArg, SynthKind};

/// Raised by `validate` when the battery exceeds its tolerance.
#[derive(Debug)]
pub struct ValidationFailed {
    pub max_deviation: f64,
    pub undefined_cases: usize,
    pub tolerance: f64,
}

impl fmt::Display for ValidationFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "max |numeric - closed form| = {:.3e} (tolerance {:.0e}); closed form undefined for {} case(s)",
            self.max_deviation, self.tolerance, self.undefined_cases
        )
    }
}

impl std::error::Error for ValidationFailed {}

/// Config after flag overrides, plus the provenance header for CSV outputs.
struct Effective {
    config: Option<ModelConfig>,
    numeric: NumericConfig,
    header: String,
}

impl Effective {
    fn load(global: &GlobalArgs, command: &str) -> Result<Self> {
        let mut config = match &global.config {
            Some(p) => Some(ModelConfig::from_path(p).with_context(|| format!("reading config {}", p.display()))?),
            None => None,
        };
        let mut numeric = config.as_ref().map(|c| c.numeric).unwrap_or_default();
        if let Some(n) = global.grid_n {
            numeric.grid_n = n;
        }
        if let Some(v) = global.delay_min_fs {
            numeric.delay_min_fs = v;
        }
        if let Some(v) = global.delay_max_fs {
            numeric.delay_max_fs = v;
        }
        if let Some(v) = global.delay_step_fs {
            numeric.delay_step_fs = v;
        }
        if let Some(cfg) = config.as_mut() {
            cfg.numeric = numeric;
            if let Some(eta) = global.eta {
                let sample = cfg.sample.get_or_insert(SampleConfig {
                    eta: 0.0,
                    lambda_h_nm: None,
                    omega_h_radfs: None,
                    width: Bandwidth::SigmaRadfs(DEFAULT_NOTCH_SIGMA),
                });
                sample.eta = eta;
            }
            if let (Some(seed), Some(noise)) = (global.seed, cfg.noise.as_mut()) {
                noise.seed = seed;
            }
        }
        let hash = match &config {
            Some(c) => hex::encode(Sha256::digest(serde_json::to_vec(c)?)),
            None => "none".to_string(),
        };
        Ok(Self {
            config,
            numeric,
            header: format!("etpa-hom {command} config-sha256={hash}"),
        })
    }

    fn config(&self) -> Result<&ModelConfig> {
        match &self.config {
            Some(c) => Ok(c),
            None => bail!(etpa_hom::Error::InvalidData("this command needs --config".into())),
        }
    }

    fn header(&self) -> Option<&str> {
        Some(&self.header)
    }
}

fn write_csv<F>(path: &Path, f: F) -> Result<()>
where
    F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> etpa_hom::Result<()>,
{
    io::with_file(path, f).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_csv(path, |w| io::write_json(w, value))
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    io::write_json(std::io::stdout().lock(), value)?;
    Ok(())
}

fn sidecar(out: &Path, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        let mut name = out.as_os_str().to_owned();
        name.push(".truth.json");
        PathBuf::from(name)
    })
}

fn read_input(path: &Path) -> Result<etpa_hom::numeric::Interferogram> {
    io::read_interferogram_path(path, Source::Measured).with_context(|| format!("reading {}", path.display()))
}

/// Closed-form template from the config, optionally calibrated on an η = 0
/// reference measurement.
fn template(eff: &Effective, reference: &Option<PathBuf>) -> Result<ClosedFormParams> {
    let params = derive_params(&eff.config()?.model()?)?;
    match reference {
        Some(p) => Ok(calibrate_reference(&read_input(p)?, &params)?),
        None => Ok(params),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::ClosedForm { .. } => "closed-form",
        Command::Fit { .. } => "fit",
        Command::Series { .. } => "series",
        Command::Transmittance { .. } => "transmittance",
        Command::Synth { .. } => "synth",
        Command::Validate { .. } => "validate",
    };
    let eff = Effective::load(&cli.global, name)?;
    match &cli.command {
        Command::Simulate {
            out,
            jsi_out,
            no_refinement,
        } => simulate(&eff, out, jsi_out.as_deref(), !no_refinement),
        Command::ClosedForm {
            out,
            params_out,
            kappa_mode,
        } => closed_form(&eff, out, params_out.as_deref(), *kappa_mode),
        Command::Fit {
            input,
            out,
            free,
            reference,
        } => fit(&eff, input, out, free, reference),
        Command::Series {
            manifest,
            out,
            json_out,
            reference,
        } => series(&eff, manifest, out, json_out.as_deref(), reference),
        Command::Transmittance {
            input,
            out,
            no_loss_correct,
            offset_mode,
            concentration_molar,
            length_cm,
            spot_diameter_um,
        } => {
            let geometry = geometry(&eff, *concentration_molar, *length_cm, *spot_diameter_um)?;
            let mode = match offset_mode {
                OffsetArg::PerPoint => OffsetMode::PerPoint,
                OffsetArg::GlobalMean => OffsetMode::GlobalMean,
            };
            transmittance(input, out, !no_loss_correct, mode, &geometry)
        }
        Command::Synth { kind } => synth(&eff, &cli.global, kind),
        Command::Validate { out, no_refinement } => validate(&eff, out.as_deref(), !no_refinement),
    }
}

#[derive(Serialize)]
struct SimulateSummary {
    quadrature: QuadratureReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    dip: Option<DipMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dip_error: Option<String>,
}

fn simulate(eff: &Effective, out: &Path, jsi_out: Option<&Path>, refine: bool) -> Result<()> {
    let model = eff.config()?.model()?;
    let grid = FrequencyGrid::for_model(&model, eff.numeric.grid_n)?;
    let delays = eff.numeric.delays()?;
    let (ig, quadrature) = hom_integral_with(
        &model,
        &grid,
        &delays,
        HomOptions {
            check_refinement: refine,
        },
    )?;
    write_csv(out, |w| io::write_interferogram(w, &ig, eff.header()))?;
    if let Some(path) = jsi_out {
        let j = jsi(&model, &grid);
        write_csv(path, |w| io::write_jsi(w, &j, eff.header()))?;
    }
    let (dip, dip_error) = match dip_metrics(&ig) {
        Ok(d) => (Some(d), None),
        Err(e) => (None, Some(e.to_string())),
    };
    print_json(&SimulateSummary {
        quadrature,
        dip,
        dip_error,
    })
}

#[derive(Serialize)]
struct ClosedFormSummary<'a> {
    params: &'a ClosedFormParams,
    visibility: Option<f64>,
    fwhm_fs: Option<f64>,
}

fn closed_form(eff: &Effective, out: &Path, params_out: Option<&Path>, mode: KappaArg) -> Result<()> {
    let model = eff.config()?.model()?;
    let delays = eff.numeric.delays()?;
    let params = match mode {
        KappaArg::Derived => derive_params(&model)?,
        KappaArg::Fitted => derive_params_fitted(&model, eff.numeric.grid_n, &delays)?,
    };
    let ig = closed_form_interferogram(&params, &delays)?;
    write_csv(out, |w| io::write_interferogram(w, &ig, eff.header()))?;
    if let Some(p) = params_out {
        write_json(p, &params)?;
    }
    print_json(&ClosedFormSummary {
        params: &params,
        visibility: predicted_visibility(&params).ok(),
        fwhm_fs: closed_form_fwhm(&params).ok(),
    })
}

fn fit(eff: &Effective, input: &Path, out: &Path, free: &[String], reference: &Option<PathBuf>) -> Result<()> {
    let free: Vec<FreeParam> = free.iter().map(|s| s.trim().parse()).collect::<etpa_hom::Result<_>>()?;
    let start = template(eff, reference)?;
    let report = fit_eta(&read_input(input)?, &start, &free)?;
    write_json(out, &report)?;
    print_json(&serde_json::json!({
        "eta": report.params.eta(),
        "eta_ci95": report.ci95.get("eta"),
        "residual_rms": report.residual_rms,
        "converged": report.converged,
    }))
}

fn series(
    eff: &Effective,
    manifest: &Path,
    out: &Path,
    json_out: Option<&Path>,
    reference: &Option<PathBuf>,
) -> Result<()> {
    let baseline = template(eff, reference)?;
    let inputs = io::read_series_manifest_path(manifest, Source::Measured)
        .with_context(|| format!("reading manifest {}", manifest.display()))?;
    let result = run_series(&baseline, &inputs)?;
    write_csv(out, |w| io::write_series_table(w, &result, eff.header()))?;
    if let Some(p) = json_out {
        write_json(p, &result)?;
    }
    print_json(&serde_json::json!({
        "entries": result.entries.len(),
        "failures": result.failures,
        "warnings": result.warnings,
    }))
}

fn geometry(
    eff: &Effective,
    concentration: Option<f64>,
    length: Option<f64>,
    spot: Option<f64>,
) -> Result<GeometrySpec> {
    let from_config = match &eff.config {
        Some(c) => c
            .geometry
            .map(|g| (g.concentration_molar, g.length_cm, g.spot_diameter_um)),
        None => None,
    };
    let pick = |flag: Option<f64>, cfg: Option<f64>, name: &str| {
        flag.or(cfg).ok_or_else(|| {
            etpa_hom::Error::InvalidData(format!("geometry needs --{name} or a config geometry section"))
        })
    };
    Ok(GeometrySpec::new(
        pick(concentration, from_config.map(|g| g.0), "concentration-molar")?,
        pick(length, from_config.map(|g| g.1), "length-cm")?,
        pick(spot, from_config.map(|g| g.2), "spot-diameter-um")?,
    )?)
}

#[derive(Serialize)]
struct ChannelResult {
    channel: DelayChannel,
    #[serde(skip_serializing_if = "Option::is_none")]
    slope_fit: Option<SlopeFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cross_section: Option<CrossSectionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<serde_json::Value>,
}

#[derive(Serialize)]
struct TransmittanceOutput {
    loss_corrected: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    offsets: Option<Vec<f64>>,
    warnings: Vec<String>,
    geometry: GeometrySpec,
    channels: Vec<ChannelResult>,
}

fn transmittance(input: &Path, out: &Path, correct: bool, mode: OffsetMode, geometry: &GeometrySpec) -> Result<()> {
    let raw = io::read_sweep_path(input).with_context(|| format!("reading {}", input.display()))?;
    let (sweep, offsets, warnings) = if correct {
        let c = loss_correct(&raw, mode)?;
        (c.sweep, Some(c.offsets), c.warnings)
    } else {
        (raw, None, Vec::new())
    };
    let mut channels = Vec::new();
    for channel in [DelayChannel::Zero, DelayChannel::Delayed] {
        let fit = fit_slope(&sweep, channel)?;
        let (cs, error) = match cross_section(&fit, geometry) {
            Ok(cs) => (Some(cs), None),
            Err(e) => (
                None,
                Some(serde_json::json!({ "error": e.kind(), "message": e.to_string() })),
            ),
        };
        channels.push(ChannelResult {
            channel,
            slope_fit: Some(fit),
            cross_section: cs,
            error,
        });
    }
    let output = TransmittanceOutput {
        loss_corrected: correct,
        offsets,
        warnings,
        geometry: *geometry,
        channels,
    };
    write_json(out, &output)?;
    let summary: Vec<_> = output
        .channels
        .iter()
        .map(|c| serde_json::json!({ "channel": c.channel, "sigma_e": c.cross_section.map(|x| x.sigma_e) }))
        .collect();
    print_json(&summary)
}

fn noise_spec(
    eff: &Effective,
    global: &GlobalArgs,
    peak: Option<f64>,
    background: Option<f64>,
    bin: Option<f64>,
) -> Result<NoiseSpec> {
    let base = eff.config.as_ref().and_then(|c| c.noise);
    let mut noise = match (base, peak) {
        (Some(n), _) => n,
        (None, Some(p)) => NoiseSpec::new(p, 0.0, 0)?,
        (None, None) => bail!(etpa_hom::Error::InvalidData(
            "synthetic counts need a noise section in the config or --peak-rate".into()
        )),
    };
    if let Some(p) = peak {
        noise.peak_rate = p;
    }
    if let Some(b) = background {
        noise.background_rate = b;
    }
    if let Some(b) = bin {
        noise = noise.with_bin_seconds(b)?;
    }
    if let Some(s) = global.seed {
        noise.seed = s;
    }
    noise.validate()?;
    Ok(noise)
}

fn synth(eff: &Effective, global: &GlobalArgs, kind: &SynthKind) -> Result<()> {
    match kind {
        SynthKind::Hom {
            out,
            truth_out,
            forward,
            peak_rate,
            background_rate,
            bin_seconds,
            loss,
        } => {
            let model = eff.config()?.model()?;
            let forward = match forward {
                ForwardArg::ClosedForm => Forward::ClosedForm {
                    params: derive_params(&model)?,
                },
                ForwardArg::Quadrature => Forward::Quadrature {
                    model,
                    n: eff.numeric.grid_n,
                },
            };
            let scenario = ScenarioSpec {
                forward,
                noise: noise_spec(eff, global, *peak_rate, *background_rate, *bin_seconds)?,
                linear_loss_sample: *loss,
                delays: eff.numeric.delays()?,
            };
            let raw = synth_interferogram(&scenario)?;
            write_csv(out, |w| io::write_raw_counts(w, &raw, eff.header()))?;
            let truth = SynthTruth {
                generator: "synth_interferogram",
                scenario: &scenario,
                eta: Some(model_eta(&scenario.forward)),
                eta_pair: None,
                slopes: None,
            };
            write_json(&sidecar(out, truth_out), &truth)
        }
        SynthKind::Sweep {
            out,
            truth_out,
            slopes,
            eta_solvent,
            eta_sample,
            loss,
            rate_per_mw,
            points,
            delayed_fs,
            noisy,
        } => {
            let noise = if *noisy {
                Some(noise_spec(eff, global, None, None, None)?)
            } else {
                None
            };
            let scenario = SweepScenario {
                powers_mw: measured_powers(*points),
                rate_per_mw: *rate_per_mw,
                delayed_fs: *delayed_fs,
                loss: *loss,
                noise,
            };
            let (sweep, truth) = match slopes {
                Some(m) => {
                    let m = [m[0], m[1]];
                    let solvent = match &eff.config {
                        Some(c) => {
                            let p = derive_params(&c.model()?)?.with_eta(*eta_solvent)?;
                            [p.rate(0.0), p.rate(*delayed_fs)]
                        }
                        None => [1.0, 1.0],
                    };
                    let sweep = synth_power_sweep_from_slopes(&scenario, solvent, m)?;
                    let truth = SynthTruth {
                        generator: "synth_power_sweep_from_slopes",
                        scenario: &scenario,
                        eta: None,
                        eta_pair: None,
                        slopes: Some(m),
                    };
                    (sweep, serde_json::to_value(truth)?)
                }
                None => {
                    let params = derive_params(&eff.config()?.model()?)?;
                    let pair = (*eta_solvent, *eta_sample);
                    let sweep = synth_power_sweep(&scenario, &params, pair)?;
                    let truth = SynthTruth {
                        generator: "synth_power_sweep",
                        scenario: &scenario,
                        eta: None,
                        eta_pair: Some(pair),
                        slopes: None,
                    };
                    (sweep, serde_json::to_value(truth)?)
                }
            };
            write_csv(out, |w| io::write_sweep(w, &sweep, eff.header()))?;
            write_json(&sidecar(out, truth_out), &truth)
        }
    }
}

fn model_eta(forward: &Forward) -> f64 {
    match forward {
        Forward::ClosedForm { params } => params.eta(),
        Forward::Quadrature { model, .. } => model.sample().eta(),
    }
}

fn validate(eff: &Effective, out: Option<&Path>, refine: bool) -> Result<()> {
    let delays = eff.numeric.delays()?;
    let report = run_battery(&default_battery(), eff.numeric.grid_n, &delays, refine)?;
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    println!(
        "cases={} n={} max|numeric-closed_form|={:.3e} undefined_closed_form={} tolerance={:.0e} max|numeric-reduction|={:.3e} max_refinement_change={} elapsed_s={:.2}",
        report.cases.len(),
        report.n,
        report.max_closed_form_deviation,
        report.undefined_cases,
        report.tolerance,
        report.max_reduction_deviation,
        report
            .max_refinement_change
            .map_or("skipped".to_string(), |c| format!("{c:.3e}")),
        report.elapsed_s,
    );
    if !report.passed {
        return Err(ValidationFailed {
            max_deviation: report.max_closed_form_deviation,
            undefined_cases: report.undefined_cases,
            tolerance: report.tolerance,
        }
        .into());
    }
    Ok(())
}
