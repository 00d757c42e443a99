//! Brute-force HOM coincidence integral and interferogram metrics.
//!
//! The coincidence rate at delay δt is
//!
//! ```text
//! Rc(δt) = K ∬ [ |Ω φ|² − |Ω|² φ(ωs,ωi) φ*(ωi,ωs) e^{−i(ωi−ωs)δt} ] dωs dωi
//! ```
//!
//! with `Ω = α·f(ωs)·f(ωi)·h`. It is evaluated by an iterated composite
//! trapezoid rule on a uniform [`FrequencyGrid`]; `K` is the reciprocal of the
//! direct term so that the long-delay asymptote is exactly one.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lsq::{self, Problem};
use crate::spectral::{BiphotonModel, FrequencyGrid};
use crate::units::FWHM_PER_SIGMA;

/// Samples farther than this fraction of the half delay range from the range
/// midpoint form the long-delay window used for normalisation.
pub const LONG_DELAY_FRACTION: f64 = 0.75;

/// Allowed |Im Rc| relative to the direct term.
pub const IMAGINARY_RESIDUE_BOUND: f64 = 1e-10;

/// Largest allowed change of any rate when the grid is doubled.
pub const REFINEMENT_TOLERANCE: f64 = 1e-4;

const DELAY_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Numeric,
    ClosedForm,
    Measured,
    Synthetic,
}

/// Coincidence rate as a function of delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferogram {
    delays: Vec<f64>,
    rates: Vec<f64>,
    normalized: bool,
    source: Source,
    /// Per-sample variance of `rates`, when known (Poisson counting).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variances: Option<Vec<f64>>,
}

impl Interferogram {
    pub fn new(delays: Vec<f64>, rates: Vec<f64>, normalized: bool, source: Source) -> Result<Self> {
        if delays.len() != rates.len() {
            return Err(Error::InvalidData(format!(
                "{} delays but {} rates",
                delays.len(),
                rates.len()
            )));
        }
        if delays.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidData("delays must be strictly increasing".into()));
        }
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
            return Err(Error::InvalidData(format!("rates must be non-negative, found {r}")));
        }
        Ok(Self {
            delays,
            rates,
            normalized,
            source,
            variances: None,
        })
    }

    pub fn with_variances(mut self, variances: Vec<f64>) -> Result<Self> {
        if variances.len() != self.rates.len() {
            return Err(Error::InvalidData("variance length mismatch".into()));
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidData("variances must be positive and finite".into()));
        }
        self.variances = Some(variances);
        Ok(self)
    }

    /// Normalises raw coincidence counts by the long-delay window mean rate.
    ///
    /// Variances follow Poisson statistics of the counts (a zero count is
    /// treated as one for weighting).
    pub fn from_raw_counts(delays: Vec<f64>, counts: &[f64], durations_s: &[f64], source: Source) -> Result<Self> {
        if counts.len() != delays.len() || durations_s.len() != delays.len() {
            return Err(Error::InvalidData("column length mismatch in raw counts".into()));
        }
        if durations_s.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidData("durations must be positive".into()));
        }
        if counts.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidData("counts must be non-negative".into()));
        }
        let raw_rates: Vec<f64> = counts.iter().zip(durations_s).map(|(c, d)| c / d).collect();
        let window = long_delay_window(&delays);
        if window.is_empty() {
            return Err(Error::InsufficientPoints {
                required: 2,
                got: delays.len(),
            });
        }
        let norm = window.iter().map(|&k| raw_rates[k]).sum::<f64>() / window.len() as f64;
        if !(norm > 0.0) {
            return Err(Error::InvalidData("long-delay window has zero counts".into()));
        }
        let rates = raw_rates.iter().map(|r| r / norm).collect();
        let variances = counts
            .iter()
            .zip(durations_s)
            .map(|(c, d)| c.max(1.0) / (d * norm).powi(2))
            .collect();
        Self::new(delays, rates, true, source)?.with_variances(variances)
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn variances(&self) -> Option<&[f64]> {
        self.variances.as_deref()
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Mean rate over the long-delay window, if the window is non-empty.
    pub fn long_delay_mean(&self) -> Option<f64> {
        let window = long_delay_window(&self.delays);
        if window.is_empty() {
            return None;
        }
        Some(window.iter().map(|&k| self.rates[k]).sum::<f64>() / window.len() as f64)
    }
}

/// Indices of samples in the long-delay window.
pub fn long_delay_window(delays: &[f64]) -> Vec<usize> {
    let (Some(&lo), Some(&hi)) = (delays.first(), delays.last()) else {
        return Vec::new();
    };
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    delays
        .iter()
        .enumerate()
        .filter(|(_, &t)| (t - mid).abs() >= LONG_DELAY_FRACTION * half)
        .map(|(k, _)| k)
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct HomOptions {
    /// Re-evaluate on a grid with twice the points and fail when any rate
    /// moves by more than [`REFINEMENT_TOLERANCE`].
    pub check_refinement: bool,
}

impl Default for HomOptions {
    fn default() -> Self {
        Self { check_refinement: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadratureReport {
    pub n: usize,
    /// Largest |Im Rc| relative to the direct term.
    pub max_imaginary_residue: f64,
    /// Largest |Rc(2n) − Rc(n)|, when the refinement check ran.
    pub max_refinement_change: Option<f64>,
}

/// Smallest n resolving the delay oscillation for the given grid span.
pub fn required_points(grid: &FrequencyGrid, delays: &[f64]) -> usize {
    let max_delay = delays.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let oscillation = (8.0 * grid.half_span() * max_delay / std::f64::consts::PI).ceil() as usize;
    oscillation.max(256)
}

pub fn hom_integral(model: &BiphotonModel, grid: &FrequencyGrid, delays: &[f64]) -> Result<Interferogram> {
    hom_integral_with(model, grid, delays, HomOptions::default()).map(|(ig, _)| ig)
}

pub fn hom_integral_with(
    model: &BiphotonModel,
    grid: &FrequencyGrid,
    delays: &[f64],
    opts: HomOptions,
) -> Result<(Interferogram, QuadratureReport)> {
    let required = required_points(grid, delays);
    if grid.n() < required {
        return Err(Error::GridAliasing { n: grid.n(), required });
    }
    let (rates, residue) = integrate(model, grid, delays)?;
    let mut report = QuadratureReport {
        n: grid.n(),
        max_imaginary_residue: residue,
        max_refinement_change: None,
    };
    if opts.check_refinement {
        let fine = grid.with_points(2 * grid.n())?;
        let (fine_rates, _) = integrate(model, &fine, delays)?;
        let change = rates
            .iter()
            .zip(&fine_rates)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        report.max_refinement_change = Some(change);
        if change > REFINEMENT_TOLERANCE {
            return Err(Error::NonConvergent { max_change: change });
        }
    }
    let ig = Interferogram::new(delays.to_vec(), rates, true, Source::Numeric)?;
    Ok((ig, report))
}

/// Trapezoid evaluation of the normalised rate at every delay.
fn integrate(model: &BiphotonModel, grid: &FrequencyGrid, delays: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = grid.n();
    let w = grid.trapezoid_weights();
    let omega_0 = model.omega_0();
    let pump = model.pump();
    let pm = model.phase_matching();
    let filter = model.filter();
    let sample = model.sample();

    // Row s carries (direct-term row sum, weighted exchange row).
    let rows: Vec<(f64, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let ws = grid.omega_s(s);
            let fs = filter.intensity(ws);
            let mut direct = 0.0;
            let mut exchange = vec![0.0; n];
            for (i, slot) in exchange.iter_mut().enumerate() {
                let wi = grid.omega_i(i);
                let alpha = pump.envelope(ws, wi);
                let omega2 = alpha * alpha * (fs * filter.intensity(wi)) * sample.transfer(ws, wi);
                let phi = pm.amplitude(ws - omega_0, wi - omega_0);
                let phi_swap = pm.amplitude(wi - omega_0, ws - omega_0);
                direct += w[i] * omega2 * phi * phi;
                *slot = w[s] * w[i] * omega2 * phi * phi_swap;
            }
            (w[s] * direct, exchange)
        })
        .collect();

    let direct: f64 = rows.iter().map(|(d, _)| d).sum();
    if !(direct > 0.0) {
        return Err(Error::invalid("grid", "direct term vanishes on this grid"));
    }
    let mut exchange = DMatrix::<f64>::zeros(n, n);
    for (s, (_, row)) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            exchange[(s, i)] = *v;
        }
    }
    drop(rows);

    let offsets: Vec<f64> = (0..n).map(|k| grid.offset(k)).collect();
    let centre_shift = grid.center_s() - grid.center_i();

    let chunks: Vec<Vec<(f64, f64)>> = delays
        .par_chunks(DELAY_CHUNK)
        .map(|chunk| {
            let nd = chunk.len();
            let cos = DMatrix::from_fn(n, nd, |k, d| (offsets[k] * chunk[d]).cos());
            let sin = DMatrix::from_fn(n, nd, |k, d| (offsets[k] * chunk[d]).sin());
            let u = &exchange * &cos;
            let v = &exchange * &sin;
            (0..nd)
                .map(|d| {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for k in 0..n {
                        re += cos[(k, d)] * u[(k, d)] + sin[(k, d)] * v[(k, d)];
                        im += sin[(k, d)] * u[(k, d)] - cos[(k, d)] * v[(k, d)];
                    }
                    let (sg, cg) = (centre_shift * chunk[d]).sin_cos();
                    (re * cg - im * sg, re * sg + im * cg)
                })
                .collect()
        })
        .collect();

    let mut rates = Vec::with_capacity(delays.len());
    let mut residue = 0.0f64;
    for (re, im) in chunks.into_iter().flatten() {
        let r = im.abs() / direct;
        residue = residue.max(r);
        let mut rate = (direct - re) / direct;
        // a perfect dip can round to a tiny negative value
        if rate < 0.0 && rate > -1e-12 {
            rate = 0.0;
        }
        rates.push(rate);
    }
    if residue > IMAGINARY_RESIDUE_BOUND {
        return Err(Error::ImaginaryResidue { residue });
    }
    Ok((rates, residue))
}

/// Visibility and width of a HOM dip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipMetrics {
    pub visibility: f64,
    pub fwhm: f64,
    pub min_delay: f64,
    pub min_rate: f64,
    pub max_rate: f64,
}

/// V = (max − min)/(max + min).
pub fn visibility(max: f64, min: f64) -> f64 {
    (max - min) / (max + min)
}

pub fn dip_metrics(ig: &Interferogram) -> Result<DipMetrics> {
    if !ig.normalized() {
        return Err(Error::NotNormalized);
    }
    let t = ig.delays();
    let r = ig.rates();
    let n = r.len();
    if n < 7 {
        return Err(Error::InsufficientPoints { required: 7, got: n });
    }
    let i_min = (0..n).fold(0, |best, k| if r[k] < r[best] { k } else { best });
    let window = long_delay_window(t);
    let mut max_rate = window.iter().map(|&k| r[k]).sum::<f64>() / window.len() as f64;
    if r[i_min] >= 0.98 * max_rate {
        return Err(Error::NoDip {
            min: r[i_min],
            max: max_rate,
        });
    }
    if i_min < 2 || i_min + 3 > n {
        return Err(Error::EdgeDip { index: i_min });
    }
    let (min_delay, min_rate) = quadratic_minimum(t, r, i_min);
    if min_rate >= 0.98 * max_rate {
        return Err(Error::NoDip {
            min: min_rate,
            max: max_rate,
        });
    }
    let mut fwhm = half_depth_width(t, r, i_min, 0.5 * (max_rate + min_rate))?;

    // re-estimate the baseline beyond three widths of the dip
    let far: Vec<f64> = t
        .iter()
        .zip(r)
        .filter(|(tk, _)| (**tk - min_delay).abs() > 3.0 * fwhm)
        .map(|(_, rk)| *rk)
        .collect();
    if far.len() >= 2 {
        max_rate = far.iter().sum::<f64>() / far.len() as f64;
        if min_rate >= 0.98 * max_rate {
            return Err(Error::NoDip {
                min: min_rate,
                max: max_rate,
            });
        }
        fwhm = half_depth_width(t, r, i_min, 0.5 * (max_rate + min_rate))?;
    }

    Ok(DipMetrics {
        visibility: visibility(max_rate, min_rate),
        fwhm,
        min_delay,
        min_rate,
        max_rate,
    })
}

/// Vertex of the least-squares parabola through the five lowest samples;
/// falls back to the lowest sample when the fit has no interior minimum.
fn quadratic_minimum(t: &[f64], r: &[f64], i_min: usize) -> (f64, f64) {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    idx.sort_by(|&a, &b| r[a].total_cmp(&r[b]).then(a.cmp(&b)));
    idx.truncate(5);
    let t0 = t[i_min];
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for &k in &idx {
        let x = t[k] - t0;
        let row = nalgebra::Vector3::new(1.0, x, x * x);
        ata += row * row.transpose();
        atb += row * r[k];
    }
    let fallback = (t0, r[i_min]);
    let Some(c) = ata.lu().solve(&atb) else {
        return fallback;
    };
    if !(c[2] > 0.0) {
        return fallback;
    }
    let x = -c[1] / (2.0 * c[2]);
    let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
        (lo.min(t[k] - t0), hi.max(t[k] - t0))
    });
    if x < lo || x > hi {
        return fallback;
    }
    (t0 + x, c[0] + c[1] * x + c[2] * x * x)
}

/// Distance between the half-depth crossings on either side of `i_min`.
///
/// Each side walks outward while the rate stays at or below `level`, so a
/// plateau sitting exactly on the level resolves to its outer end.
fn half_depth_width(t: &[f64], r: &[f64], i_min: usize, level: f64) -> Result<f64> {
    let n = r.len();
    let mut k = i_min;
    while k + 1 < n && r[k + 1] <= level {
        k += 1;
    }
    if k + 1 >= n {
        return Err(Error::EdgeDip { index: i_min });
    }
    let right = t[k] + (level - r[k]) / (r[k + 1] - r[k]) * (t[k + 1] - t[k]);
    let mut k = i_min;
    while k > 0 && r[k - 1] <= level {
        k -= 1;
    }
    if k == 0 {
        return Err(Error::EdgeDip { index: i_min });
    }
    let left = t[k] - (level - r[k]) / (r[k - 1] - r[k]) * (t[k] - t[k - 1]);
    Ok(right - left)
}

/// Single Gaussian plus offset, `amplitude·exp(−(t−center)²/(2σ²)) + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub offset: f64,
    /// `None` when the amplitude is zero and the width is undefined.
    pub fwhm: Option<f64>,
    pub residual_norm: f64,
}

/// Delay-resolved ETPA signal (R_sol − R_sam)/R_sol with its Gaussian fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtpaSignal {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: GaussianFit,
}

pub fn etpa_signal(sol: &Interferogram, sam: &Interferogram) -> Result<EtpaSignal> {
    if sol.delays() != sam.delays() {
        return Err(Error::GridMismatch);
    }
    if sol.normalized() != sam.normalized() {
        return Err(Error::NotNormalized);
    }
    if let Some(r) = sol.rates().iter().find(|r| !(**r > 0.0)) {
        return Err(Error::InvalidData(format!("solvent rate {r} cannot divide")));
    }
    let values: Vec<f64> = sol.rates().iter().zip(sam.rates()).map(|(s, m)| (s - m) / s).collect();
    let fit = fit_gaussian(sol.delays(), &values)?;
    Ok(EtpaSignal {
        delays: sol.delays().to_vec(),
        values,
        fit,
    })
}

struct GaussianProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
    min_sigma: f64,
}

impl Problem for GaussianProblem<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.t.len()
    }

    fn evaluate(&self, p: &[f64], res: &mut [f64], jac: &mut [f64]) {
        let (a, c, s, off) = (p[0], p[1], p[2], p[3]);
        for (k, (&t, &y)) in self.t.iter().zip(self.y).enumerate() {
            let x = t - c;
            let e = (-x * x / (2.0 * s * s)).exp();
            res[k] = a * e + off - y;
            jac[4 * k] = e;
            jac[4 * k + 1] = a * e * x / (s * s);
            jac[4 * k + 2] = a * e * x * x / (s * s * s);
            jac[4 * k + 3] = 1.0;
        }
    }

    fn project(&self, p: &mut [f64]) {
        p[2] = p[2].abs().max(self.min_sigma);
    }
}

/// Least-squares single-Gaussian fit; fails with `FitDiverged` when the
/// residual norm exceeds 10% of the signal norm.
pub fn fit_gaussian(t: &[f64], y: &[f64]) -> Result<GaussianFit> {
    if t.len() != y.len() {
        return Err(Error::GridMismatch);
    }
    if t.len() < 5 {
        return Err(Error::InsufficientPoints {
            required: 5,
            got: t.len(),
        });
    }
    let signal_norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if signal_norm == 0.0 {
        return Ok(GaussianFit {
            amplitude: 0.0,
            center: 0.0,
            sigma: 0.0,
            offset: 0.0,
            fwhm: None,
            residual_norm: 0.0,
        });
    }

    let window = long_delay_window(t);
    let offset = if window.is_empty() {
        0.0
    } else {
        window.iter().map(|&k| y[k]).sum::<f64>() / window.len() as f64
    };
    let k_peak = (0..y.len()).fold(0, |best, k| {
        if (y[k] - offset).abs() > (y[best] - offset).abs() {
            k
        } else {
            best
        }
    });
    let amplitude = y[k_peak] - offset;
    let half = 0.5 * amplitude.abs();
    let mut hi = k_peak;
    while hi + 1 < y.len() && (y[hi] - offset).abs() > half {
        hi += 1;
    }
    let mut lo = k_peak;
    while lo > 0 && (y[lo] - offset).abs() > half {
        lo -= 1;
    }
    let span = t[t.len() - 1] - t[0];
    let width = (t[hi] - t[lo]).max(span / t.len() as f64);
    let start = [amplitude, t[k_peak], width / FWHM_PER_SIGMA, offset];

    let min_sigma = 1e-6 * span / t.len() as f64;
    let problem = GaussianProblem { t, y, min_sigma };
    let sol = lsq::minimize(&problem, &start, lsq::Options::default());
    let residual_norm = (2.0 * sol.cost).sqrt();
    if residual_norm > 0.1 * signal_norm {
        return Err(Error::FitDiverged {
            residual: residual_norm,
            signal: signal_norm,
        });
    }
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
        });
    }
    let p = &sol.params;
    Ok(GaussianFit {
        amplitude: p[0],
        center: p[1],
        sigma: p[2],
        offset: p[3],
        fwhm: Some(FWHM_PER_SIGMA * p[2]),
        residual_norm,
    })
}
