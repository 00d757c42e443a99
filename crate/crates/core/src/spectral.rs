//! Biphoton parameter types and the component spectral functions.
//!
//! The joint spectral amplitude of a filtered Type-II pair after the sample is
//! the product `α(ωs,ωi)·φ(νs,νi)·f(ωs)·f(ωi)·h(ωs,ωi)`. The filter and the
//! sample are specified by their intensity profiles `F = |f|²`, `H = |h|²`; the
//! amplitude factors are their square roots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::Gaussian2;

/// Narrowest accepted sample notch width, rad/fs.
pub const MIN_NOTCH_WIDTH: f64 = 1e-6;

/// Default sinc-to-Gaussian constant of the phase-matching approximation.
pub const DEFAULT_GAMMA: f64 = 0.19;

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

/// CW pump spectrum: centre `omega_p` and Gaussian width `delta_omega_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpSpec {
    omega_p: f64,
    delta_omega_p: f64,
}

impl PumpSpec {
    pub fn new(omega_p: f64, delta_omega_p: f64) -> Result<Self> {
        require_positive("omega_p", omega_p)?;
        require_positive("delta_omega_p", delta_omega_p)?;
        Ok(Self { omega_p, delta_omega_p })
    }

    pub fn omega_p(&self) -> f64 {
        self.omega_p
    }

    pub fn delta_omega_p(&self) -> f64 {
        self.delta_omega_p
    }

    /// α(ωs, ωi) = exp(−(ωs+ωi−ωp)²/(2Δωp²)).
    pub fn envelope(&self, omega_s: f64, omega_i: f64) -> f64 {
        let d = omega_s + omega_i - self.omega_p;
        (-d * d / (2.0 * self.delta_omega_p * self.delta_omega_p)).exp()
    }
}

/// Gaussian-approximated Type-II phase matching.
///
/// `tau_s`, `tau_i` are the group-delay mismatches of signal and idler against
/// the pump (fs). The derived constants are `P = γτs²/4`, `Q = γτi²/4` and
/// `R = γτsτi/4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMatchSpec {
    tau_s: f64,
    tau_i: f64,
    gamma: f64,
}

impl PhaseMatchSpec {
    pub fn new(tau_s: f64, tau_i: f64, gamma: f64) -> Result<Self> {
        if !tau_s.is_finite() || !tau_i.is_finite() {
            return Err(Error::invalid("tau", "group delays must be finite"));
        }
        require_positive("gamma", gamma)?;
        Ok(Self { tau_s, tau_i, gamma })
    }

    pub fn tau_s(&self) -> f64 {
        self.tau_s
    }

    pub fn tau_i(&self) -> f64 {
        self.tau_i
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self) -> f64 {
        self.gamma * self.tau_s * self.tau_s / 4.0
    }

    pub fn q(&self) -> f64 {
        self.gamma * self.tau_i * self.tau_i / 4.0
    }

    pub fn r(&self) -> f64 {
        self.gamma * self.tau_s * self.tau_i / 4.0
    }

    pub fn is_asymmetric(&self) -> bool {
        self.tau_s != self.tau_i
    }

    /// exp(−(Pνs² + Qνi² + 2Rνsνi)).
    pub fn amplitude(&self, nu_s: f64, nu_i: f64) -> f64 {
        (-(self.p() * nu_s * nu_s + self.q() * nu_i * nu_i + 2.0 * self.r() * (nu_s * nu_i))).exp()
    }

    /// exp(−γ(τsνs + τiνi)²/4); algebraically identical to [`Self::amplitude`].
    pub fn amplitude_squared_sum(&self, nu_s: f64, nu_i: f64) -> f64 {
        let x = self.tau_s * nu_s + self.tau_i * nu_i;
        (-self.gamma * x * x / 4.0).exp()
    }
}

/// Gaussian bandpass filter applied identically to both photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    omega_f: f64,
    delta_omega_f: f64,
}

impl FilterSpec {
    pub fn new(omega_f: f64, delta_omega_f: f64) -> Result<Self> {
        require_positive("omega_F", omega_f)?;
        require_positive("delta_omega_F", delta_omega_f)?;
        Ok(Self { omega_f, delta_omega_f })
    }

    pub fn omega_f(&self) -> f64 {
        self.omega_f
    }

    pub fn delta_omega_f(&self) -> f64 {
        self.delta_omega_f
    }

    /// F(ω) = exp(−(ω−ωF)²/(2ΔωF²)).
    pub fn intensity(&self, omega: f64) -> f64 {
        let d = omega - self.omega_f;
        (-d * d / (2.0 * self.delta_omega_f * self.delta_omega_f)).exp()
    }

    /// f(ω) = √F(ω).
    pub fn amplitude(&self, omega: f64) -> f64 {
        let d = omega - self.omega_f;
        (-d * d / (4.0 * self.delta_omega_f * self.delta_omega_f)).exp()
    }
}

/// Gaussian "notch" removing spectral weight where ωs+ωi matches the two-photon
/// transition `omega_h` (a sum frequency, ≈ ωp on resonance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    eta: f64,
    omega_h: f64,
    delta_omega_h: f64,
}

impl SampleSpec {
    pub fn new(eta: f64, omega_h: f64, delta_omega_h: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::invalid("eta", format!("must lie in [0, 1], got {eta}")));
        }
        if !omega_h.is_finite() {
            return Err(Error::invalid("omega_H", "must be finite"));
        }
        if !(delta_omega_h.is_finite() && delta_omega_h >= MIN_NOTCH_WIDTH) {
            return Err(Error::invalid(
                "delta_omega_H",
                format!("must be >= {MIN_NOTCH_WIDTH:e} rad/fs, got {delta_omega_h}"),
            ));
        }
        Ok(Self {
            eta,
            omega_h,
            delta_omega_h,
        })
    }

    /// A transparent sample (η = 0) with the notch parked at `omega_h`.
    pub fn transparent(omega_h: f64, delta_omega_h: f64) -> Result<Self> {
        Self::new(0.0, omega_h, delta_omega_h)
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn omega_h(&self) -> f64 {
        self.omega_h
    }

    pub fn delta_omega_h(&self) -> f64 {
        self.delta_omega_h
    }

    pub fn with_eta(self, eta: f64) -> Result<Self> {
        Self::new(eta, self.omega_h, self.delta_omega_h)
    }

    /// H(ωs, ωi) = 1 − η·exp(−(ωs+ωi−ωH)²/(2ΔωH²)).
    pub fn transfer(&self, omega_s: f64, omega_i: f64) -> f64 {
        let d = omega_s + omega_i - self.omega_h;
        1.0 - self.eta * (-d * d / (2.0 * self.delta_omega_h * self.delta_omega_h)).exp()
    }

    pub fn amplitude(&self, omega_s: f64, omega_i: f64) -> f64 {
        self.transfer(omega_s, omega_i).max(0.0).sqrt()
    }
}

/// Complete parameter record of the filtered, absorbed biphoton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiphotonModel {
    pump: PumpSpec,
    pm: PhaseMatchSpec,
    filter: FilterSpec,
    sample: SampleSpec,
    omega_0: f64,
    /// Intrinsic (unfiltered) single-photon bandwidth; infinite when the
    /// phase matching does not bound the difference frequency (τs = τi).
    delta_omega_0: f64,
}

impl BiphotonModel {
    pub fn new(pump: PumpSpec, pm: PhaseMatchSpec, filter: FilterSpec, sample: SampleSpec) -> Self {
        let omega_0 = pump.omega_p / 2.0;
        let delta_omega_0 = intrinsic_bandwidth(&pump, &pm);
        Self {
            pump,
            pm,
            filter,
            sample,
            omega_0,
            delta_omega_0,
        }
    }

    pub fn pump(&self) -> &PumpSpec {
        &self.pump
    }

    pub fn phase_matching(&self) -> &PhaseMatchSpec {
        &self.pm
    }

    pub fn filter(&self) -> &FilterSpec {
        &self.filter
    }

    pub fn sample(&self) -> &SampleSpec {
        &self.sample
    }

    pub fn omega_0(&self) -> f64 {
        self.omega_0
    }

    pub fn delta_omega_0(&self) -> f64 {
        self.delta_omega_0
    }

    pub fn with_sample(&self, sample: SampleSpec) -> Self {
        Self::new(self.pump, self.pm, self.filter, sample)
    }

    pub fn with_filter(&self, filter: FilterSpec) -> Self {
        Self::new(self.pump, self.pm, filter, self.sample)
    }

    pub fn with_phase_matching(&self, pm: PhaseMatchSpec) -> Self {
        Self::new(self.pump, pm, self.filter, self.sample)
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        Ok(self.with_sample(self.sample.with_eta(eta)?))
    }

    /// Quadratic form of |α|²·F(ωs)·F(ωi)·|φ|² in detunings (νs, νi), i.e.
    /// the direct (delay-independent) HOM integrand without the sample.
    pub fn filtered_intensity_form(&self) -> Gaussian2 {
        let c = self.filter.omega_f - self.omega_0;
        let sf2 = self.filter.delta_omega_f * self.filter.delta_omega_f;
        let sp2 = self.pump.delta_omega_p * self.pump.delta_omega_p;
        Gaussian2::new()
            .with_term(1.0 / sp2, [1.0, 1.0], self.pump.omega_p - 2.0 * self.omega_0)
            .with_term(1.0 / (2.0 * sf2), [1.0, 0.0], c)
            .with_term(1.0 / (2.0 * sf2), [0.0, 1.0], c)
            .with_term(self.pm.gamma / 2.0, [self.pm.tau_s, self.pm.tau_i], 0.0)
    }
}

/// Marginal sigma of |α·φ|² averaged over signal and idler.
fn intrinsic_bandwidth(pump: &PumpSpec, pm: &PhaseMatchSpec) -> f64 {
    let sp2 = pump.delta_omega_p * pump.delta_omega_p;
    let form =
        Gaussian2::new()
            .with_term(1.0 / sp2, [1.0, 1.0], 0.0)
            .with_term(pm.gamma / 2.0, [pm.tau_s, pm.tau_i], 0.0);
    match form.covariance() {
        Some(cov) => ((cov[0][0] + cov[1][1]) / 2.0).sqrt(),
        None => f64::INFINITY,
    }
}

/// Uniform square sampling of the (ωs, ωi) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    center_s: f64,
    center_i: f64,
    half_span: f64,
    n: usize,
}

impl FrequencyGrid {
    pub const MIN_POINTS: usize = 16;
    pub const COARSE_POINTS: usize = 64;

    pub fn new(center_s: f64, center_i: f64, half_span: f64, n: usize) -> Result<Self> {
        if n < Self::MIN_POINTS {
            return Err(Error::invalid(
                "n",
                format!("need at least {} points, got {n}", Self::MIN_POINTS),
            ));
        }
        require_positive("half_span", half_span)?;
        if !center_s.is_finite() || !center_i.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        Ok(Self {
            center_s,
            center_i,
            half_span,
            n,
        })
    }

    /// Grid centred on (ω0, ω0) wide enough for 8 marginal sigmas of the
    /// filtered biphoton intensity plus its mean offset.
    pub fn for_model(model: &BiphotonModel, n: usize) -> Result<Self> {
        let form = model.filtered_intensity_form();
        let (mean, cov) = match (form.mean(), form.covariance()) {
            (Some(m), Some(c)) => (m, c),
            _ => return Err(Error::invalid("model", "filtered biphoton intensity is unbounded")),
        };
        let sigma = cov[0][0].max(cov[1][1]).sqrt();
        let offset = mean[0].abs().max(mean[1].abs());
        Self::new(model.omega_0(), model.omega_0(), offset + 8.0 * sigma, n)
    }

    pub fn center_s(&self) -> f64 {
        self.center_s
    }

    pub fn center_i(&self) -> f64 {
        self.center_i
    }

    pub fn half_span(&self) -> f64 {
        self.half_span
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_span / (self.n - 1) as f64
    }

    /// Offset of node `k` from the axis centre.
    pub fn offset(&self, k: usize) -> f64 {
        -self.half_span + k as f64 * self.spacing()
    }

    pub fn omega_s(&self, k: usize) -> f64 {
        self.center_s + self.offset(k)
    }

    pub fn omega_i(&self, k: usize) -> f64 {
        self.center_i + self.offset(k)
    }

    /// Same centres and span with a different point count.
    pub fn with_points(&self, n: usize) -> Result<Self> {
        Self::new(self.center_s, self.center_i, self.half_span, n)
    }

    /// Composite trapezoid weights along one axis (including the spacing).
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n)
            .map(|k| if k == 0 || k + 1 == self.n { 0.5 * h } else { h })
            .collect()
    }
}

pub fn pump_envelope(model: &BiphotonModel, omega_s: f64, omega_i: f64) -> f64 {
    model.pump.envelope(omega_s, omega_i)
}

pub fn phase_matching(model: &BiphotonModel, nu_s: f64, nu_i: f64) -> f64 {
    model.pm.amplitude(nu_s, nu_i)
}

pub fn filter_amplitude(spec: &FilterSpec, omega: f64) -> f64 {
    spec.amplitude(omega)
}

pub fn sample_transfer(spec: &SampleSpec, omega_s: f64, omega_i: f64) -> f64 {
    spec.transfer(omega_s, omega_i)
}

/// Joint spectral intensity sampled on a grid. Row index runs over ωs,
/// column index over ωi.
#[derive(Debug, Clone, PartialEq)]
pub struct Jsi {
    pub grid: FrequencyGrid,
    pub values: Vec<f64>,
    /// Set when the grid has fewer than [`FrequencyGrid::COARSE_POINTS`] points.
    pub coarse: bool,
}

impl Jsi {
    pub fn get(&self, s: usize, i: usize) -> f64 {
        self.values[s * self.grid.n() + i]
    }

    /// Trapezoid integral over the sampled plane.
    pub fn integral(&self) -> f64 {
        let w = self.grid.trapezoid_weights();
        let n = self.grid.n();
        (0..n)
            .map(|s| w[s] * (0..n).map(|i| w[i] * self.values[s * n + i]).sum::<f64>())
            .sum()
    }

    /// Grid indices of the largest entry (first one in row-major order).
    pub fn argmax(&self) -> (usize, usize) {
        let n = self.grid.n();
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        (best / n, best % n)
    }
}

/// S(ωs, ωi) = |α·φ·f(ωs)·f(ωi)·h|² at every grid node.
pub fn jsi(model: &BiphotonModel, grid: &FrequencyGrid) -> Jsi {
    let n = grid.n();
    let coarse = n < FrequencyGrid::COARSE_POINTS;
    if coarse {
        log::warn!("JSI grid has only {n} points per axis; results may be under-resolved");
    }
    let omega_0 = model.omega_0();
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|s| {
            let ws = grid.omega_s(s);
            (0..n).map(move |i| {
                let wi = grid.omega_i(i);
                let amp = model.pump.envelope(ws, wi)
                    * model.pm.amplitude(ws - omega_0, wi - omega_0)
                    * (model.filter.amplitude(ws) * model.filter.amplitude(wi))
                    * model.sample.amplitude(ws, wi);
                amp * amp
            })
        })
        .collect();
    Jsi {
        grid: *grid,
        values,
        coarse,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{wavelength_to_omega, Bandwidth};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_like(tau_s: f64, tau_i: f64, eta: f64) -> BiphotonModel {
        let wp = wavelength_to_omega(403.0);
        let pump = PumpSpec::new(wp, Bandwidth::FwhmNm(1.0).sigma_radfs(403.0)).unwrap();
        let pm = PhaseMatchSpec::new(tau_s, tau_i, DEFAULT_GAMMA).unwrap();
        let filter = FilterSpec::new(wp / 2.0, 0.05).unwrap();
        let sample = SampleSpec::new(eta, wp, 0.01).unwrap();
        BiphotonModel::new(pump, pm, filter, sample)
    }

    #[test]
    fn pump_envelope_on_and_off_resonance() {
        let m = reference_like(100.0, 300.0, 0.0);
        let wp = m.pump().omega_p();
        let dp = m.pump().delta_omega_p();
        assert_eq!(pump_envelope(&m, 0.3 * wp, 0.7 * wp), 1.0);
        assert_relative_eq!(
            pump_envelope(&m, wp / 2.0, wp / 2.0 + dp),
            (-0.5f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn pump_envelope_reference_point() {
        // Independent scalar evaluation with 403 nm and a 1 nm FWHM pump.
        let wp = 2.0 * std::f64::consts::PI * 299.792_458 / 403.0;
        let dwp = 2.0 * std::f64::consts::PI * 299.792_458 * 1.0 / (403.0 * 403.0) / 2.354_820_045_030_949;
        let pump = PumpSpec::new(wp, dwp).unwrap();
        let ws = wp / 2.0 + 0.01;
        let expected = (-(0.02f64).powi(2) / (2.0 * dwp * dwp)).exp();
        assert_relative_eq!(pump.envelope(ws, ws), expected, max_relative = 1e-13);
        // 0.02 rad/fs detuning is about four pump sigmas
        assert!(expected < 1e-3 && expected > 1e-4);
    }

    #[test]
    fn phase_matching_forms_agree() {
        let pm = PhaseMatchSpec::new(100.0, 300.0, 0.19).unwrap();
        let a = pm.amplitude(0.02, -0.01);
        let b = pm.amplitude_squared_sum(0.02, -0.01);
        // 0.19/4 · (2 − 3)² = 0.0475
        assert_relative_eq!(b, (-0.0475f64).exp(), max_relative = 1e-14);
        assert_relative_eq!(a, b, max_relative = 1e-12);
        assert_eq!(pm.amplitude(0.0, 0.0), 1.0);
    }

    #[test]
    fn symmetric_phase_matching_antidiagonal() {
        let pm = PhaseMatchSpec::new(250.0, 250.0, 0.19).unwrap();
        for nu in [0.001, 0.03, 0.2] {
            assert_relative_eq!(pm.amplitude(nu, -nu), 1.0, epsilon = 1e-12);
        }
        assert!(!pm.is_asymmetric());
        assert!(PhaseMatchSpec::new(1.0, 2.0, 0.19).unwrap().is_asymmetric());
    }

    #[test]
    fn filter_profiles() {
        let f = FilterSpec::new(2.35, 0.05).unwrap();
        assert_eq!(f.amplitude(2.35), 1.0);
        assert_relative_eq!(f.intensity(2.40), (-0.5f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(f.amplitude(2.40).powi(2), f.intensity(2.40), max_relative = 1e-14);
    }

    #[test]
    fn sample_transfer_values() {
        let s = SampleSpec::new(0.0, 4.67, 0.01).unwrap();
        assert_eq!(s.transfer(2.0, 2.3), 1.0);
        let s = SampleSpec::new(0.1247, 4.67, 0.01).unwrap();
        assert_relative_eq!(s.transfer(2.0, 2.67), 0.8753, epsilon = 1e-12);
        let s = SampleSpec::new(1.0, 4.67, 0.01).unwrap();
        assert_eq!(s.transfer(2.335, 2.335), 0.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(PumpSpec::new(-1.0, 0.1).is_err());
        assert!(PumpSpec::new(1.0, 0.0).is_err());
        assert!(FilterSpec::new(2.0, -0.1).is_err());
        assert!(PhaseMatchSpec::new(1.0, 1.0, 0.0).is_err());
        assert!(SampleSpec::new(1.5, 4.0, 0.01).is_err());
        assert!(SampleSpec::new(-0.1, 4.0, 0.01).is_err());
        assert!(SampleSpec::new(0.5, 4.0, 1e-7).is_err());
        assert!(SampleSpec::new(0.5, 4.0, 1e-6).is_ok());
        assert!(FrequencyGrid::new(2.0, 2.0, 0.1, 15).is_err());
        assert!(FrequencyGrid::new(2.0, 2.0, 0.0, 64).is_err());
    }

    #[test]
    fn model_centre_is_half_pump() {
        let m = reference_like(789.5, 669.5, 0.0);
        assert_eq!(m.omega_0(), m.pump().omega_p() / 2.0);
        assert!(m.delta_omega_0().is_finite());
        let sym = reference_like(500.0, 500.0, 0.0);
        assert!(sym.delta_omega_0().is_infinite());
    }

    #[test]
    fn jsi_symmetry_and_peak() {
        let m = reference_like(400.0, 400.0, 0.0);
        let grid = FrequencyGrid::new(m.omega_0(), m.omega_0(), 0.3, 65).unwrap();
        let s = jsi(&m, &grid);
        let n = grid.n();
        for a in 0..n {
            for b in 0..n {
                assert_eq!(s.get(a, b), s.get(b, a));
            }
        }
        assert_eq!(s.argmax(), (32, 32));
        assert!(!s.coarse);

        let asym = reference_like(100.0, 300.0, 0.0);
        let s = jsi(&asym, &grid);
        let max_diff = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| (s.get(a, b) - s.get(b, a)).abs())
            .fold(0.0, f64::max);
        assert!(max_diff > 1e-6);
    }

    #[test]
    fn coarse_grid_flagged() {
        let m = reference_like(400.0, 400.0, 0.0);
        let grid = FrequencyGrid::new(m.omega_0(), m.omega_0(), 0.3, 32).unwrap();
        assert!(jsi(&m, &grid).coarse);
    }

    proptest! {
        #[test]
        fn spectral_functions_bounded(
            ws in 1.5f64..3.0, wi in 1.5f64..3.0,
            ts in -800.0f64..800.0, ti in -800.0f64..800.0,
            eta in 0.0f64..=1.0,
        ) {
            let m = reference_like(ts, ti, eta);
            let w0 = m.omega_0();
            for v in [
                pump_envelope(&m, ws, wi),
                phase_matching(&m, ws - w0, wi - w0),
                filter_amplitude(m.filter(), ws),
                sample_transfer(m.sample(), ws, wi),
            ] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            prop_assert!(sample_transfer(m.sample(), ws, wi) >= 1.0 - eta - 1e-15);
        }

        #[test]
        fn sum_frequency_dependence(sum in 4.0f64..5.3, diff in -0.5f64..0.5, eta in 0.0f64..=1.0) {
            let m = reference_like(300.0, 200.0, eta);
            let a = pump_envelope(&m, sum / 2.0, sum / 2.0);
            let b = pump_envelope(&m, (sum + diff) / 2.0, (sum - diff) / 2.0);
            prop_assert!((a - b).abs() <= 1e-12);
            let h1 = sample_transfer(m.sample(), sum / 2.0, sum / 2.0);
            let h2 = sample_transfer(m.sample(), (sum + diff) / 2.0, (sum - diff) / 2.0);
            prop_assert!((h1 - h2).abs() <= 1e-12);
        }

        #[test]
        fn phase_matching_two_forms(ts in -800.0f64..800.0, ti in -800.0f64..800.0,
                                    ns in -0.05f64..0.05, ni in -0.05f64..0.05) {
            let pm = PhaseMatchSpec::new(ts, ti, 0.19).unwrap();
            let a = pm.amplitude(ns, ni);
            let b = pm.amplitude_squared_sum(ns, ni);
            prop_assert!((a - b).abs() <= 1e-12 * b);
        }

        #[test]
        fn pqr_identity(ts in -1e3f64..1e3, ti in -1e3f64..1e3, g in 0.01f64..1.0) {
            let pm = PhaseMatchSpec::new(ts, ti, g).unwrap();
            let lhs = pm.r() * pm.r();
            let rhs = pm.p() * pm.q();
            prop_assert!((lhs - rhs).abs() <= 4.0 * f64::EPSILON * rhs.abs());
        }
    }
}
