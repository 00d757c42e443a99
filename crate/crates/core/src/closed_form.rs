//! Closed-form two-Gaussian interferogram
//!
//! ```text
//! Rc(δt) = 1 − [κ·exp(−Δω_Λ²δt²/2) − η′·exp(−Δω_J²δt²/2)]
//! ```
//!
//! with the modified efficiency `η′ = J₀·Δω_J/(J_Λ·Δω_Λ)·η`, and the exact
//! Gaussian reduction of the coincidence integral used to obtain κ and Δω_Λ.
//!
//! Coordinates for the reduction are Σ = νs + νi and D = νs − νi. Every factor
//! of the integrand is Gaussian in (Σ, D) and the exchange term factorises, so
//! both the direct and exchange integrals collapse to one-dimensional Gaussian
//! integrals over Σ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::ln_integral_1d;
use crate::lsq::{self, Problem};
use crate::numeric::{self, HomOptions, Interferogram, Source};
use crate::spectral::{BiphotonModel, FrequencyGrid, PhaseMatchSpec};
use crate::units::FWHM_PER_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaMode {
    /// κ from the analytic reduction.
    Derived,
    /// κ and Δω_Λ fitted to a numeric or measured reference curve.
    Fitted,
}

/// Parameters of the closed-form interferogram.
///
/// The notch centre and width are kept alongside the derived quantities so
/// that J₀, Δω_J and η′ can be re-derived when Δω_Λ changes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsRecord")]
pub struct ClosedFormParams {
    kappa: f64,
    delta_omega_lambda: f64,
    omega_lambda: f64,
    delta_omega_j: f64,
    j0: f64,
    j_lambda: f64,
    eta: f64,
    eta_prime: f64,
    omega_h: f64,
    delta_omega_h: f64,
    kappa_mode: KappaMode,
}

#[derive(Deserialize)]
struct ParamsRecord {
    kappa: f64,
    delta_omega_lambda: f64,
    omega_lambda: f64,
    delta_omega_j: f64,
    j0: f64,
    j_lambda: f64,
    eta: f64,
    eta_prime: f64,
    omega_h: f64,
    delta_omega_h: f64,
    kappa_mode: KappaMode,
}

impl TryFrom<ParamsRecord> for ClosedFormParams {
    type Error = Error;

    fn try_from(r: ParamsRecord) -> Result<Self> {
        let p = ClosedFormParams {
            kappa: r.kappa,
            delta_omega_lambda: r.delta_omega_lambda,
            omega_lambda: r.omega_lambda,
            delta_omega_j: r.delta_omega_j,
            j0: r.j0,
            j_lambda: r.j_lambda,
            eta: r.eta,
            eta_prime: 0.0,
            omega_h: r.omega_h,
            delta_omega_h: r.delta_omega_h,
            kappa_mode: r.kappa_mode,
        }
        .finish()?;
        if (p.eta_prime - r.eta_prime).abs() > 1e-12 * p.eta_prime.max(1e-300) + 1e-15 {
            return Err(Error::invalid(
                "eta_prime",
                format!("{} disagrees with J0·ΔωJ/(JΛ·ΔωΛ)·η = {}", r.eta_prime, p.eta_prime),
            ));
        }
        Ok(p)
    }
}

/// Δω_J = Δω_Λ·(1 + (Δω_Λ/Δω_H)²)^(−1/2).
pub fn joint_bandwidth(delta_omega_lambda: f64, delta_omega_h: f64) -> f64 {
    let ratio = delta_omega_lambda / delta_omega_h;
    delta_omega_lambda / (1.0 + ratio * ratio).sqrt()
}

/// Overlap of the filtered photon band with half the transition frequency.
pub fn notch_overlap(omega_lambda: f64, delta_omega_lambda: f64, omega_h: f64, delta_omega_h: f64) -> f64 {
    let detuning = omega_lambda - 0.5 * omega_h;
    let width2 = delta_omega_lambda * delta_omega_lambda + delta_omega_h * delta_omega_h;
    (-detuning * detuning / (2.0 * width2)).exp()
}

/// Overlap of the intrinsic down-converted band with the filter.
pub fn filter_overlap(omega_0: f64, delta_omega_0: f64, omega_f: f64, delta_omega_f: f64) -> f64 {
    if !delta_omega_0.is_finite() {
        return 1.0;
    }
    let detuning = omega_0 - omega_f;
    (-detuning * detuning / (2.0 * (delta_omega_0 * delta_omega_0 + delta_omega_f * delta_omega_f))).exp()
}

/// Depth κ = 2V/(1+V) of a pure Gaussian dip with visibility V = (max−min)/(max+min).
pub fn kappa_from_visibility(v: f64) -> f64 {
    2.0 * v / (1.0 + v)
}

/// V = κ/(2 − κ), the inverse of [`kappa_from_visibility`].
pub fn visibility_from_kappa(kappa: f64) -> f64 {
    kappa / (2.0 - kappa)
}

impl ClosedFormParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kappa: f64,
        delta_omega_lambda: f64,
        omega_lambda: f64,
        j_lambda: f64,
        eta: f64,
        omega_h: f64,
        delta_omega_h: f64,
        kappa_mode: KappaMode,
    ) -> Result<Self> {
        let mut p = Self {
            kappa,
            delta_omega_lambda,
            omega_lambda,
            delta_omega_j: 0.0,
            j0: 0.0,
            j_lambda,
            eta,
            eta_prime: 0.0,
            omega_h,
            delta_omega_h,
            kappa_mode,
        };
        p.rederive_notch();
        p.finish()
    }

    fn rederive_notch(&mut self) {
        self.delta_omega_j = joint_bandwidth(self.delta_omega_lambda, self.delta_omega_h);
        self.j0 = notch_overlap(
            self.omega_lambda,
            self.delta_omega_lambda,
            self.omega_h,
            self.delta_omega_h,
        );
    }

    /// Validates and fixes η′ from the other fields.
    fn finish(mut self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(Error::invalid(
                "kappa",
                format!("must lie in [0, 1], got {}", self.kappa),
            ));
        }
        if !(self.delta_omega_lambda > 0.0 && self.delta_omega_lambda.is_finite()) {
            return Err(Error::invalid("delta_omega_lambda", "must be positive and finite"));
        }
        if !(self.delta_omega_j > 0.0 && self.delta_omega_j <= self.delta_omega_lambda) {
            return Err(Error::invalid("delta_omega_J", "must lie in (0, delta_omega_lambda]"));
        }
        if !(self.delta_omega_h > 0.0) {
            return Err(Error::invalid("delta_omega_H", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.j0) {
            return Err(Error::invalid("j0", "must lie in [0, 1]"));
        }
        if !(self.j_lambda > 0.0 && self.j_lambda <= 1.0) {
            return Err(Error::invalid("j_lambda", "must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if !self.omega_lambda.is_finite() || !self.omega_h.is_finite() {
            return Err(Error::invalid("omega", "centre frequencies must be finite"));
        }
        self.eta_prime = self.eta_prime_ratio() * self.eta;
        if self.eta_prime > 1.0 {
            return Err(Error::invalid("eta_prime", format!("{} exceeds 1", self.eta_prime)));
        }
        Ok(self)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn delta_omega_lambda(&self) -> f64 {
        self.delta_omega_lambda
    }

    pub fn omega_lambda(&self) -> f64 {
        self.omega_lambda
    }

    pub fn delta_omega_j(&self) -> f64 {
        self.delta_omega_j
    }

    pub fn j0(&self) -> f64 {
        self.j0
    }

    pub fn j_lambda(&self) -> f64 {
        self.j_lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn eta_prime(&self) -> f64 {
        self.eta_prime
    }

    pub fn omega_h(&self) -> f64 {
        self.omega_h
    }

    pub fn delta_omega_h(&self) -> f64 {
        self.delta_omega_h
    }

    pub fn kappa_mode(&self) -> KappaMode {
        self.kappa_mode
    }

    /// η′/η = J₀·Δω_J/(J_Λ·Δω_Λ).
    pub fn eta_prime_ratio(&self) -> f64 {
        self.j0 * self.delta_omega_j / (self.j_lambda * self.delta_omega_lambda)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        self.eta = eta;
        self.finish()
    }

    pub fn with_kappa(mut self, kappa: f64, mode: KappaMode) -> Result<Self> {
        self.kappa = kappa;
        self.kappa_mode = mode;
        self.finish()
    }

    /// Replaces Δω_Λ and re-derives Δω_J, J₀ and η′.
    pub fn with_delta_omega_lambda(mut self, delta_omega_lambda: f64) -> Result<Self> {
        self.delta_omega_lambda = delta_omega_lambda;
        self.rederive_notch();
        self.finish()
    }

    /// Overrides Δω_J directly (fitting); J₀ is left as is.
    pub fn with_delta_omega_j(mut self, delta_omega_j: f64) -> Result<Self> {
        self.delta_omega_j = delta_omega_j;
        self.finish()
    }

    /// Sets both widths as fitted, keeping J₀ and J_Λ.
    pub(crate) fn with_fitted_widths(mut self, delta_omega_lambda: f64, delta_omega_j: f64) -> Result<Self> {
        self.delta_omega_lambda = delta_omega_lambda;
        self.delta_omega_j = delta_omega_j;
        self.finish()
    }

    /// Moves the notch and re-derives Δω_J, J₀ and η′.
    pub fn with_notch(mut self, omega_h: f64, delta_omega_h: f64) -> Result<Self> {
        self.omega_h = omega_h;
        self.delta_omega_h = delta_omega_h;
        self.rederive_notch();
        self.finish()
    }

    /// The two Gaussians of the bracket at `t`: (exp(−Δω_Λ²t²/2), exp(−Δω_J²t²/2)).
    pub fn terms(&self, t: f64) -> (f64, f64) {
        let l = self.delta_omega_lambda * t;
        let j = self.delta_omega_j * t;
        ((-0.5 * l * l).exp(), (-0.5 * j * j).exp())
    }

    pub fn rate(&self, t: f64) -> f64 {
        let (gl, gj) = self.terms(t);
        1.0 - (self.kappa * gl - self.eta_prime * gj)
    }
}

/// Exact reduction of the coincidence integral for an all-Gaussian model.
///
/// The direct and exchange integrals are `I₁(η) = B₁ − η·N₁` and
/// `I₂(η) = B₂ − η·N₂`, the N terms carrying the notch. The delay dependence
/// is exp(−Δω_Λ²δt²/2) for any η, so the exact curve is `1 − κ(η)·exp(...)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianReduction {
    delta_omega_lambda: f64,
    eta: f64,
    /// ln B₁, ln N₁, ln B₂, ln N₂ (common factors dropped).
    ln_terms: [f64; 4],
}

impl GaussianReduction {
    pub fn new(model: &BiphotonModel) -> Self {
        let pm = model.phase_matching();
        let sp = model.pump().delta_omega_p();
        let sf = model.filter().delta_omega_f();
        let sh = model.sample().delta_omega_h();
        let gamma = pm.gamma();
        let a = 0.5 * (pm.tau_s() + pm.tau_i());
        let b = 0.5 * (pm.tau_s() - pm.tau_i());
        let c = model.filter().omega_f() - model.omega_0();
        let sigma_h = model.sample().omega_h() - 2.0 * model.omega_0();

        let filter_d = 1.0 / (4.0 * sf * sf);
        let beta = filter_d + 0.5 * gamma * b * b;
        let u = filter_d / beta;

        // pump and filter in Σ
        let pa = 1.0 / (sp * sp) + 1.0 / (4.0 * sf * sf);
        let qa = c / (sf * sf);
        let ra = -c * c / (sf * sf);
        // notch in Σ
        let pn = 1.0 / (2.0 * sh * sh);
        let qn = sigma_h / (sh * sh);
        let rn = -sigma_h * sigma_h / (2.0 * sh * sh);

        let direct = 0.5 * gamma * a * a * u;
        let exchange = 0.5 * gamma * a * a;
        let ln_terms = [
            ln_integral_1d(pa + direct, qa, ra),
            ln_integral_1d(pa + direct + pn, qa + qn, ra + rn),
            ln_integral_1d(pa + exchange, qa, ra),
            ln_integral_1d(pa + exchange + pn, qa + qn, ra + rn),
        ];
        Self {
            delta_omega_lambda: (1.0 / (2.0 * beta)).sqrt(),
            eta: model.sample().eta(),
            ln_terms,
        }
    }

    pub fn delta_omega_lambda(&self) -> f64 {
        self.delta_omega_lambda
    }

    /// κ at the model's own η.
    pub fn kappa(&self) -> f64 {
        self.kappa_at(self.eta)
    }

    pub fn kappa_at(&self, eta: f64) -> f64 {
        let [b1, n1, b2, n2] = self.ln_terms;
        let num = (b2 - b1).exp() - eta * (n2 - b1).exp();
        let den = 1.0 - eta * (n1 - b1).exp();
        num / den
    }

    pub fn rate(&self, t: f64) -> f64 {
        let l = self.delta_omega_lambda * t;
        1.0 - self.kappa() * (-0.5 * l * l).exp()
    }
}

/// Filtered single-photon centre ω_Λ: the mean of the η = 0 direct integrand.
fn filtered_centre(model: &BiphotonModel) -> f64 {
    match model.filtered_intensity_form().mean() {
        Some([ms, mi]) => model.omega_0() + 0.5 * (ms + mi),
        None => model.filter().omega_f(),
    }
}

/// Closed-form parameters with κ and Δω_Λ from the exact reduction at η = 0.
pub fn derive_params(model: &BiphotonModel) -> Result<ClosedFormParams> {
    let reduction = GaussianReduction::new(model);
    let filter = model.filter();
    let sample = model.sample();
    ClosedFormParams::new(
        reduction.kappa_at(0.0),
        reduction.delta_omega_lambda(),
        filtered_centre(model),
        filter_overlap(
            model.omega_0(),
            model.delta_omega_0(),
            filter.omega_f(),
            filter.delta_omega_f(),
        ),
        sample.eta(),
        sample.omega_h(),
        sample.delta_omega_h(),
        KappaMode::Derived,
    )
}

struct ReferenceProblem<'a> {
    t: &'a [f64],
    y: &'a [f64],
}

impl Problem for ReferenceProblem<'_> {
    fn n_params(&self) -> usize {
        2
    }

    fn n_residuals(&self) -> usize {
        self.t.len()
    }

    fn evaluate(&self, p: &[f64], res: &mut [f64], jac: &mut [f64]) {
        let (kappa, lambda) = (p[0], p[1]);
        for (k, (&t, &y)) in self.t.iter().zip(self.y).enumerate() {
            let g = (-0.5 * lambda * lambda * t * t).exp();
            res[k] = 1.0 - kappa * g - y;
            jac[2 * k] = -g;
            jac[2 * k + 1] = kappa * g * lambda * t * t;
        }
    }

    fn project(&self, p: &mut [f64]) {
        p[0] = p[0].clamp(0.0, 1.0);
        p[1] = p[1].abs().max(1e-9);
    }
}

/// Unweighted fit of `1 − κ·exp(−Δω_Λ²t²/2)` to a curve; returns (κ, Δω_Λ).
pub(crate) fn fit_reference_curve(t: &[f64], y: &[f64], start: [f64; 2]) -> Result<(f64, f64)> {
    let problem = ReferenceProblem { t, y };
    let sol = lsq::minimize(&problem, &start, lsq::Options::default());
    if !sol.converged {
        return Err(Error::NotConverged {
            iterations: sol.iterations,
        });
    }
    Ok((sol.params[0], sol.params[1]))
}

/// Closed-form parameters with κ and Δω_Λ fitted to the η = 0 numeric curve.
pub fn derive_params_fitted(model: &BiphotonModel, n: usize, delays: &[f64]) -> Result<ClosedFormParams> {
    let reference = model.with_eta(0.0)?;
    let grid = FrequencyGrid::for_model(&reference, n)?;
    let (ig, _) = numeric::hom_integral_with(&reference, &grid, delays, HomOptions::default())?;
    let derived = derive_params(model)?;
    let (kappa, lambda) =
        fit_reference_curve(ig.delays(), ig.rates(), [derived.kappa(), derived.delta_omega_lambda()])?;
    derived
        .with_delta_omega_lambda(lambda)?
        .with_kappa(kappa, KappaMode::Fitted)
}

pub fn closed_form_interferogram(params: &ClosedFormParams, delays: &[f64]) -> Result<Interferogram> {
    let rates = delays.iter().map(|&t| params.rate(t)).collect();
    Interferogram::new(delays.to_vec(), rates, true, Source::ClosedForm)
}

/// Delay of the deepest point of the closed-form dip (≥ 0; the curve is even).
pub fn dip_minimum_delay(params: &ClosedFormParams) -> f64 {
    let (kappa, ep) = (params.kappa, params.eta_prime);
    let l2 = params.delta_omega_lambda.powi(2);
    let j2 = params.delta_omega_j.powi(2);
    let mut best = (0.0, kappa - ep);
    if ep > 0.0 && l2 > j2 && kappa > 0.0 {
        // stationary point of the bracket in x = t²
        let x = 2.0 * (l2 * kappa / (j2 * ep)).ln() / (l2 - j2);
        if x > 0.0 {
            let t = x.sqrt();
            let (gl, gj) = params.terms(t);
            let g = kappa * gl - ep * gj;
            if g > best.1 {
                best = (t, g);
            }
        }
    }
    best.0
}

/// Visibility (max−min)/(max+min) of the closed-form dip, with the long-delay level 1 as
/// the maximum.
///
/// Fails with `NonDipRegime` when η′ ≥ κ; the error carries the signed value.
pub fn predicted_visibility(params: &ClosedFormParams) -> Result<f64> {
    let t = dip_minimum_delay(params);
    let min = params.rate(t);
    let v = numeric::visibility(1.0, min);
    if params.eta_prime >= params.kappa {
        return Err(Error::NonDipRegime { visibility: v });
    }
    Ok(v)
}

/// Full width at half depth of the closed-form dip, in fs.
pub fn closed_form_fwhm(params: &ClosedFormParams) -> Result<f64> {
    let t_min = dip_minimum_delay(params);
    let depth = 1.0 - params.rate(t_min);
    if !(depth > 0.0) {
        return Err(Error::NonDipRegime {
            visibility: numeric::visibility(1.0, params.rate(t_min)),
        });
    }
    let level = 1.0 - 0.5 * depth;
    // march outward to bracket the crossing, then bisect
    let step = 0.25 / params.delta_omega_j.min(params.delta_omega_lambda);
    let mut lo = t_min;
    let mut hi = t_min + step;
    while params.rate(hi) < level {
        lo = hi;
        hi += step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if params.rate(mid) < level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(2.0 * 0.5 * (lo + hi))
}

/// Phase-matching delays that give an η = 0 dip of the given FWHM (fs) and
/// Visibility (max−min)/(max+min) for the model's pump, filter and γ.
///
/// The width fixes |τs − τi| and the depth κ = 2V/(1+V) fixes τs + τi. The
/// returned spec has τs ≥ τi.
pub fn calibrate_phase_matching(model: &BiphotonModel, fwhm_fs: f64, visibility: f64) -> Result<PhaseMatchSpec> {
    if !(fwhm_fs > 0.0) {
        return Err(Error::invalid("fwhm", "must be positive"));
    }
    if !(visibility > 0.0 && visibility < 1.0) {
        return Err(Error::invalid("visibility", "must lie in (0, 1)"));
    }
    let gamma = model.phase_matching().gamma();
    let sf = model.filter().delta_omega_f();
    let lambda = FWHM_PER_SIGMA / fwhm_fs;
    let beta = 1.0 / (2.0 * lambda * lambda);
    let filter_d = 1.0 / (4.0 * sf * sf);
    if beta < filter_d {
        return Err(Error::invalid(
            "fwhm",
            format!(
                "{fwhm_fs} fs is shorter than the filter-limited width {:.3} fs",
                FWHM_PER_SIGMA * (2.0 * filter_d).sqrt()
            ),
        ));
    }
    let b = (2.0 * (beta - filter_d) / gamma).sqrt();
    let target = kappa_from_visibility(visibility);

    let kappa_of = |a: f64| -> Result<f64> {
        let pm = PhaseMatchSpec::new(a + b, a - b, gamma)?;
        Ok(GaussianReduction::new(&model.with_phase_matching(pm).with_eta(0.0)?).kappa_at(0.0))
    };
    if kappa_of(0.0)? < target {
        return Err(Error::invalid(
            "visibility",
            "unreachable: even τs = −τi gives a shallower dip",
        ));
    }
    let mut hi = 1.0;
    while kappa_of(hi)? > target {
        hi *= 2.0;
        if hi > 1e9 {
            return Err(Error::invalid("visibility", "unreachable for this filter and width"));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kappa_of(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    let a = 0.5 * (lo + hi);
    PhaseMatchSpec::new(a + b, a - b, gamma)
}
