//! Seeded Poisson datasets from the forward model.
//!
//! Every random draw uses its own ChaCha stream selected by the sample index,
//! so generation order (sequential or parallel) never changes the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::ClosedFormParams;
use crate::error::{Error, Result};
use crate::numeric::{self, HomOptions, Interferogram, Source};
use crate::spectral::{BiphotonModel, FrequencyGrid};
use crate::transmittance::PowerSweep;

/// Measurement bin duration, seconds.
pub const DEFAULT_BIN_SECONDS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default = "default_bin")]
    pub bin_seconds: f64,
    /// Long-delay coincidence rate, counts/s.
    pub peak_rate: f64,
    /// Accidental coincidences, counts/s.
    #[serde(default)]
    pub background_rate: f64,
    pub seed: u64,
}

fn default_bin() -> f64 {
    DEFAULT_BIN_SECONDS
}

impl NoiseSpec {
    pub fn new(peak_rate: f64, background_rate: f64, seed: u64) -> Result<Self> {
        let n = Self {
            bin_seconds: DEFAULT_BIN_SECONDS,
            peak_rate,
            background_rate,
            seed,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn with_bin_seconds(mut self, bin_seconds: f64) -> Result<Self> {
        self.bin_seconds = bin_seconds;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bin_seconds > 0.0 && self.bin_seconds.is_finite()) {
            return Err(Error::invalid("bin_seconds", "must be positive"));
        }
        if !(self.peak_rate >= 0.0 && self.peak_rate.is_finite()) {
            return Err(Error::invalid("peak_rate", "must be non-negative"));
        }
        if !(self.background_rate >= 0.0 && self.background_rate.is_finite()) {
            return Err(Error::invalid("background_rate", "must be non-negative"));
        }
        Ok(())
    }
}

/// Poisson draw with mean `mean` from stream `index` of `seed`.
pub fn poisson_draw(seed: u64, index: u64, mean: f64) -> f64 {
    if !(mean > 0.0) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    match Poisson::new(mean) {
        Ok(d) => d.sample(&mut rng),
        Err(_) => mean.round(),
    }
}

/// Where the noiseless normalised curve comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Forward {
    ClosedForm { params: ClosedFormParams },
    Quadrature { model: BiphotonModel, n: usize },
}

impl Forward {
    pub fn curve(&self, delays: &[f64]) -> Result<Interferogram> {
        match self {
            Forward::ClosedForm { params } => crate::closed_form::closed_form_interferogram(params, delays),
            Forward::Quadrature { model, n } => {
                let grid = FrequencyGrid::for_model(model, *n)?;
                numeric::hom_integral_with(model, &grid, delays, HomOptions::default()).map(|(ig, _)| ig)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub forward: Forward,
    pub noise: NoiseSpec,
    /// Fraction of the sample channel lost to linear (delay-independent)
    /// attenuation.
    pub linear_loss_sample: f64,
    pub delays: Vec<f64>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if !(0.0..1.0).contains(&self.linear_loss_sample) {
            return Err(Error::invalid("linear_loss_sample", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Raw per-delay coincidence counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCounts {
    pub delays: Vec<f64>,
    pub counts: Vec<f64>,
    pub durations_s: Vec<f64>,
}

impl RawCounts {
    /// Normalised by the long-delay window mean, with Poisson variances.
    pub fn to_interferogram(&self, source: Source) -> Result<Interferogram> {
        Interferogram::from_raw_counts(self.delays.clone(), &self.counts, &self.durations_s, source)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            delays: self.delays.clone(),
            counts: self.counts.iter().map(|c| c * k).collect(),
            durations_s: self.durations_s.clone(),
        }
    }
}

/// expected = bin·(background + peak·Rc·(1 − loss)), drawn Poisson per delay.
pub fn synth_interferogram(sc: &ScenarioSpec) -> Result<RawCounts> {
    sc.validate()?;
    let curve = sc.forward.curve(&sc.delays)?;
    let noise = sc.noise;
    let counts = curve
        .rates()
        .par_iter()
        .enumerate()
        .map(|(k, r)| {
            let mean =
                noise.bin_seconds * (noise.background_rate + noise.peak_rate * r * (1.0 - sc.linear_loss_sample));
            poisson_draw(noise.seed, k as u64, mean)
        })
        .collect();
    Ok(RawCounts {
        delays: sc.delays.clone(),
        counts,
        durations_s: vec![noise.bin_seconds; sc.delays.len()],
    })
}

/// Power-sweep scenario. Coincidence rates are linear in pump power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepScenario {
    pub powers_mw: Vec<f64>,
    /// Long-delay solvent coincidence rate per mW of pump, counts/s/mW.
    pub rate_per_mw: f64,
    /// Delay of the second channel, fs.
    #[serde(default = "default_delayed")]
    pub delayed_fs: f64,
    /// Linear loss on the sample channels, as a fraction of the delayed
    /// solvent rate, subtracted from both sample channels.
    pub loss: f64,
    /// Poisson counting noise per bin; `None` gives exact rates.
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
}

fn default_delayed() -> f64 {
    167.0
}

/// Power range of the measurements, mW.
pub fn measured_powers(n: usize) -> Vec<f64> {
    let (lo, hi) = (0.25, 43.9);
    if n < 2 {
        return vec![lo];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl SweepScenario {
    fn validate(&self) -> Result<()> {
        if !(self.rate_per_mw > 0.0 && self.rate_per_mw.is_finite()) {
            return Err(Error::invalid("rate_per_mw", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.loss) {
            return Err(Error::invalid("loss", "must lie in [0, 1)"));
        }
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        Ok(())
    }

    /// Builds the sweep from normalised rates of the four channels.
    fn build(&self, sol: [f64; 2], sam: [f64; 2]) -> Result<PowerSweep> {
        self.validate()?;
        let n = self.powers_mw.len();
        let mut cols = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for (k, p) in self.powers_mw.iter().enumerate() {
            let flux = self.rate_per_mw * p;
            let lost = self.loss * flux * sol[1];
            let rates = [flux * sol[0], flux * sam[0] - lost, flux * sol[1], flux * sam[1] - lost];
            for (c, r) in rates.into_iter().enumerate() {
                if r < 0.0 {
                    return Err(Error::invalid("loss", "exceeds the sample rate"));
                }
                cols[c][k] = match &self.noise {
                    None => r,
                    Some(noise) => {
                        let mean = noise.bin_seconds * (r + noise.background_rate);
                        poisson_draw(noise.seed, (4 * k + c) as u64, mean) / noise.bin_seconds
                    }
                };
            }
        }
        let [s0, m0, s1, m1] = cols;
        PowerSweep::new(self.powers_mw.clone(), s0, m0, s1, m1)
    }
}

/// Sweep whose channels follow the closed-form curves of solvent (η_sol)
/// and sample (η_sam) built on `params`.
pub fn synth_power_sweep(sc: &SweepScenario, params: &ClosedFormParams, eta_pair: (f64, f64)) -> Result<PowerSweep> {
    let sol = params.with_eta(eta_pair.0)?;
    let sam = params.with_eta(eta_pair.1)?;
    sc.build(
        [sol.rate(0.0), sol.rate(sc.delayed_fs)],
        [sam.rate(0.0), sam.rate(sc.delayed_fs)],
    )
}

/// Sweep with prescribed ETPA slopes: the loss-free sample rate of each
/// channel is the solvent rate times (1 + m). `solvent` holds the normalised
/// solvent rates at δt = 0 and at the delayed channel.
pub fn synth_power_sweep_from_slopes(sc: &SweepScenario, solvent: [f64; 2], slopes: [f64; 2]) -> Result<PowerSweep> {
    sc.build(
        solvent,
        [solvent[0] * (1.0 + slopes[0]), solvent[1] * (1.0 + slopes[1])],
    )
}

/// Sidecar record of what generated a dataset.
#[derive(Debug, Clone, Serialize)]
pub struct SynthTruth<'a, T: Serialize> {
    pub generator: &'static str,
    pub scenario: &'a T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_pair: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slopes: Option<[f64; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::KappaMode;
    use crate::units::FWHM_PER_SIGMA;

    fn params(eta: f64) -> ClosedFormParams {
        ClosedFormParams::new(
            0.7578,
            FWHM_PER_SIGMA / 70.0,
            2.3426,
            1.0,
            eta,
            4.6741,
            0.01,
            KappaMode::Fitted,
        )
        .unwrap()
    }

    fn scenario(peak: f64, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            forward: Forward::ClosedForm { params: params(0.1247) },
            noise: NoiseSpec::new(peak, 0.0, seed).unwrap(),
            linear_loss_sample: 0.0,
            delays: (-200..=200).map(|k| 2.0 * k as f64).collect(),
        }
    }

    #[test]
    fn zero_peak_is_flat_background() {
        let mut sc = scenario(0.0, 3);
        sc.noise.background_rate = 0.0;
        let raw = synth_interferogram(&sc).unwrap();
        assert!(raw.counts.iter().all(|c| *c == 0.0));
        sc.noise.background_rate = 50.0;
        let raw = synth_interferogram(&sc).unwrap();
        let mean = raw.counts.iter().sum::<f64>() / raw.counts.len() as f64;
        assert!((mean - 200.0).abs() < 5.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synth_interferogram(&scenario(2500.0, 11)).unwrap();
        let b = synth_interferogram(&scenario(2500.0, 11)).unwrap();
        let c = synth_interferogram(&scenario(2500.0, 12)).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        assert_ne!(a.counts, c.counts);
    }

    #[test]
    fn draws_do_not_depend_on_neighbours() {
        // stream k is the same whatever the number of delays
        let mut short = scenario(2500.0, 5);
        short.delays.truncate(10);
        let long = synth_interferogram(&scenario(2500.0, 5)).unwrap();
        let short = synth_interferogram(&short).unwrap();
        assert_eq!(&long.counts[..10], &short.counts[..]);
    }

    #[test]
    fn mean_converges_to_forward_model() {
        let mean_target = 4.0 * 100.0 * params(0.1247).rate(0.0);
        let trials = 10_000u64;
        let sum: f64 = (0..trials).map(|s| poisson_draw(s, 0, mean_target)).sum();
        let mean = sum / trials as f64;
        assert!((mean - mean_target).abs() / mean_target < 0.01);
    }

    #[test]
    fn raw_counts_normalise() {
        let raw = synth_interferogram(&scenario(1e6, 1)).unwrap();
        let ig = raw.to_interferogram(Source::Synthetic).unwrap();
        assert!((ig.long_delay_mean().unwrap() - 1.0).abs() < 1e-12);
        assert!(ig.variances().is_some());
    }

    #[test]
    fn sweep_without_absorption_or_loss_is_balanced() {
        let sc = SweepScenario {
            powers_mw: measured_powers(10),
            rate_per_mw: 100.0,
            delayed_fs: 167.0,
            loss: 0.0,
            noise: None,
        };
        let s = synth_power_sweep(&sc, &params(0.0), (0.05, 0.05)).unwrap();
        assert_eq!(s.r_sol_0(), s.r_sam_0());
        assert_eq!(s.r_sol_167(), s.r_sam_167());
        assert!(s.r_sol_0().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn noisy_sweep_is_deterministic() {
        let sc = SweepScenario {
            powers_mw: measured_powers(8),
            rate_per_mw: 100.0,
            delayed_fs: 167.0,
            loss: 0.05,
            noise: Some(NoiseSpec::new(0.0, 0.0, 9).unwrap()),
        };
        let a = synth_power_sweep_from_slopes(&sc, [0.24, 1.0], [0.34, 0.0]).unwrap();
        let b = synth_power_sweep_from_slopes(&sc, [0.24, 1.0], [0.34, 0.0]).unwrap();
        assert_eq!(a, b);
    }
}
