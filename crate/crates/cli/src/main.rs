//! `etpa-hom` command-line front end.
//!
//! Exit codes:
//!
//! | code | meaning                                                     |
//! |------|-------------------------------------------------------------|
//! | 0    | success                                                     |
//! | 1    | unexpected internal error                                   |
//! | 2    | usage error (bad flags)                                     |
//! | 3    | invalid configuration or input data                         |
//! | 4    | file system error                                           |
//! | 5    | numerical failure (aliasing, non-convergence, no dip, ...)  |
//! | 6    | `validate` ran but the battery exceeded its tolerance       |
//!
//! Failures print `{"error": <kind>, "message": <text>}` on stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "etpa-hom", version, about = "HOM interferograms and ETPA inference")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command; they override the config file.
#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// Model configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Quadrature points per frequency axis.
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub delay_min_fs: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub delay_max_fs: Option<f64>,
    #[arg(long, global = true)]
    pub delay_step_fs: Option<f64>,
    /// Sample ETPA efficiency.
    #[arg(long, global = true)]
    pub eta: Option<f64>,
    /// Noise seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quadrature interferogram of the configured model.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Also write the joint spectral intensity matrix.
        #[arg(long)]
        jsi_out: Option<PathBuf>,
        /// Skip the 2n refinement check.
        #[arg(long)]
        no_refinement: bool,
    },
    /// Closed-form curve and its parameters.
    ClosedForm {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        params_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = KappaArg::Derived)]
        kappa_mode: KappaArg,
    },
    /// Fit η (and optionally κ, Δω_Λ, Δω_J) to a measured interferogram.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated free parameters.
        #[arg(long, value_delimiter = ',', default_value = "eta")]
        free: Vec<String>,
        /// η = 0 reference interferogram used to calibrate κ and Δω_Λ first.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// η fits over a concentration series.
    Series {
        /// CSV with columns `label,concentration_molar,path`; paths are
        /// relative to the manifest.
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        json_out: Option<PathBuf>,
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Cross-sections from a power sweep.
    Transmittance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit the raw sweep without loss correction.
        #[arg(long)]
        no_loss_correct: bool,
        #[arg(long, value_enum, default_value_t = OffsetArg::PerPoint)]
        offset_mode: OffsetArg,
        #[arg(long)]
        concentration_molar: Option<f64>,
        #[arg(long)]
        length_cm: Option<f64>,
        #[arg(long)]
        spot_diameter_um: Option<f64>,
    },
    /// Seeded synthetic datasets.
    Synth {
        #[command(subcommand)]
        kind: SynthKind,
    },
    /// Closed form versus quadrature over the default model battery.
    Validate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        no_refinement: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum SynthKind {
    /// Raw coincidence counts per delay.
    Hom {
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth sidecar; defaults to `<out>.truth.json`.
        #[arg(long)]
        truth_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ForwardArg::ClosedForm)]
        forward: ForwardArg,
        #[arg(long)]
        peak_rate: Option<f64>,
        #[arg(long)]
        background_rate: Option<f64>,
        #[arg(long)]
        bin_seconds: Option<f64>,
        /// Linear loss fraction on the sample.
        #[arg(long, default_value_t = 0.0)]
        loss: f64,
    },
    /// Pump-power sweep.
    Sweep {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        truth_out: Option<PathBuf>,
        /// ETPA slopes at δt = 0 and the delayed channel; replaces the
        /// (η_sol, η_sam) construction.
        #[arg(long, num_args = 2, value_names = ["M0", "M167"])]
        slopes: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0.0069)]
        eta_solvent: f64,
        #[arg(long, default_value_t = 0.1247)]
        eta_sample: f64,
        #[arg(long, default_value_t = 0.0)]
        loss: f64,
        #[arg(long, default_value_t = 100.0)]
        rate_per_mw: f64,
        #[arg(long, default_value_t = 12)]
        points: usize,
        #[arg(long, default_value_t = 167.0)]
        delayed_fs: f64,
        /// Add Poisson noise using the config's noise section.
        #[arg(long)]
        noisy: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KappaArg {
    Derived,
    Fitted,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OffsetArg {
    PerPoint,
    GlobalMean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ForwardArg {
    ClosedForm,
    Quadrature,
}

/// Process exit codes; see the module docs.
pub mod exit {
    pub const INTERNAL: u8 = 1;
    pub const INVALID_INPUT: u8 = 3;
    pub const IO: u8 = 4;
    pub const NUMERICAL: u8 = 5;
    pub const VALIDATION_FAILED: u8 = 6;
}

fn classify(err: &anyhow::Error) -> (u8, &'static str) {
    if let Some(e) = err.downcast_ref::<etpa_hom::Error>() {
        use etpa_hom::Error as E;
        let code = match e {
            E::InvalidParameter { .. }
            | E::InvalidData(_)
            | E::GridMismatch
            | E::InsufficientPoints { .. }
            | E::NotNormalized
            | E::Csv(_)
            | E::Json(_) => exit::INVALID_INPUT,
            E::Io(_) => exit::IO,
            _ => exit::NUMERICAL,
        };
        return (code, e.kind());
    }
    if err.is::<commands::ValidationFailed>() {
        return (exit::VALIDATION_FAILED, "validation_failed");
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return (exit::IO, "io");
    }
    (exit::INTERNAL, "internal")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = classify(&err);
            let body = serde_json::json!({ "error": kind, "message": format!("{err:#}") });
            eprintln!("{body}");
            ExitCode::from(code)
        }
    }
}
