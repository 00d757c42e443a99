use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frequency grid aliases the delay oscillation: n = {n}, need at least {required}")]
    GridAliasing { n: usize, required: usize },

    #[error("quadrature not converged: doubling the grid changed a rate by {max_change:.3e}")]
    NonConvergent { max_change: f64 },

    #[error("imaginary residue {residue:.3e} exceeds the allowed bound")]
    ImaginaryResidue { residue: f64 },

    #[error("interferogram is not normalized")]
    NotNormalized,

    #[error("no dip found: minimum {min:.4} is at least 98% of maximum {max:.4}")]
    NoDip { min: f64, max: f64 },

    #[error("dip minimum lies at sample {index}, within two samples of the edge")]
    EdgeDip { index: usize },

    #[error("delay grids differ between the two interferograms")]
    GridMismatch,

    #[error("fit diverged: residual norm {residual:.3e} exceeds 10% of signal norm {signal:.3e}")]
    FitDiverged { residual: f64, signal: f64 },

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("closed form is not a dip: eta' >= kappa (signed visibility {visibility:.6})")]
    NonDipRegime { visibility: f64 },

    #[error("need at least {required} points, got {got}")]
    InsufficientPoints { required: usize, got: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Stable machine-readable tag, used by the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::GridAliasing { .. } => "grid_aliasing",
            Error::NonConvergent { .. } => "non_convergent",
            Error::ImaginaryResidue { .. } => "imaginary_residue",
            Error::NotNormalized => "not_normalized",
            Error::NoDip { .. } => "no_dip",
            Error::EdgeDip { .. } => "edge_dip",
            Error::GridMismatch => "grid_mismatch",
            Error::FitDiverged { .. } => "fit_diverged",
            Error::NotConverged { .. } => "not_converged",
            Error::NonDipRegime { .. } => "non_dip_regime",
            Error::InsufficientPoints { .. } => "insufficient_points",
            Error::InvalidData(_) => "invalid_data",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
