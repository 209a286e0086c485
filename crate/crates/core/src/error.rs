use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad classes used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("medium `{medium}`: wavelength {wavelength_nm} nm is outside the dispersion table ({min_nm}..={max_nm} nm)")]
    OutOfRange {
        medium: String,
        wavelength_nm: f64,
        min_nm: f64,
        max_nm: f64,
    },
    #[error("invalid medium `{name}`: {reason}")]
    InvalidMedium { name: String, reason: String },
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
    #[error("degenerate stack: {0}")]
    DegenerateStack(String),
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unstable resonator: {0}")]
    UnstableResonator(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parameter not identifiable: {0}")]
    Unidentifiable(String),
    #[error("fit failed: {0}")]
    FitFailed(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("unknown key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::UnknownKey { .. } | Error::InvalidArgument(_) => {
                ErrorKind::Usage
            }
            Error::OutOfRange { .. }
            | Error::InvalidMedium { .. }
            | Error::InvalidLayer(_)
            | Error::DegenerateStack(_)
            | Error::InsufficientData(_) => ErrorKind::Data,
            Error::NumericalDegeneracy(_)
            | Error::UnstableResonator(_)
            | Error::Unidentifiable(_)
            | Error::FitFailed(_) => ErrorKind::Numerical,
        }
    }
}
