use std::path::PathBuf;

use crate::detection::TagFileError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates an operation's precondition.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sampling step too coarse: dt = {dt_ps} ps exceeds coherence_time/10 = {limit_ps} ps")]
    Undersampled { dt_ps: f64, limit_ps: f64 },

    #[error("photon emission requires rate*dt < 0.1, got {0}")]
    EmissionRateTooHigh(f64),

    #[error("time value out of the representable 64-bit femtosecond range")]
    TimeOverflow,

    #[error("tag streams use different resolutions ({0} fs vs {1} fs)")]
    ResolutionMismatch(u64, u64),

    #[error("bin width {bin_fs} fs is not a positive multiple of the tag resolution {resolution_fs} fs")]
    BinWidthNotMultiple { bin_fs: i64, resolution_fs: u64 },

    #[error("plateau region [{lo_ps} ps, {hi_ps} ps] contains no bins")]
    EmptyPlateau { lo_ps: f64, hi_ps: f64 },

    #[error("no interference fringes: maximum visibility is {0}")]
    NoFringes(f64),

    #[error("jitter histogram has no positive peak")]
    ZeroPeak,

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("four-photon state is not normalized (sum of squared amplitudes = {0})")]
    Unnormalized(String),

    #[error("expected a single-channel tag stream, found channels {0:?}")]
    MultiChannel(Vec<u8>),

    #[error(transparent)]
    TagFile(#[from] TagFileError),

    #[error("config: {0}")]
    Config(String),

    #[error("malformed CSV {path}: {reason}")]
    Csv { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An error raised inside a named pipeline stage.
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// True for errors caused by the user's configuration or arguments, as
    /// opposed to failures while processing data.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_usage(),
            Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::Undersampled { .. }
            | Error::EmissionRateTooHigh(_)
            | Error::BinWidthNotMultiple { .. } => true,
            _ => false,
        }
    }
}
