use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code classes via
/// [`Error::exit_code`]: 2 input/format, 3 numerical, 4 configuration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("non-uniform sampling at row {row}: delta {delta:.9} s vs dt {dt:.9} s exceeds relative tolerance {tolerance:e}")]
    NonUniformSampling {
        row: usize,
        delta: f64,
        dt: f64,
        tolerance: f64,
    },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("window length {window} exceeds trace length {samples}")]
    WindowTooLong { window: usize, samples: usize },

    #[error("frequency band selects {selected} bin(s), need at least 2")]
    BandTooNarrow { selected: usize },

    #[error("degenerate signal: zero centered energy")]
    DegenerateSignal,

    #[error("{0} is undefined for this partition")]
    UndefinedIndex(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("edge list does not span all buses")]
    NotSpanning,

    #[error("integration diverged at t = {t:.6} s")]
    IntegrationDiverged { t: f64 },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed on window {window}: {source}")]
    Stage {
        stage: &'static str,
        window: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Exit-code class for CLI use: 2 input/format, 3 numerical/integration,
    /// 4 configuration. 1 is reserved for unexpected panics.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. }
            | Error::Format(_)
            | Error::NonUniformSampling { .. }
            | Error::InsufficientSamples { .. }
            | Error::NotSpanning
            | Error::Consistency(_)
            | Error::Topology(_) => 2,
            Error::DegenerateSignal
            | Error::UndefinedIndex(_)
            | Error::IntegrationDiverged { .. } => 3,
            Error::WindowTooLong { .. }
            | Error::BandTooNarrow { .. }
            | Error::InvalidParameter(_)
            | Error::Config(_) => 4,
            Error::Stage { source, .. } => source.exit_code(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_stage(self, stage: &'static str, window: usize) -> Self {
        Error::Stage {
            stage,
            window,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
