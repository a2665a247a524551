//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model loading, filtering, and tracking.
#[derive(Debug, Error)]
pub enum Error {
    /// Model file could not be parsed.
    #[error("model parse error: {0}")]
    ModelParse(String),

    /// Model content violates a structural invariant.
    #[error("invalid model: {0}")]
    ModelInvalid(String),

    /// A marker label that does not exist in the model.
    #[error("unknown marker label `{0}`")]
    UnknownMarker(String),

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A joint angle lies outside its bounds (beyond tolerance).
    #[error("joint angle {angle} outside bounds [{lower}, {upper}]")]
    AngleOutOfBounds { angle: f64, lower: f64, upper: f64 },

    /// Sample count too small to match the requested covariance.
    #[error("sample count {count} cannot match moments in dimension {dimension} (need at least dimension + 1)")]
    TooFewSamples { count: usize, dimension: usize },

    /// Invalid sigma-point spread parameter.
    #[error("invalid sigma-point spread: dimension {dimension} with kappa {kappa}")]
    InvalidKappa { dimension: usize, kappa: f64 },

    /// Matrix is not symmetric positive definite where required.
    #[error("covariance not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Matrix is not a valid noise covariance.
    #[error("invalid noise covariance: {0}")]
    InvalidNoise(String),

    /// Innovation covariance could not be factorized.
    #[error("singular innovation covariance")]
    SingularInnovation,

    /// A model function returned a non-finite value.
    #[error("non-finite output from propagated function at sample {sample}")]
    NonFiniteOutput { sample: usize },

    /// A frame had no visible markers where an update was required.
    #[error("no visible markers in frame")]
    NoVisibleMarkers,

    /// Error attached to a specific frame of a tracked sequence.
    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    /// Motion script does not match the model.
    #[error("motion script mismatch: {0}")]
    ScriptMismatch(String),

    /// Frames file / input sequence problem.
    #[error("invalid frame data: {0}")]
    FrameData(String),

    /// Reference frame is missing a marker required by the metric.
    #[error("reference frame missing marker `{0}`")]
    MissingReference(String),

    /// I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// CSV parse failure.
    #[error("csv error: {0}")]
    Csv(String),
}

impl Error {
    /// Wrap an error with the frame index it occurred at.
    pub fn at_frame(self, frame: usize) -> Self {
        Error::AtFrame {
            frame,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
