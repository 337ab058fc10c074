use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: unsupported image format ({reason})")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("template: unsupported format version {found} (expected {expected})")]
    TemplateVersion { found: u16, expected: u16 },

    #[error("template: truncated ({0})")]
    TemplateTruncated(&'static str),

    #[error("template: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    TemplateChecksum { stored: u32, computed: u32 },

    #[error("template: {0}")]
    TemplateInvalid(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("pixel ({x}, {y}) lies on the image frame")]
    FramePixel { x: usize, y: usize },

    #[error("no alignment: {0} minutiae set is empty")]
    NoAlignment(&'static str),

    #[error("pupil not found")]
    PupilNotFound,

    #[error("unwrap failed: {0}")]
    UnwrapFailed(String),

    #[error("iris code dimensions differ: {0}")]
    Dimension(String),

    #[error("majority vote needs an odd number (>= 3) of codes, got {0}")]
    MajorityCount(usize),

    #[error("iris codes share no valid bits")]
    Incomparable,

    #[error("calibration bounds invalid: lo = {lo}, hi = {hi}")]
    Calibration { lo: f64, hi: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("enrollment: {0}")]
    Enrollment(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("pipeline: {0}")]
    Pipeline(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the processing stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
