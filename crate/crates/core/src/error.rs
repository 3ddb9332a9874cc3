use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: unparsable detection record: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: frame {frame} follows frame {previous} (stream must be frame-ordered)")]
    FrameRegression {
        line: usize,
        frame: u64,
        previous: u64,
    },

    #[error("frame {frame} arrived after frame {previous}")]
    OutOfOrderFrame { frame: u64, previous: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("homography is singular (det = {0:e})")]
    SingularHomography(f64),

    #[error("pixel ({x}, {y}) maps to a point at infinity")]
    PointAtInfinity { x: f64, y: f64 },

    #[error("invalid geographic point lat={lat} lon={lon}")]
    InvalidGeoPoint { lat: f64, lon: f64 },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("track {id} has {have} history entries, speed window needs {need}")]
    InsufficientHistory { id: u64, have: usize, need: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the configuration rather than by input data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Calibration(_) | Error::SingularHomography(_)
        )
    }
}
