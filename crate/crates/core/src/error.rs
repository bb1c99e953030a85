use thiserror::Error;

/// Unified error type for the whole library.
///
/// Variants are grouped by how the CLI maps them to exit codes:
/// configuration problems (bad input data), numeric problems (valid input
/// that cannot be processed), and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed config text (not parseable as the documented schema).
    #[error("parse error: {0}")]
    Parse(String),

    /// Structurally parseable input that violates an invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Geometry that cannot support the requested construction.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Scalar argument outside its documented range.
    #[error("range error: {0}")]
    Range(String),

    /// Image-source candidate count passed the configured cap.
    #[error("budget exceeded: visited {visited} candidates (cap {cap})")]
    BudgetExceeded { visited: u64, cap: u64 },

    /// An operation that needs at least one event received none.
    #[error("empty event list")]
    EmptyEvents,

    /// Two signals that must share a sample rate do not.
    #[error("sample rate mismatch: {a} Hz vs {b} Hz")]
    RateMismatch { a: f64, b: f64 },

    /// Sample rate too low for the requested analysis band.
    #[error("sample rate too low: {fs} Hz (need > {needed} Hz)")]
    RateTooLow { fs: f64, needed: f64 },

    /// All-zero input where signal energy is required.
    #[error("silent input: {0}")]
    SilentInput(String),

    /// Ambisonic order too high for the loudspeaker count.
    #[error("order too high: order {order} needs at least {needed} speakers, layout has {speakers}")]
    OrderTooHigh { order: usize, needed: usize, speakers: usize },

    /// A requested direction is absent from an HRIR set or layout.
    #[error("missing direction: {0}")]
    MissingDirection(String),

    /// A channel that must carry signal is silent.
    #[error("silent channel {0}")]
    SilentChannel(usize),

    /// Both BRIR ears silent; binaural metrics undefined.
    #[error("silent binaural pair")]
    SilentBrir,

    /// Paired test where every difference is identical (zero variance).
    #[error("degenerate variance: all paired differences equal")]
    DegenerateVariance,

    /// Aggregation input files absent.
    #[error("missing results: {0}")]
    MissingResults(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit-code class used by the command-line tool: config = 2,
    /// numeric = 3, I/O = 4.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            Parse(_) | Validation(_) | Geometry(_) | Range(_) | OrderTooHigh { .. }
            | MissingDirection(_) | MissingResults(_) => 2,
            BudgetExceeded { .. } | EmptyEvents | RateMismatch { .. } | RateTooLow { .. }
            | SilentInput(_) | SilentChannel(_) | SilentBrir | DegenerateVariance => 3,
            Io(_) | Wav(_) => 4,
        }
    }
}
