use thiserror::Error;

use crate::types::MobilityClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure carries the stage that raised it; [`Error::code`] gives a
/// stable machine-readable tag for logs and `metrics.json`.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("{mobility} mobility needs at least {required} steps, got {got}")]
    TooFewSteps {
        mobility: MobilityClass,
        required: usize,
        got: usize,
    },

    #[error("invalid reference step pair ({first}, {second}) for {len} observations")]
    InvalidPair {
        first: usize,
        second: usize,
        len: usize,
    },

    #[error("{0} system is rank deficient")]
    RankDeficient(&'static str),

    #[error("system is underdetermined at this gamma (reference-pair cosine sum vanishes)")]
    Underdetermined,

    #[error("no gamma satisfies positive step length and positive calibrated ranges")]
    NoFeasibleGamma,

    #[error("infeasible estimate: {0}")]
    Infeasible(&'static str),

    #[error("AP {ap}: no reference step pair produced a feasible estimate")]
    NoFeasiblePairs { ap: u32 },

    #[error("{mobility} mobility alignment needs at least {required} feasible APs, got {got}")]
    TooFewAps {
        mobility: MobilityClass,
        required: usize,
        got: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidMeasurement(_) => "invalid-measurement",
            Error::TooFewSteps {
                mobility: MobilityClass::Linear,
                ..
            } => "min-steps-linear",
            Error::TooFewSteps {
                mobility: MobilityClass::Arbitrary,
                ..
            } => "min-steps-arbitrary",
            Error::InvalidPair { .. } => "invalid-reference-pair",
            Error::RankDeficient(_) => "rank-deficient",
            Error::Underdetermined => "underdetermined-gamma",
            Error::NoFeasibleGamma => "empty-gamma-feasible-set",
            Error::Infeasible(_) => "infeasible-estimate",
            Error::NoFeasiblePairs { .. } => "no-feasible-pairs",
            Error::TooFewAps {
                mobility: MobilityClass::Linear,
                ..
            } => "min-aps-linear",
            Error::TooFewAps {
                mobility: MobilityClass::Arbitrary,
                ..
            } => "min-aps-arbitrary",
            Error::LengthMismatch { .. } => "length-mismatch",
            Error::Empty(_) => "empty-input",
            Error::Config(_) => "invalid-config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
