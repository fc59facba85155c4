use thiserror::Error;

/// Errors raised by the exit-time library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid measure: {0}")]
    Measure(String),

    #[error("invalid generator: {0}")]
    Generator(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("singular system (condition estimate {condition:e}): {context}")]
    Singular { context: String, condition: f64 },

    #[error("recurrent restriction: -L on the domain is singular, some inside states cannot exit ({stuck} states)")]
    RecurrentRestriction { stuck: usize },

    #[error("chain is not reversible with respect to its measure (asymmetry {asymmetry:e})")]
    NotReversible { asymmetry: f64 },

    #[error("chain is reducible: {0}")]
    Reducible(String),

    #[error("beta = {beta} is not above the lower bound beta0 = {beta0}; the inner problem is indefinite")]
    BelowLowerBound { beta: f64, beta0: f64 },

    #[error("degenerate source: <xi, u> = {0:e}")]
    DegenerateSource(f64),

    #[error("generator entry ({row}, {col}) = {value:e} is negative{}", threshold_note(.k_threshold))]
    NegativeRate {
        row: usize,
        col: usize,
        value: f64,
        k_threshold: Option<f64>,
    },

    #[error("|k| = {k} exceeds k_max = {k_max}")]
    PerturbationTooLarge { k: f64, k_max: f64 },

    #[error("invalid model specification: {0}")]
    Model(String),

    #[error("serialization: {0}")]
    Serde(String),
}

fn threshold_note(k: &Option<f64>) -> String {
    match k {
        Some(k) => format!(" (drift admissible only for |k| <= {k})"),
        None => String::new(),
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
