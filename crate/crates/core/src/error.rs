use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or input shape (bad stratum size, n < s, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Input data failed validation. `row` is the 1-based data row (header excluded).
    #[error("validation error at row {row}{}: {message}", column_suffix(.column))]
    Validation {
        row: usize,
        column: Option<String>,
        message: String,
    },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("tied event times at t = {time} (tie policy is 'error')")]
    TiedEvents { time: f64 },

    #[error("numerical overflow while accumulating subject {subject}")]
    NumericalOverflow { subject: usize },

    #[error("non-finite gradient at step {step} on stratum {stratum:?}")]
    NonFiniteGradient { step: u64, stratum: Vec<usize> },

    #[error("model is not identifiable: information matrix condition estimate {condition:e}")]
    NonIdentifiable { condition: f64 },

    #[error("information matrix is not invertible: condition estimate {condition:e}")]
    NonInvertibleInformation { condition: f64 },

    #[error("concordance index is undefined: no comparable pairs")]
    UndefinedConcordance,

    #[error("bootstrap dropped {dropped} of {total} resamples (more than 5%)")]
    BootstrapFailures { dropped: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn column_suffix(column: &Option<String>) -> String {
    match column {
        Some(c) => format!(", column '{c}'"),
        None => String::new(),
    }
}

impl Error {
    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Contract(_) => "contract",
            Error::Validation { .. } => "validation",
            Error::Parse { .. } => "parse",
            Error::TiedEvents { .. } => "tied_events",
            Error::NumericalOverflow { .. } => "numerical_overflow",
            Error::NonFiniteGradient { .. } => "non_finite_gradient",
            Error::NonIdentifiable { .. } => "non_identifiable",
            Error::NonInvertibleInformation { .. } => "non_invertible_information",
            Error::UndefinedConcordance => "undefined_concordance",
            Error::BootstrapFailures { .. } => "bootstrap_failures",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
