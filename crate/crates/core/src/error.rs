use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{source_name}: line {line}: {msg}")]
    Parse {
        source_name: String,
        line: u64,
        msg: String,
    },

    #[error("company `{0}` has prices but no metadata row")]
    MissingMetadata(String),

    #[error("no {currency} exchange rate for {date}")]
    MissingRate { date: NaiveDate, currency: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),

    #[error("group `{label}` has {count} member(s); at least 2 are required")]
    GroupTooSmall { label: String, count: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("company `{0}` has zero return variance")]
    ZeroVariance(String),

    #[error("correlation {value} at ({row}, {col}) lies outside [-1, 1]")]
    CorrelationRange { row: usize, col: usize, value: f64 },

    #[error("regressor series is constant")]
    ConstantRegressor,

    #[error("pseudo-index is constant or undefined for group(s): {}", .0.join(", "))]
    ConstantIndex(Vec<String>),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(source_name: impl Into<String>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            msg: msg.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Whether the error stems from bad input or configuration, as opposed to
    /// a numeric or I/O failure at run time.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse { .. }
            | Error::MissingMetadata(_)
            | Error::MissingRate { .. }
            | Error::Dimension { .. }
            | Error::Invalid(_)
            | Error::UnknownLeaf(_)
            | Error::GroupTooSmall { .. }
            | Error::Config(_)
            | Error::Csv(_) => true,
            Error::ZeroVariance(_)
            | Error::CorrelationRange { .. }
            | Error::ConstantRegressor
            | Error::ConstantIndex(_)
            | Error::Io(_) => false,
            Error::Stage { source, .. } => source.is_validation(),
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
