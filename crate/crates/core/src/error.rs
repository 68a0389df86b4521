use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema violation at `{field}`: {message}")]
    Schema { field: String, message: String },

    #[error("three-phase field `{field}` is not supported; provide a single-phase equivalent")]
    ThreePhase { field: String },

    #[error("dangling reference: {kind} `{id}` does not exist")]
    DanglingReference { kind: &'static str, id: String },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("non-radial topology: {0}")]
    NonRadial(String),

    #[error("no root bus defined: {0}")]
    NoRoot(String),

    #[error("measurement `{location}`: {message}")]
    Measurement { location: String, message: String },

    #[error("measurement `{location}`: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { location: String, timestamp: String },

    #[error("measurement `{location}`: missing interval at {timestamp}")]
    MissingInterval { location: String, timestamp: String },

    #[error("measurement `{location}`: non-uniform spacing at {timestamp}")]
    NonUniformSpacing { location: String, timestamp: String },

    #[error("unknown measurement location `{0}`")]
    UnknownLocation(String),

    #[error("timestamps of `{a}` and `{b}` are not aligned")]
    Misaligned { a: String, b: String },

    #[error("resolution: {0}")]
    Resolution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("csv line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("all retained scenarios are infeasible at timestep {timestep}")]
    AllInfeasible { timestep: usize },

    #[error("simplex iteration cap of {0} exceeded")]
    IterationCap(usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Name of the pipeline stage the error originates from.
    pub fn module(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Json(_) | Error::Csv { .. } => "io",
            Error::Schema { .. }
            | Error::ThreePhase { .. }
            | Error::DanglingReference { .. }
            | Error::DuplicateId { .. }
            | Error::NonRadial(_)
            | Error::NoRoot(_) => "network-model",
            Error::Measurement { .. }
            | Error::DuplicateTimestamp { .. }
            | Error::MissingInterval { .. }
            | Error::NonUniformSpacing { .. }
            | Error::UnknownLocation(_)
            | Error::Resolution(_) => "measurement-io",
            Error::Misaligned { .. } => "network-reduction",
            Error::InvalidParameter(_) => "config",
            Error::GridMismatch(_) => "kpi",
            Error::AllInfeasible { .. } | Error::IterationCap(_) => "fna-opf",
        }
    }

    /// True when the error signals an unsatisfiable optimization rather than bad input.
    pub fn is_infeasibility(&self) -> bool {
        matches!(self, Error::AllInfeasible { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}
