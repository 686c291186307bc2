use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate cell id `{0}`")]
    DuplicateCellId(String),
    #[error("grid needs at least 2 cells, found {0}")]
    TooFewCells(usize),
    #[error("cells `{a}` and `{b}` share a centroid")]
    DegenerateCentroids { a: String, b: String },
    #[error("unknown cell id `{id}` at line {line}")]
    UnknownCellId { id: String, line: u64 },
    #[error("negative trip count {count} at line {line}")]
    NegativeCount { count: f64, line: u64 },
    #[error("no OD rows match scenario `{scenario}` hour {hour}")]
    EmptySelection { scenario: String, hour: u8 },
    #[error("inputs refer to different spatial grids")]
    MixedGrids,
    #[error("edge set is empty")]
    EmptyEdgeSet,
    #[error("edge {{{0},{1}}} is not in the edge system")]
    EdgeNotInSystem(usize, usize),
    #[error("weight {weight} for pair ({i},{j}) outside [0,1]")]
    InvalidWeight { i: usize, j: usize, weight: f64 },
    #[error("conjugate gradient did not reach rel_tol {rel_tol:e} in {iterations} iterations (residual {residual:e})")]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        rel_tol: f64,
    },
    #[error("no positive trip volume to fit a threshold")]
    NoTrips,
    #[error("duplicate slice label {scenario}/{hour}")]
    DuplicateLabel { scenario: String, hour: u8 },
    #[error("observation matrix is not column-centered (column {column}, mean {mean:e})")]
    NotCentered { column: usize, mean: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("planted flow needs clipping on {clipped} of {total} directed edges; raise base_volume or lower noise_sd")]
    VolumeUnderflow { clipped: usize, total: usize },
    #[error("missing artifact {}", .0.display())]
    MissingArtifacts(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Csv {
        context: String,
        #[source]
        source: csv::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedRow { .. } => "MalformedRow",
            Error::DuplicateCellId(_) => "DuplicateCellId",
            Error::TooFewCells(_) => "TooFewCells",
            Error::DegenerateCentroids { .. } => "DegenerateCentroids",
            Error::UnknownCellId { .. } => "UnknownCellId",
            Error::NegativeCount { .. } => "NegativeCount",
            Error::EmptySelection { .. } => "EmptySelection",
            Error::MixedGrids => "MixedGrids",
            Error::EmptyEdgeSet => "EmptyEdgeSet",
            Error::EdgeNotInSystem(..) => "EdgeNotInSystem",
            Error::InvalidWeight { .. } => "InvalidWeight",
            Error::SolverDiverged { .. } => "SolverDiverged",
            Error::NoTrips => "NoTrips",
            Error::DuplicateLabel { .. } => "DuplicateLabel",
            Error::NotCentered { .. } => "NotCentered",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::VolumeUnderflow { .. } => "VolumeUnderflow",
            Error::MissingArtifacts(_) => "MissingArtifacts",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io { .. } => "Io",
            Error::Csv { .. } => "Csv",
            Error::Json(_) => "Json",
        }
    }

    /// Process exit status: 2 input/validation, 3 solver failure, 4 missing artifacts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::SolverDiverged { .. } => 3,
            Error::MissingArtifacts(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn csv(context: impl Into<String>, source: csv::Error) -> Self {
        Error::Csv {
            context: context.into(),
            source,
        }
    }
}
