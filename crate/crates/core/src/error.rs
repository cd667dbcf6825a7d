use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by adapters (HTTP status, CLI exit code).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Validation,
    NotFound,
    Conflict,
    Stale,
    Locked,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("variable `{0}` is declared both as a dimension and a parameter")]
    ConflictingRole(String),

    #[error("equation `{0}` has an empty variable list")]
    EmptyEquation(String),

    #[error("`{0}` is reserved for the phenomenon/hypothesis identifiers")]
    ReservedName(String),

    #[error("malformed XML: {0}")]
    Xml(String),

    #[error("unsupported MathML: {0}")]
    MathMl(String),

    #[error("structure contains no equations")]
    EmptyModel,

    #[error("completion mismatch: {equations} equations for {variables} variables")]
    CompletionMismatch { equations: usize, variables: usize },

    #[error("structurally singular: equations {equations:?} only reach variables {variables:?}")]
    StructurallySingular {
        equations: Vec<String>,
        variables: Vec<String>,
    },

    #[error("cyclic structure: {0:?} determine each other")]
    CyclicStructure(Vec<String>),

    #[error("`{0}` remains on a closed left-hand side but is neither a dimension nor a parameter")]
    NotFirstCause(String),

    #[error("{what} {id} already exists")]
    IdentifierConflict { what: &'static str, id: u64 },

    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },

    #[error("csv: {0}")]
    Csv(String),

    #[error("missing columns {0:?}")]
    MissingColumns(Vec<String>),

    #[error("unexpected columns {0:?}")]
    ExtraColumns(Vec<String>),

    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("parameter `{column}` is not constant within the trial (row {row})")]
    NonConstantParameter { column: String, row: usize },

    #[error("duplicate coordinates {coordinates:?} at row {row}")]
    DuplicateCoordinates {
        coordinates: Vec<String>,
        row: usize,
    },

    #[error("no data rows")]
    EmptyData,

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("dependency {fd} violated at row {row}")]
    FdViolation { fd: String, row: usize },

    #[error("a trial with the same parameter valuation already exists (trial {0})")]
    DuplicateTrial(u64),

    #[error("{0}")]
    Invalid(String),

    #[error("synthesized database for phenomenon {0} is stale")]
    Stale(u64),

    #[error("no hypothesis has trials targeting phenomenon {0}")]
    NoHypotheses(u64),

    #[error("no candidate covers every selected observation")]
    NoAlignableCandidates,

    #[error("workspace is locked by another writer")]
    Locked,

    #[error("workspace is open read-only")]
    ReadOnly,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotFound { .. } => ErrorKind::NotFound,
            Error::IdentifierConflict { .. } | Error::DuplicateTrial(_) => ErrorKind::Conflict,
            Error::Stale(_) => ErrorKind::Stale,
            Error::Locked | Error::ReadOnly => ErrorKind::Locked,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Invalid(format!("json: {e}"))
    }
}
